"""
Counting, enumeration and sampling of canonical configurations.

A canonical chain is a sequence of maximal runs whose alignments alternate,
each run being a non-empty multiset of (type, value) items sorted canonically.
With m = n_c * n_v items the counts have generating function

    P(z) = 1 / (2 (1 - z)^m - 1)

whose z^n coefficient is the number of canonical chains of length n.
"""
import itertools
import math
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

import numpy as np

from twoport_fit.circuit.components import Alignment, Component, ComponentType, Configuration
from twoport_fit.dataset.grid import ValueGrid
from twoport_fit.exceptions import CapacityError, InvalidInputError


DEFAULT_ENUMERATION_CAP = 1_000_000


@dataclass(frozen=True)
class CanonicalCount:
    """
    Number of canonical chains of a given length.

    Attributes:
        n: Chain length.
        n_c: Number of component types.
        n_v: Number of values per type.
        count: Exact (arbitrary-precision) count.
    """
    n: int
    n_c: int
    n_v: int
    count: int

    def __int__(self) -> int:
        return self.count


def _check_universe(n_c: int, n_v: int) -> None:
    if n_c < 1 or n_v < 1:
        raise InvalidInputError(f"n_c and n_v must be at least 1, got n_c={n_c}, n_v={n_v}")


def count_table(n_max: int, n_c: int, n_v: int) -> List[int]:
    """
    Coefficients of P(z) for z^0 .. z^n_max.

    Multiplying out (2 (1 - z)^m - 1) P(z) = 1 gives
    p_0 = 1 and p_k = 2 * sum_{j=1..min(k, m)} (-1)^(j+1) C(m, j) p_{k-j}.
    Python integers keep every term exact.
    """
    if n_max < 0:
        raise InvalidInputError(f"Length must be non-negative, got {n_max}")
    _check_universe(n_c, n_v)

    m = n_c * n_v
    binomials = [math.comb(m, j) for j in range(min(n_max, m) + 1)]
    coefficients = [1]
    for k in range(1, n_max + 1):
        total = 0
        for j in range(1, min(k, m) + 1):
            term = binomials[j] * coefficients[k - j]
            total += term if j % 2 == 1 else -term
        coefficients.append(2 * total)
    return coefficients


def count_canonical(n: int, n_c: int = 3, n_v: int = 5) -> CanonicalCount:
    """
    Number of canonical configurations of exact length ``n``.

    Args:
        n: Chain length, n >= 0.
        n_c: Number of component types.
        n_v: Number of quantized values per type.

    Returns:
        The z^n coefficient of P(z, n_c, n_v).
    """
    return CanonicalCount(n, n_c, n_v, count_table(n, n_c, n_v)[n])


def raw_space_size(n: int, n_c: int = 3, n_v: int = 5) -> int:
    """Number of chains of length ``n`` before removing symmetries: (2 n_c n_v)^n."""
    if n < 0:
        raise InvalidInputError(f"Length must be non-negative, got {n}")
    _check_universe(n_c, n_v)
    return (2 * n_c * n_v) ** n


def _items(n_c: int, n_v: int) -> List[Tuple[ComponentType, int]]:
    # Canonical order: type first, then bin (grid values increase with the bin)
    return [(ctype, value_bin) for ctype in ComponentType.first(n_c) for value_bin in range(n_v)]


def _compositions(n: int) -> Iterator[Tuple[int, ...]]:
    """All ordered ways to write n as a sum of positive parts."""
    if n == 0:
        yield ()
        return
    for first in range(1, n + 1):
        for rest in _compositions(n - first):
            yield (first,) + rest


def enumerate_canonical(
    n: int,
    n_c: int = 3,
    n_v: int = 5,
    cap: Optional[int] = DEFAULT_ENUMERATION_CAP,
    grid: Optional[ValueGrid] = None
) -> Iterator[Configuration]:
    """
    Yield every canonical configuration of exact length ``n`` once.

    Args:
        n: Chain length, n >= 1.
        n_c: Number of component types.
        n_v: Number of quantized values per type.
        cap: Maximum number of configurations the caller accepts; None for no cap.
        grid: Value grid supplying representative values.

    Raises:
        CapacityError: if the count exceeds ``cap``.
    """
    if n < 1:
        raise InvalidInputError(f"Length must be at least 1, got {n}")
    total = count_canonical(n, n_c, n_v).count
    if cap is not None and total > cap:
        raise CapacityError(f"{total} canonical configurations of length {n} exceed the cap of {cap}")

    return _enumerate(n, _items(n_c, n_v), grid or ValueGrid.with_bins(n_v))


def _enumerate(n: int, items: List[Tuple[ComponentType, int]], grid: ValueGrid) -> Iterator[Configuration]:
    for first_alignment in Alignment:
        for parts in _compositions(n):
            run_choices = []
            for position, size in enumerate(parts):
                alignment = Alignment((int(first_alignment) + position) % 2)
                multisets = itertools.combinations_with_replacement(items, size)
                run_choices.append([tuple(grid.component(alignment, *item) for item in multiset) for multiset in multisets])
            for runs in itertools.product(*run_choices):
                yield Configuration(tuple(itertools.chain.from_iterable(runs)))


def random_canonical(
    n: int,
    n_c: int = 3,
    n_v: int = 5,
    rng_seed: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    grid: Optional[ValueGrid] = None
) -> Configuration:
    """
    Draw a canonical configuration of exact length ``n``.

    Run boundaries are chosen by an independent fair coin between every pair
    of neighbours, the first alignment by another coin; each run is a
    uniform draw with replacement over (type, bin), then sorted. The result
    is deterministic per seed but not uniform over the canonical space.

    Args:
        n: Chain length, n >= 1.
        n_c: Number of component types.
        n_v: Number of quantized values per type.
        rng_seed: Seed for a fresh generator, used when ``rng`` is None.
        rng: Generator to draw from.
        grid: Value grid supplying representative values.
    """
    if n < 1:
        raise InvalidInputError(f"Length must be at least 1, got {n}")
    _check_universe(n_c, n_v)
    rng = rng if rng is not None else np.random.default_rng(rng_seed)
    grid = grid or ValueGrid.with_bins(n_v)
    items = _items(n_c, n_v)

    cuts = rng.integers(0, 2, size=n - 1) if n > 1 else np.zeros(0, dtype=int)
    alignment = Alignment(int(rng.integers(0, 2)))

    sizes: List[int] = [1]
    for cut in cuts:
        if cut:
            sizes.append(1)
        else:
            sizes[-1] += 1

    components: List[Component] = []
    for size in sizes:
        picks = sorted(int(i) for i in rng.integers(0, len(items), size=size))
        components.extend(grid.component(alignment, *items[i]) for i in picks)
        alignment = Alignment(1 - int(alignment))
    return Configuration(tuple(components))


def random_component(
    rng: np.random.Generator,
    n_c: int = 3,
    n_v: int = 5,
    grid: Optional[ValueGrid] = None
) -> Component:
    """Uniform draw of alignment, type and bin."""
    grid = grid or ValueGrid.with_bins(n_v)
    alignment = Alignment(int(rng.integers(0, 2)))
    ctype = ComponentType.first(n_c)[int(rng.integers(0, n_c))]
    return grid.component(alignment, ctype, int(rng.integers(0, n_v)))
