"""
Canonical ordering of two-port chains.

Consecutive components sharing an alignment can be permuted without changing
V(k) or I(k): series impedances add and shunt admittances add. The canonical
representative sorts every such run by type (R < C < L) and then by ascending
value.
"""
from typing import Callable

from twoport_fit.circuit.components import Component, Configuration, require_non_empty


def _sort_runs(config: Configuration, key: Callable[[Component], tuple]) -> Configuration:
    ordered = []
    for _, run in config.runs():
        # sorted() is stable, so equal keys keep their input order
        ordered.extend(sorted(run, key=key))
    return Configuration(tuple(ordered))


def _full_key(component: Component) -> tuple:
    bin_key = -1 if component.value_bin is None else component.value_bin
    return (int(component.ctype), component.value, bin_key)


def canonicalize(config: Configuration) -> Configuration:
    """
    Sort each maximal same-alignment run by (type, value).

    Args:
        config: Non-empty configuration.

    Returns:
        The canonical configuration; run boundaries and alignments unchanged.
    """
    require_non_empty(config)
    return _sort_runs(config, _full_key)


def canonicalize_structure(config: Configuration) -> Configuration:
    """
    Sort each run by type only, keeping equal types in input order.

    Used when values are to be ignored, so that value noise cannot reorder
    same-type components.
    """
    require_non_empty(config)
    return _sort_runs(config, lambda c: (int(c.ctype),))


def is_canonical(config: Configuration) -> bool:
    require_non_empty(config)
    return canonicalize(config) == config


def canonical_key(config: Configuration) -> tuple:
    """Hashable identity of a configuration's equivalence class."""
    return canonicalize(config).identity


def equivalent(a: Configuration, b: Configuration) -> bool:
    """
    Whether two chains are indistinguishable under run permutations.

    Values compare exactly on their bins when present, on the raw value
    otherwise; near-ties are never merged.
    """
    require_non_empty(a, 'a')
    require_non_empty(b, 'b')
    if len(a) != len(b):
        return False
    return canonical_key(a) == canonical_key(b)
