"""
Quantization grid for component values.
"""
import math
from dataclasses import dataclass
from typing import Dict, Tuple

from twoport_fit.circuit.components import Component, ComponentType
from twoport_fit.exceptions import InvalidInputError


# Lowest decade per type; bins step one decade upwards.
# RC corners span roughly 0.016 Hz to 1.6 MHz, keeping spectra informative
# across the 1 Hz - 1 MHz band.
_BASE_EXPONENT = {
    ComponentType.RESISTOR: -1,
    ComponentType.CAPACITOR: -6,
    ComponentType.INDUCTOR: -7,
}

_DEFAULT_VALUES = {
    ComponentType.RESISTOR: (0.1, 1.0, 10.0, 100.0, 1000.0),
    ComponentType.CAPACITOR: (1e-6, 1e-5, 1e-4, 1e-3, 1e-2),
    ComponentType.INDUCTOR: (1e-7, 1e-6, 1e-5, 1e-4, 1e-3),
}


@dataclass(frozen=True)
class ValueGrid:
    """
    Representative values per component type, strictly increasing.

    Attributes:
        values: Mapping of component type to its representative values.
    """
    values: Dict[ComponentType, Tuple[float, ...]]

    def __post_init__(self):
        sizes = {len(v) for v in self.values.values()}
        if len(sizes) != 1:
            raise InvalidInputError("Every component type needs the same number of bins")
        for ctype, vals in self.values.items():
            if any(b <= a for a, b in zip(vals, vals[1:])) or vals[0] <= 0:
                raise InvalidInputError(f"Grid for {ctype.name} must be positive and strictly increasing")

    @classmethod
    def default(cls) -> 'ValueGrid':
        return cls(dict(_DEFAULT_VALUES))

    @classmethod
    def with_bins(cls, n_v: int) -> 'ValueGrid':
        """
        Grid with ``n_v`` bins per type.

        The first five bins are the default grid; further bins continue one
        decade apart.
        """
        if n_v < 1:
            raise InvalidInputError(f"n_v must be at least 1, got {n_v}")
        values = {}
        for ctype, defaults in _DEFAULT_VALUES.items():
            extra = tuple(10.0 ** (_BASE_EXPONENT[ctype] + i) for i in range(len(defaults), n_v))
            values[ctype] = (defaults + extra)[:n_v]
        return cls(values)

    @property
    def n_v(self) -> int:
        return len(next(iter(self.values.values())))

    def representative(self, ctype: ComponentType, value_bin: int) -> float:
        vals = self.values[ComponentType(ctype)]
        if not 0 <= value_bin < len(vals):
            raise InvalidInputError(f"Value bin {value_bin} out of range for {len(vals)} bins")
        return vals[value_bin]

    def component(self, alignment, ctype: ComponentType, value_bin: int) -> Component:
        """Build a grid-born component carrying its bin."""
        return Component(alignment, ctype, self.representative(ctype, value_bin), value_bin)

    def quantize(self, value: float, ctype: ComponentType) -> int:
        return quantize(value, ctype, self)

    def to_dict(self) -> Dict[str, list]:
        return {ctype.letter: list(vals) for ctype, vals in self.values.items()}


def quantize(value: float, ctype: ComponentType, grid: ValueGrid = None) -> int:
    """
    Index of the grid value nearest in log-space.

    Exact log-midpoints go to the lower index.

    Args:
        value: Positive component value.
        ctype: Component type selecting the grid row.
        grid: Value grid, the default grid when omitted.

    Returns:
        Bin index.
    """
    if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
        raise InvalidInputError(f"Cannot quantize non-positive value {value!r}")
    grid = grid or ValueGrid.default()
    vals = grid.values[ComponentType(ctype)]

    log_value = math.log10(value)
    best, best_distance = 0, math.inf
    for index, representative in enumerate(vals):
        distance = abs(log_value - math.log10(representative))
        # Strict comparison keeps the lower index on ties
        if distance < best_distance - 1e-12:
            best, best_distance = index, distance
    return best


def requantize(component: Component, grid: ValueGrid = None) -> Component:
    """Attach the nearest bin to a component while keeping its value."""
    return component.with_value(component.value, quantize(component.value, component.ctype, grid))
