"""
Domain model of two-port circuit chains.

A configuration is an ordered chain of components running from the source
towards the output port. Each component sits either in series with the signal
path or in parallel (shunt) across it.
"""
import math
import re
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Iterator, Optional, Tuple, Union, overload

from twoport_fit.exceptions import InvalidInputError


class Alignment(IntEnum):
    """How a component is inserted into the chain. Series sorts before Parallel."""
    SERIES = 0
    PARALLEL = 1

    @property
    def letter(self) -> str:
        return 'S' if self is Alignment.SERIES else 'P'

    @classmethod
    def from_letter(cls, letter: str) -> 'Alignment':
        try:
            return {'S': cls.SERIES, 'P': cls.PARALLEL}[letter.strip().upper()]
        except KeyError:
            raise InvalidInputError(f"Unknown alignment '{letter}', expected S or P")


class ComponentType(IntEnum):
    """Electric component kinds in canonical order R < C < L."""
    RESISTOR = 0
    CAPACITOR = 1
    INDUCTOR = 2

    @property
    def letter(self) -> str:
        return 'RCL'[self.value]

    @property
    def unit(self) -> str:
        return ('Ω', 'F', 'H')[self.value]

    @classmethod
    def from_letter(cls, letter: str) -> 'ComponentType':
        try:
            return {'R': cls.RESISTOR, 'C': cls.CAPACITOR, 'L': cls.INDUCTOR}[letter.strip().upper()]
        except KeyError:
            raise InvalidInputError(f"Unknown component type '{letter}', expected R, C or L")

    @classmethod
    def first(cls, n_c: int) -> Tuple['ComponentType', ...]:
        """The first ``n_c`` types in canonical order."""
        if not 1 <= n_c <= len(cls):
            raise InvalidInputError(f"n_c must be between 1 and {len(cls)}, got {n_c}")
        return tuple(cls)[:n_c]


@dataclass(frozen=True)
class Component:
    """
    One electric element of a chain.

    Attributes:
        alignment: Series or parallel insertion.
        ctype: Resistor, capacitor or inductor.
        value: Positive value in ohms, farads or henries.
        value_bin: Index into the quantization grid, None for free values.
    """
    alignment: Alignment
    ctype: ComponentType
    value: float
    value_bin: Optional[int] = None

    def __post_init__(self):
        if not (isinstance(self.value, (int, float)) and math.isfinite(self.value) and self.value > 0):
            raise InvalidInputError(f"Component value must be a positive finite number, got {self.value!r}")
        if self.value_bin is not None and self.value_bin < 0:
            raise InvalidInputError(f"Value bin must be non-negative, got {self.value_bin}")
        # Normalize plain ints so equality and hashing stay exact
        object.__setattr__(self, 'alignment', Alignment(self.alignment))
        object.__setattr__(self, 'ctype', ComponentType(self.ctype))
        object.__setattr__(self, 'value', float(self.value))

    @property
    def sort_key(self) -> Tuple[int, float]:
        """Within-run ordering key: type first, then ascending value."""
        return (int(self.ctype), self.value)

    @property
    def identity(self) -> tuple:
        """Exact comparison key: the bin when known, the raw value otherwise."""
        if self.value_bin is not None:
            return (int(self.alignment), int(self.ctype), 'bin', self.value_bin)
        return (int(self.alignment), int(self.ctype), 'value', self.value)

    def with_value(self, value: float, value_bin: Optional[int] = None) -> 'Component':
        return replace(self, value=value, value_bin=value_bin)

    def to_literal(self) -> str:
        return f"{self.alignment.letter}:{self.ctype.letter}:{format_value(self.value)}"

    def __str__(self) -> str:
        return self.to_literal()


@dataclass(frozen=True)
class Configuration:
    """
    Ordered chain of components, source side first.

    Empty chains can be constructed (a decoder may emit one) but every
    circuit operation rejects them.
    """
    components: Tuple[Component, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, 'components', tuple(self.components))

    def __len__(self) -> int:
        return len(self.components)

    def __iter__(self) -> Iterator[Component]:
        return iter(self.components)

    @overload
    def __getitem__(self, index: int) -> Component: ...

    @overload
    def __getitem__(self, index: slice) -> 'Configuration': ...

    def __getitem__(self, index: Union[int, slice]):
        if isinstance(index, slice):
            return Configuration(self.components[index])
        return self.components[index]

    def __add__(self, other: 'Configuration') -> 'Configuration':
        return Configuration(self.components + tuple(other.components))

    @property
    def is_empty(self) -> bool:
        return not self.components

    @property
    def identity(self) -> tuple:
        return tuple(component.identity for component in self.components)

    @property
    def structure(self) -> Tuple[Tuple[int, int], ...]:
        """The (alignment, type) sequence, values ignored."""
        return tuple((int(c.alignment), int(c.ctype)) for c in self.components)

    @property
    def values(self) -> Tuple[float, ...]:
        return tuple(c.value for c in self.components)

    @property
    def bins(self) -> Tuple[Optional[int], ...]:
        return tuple(c.value_bin for c in self.components)

    def runs(self) -> Iterator[Tuple[Alignment, Tuple[Component, ...]]]:
        """Yield each maximal run of consecutive same-alignment components."""
        start = 0
        items = self.components
        for i in range(1, len(items) + 1):
            if i == len(items) or items[i].alignment != items[start].alignment:
                yield items[start].alignment, items[start:i]
                start = i

    def to_literal(self) -> str:
        return format_literal(self)

    def __str__(self) -> str:
        return self.to_literal()

    @classmethod
    def parse(cls, literal: str) -> 'Configuration':
        return parse_literal(literal)


def require_non_empty(config: Configuration, name: str = 'config') -> None:
    if config is None or len(config) == 0:
        raise InvalidInputError(f"{name} must contain at least one component")


# SI prefixes accepted by the literal parser; 'u' and 'µ' both mean micro
SI_PREFIXES = {
    'f': 1e-15,
    'p': 1e-12,
    'n': 1e-9,
    'u': 1e-6,
    'µ': 1e-6,
    'μ': 1e-6,
    'm': 1e-3,
    'k': 1e3,
    'K': 1e3,
    'M': 1e6,
    'G': 1e9,
}

_VALUE_PATTERN = re.compile(r'^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*([fpnuµμmkKMG]?)$')


def parse_value(text: str) -> float:
    """
    Parse a decimal with an optional SI suffix, e.g. "1m" or "0.5u".

    Args:
        text: Value text.

    Returns:
        The value as a float.
    """
    match = _VALUE_PATTERN.match(text.strip())
    if not match:
        raise InvalidInputError(f"Malformed component value '{text}'")
    number, prefix = match.groups()
    value = float(number)
    if prefix:
        value *= SI_PREFIXES[prefix]
    return value


def format_value(value: float) -> str:
    """Shortest text that parses back to exactly ``value``."""
    text = repr(float(value))
    return text[:-2] if text.endswith('.0') else text


def parse_literal(literal: str) -> Configuration:
    """
    Parse a configuration literal such as ``P:C:1m;S:R:1;S:L:0.5u``.

    Args:
        literal: Semicolon-separated ``ALIGN:TYPE:VALUE`` tokens.

    Returns:
        The parsed configuration.

    Raises:
        InvalidInputError: naming the first bad token.
    """
    if literal is None or not literal.strip():
        raise InvalidInputError("Empty configuration literal")

    components = []
    for position, token in enumerate(literal.split(';')):
        token = token.strip()
        if not token:
            continue
        parts = token.split(':')
        if len(parts) != 3:
            raise InvalidInputError(f"Bad component token '{token}' at position {position}: expected ALIGN:TYPE:VALUE")
        try:
            alignment = Alignment.from_letter(parts[0])
            ctype = ComponentType.from_letter(parts[1])
            value = parse_value(parts[2])
            components.append(Component(alignment, ctype, value))
        except InvalidInputError as e:
            raise InvalidInputError(f"Bad component token '{token}' at position {position}: {e}")

    if not components:
        raise InvalidInputError("Empty configuration literal")
    return Configuration(tuple(components))


def format_literal(config: Configuration) -> str:
    return ';'.join(component.to_literal() for component in config)
