"""
Forward simulation of two-port chains with cascaded ABCD matrices.

Each component maps the port state (V, I) seen from the source side to the
state after it:

    series  Z:  (V, I) -> (V - Z I, I)        T = [[1, -Z], [0, 1]]
    shunt   Y:  (V, I) -> (V, I - Y V)        T = [[1, 0], [-Y, 1]]

so the chain matrix is T_n ... T_1 and (V_out, I_out) = T (V_in, I_in).
The source is an ideal 1 V sinusoid; the output port is either loaded by a
resistor or left open.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from twoport_fit.circuit.components import (
    Alignment, Component, ComponentType, Configuration, format_value, parse_value, require_non_empty
)
from twoport_fit.exceptions import InvalidInputError, SingularityError


logger = logging.getLogger(__name__)

DEFAULT_POINTS = 512
DEFAULT_F_MIN = 1.0
DEFAULT_F_MAX = 1e6

# Relative size below which the port-solve denominator counts as zero
SINGULAR_RTOL = 1e-12


@dataclass(frozen=True)
class Complex2x2:
    """
    Real 2x2 form of a complex number: a + ib -> [[a, b], [-b, a]].

    Matrix products of these forms are complex products, so every complex
    operation in the simulator reduces to real arithmetic.
    """
    a: float
    b: float

    @classmethod
    def from_complex(cls, z: complex) -> 'Complex2x2':
        return cls(float(z.real), float(z.imag))

    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [-self.b, self.a]], dtype=np.float64)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> 'Complex2x2':
        return cls(float(m[0, 0]), float(m[0, 1]))

    def to_complex(self) -> complex:
        return complex(self.a, self.b)

    def __matmul__(self, other: 'Complex2x2') -> 'Complex2x2':
        return Complex2x2.from_matrix(self.matrix() @ other.matrix())


@dataclass(frozen=True)
class TransferMatrix:
    """
    ABCD matrix [[a, b], [c, d]]; entries may be arrays over a frequency grid.
    """
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    @classmethod
    def identity(cls, shape: Tuple[int, ...] = ()) -> 'TransferMatrix':
        one = np.ones(shape, dtype=np.complex128)
        zero = np.zeros(shape, dtype=np.complex128)
        return cls(one, zero, zero.copy(), one.copy())

    def __matmul__(self, other: 'TransferMatrix') -> 'TransferMatrix':
        # Written out elementwise so chunked and whole-grid evaluation agree bitwise
        return TransferMatrix(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def det(self) -> np.ndarray:
        return self.a * self.d - self.b * self.c

    def to_array(self) -> np.ndarray:
        """Complex array of shape (..., 2, 2)."""
        return np.stack([np.stack([self.a, self.b], axis=-1), np.stack([self.c, self.d], axis=-1)], axis=-2)

    def as_real(self) -> np.ndarray:
        """Real 4x4 form for scalar entries, each entry a Complex2x2 block."""
        blocks = [[Complex2x2.from_complex(complex(x)).matrix() for x in row]
                  for row in ((self.a, self.b), (self.c, self.d))]
        return np.block(blocks)

    def apply(self, v: np.ndarray, i: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return self.a * v + self.b * i, self.c * v + self.d * i


@dataclass(frozen=True)
class FrequencyGrid:
    """
    Strictly increasing positive frequencies in Hz.
    """
    frequencies: np.ndarray

    def __post_init__(self):
        freqs = np.asarray(self.frequencies, dtype=np.float64)
        if freqs.ndim != 1 or freqs.size == 0:
            raise InvalidInputError("Frequency grid must be a non-empty 1-D array")
        if not np.all(np.isfinite(freqs)) or np.any(freqs <= 0):
            raise InvalidInputError("Frequencies must be positive and finite")
        if np.any(np.diff(freqs) <= 0):
            raise InvalidInputError("Frequencies must be strictly increasing")
        freqs.setflags(write=False)
        object.__setattr__(self, 'frequencies', freqs)

    @classmethod
    def log_spaced(cls, points: int = DEFAULT_POINTS, f_min: float = DEFAULT_F_MIN,
                   f_max: float = DEFAULT_F_MAX) -> 'FrequencyGrid':
        if points < 1:
            raise InvalidInputError(f"Grid needs at least one point, got {points}")
        if points == 1:
            return cls(np.array([f_min], dtype=np.float64))
        freqs = np.geomspace(f_min, f_max, points)
        # Pin the endpoints exactly
        freqs[0], freqs[-1] = f_min, f_max
        return cls(freqs)

    @property
    def omega(self) -> np.ndarray:
        return 2.0 * math.pi * self.frequencies

    def __len__(self) -> int:
        return self.frequencies.size

    def __eq__(self, other) -> bool:
        return isinstance(other, FrequencyGrid) and np.array_equal(self.frequencies, other.frequencies)

    def __hash__(self) -> int:
        return hash(self.frequencies.tobytes())

    def chunk(self, start: int, stop: int) -> 'FrequencyGrid':
        return FrequencyGrid(self.frequencies[start:stop])


def default_grid() -> FrequencyGrid:
    """512 log-spaced frequencies from 1 Hz to 1 MHz."""
    return FrequencyGrid.log_spaced(DEFAULT_POINTS, DEFAULT_F_MIN, DEFAULT_F_MAX)


@dataclass(frozen=True)
class Termination:
    """
    Output port termination: a resistive load or an open circuit.

    Attributes:
        kind: 'load' or 'open'.
        impedance: Load resistance in ohms (ignored when open).
    """
    kind: str = 'load'
    impedance: float = 1.0

    def __post_init__(self):
        if self.kind not in ('load', 'open'):
            raise InvalidInputError(f"Unknown termination kind '{self.kind}'")
        if self.kind == 'load' and not (math.isfinite(self.impedance) and self.impedance > 0):
            raise InvalidInputError(f"Load impedance must be positive, got {self.impedance}")

    @classmethod
    def load(cls, impedance: float = 1.0) -> 'Termination':
        return cls('load', float(impedance))

    @classmethod
    def open_circuit(cls) -> 'Termination':
        return cls('open', 0.0)

    @property
    def is_open(self) -> bool:
        return self.kind == 'open'

    @classmethod
    def parse(cls, text: str) -> 'Termination':
        """
        Parse 'open', 'load' or 'load:<ohms>'.
        """
        text = (text or '').strip()
        kind, _, value = text.partition(':')
        kind = kind.lower()
        if kind == 'open' and not value:
            return cls.open_circuit()
        if kind != 'load':
            raise InvalidInputError(f"Unknown termination '{text}', expected load:<ohms> or open")
        if not value:
            return cls.load()
        return cls.load(parse_value(value))

    def __str__(self) -> str:
        if self.is_open:
            return 'open'
        return f"load:{format_value(self.impedance)}"


@dataclass(frozen=True)
class Spectrum:
    """
    Characteristic functions sampled on a grid.

    Attributes:
        V: Complex output voltage per frequency.
        I: Complex current per frequency (I_out under a load, I_in when open).
        grid: The frequency grid.
        termination: Termination that produced the spectrum.
    """
    V: np.ndarray
    I: np.ndarray
    grid: FrequencyGrid
    termination: Termination = field(default_factory=Termination)

    def __post_init__(self):
        v = np.asarray(self.V, dtype=np.complex128)
        i = np.asarray(self.I, dtype=np.complex128)
        if v.shape != (len(self.grid),) or i.shape != (len(self.grid),):
            raise InvalidInputError("Spectrum arrays must match the grid length")
        object.__setattr__(self, 'V', v)
        object.__setattr__(self, 'I', i)

    def __len__(self) -> int:
        return len(self.grid)

    @property
    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.V)) and np.all(np.isfinite(self.I)))

    def channels(self) -> np.ndarray:
        """Raw 4 x d real channels: Re V, Im V, Re I, Im I."""
        return np.stack([self.V.real, self.V.imag, self.I.real, self.I.imag])


@dataclass(frozen=True)
class NormalizedSpectrum:
    """
    tanh-squashed channels, shape 4 x d, every entry in (-1, 1).
    """
    channels: np.ndarray

    def __post_init__(self):
        channels = np.asarray(self.channels, dtype=np.float64)
        if channels.ndim != 2 or channels.shape[0] != 4:
            raise InvalidInputError(f"Normalized spectrum must be 4 x d, got shape {channels.shape}")
        object.__setattr__(self, 'channels', channels)

    @property
    def d(self) -> int:
        return self.channels.shape[1]


def impedance(component: Component, omega: np.ndarray) -> np.ndarray:
    """Z(omega): R, 1/(i omega C) or i omega L."""
    value = component.value
    omega = np.asarray(omega, dtype=np.float64)
    if component.ctype is ComponentType.RESISTOR:
        return np.full(omega.shape, value, dtype=np.complex128)
    if component.ctype is ComponentType.INDUCTOR:
        return 1j * (omega * value)
    return -1j / (omega * value)


def admittance(component: Component, omega: np.ndarray) -> np.ndarray:
    """Y(omega) = 1 / Z(omega)."""
    value = component.value
    omega = np.asarray(omega, dtype=np.float64)
    if component.ctype is ComponentType.RESISTOR:
        return np.full(omega.shape, 1.0 / value, dtype=np.complex128)
    if component.ctype is ComponentType.INDUCTOR:
        return -1j / (omega * value)
    return 1j * (omega * value)


def _component_abcd(component: Component, omega: np.ndarray) -> TransferMatrix:
    one = np.ones(np.shape(omega), dtype=np.complex128)
    zero = np.zeros(np.shape(omega), dtype=np.complex128)
    if component.alignment is Alignment.SERIES:
        return TransferMatrix(one, -impedance(component, omega), zero, one)
    return TransferMatrix(one, zero, -admittance(component, omega), one)


def _check_frequency(f) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if not np.all(np.isfinite(f)) or np.any(f <= 0):
        raise InvalidInputError(f"Frequency must be positive, got {f}")
    return f


def component_matrix(component: Component, f: float) -> TransferMatrix:
    """
    ABCD matrix of one component at frequency ``f`` (Hz).

    Args:
        component: The component.
        f: Frequency in Hz, scalar or array.

    Returns:
        [[1, -Z], [0, 1]] for series, [[1, 0], [-Y, 1]] for shunt.
    """
    f = _check_frequency(f)
    return _component_abcd(component, 2.0 * math.pi * f)


def _chain(config: Configuration, omega: np.ndarray) -> TransferMatrix:
    total = TransferMatrix.identity(np.shape(omega))
    for component in config:
        total = _component_abcd(component, omega) @ total
    return total


def chain_matrix(config: Configuration, f: float) -> TransferMatrix:
    """
    Cascade T_n ... T_1, T_1 being the component next to the source.

    Args:
        config: Non-empty configuration.
        f: Frequency in Hz, scalar or array.
    """
    require_non_empty(config)
    f = _check_frequency(f)
    return _chain(config, 2.0 * math.pi * f)


def is_singular(denominator: np.ndarray, scale: np.ndarray) -> np.ndarray:
    """Mask of frequencies whose port-solve denominator is zero relative to ``scale``."""
    return ~np.isfinite(denominator) | (np.abs(denominator) <= SINGULAR_RTOL * scale)


def solve_ports(matrix: TransferMatrix, termination: Termination,
                offset: int = 0, grid: Optional[FrequencyGrid] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Solve the port equations with V_in = 1.

    Under a load Z_L, V_out = Z_L I_out gives
    I_in = (Z_L C - A) / (B - Z_L D); under an open port I_out = 0 gives
    I_in = -C / D. Every component matrix has unit determinant, so
    AD - BC = 1 and the outputs reduce to V_out = -Z_L / (B - Z_L D),
    I_out = -1 / (B - Z_L D) and, when open, V_out = 1 / D.

    Returns:
        (V_out, I) with I = I_out for a load and I_in for an open port.

    Raises:
        SingularityError: at the first frequency whose solve is singular.
    """
    a, b, c, d = matrix.a, matrix.b, matrix.c, matrix.d
    scale = np.abs(a) + np.abs(b) + np.abs(c) + np.abs(d)

    denominator = d if termination.is_open else b - termination.impedance * d

    singular = is_singular(denominator, scale)
    if np.any(singular):
        index = int(np.argmax(singular))
        frequency = float(grid.frequencies[index]) if grid is not None else None
        raise SingularityError(offset + index, frequency)

    if termination.is_open:
        return 1.0 / denominator, -c / denominator
    i_out = -1.0 / denominator
    return termination.impedance * i_out, i_out


def _simulate_chunk(config: Configuration, grid: FrequencyGrid, termination: Termination,
                    offset: int) -> Tuple[np.ndarray, np.ndarray]:
    return solve_ports(_chain(config, grid.omega), termination, offset, grid)


def simulate(
    config: Configuration,
    grid: Optional[FrequencyGrid] = None,
    termination: Optional[Termination] = None,
    threads: int = 1
) -> Spectrum:
    """
    Simulate V(k) and I(k) for a chain driven by an ideal 1 V source.

    Args:
        config: Non-empty configuration.
        grid: Frequency grid, the default grid when omitted.
        termination: Output termination, a 1 ohm load when omitted.
        threads: Number of grid chunks evaluated in parallel. Results are
            bitwise identical for every thread count.

    Returns:
        The simulated spectrum.
    """
    require_non_empty(config)
    grid = grid or default_grid()
    termination = termination or Termination.load()

    if threads <= 1 or len(grid) < 2 * threads:
        v, i = _simulate_chunk(config, grid, termination, 0)
        return Spectrum(v, i, grid, termination)

    bounds = np.linspace(0, len(grid), threads + 1).astype(int)
    chunks = [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        parts = list(executor.map(
            lambda span: _simulate_chunk(config, grid.chunk(*span), termination, span[0]), chunks
        ))
    v = np.concatenate([part[0] for part in parts])
    i = np.concatenate([part[1] for part in parts])
    return Spectrum(v, i, grid, termination)


def normalize(spectrum: Spectrum) -> NormalizedSpectrum:
    """
    tanh(Re V), tanh(Im V), tanh(Re I), tanh(Im I), in that order.
    """
    if not spectrum.is_finite:
        raise InvalidInputError("Cannot normalize a spectrum with non-finite entries")
    return NormalizedSpectrum(np.tanh(spectrum.channels()))
