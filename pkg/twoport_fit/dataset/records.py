"""
Dataset records and split composition.
"""
import base64
import hashlib
import json
from dataclasses import dataclass, field
from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from twoport_fit.circuit.components import Configuration
from twoport_fit.circuit.enumeration import count_canonical
from twoport_fit.config.config_manager import ConfigManager
from twoport_fit.exceptions import IntegrityError, InvalidInputError
from twoport_fit.simulation.simulator import FrequencyGrid, NormalizedSpectrum, Spectrum, Termination, simulate
from twoport_fit.utils.common import parse_length_counts


SPLITS = ('train', 'val', 'test')

# Per-length record counts; None asks for every canonical configuration
LengthCounts = Dict[int, Optional[int]]


def _random_lengths(lengths, count: int) -> LengthCounts:
    return {n: count for n in lengths}


@dataclass(frozen=True)
class SplitSpec:
    """
    Number of records per length in each split.

    Attributes:
        train: Train composition.
        val: Validation composition.
        test: Test composition.
    """
    train: LengthCounts = field(default_factory=dict)
    val: LengthCounts = field(default_factory=dict)
    test: LengthCounts = field(default_factory=dict)

    def __post_init__(self):
        for split in SPLITS:
            for length, count in self.lengths(split).items():
                if length < 1:
                    raise InvalidInputError(f"{split}: lengths must be positive, got {length}")
                if count is not None and count < 0:
                    raise InvalidInputError(f"{split}: count for length {length} must be non-negative")

    @classmethod
    def standard(cls) -> 'SplitSpec':
        """Exhaustive train lengths 1-3, then 1,120 / 480 / 400 random records for lengths 4-10."""
        train = {1: None, 2: None, 3: None}
        train.update(_random_lengths(range(4, 11), 1120))
        return cls(train, _random_lengths(range(4, 11), 480), _random_lengths(range(4, 11), 400))

    @classmethod
    def reduced(cls) -> 'SplitSpec':
        """Lengths 1-4 with 2,000 train records, for desk-scale comparisons."""
        return cls(
            {1: None, 2: None, 3: 640, 4: 640},
            {3: 100, 4: 100},
            {3: 200, 4: 200},
        )

    @classmethod
    def from_config(cls, config_manager: ConfigManager) -> 'SplitSpec':
        return cls(*(parse_length_counts(config_manager.get('DATASET', split, fallback='')) for split in SPLITS))

    @classmethod
    def parse(cls, name_or_path: str, config_manager: Optional[ConfigManager] = None) -> 'SplitSpec':
        """
        Resolve a split specification by name.

        Args:
            name_or_path: 'standard', 'reduced', 'config', or an INI file
                holding a [DATASET] section.
        """
        if name_or_path == 'standard':
            return cls.standard()
        if name_or_path == 'reduced':
            return cls.reduced()
        if name_or_path == 'config':
            return cls.from_config(config_manager or ConfigManager())
        return cls.from_config(ConfigManager(name_or_path))

    def lengths(self, split: str) -> LengthCounts:
        if split not in SPLITS:
            raise InvalidInputError(f"Unknown split '{split}', expected one of {', '.join(SPLITS)}")
        return getattr(self, split)

    def resolved(self, split: str, n_c: int = 3, n_v: int = 5) -> Dict[int, int]:
        """Per-length counts with exhaustive entries replaced by the canonical count."""
        return {
            length: count_canonical(length, n_c, n_v).count if count is None else count
            for length, count in sorted(self.lengths(split).items())
        }

    def total(self, split: str, n_c: int = 3, n_v: int = 5) -> int:
        return sum(self.resolved(split, n_c, n_v).values())

    def to_dict(self) -> Dict[str, Dict[str, object]]:
        return {
            split: {str(length): ('all' if count is None else count) for length, count in sorted(self.lengths(split).items())}
            for split in SPLITS
        }


def encode_array(array: np.ndarray) -> str:
    """Base64 of the little-endian float64 bytes, row-major."""
    return base64.b64encode(np.ascontiguousarray(array, dtype='<f8').tobytes()).decode('ascii')


def decode_array(text: str, shape: Tuple[int, ...]) -> np.ndarray:
    raw = base64.b64decode(text.encode('ascii'), validate=True)
    expected = int(np.prod(shape)) * 8
    if len(raw) != expected:
        raise ValueError(f"Array payload has {len(raw)} bytes, expected {expected}")
    return np.frombuffer(raw, dtype='<f8').reshape(shape).astype(np.float64)


@dataclass(frozen=True)
class DatasetRecord:
    """
    One configuration with its spectrum.

    Attributes:
        id: Position within the split.
        split: 'train', 'val' or 'test'.
        config: Canonical configuration; every component carries its bin.
        termination: Termination the spectrum was simulated with.
        spectrum: Normalized channels, shape 4 x d.
        raw: Raw channels Re V, Im V, Re I, Im I, shape 4 x d, when embedded.
    """
    id: int
    split: str
    config: Configuration
    termination: Termination
    spectrum: NormalizedSpectrum
    raw: Optional[np.ndarray] = None

    @property
    def length(self) -> int:
        return len(self.config)

    def target(self, grid: FrequencyGrid) -> Spectrum:
        """
        Raw spectrum for refinement; re-simulated when it was not embedded.
        """
        if self.raw is None:
            return simulate(self.config, grid, self.termination)
        return Spectrum(self.raw[0] + 1j * self.raw[1], self.raw[2] + 1j * self.raw[3], grid, self.termination)

    def payload(self) -> dict:
        return {
            'id': self.id,
            'split': self.split,
            'length': self.length,
            'config': self.config.to_literal(),
            'bins': list(self.config.bins),
            'termination': str(self.termination),
            'd': self.spectrum.d,
            'spectrum': encode_array(self.spectrum.channels),
            'raw': None if self.raw is None else encode_array(self.raw),
        }

    def to_json(self) -> str:
        payload = self.payload()
        payload['checksum'] = checksum(payload)
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, line: str, position: int) -> 'DatasetRecord':
        """
        Decode and verify one JSON line.

        Args:
            line: The JSON text.
            position: Record index within the file, reported on failure.

        Raises:
            IntegrityError: on malformed JSON, a checksum mismatch or bad fields.
        """
        try:
            payload = json.loads(line)
        except json.JSONDecodeError:
            raise IntegrityError("Malformed dataset line", position)
        if not isinstance(payload, dict):
            raise IntegrityError("Dataset line is not an object", position)

        record_id = payload.get('id', position)
        stored = payload.pop('checksum', None)
        if stored is None or stored != checksum(payload):
            raise IntegrityError("Checksum mismatch", record_id)

        try:
            config = Configuration.parse(payload['config'])
            bins = payload['bins']
            if len(bins) != len(config):
                raise ValueError("bins do not match the configuration length")
            config = Configuration(tuple(c.with_value(c.value, b) for c, b in zip(config, bins)))
            d = int(payload['d'])
            spectrum = NormalizedSpectrum(decode_array(payload['spectrum'], (4, d)))
            raw = None if payload.get('raw') is None else decode_array(payload['raw'], (4, d))
            return cls(
                id=int(record_id),
                split=payload['split'],
                config=config,
                termination=Termination.parse(payload['termination']),
                spectrum=spectrum,
                raw=raw,
            )
        except (KeyError, TypeError, ValueError) as e:
            raise IntegrityError(f"Bad record field: {e}", record_id)


def checksum(payload: dict) -> str:
    """sha256 over the sorted-key JSON of a record without its checksum."""
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode('utf-8')).hexdigest()


def records_by_length(records: Iterator[DatasetRecord]) -> Dict[int, list]:
    grouped: Dict[int, list] = {}
    for record in records:
        grouped.setdefault(record.length, []).append(record)
    return dict(sorted(grouped.items()))
