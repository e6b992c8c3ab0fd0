"""
JSON-Lines dataset files.

Each split file starts with a header line
``{"format": "twoport-dataset", "version": 1, "split": ..., "count": N}``
followed by exactly N record lines. A sidecar ``manifest.json`` describes
the whole dataset.
"""
import json
import logging
import os
from typing import Iterable, Iterator, List

from twoport_fit.dataset.records import SPLITS, DatasetRecord
from twoport_fit.exceptions import IntegrityError, InvalidInputError
from twoport_fit.simulation.simulator import FrequencyGrid
from twoport_fit.utils.common import ensure_dir


logger = logging.getLogger(__name__)

FORMAT_NAME = 'twoport-dataset'
FORMAT_VERSION = 1
MANIFEST_NAME = 'manifest.json'


def split_path(directory: str, split: str) -> str:
    return os.path.join(directory, f"{split}.jsonl")


class SplitWriter:
    """
    Single-consumer sink writing one split file.

    The header needs the final count, so it is written up front from the
    expected count and :meth:`close` checks that exactly that many records
    arrived.
    """
    def __init__(self, path: str, split: str, count: int):
        ensure_dir(os.path.dirname(path))
        self.path = path
        self.split = split
        self.count = count
        self.written = 0
        self._file = open(path, 'w', encoding='utf-8', newline='\n')
        header = {'format': FORMAT_NAME, 'version': FORMAT_VERSION, 'split': split, 'count': count}
        self._file.write(json.dumps(header, sort_keys=True) + '\n')

    def write(self, record: DatasetRecord) -> None:
        if record.id != self.written:
            raise IntegrityError(f"Records must arrive in id order, expected {self.written}", record.id)
        self._file.write(record.to_json() + '\n')
        self.written += 1

    def close(self) -> None:
        self._file.close()
        if self.written != self.count:
            raise IntegrityError(f"{self.path}: wrote {self.written} records, header promises {self.count}")

    def __enter__(self) -> 'SplitWriter':
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self._file.close()


def write_split(path: str, split: str, records: Iterable[DatasetRecord]) -> int:
    """
    Write records to a split file.

    Returns:
        Number of records written.
    """
    records = list(records)
    with SplitWriter(path, split, len(records)) as writer:
        for record in records:
            writer.write(record)
    return len(records)


def _read_header(line: str, path: str) -> dict:
    try:
        header = json.loads(line)
    except json.JSONDecodeError:
        raise IntegrityError(f"{path}: malformed header")
    if not isinstance(header, dict) or header.get('format') != FORMAT_NAME:
        raise IntegrityError(f"{path}: not a {FORMAT_NAME} file")
    if header.get('version') != FORMAT_VERSION:
        raise IntegrityError(f"{path}: unsupported format version {header.get('version')}")
    if not isinstance(header.get('count'), int) or header['count'] < 0:
        raise IntegrityError(f"{path}: header count is missing or invalid")
    return header


def load(path: str) -> Iterator[DatasetRecord]:
    """
    Stream the records of a split file.

    The header is validated before this function returns; each record's
    checksum is verified as it is read.

    Args:
        path: Path to a split file.

    Returns:
        Iterator over the records in id order.

    Raises:
        IntegrityError: on a bad header, a corrupt record or a truncated file.
    """
    if not os.path.exists(path):
        raise InvalidInputError(f"Dataset file {path} does not exist")

    with open(path, 'r', encoding='utf-8') as f:
        first = f.readline()
    if not first.endswith('\n'):
        raise IntegrityError(f"{path}: file is empty or its header is truncated")
    header = _read_header(first, path)
    return _iter_records(path, header['count'])


def _iter_records(path: str, count: int) -> Iterator[DatasetRecord]:
    with open(path, 'r', encoding='utf-8') as f:
        f.readline()
        position = 0
        for line in f:
            if position >= count:
                if line.strip():
                    raise IntegrityError(f"{path}: more records than the header count {count}", position)
                continue
            if not line.endswith('\n'):
                raise IntegrityError(f"{path}: truncated record", position)
            yield DatasetRecord.from_json(line, position)
            position += 1
    if position < count:
        raise IntegrityError(f"{path}: file ends after {position} of {count} records", position)


def load_all(path: str) -> List[DatasetRecord]:
    return list(load(path))


def load_split(directory: str, split: str) -> Iterator[DatasetRecord]:
    if split not in SPLITS:
        raise InvalidInputError(f"Unknown split '{split}', expected one of {', '.join(SPLITS)}")
    return load(split_path(directory, split))


def write_manifest(directory: str, manifest: dict) -> str:
    ensure_dir(directory)
    path = os.path.join(directory, MANIFEST_NAME)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return path


def read_manifest(directory: str) -> dict:
    path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(path):
        raise InvalidInputError(f"No {MANIFEST_NAME} in {directory}")
    try:
        with open(path, 'r', encoding='utf-8') as f:
            manifest = json.load(f)
    except json.JSONDecodeError:
        raise IntegrityError(f"{path}: malformed manifest")
    if manifest.get('format') != FORMAT_NAME:
        raise IntegrityError(f"{path}: not a {FORMAT_NAME} manifest")
    return manifest


def manifest_grid(manifest: dict) -> FrequencyGrid:
    """Frequency grid the dataset was simulated on."""
    grid = manifest['grid']
    return FrequencyGrid.log_spaced(int(grid['points']), float(grid['f_min']), float(grid['f_max']))
