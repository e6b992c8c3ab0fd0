"""
Spectrum file formats.

CSV: columns frequency_hz, re_v, im_v, re_i, im_i, one row per frequency.

Binary ("TPF1"): a 16-byte little-endian header {magic b"TPF1", u32 d,
u32 flags}, then five little-endian float64 arrays of length d in the order
frequency, re_v, im_v, re_i, im_i. Flag bit 0 marks an open output port;
bit 1 means a float64 load impedance follows the arrays.
"""
import csv
import logging
import os
import struct
from typing import TextIO, Union

import numpy as np

from twoport_fit.exceptions import IntegrityError, InvalidInputError
from twoport_fit.simulation.simulator import FrequencyGrid, Spectrum, Termination
from twoport_fit.utils.common import ensure_dir


logger = logging.getLogger(__name__)

CSV_COLUMNS = ('frequency_hz', 're_v', 'im_v', 're_i', 'im_i')

BINARY_MAGIC = b'TPF1'
BINARY_HEADER = struct.Struct('<4sII')
FLAG_OPEN = 0x1
FLAG_LOAD_TRAILER = 0x2


def write_csv(spectrum: Spectrum, stream: TextIO) -> None:
    """
    Write a spectrum as plot-ready CSV.

    Args:
        spectrum: The spectrum to write.
        stream: Text stream opened for writing.
    """
    writer = csv.writer(stream, lineterminator='\n')
    writer.writerow(CSV_COLUMNS)
    rows = zip(spectrum.grid.frequencies, spectrum.V.real, spectrum.V.imag, spectrum.I.real, spectrum.I.imag)
    for row in rows:
        # repr keeps every float exact so the file loads back bitwise
        writer.writerow([repr(float(x)) for x in row])


def read_csv(stream: TextIO, termination: Termination = None) -> Spectrum:
    """
    Read a spectrum written by :func:`write_csv`.

    Args:
        stream: Text stream opened for reading.
        termination: Termination to attach; CSV files do not record it.
    """
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CSV_COLUMNS:
        raise IntegrityError(f"Spectrum CSV must start with header {','.join(CSV_COLUMNS)}")

    rows = []
    for line_number, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(CSV_COLUMNS):
            raise IntegrityError(f"Spectrum CSV line {line_number} has {len(row)} columns")
        try:
            rows.append([float(x) for x in row])
        except ValueError:
            raise IntegrityError(f"Spectrum CSV line {line_number} is not numeric")

    if not rows:
        raise IntegrityError("Spectrum CSV holds no rows")
    data = np.array(rows, dtype=np.float64).T
    return Spectrum(data[1] + 1j * data[2], data[3] + 1j * data[4], FrequencyGrid(data[0]),
                    termination or Termination.load())


def to_bytes(spectrum: Spectrum) -> bytes:
    """Encode a spectrum in the TPF1 binary format."""
    termination = spectrum.termination
    flags = FLAG_OPEN if termination.is_open else FLAG_LOAD_TRAILER
    arrays = np.stack([
        spectrum.grid.frequencies, spectrum.V.real, spectrum.V.imag, spectrum.I.real, spectrum.I.imag
    ]).astype('<f8')
    payload = BINARY_HEADER.pack(BINARY_MAGIC, len(spectrum), flags) + arrays.tobytes()
    if flags & FLAG_LOAD_TRAILER:
        payload += struct.pack('<d', termination.impedance)
    return payload


def from_bytes(payload: bytes) -> Spectrum:
    """Decode a TPF1 binary spectrum."""
    if len(payload) < BINARY_HEADER.size:
        raise IntegrityError("Binary spectrum is shorter than its header")
    magic, d, flags = BINARY_HEADER.unpack_from(payload)
    if magic != BINARY_MAGIC:
        raise IntegrityError(f"Bad binary spectrum magic {magic!r}")

    body_size = 5 * d * 8
    expected = BINARY_HEADER.size + body_size + (8 if flags & FLAG_LOAD_TRAILER else 0)
    if len(payload) != expected:
        raise IntegrityError(f"Binary spectrum has {len(payload)} bytes, expected {expected}")

    arrays = np.frombuffer(payload, dtype='<f8', count=5 * d, offset=BINARY_HEADER.size).reshape(5, d)
    if flags & FLAG_OPEN:
        termination = Termination.open_circuit()
    elif flags & FLAG_LOAD_TRAILER:
        termination = Termination.load(struct.unpack_from('<d', payload, BINARY_HEADER.size + body_size)[0])
    else:
        termination = Termination.load()
    arrays = arrays.astype(np.float64)
    return Spectrum(arrays[1] + 1j * arrays[2], arrays[3] + 1j * arrays[4], FrequencyGrid(arrays[0]), termination)


def save_spectrum(spectrum: Spectrum, path: str, fmt: str = None) -> str:
    """
    Save a spectrum; the format follows ``fmt`` or the file extension.

    Args:
        spectrum: The spectrum to save.
        path: Output file path.
        fmt: 'csv' or 'bin'.

    Returns:
        The path written.
    """
    fmt = fmt or _format_from_path(path)
    ensure_dir(os.path.dirname(path))
    if fmt == 'csv':
        with open(path, 'w', newline='', encoding='utf-8') as f:
            write_csv(spectrum, f)
    elif fmt == 'bin':
        with open(path, 'wb') as f:
            f.write(to_bytes(spectrum))
    else:
        raise InvalidInputError(f"Unknown spectrum format '{fmt}', expected csv or bin")
    logger.debug(f"Wrote {len(spectrum)}-point spectrum to {path}")
    return path


def load_spectrum(path: str, termination: Union[Termination, None] = None) -> Spectrum:
    """
    Load a spectrum from a CSV or TPF1 file.

    Binary files carry their termination; for CSV files ``termination`` is
    attached (a 1 ohm load when omitted).
    """
    if not os.path.exists(path):
        raise InvalidInputError(f"Spectrum file {path} does not exist")
    with open(path, 'rb') as f:
        head = f.read(len(BINARY_MAGIC))
    if head == BINARY_MAGIC:
        with open(path, 'rb') as f:
            return from_bytes(f.read())
    with open(path, 'r', newline='', encoding='utf-8') as f:
        return read_csv(f, termination)


def _format_from_path(path: str) -> str:
    extension = os.path.splitext(path)[1].lower()
    return 'bin' if extension in ('.bin', '.tpf') else 'csv'
