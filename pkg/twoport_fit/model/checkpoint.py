"""
Single-file model checkpoints.

Layout: magic b"TPFM", u32 little-endian header length, UTF-8 JSON header,
then every parameter as little-endian float32 in header order.
"""
import json
import logging
import os
import struct
from typing import Optional, Tuple

import numpy as np
import torch

from twoport_fit.exceptions import IntegrityError, InvalidInputError
from twoport_fit.model.hypernet import HyperDecoder
from twoport_fit.model.layout import ModelConfig
from twoport_fit.utils.common import ensure_dir


logger = logging.getLogger(__name__)

MAGIC = b'TPFM'
_LENGTH = struct.Struct('<I')


def save_checkpoint(model: HyperDecoder, path: str, seed: Optional[int] = None,
                    epoch: Optional[int] = None, val_partial_loss: Optional[float] = None) -> str:
    """
    Write a model checkpoint.

    Args:
        model: Model to save.
        path: Output file.
        seed: Training seed.
        epoch: Epoch the parameters come from.
        val_partial_loss: Validation partial loss of that epoch.

    Returns:
        The path written.
    """
    state = model.state_dict()
    header = {
        'architecture': model.config.to_dict(),
        'n_w': model.n_w,
        'seed': seed,
        'epoch': epoch,
        'val_partial_loss': val_partial_loss,
        'parameters': [[name, list(tensor.shape)] for name, tensor in state.items()],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode('utf-8')
    blob = b''.join(
        tensor.detach().cpu().numpy().astype('<f4').tobytes() for tensor in state.values()
    )

    ensure_dir(os.path.dirname(path))
    with open(path, 'wb') as f:
        f.write(MAGIC)
        f.write(_LENGTH.pack(len(header_bytes)))
        f.write(header_bytes)
        f.write(blob)
    logger.info(f"Saved checkpoint to {path} (N_w={model.n_w}, epoch {epoch})")
    return path


def load_checkpoint(path: str) -> Tuple[HyperDecoder, dict]:
    """
    Read a checkpoint written by :func:`save_checkpoint`.

    Returns:
        The model in eval mode and the JSON header.

    Raises:
        IntegrityError: on a bad magic, header or blob size.
    """
    if not os.path.exists(path):
        raise InvalidInputError(f"Model file {path} does not exist")
    with open(path, 'rb') as f:
        payload = f.read()

    if payload[:len(MAGIC)] != MAGIC or len(payload) < len(MAGIC) + _LENGTH.size:
        raise IntegrityError(f"{path}: not a model checkpoint")
    (header_length,) = _LENGTH.unpack_from(payload, len(MAGIC))
    start = len(MAGIC) + _LENGTH.size
    try:
        header = json.loads(payload[start:start + header_length].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise IntegrityError(f"{path}: malformed checkpoint header")

    model = HyperDecoder(ModelConfig.from_dict(header['architecture']))
    offset = start + header_length
    state = {}
    for name, shape in header['parameters']:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(payload):
            raise IntegrityError(f"{path}: parameter blob is truncated at {name}")
        array = np.frombuffer(payload, dtype='<f4', count=count, offset=offset).reshape(shape)
        state[name] = torch.from_numpy(array.astype(np.float32))
        offset = end
    if offset != len(payload):
        raise IntegrityError(f"{path}: {len(payload) - offset} trailing bytes after the parameter blob")

    model.load_state_dict(state)
    model.eval()
    return model, header
