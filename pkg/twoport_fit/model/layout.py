"""
Architecture settings, token vocabulary and the decoder weight layout.

The decoder g is a GRU with three linear heads and three embedding tables.
All of its tensors live in one flat vector W_g whose partition is fixed
here; depending on the mode the hypernetwork generates all of W_g, only the
GRU part, or none of it.
"""
from dataclasses import asdict, dataclass
from typing import Dict, List, Tuple

import torch

from twoport_fit.config.config_manager import ConfigManager
from twoport_fit.exceptions import InvalidInputError


MODE_HYPER_FULL = 'hyper-full'
MODE_HYPER_GRU_ONLY = 'hyper-gru-only'
MODE_VANILLA = 'vanilla'
MODES = (MODE_HYPER_FULL, MODE_HYPER_GRU_ONLY, MODE_VANILLA)

GRU_ENTRIES = ('gru_weight_ih', 'gru_weight_hh', 'gru_bias_ih', 'gru_bias_hh')
HEAD_ENTRIES = ('align_weight', 'align_bias', 'type_weight', 'type_bias', 'value_weight', 'value_bias')
TABLE_ENTRIES = ('align_table', 'type_table', 'value_table')

ALIGN_CLASSES = 2


@dataclass(frozen=True)
class ModelConfig:
    """
    Architecture of the hypernetwork f and the decoder g.

    Attributes:
        mode: hyper-full, hyper-gru-only or vanilla.
        hidden: GRU hidden size.
        alignment_dim: Width of the alignment embedding.
        type_dim: Width of the type embedding.
        value_dim: Width of the value embedding.
        projection: Per-branch projection width after pooling.
        branch_width: Channels of every convolution in a branch.
        blocks: Residual blocks per branch.
        kernels: Kernel size of each branch.
        n_types: Number of component types.
        n_bins: Number of value bins.
        input_channels: Channels of the normalized spectrum.
        input_length: Samples of the normalized spectrum.
        max_len: Decoding cap.
    """
    mode: str = MODE_HYPER_FULL
    hidden: int = 64
    alignment_dim: int = 2
    type_dim: int = 31
    value_dim: int = 31
    projection: int = 256
    branch_width: int = 32
    blocks: int = 3
    kernels: Tuple[int, ...] = (3, 5, 7)
    n_types: int = 3
    n_bins: int = 5
    input_channels: int = 4
    input_length: int = 512
    max_len: int = 12

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidInputError(f"Unknown model mode '{self.mode}', expected one of {', '.join(MODES)}")
        if self.max_len < 1:
            raise InvalidInputError(f"max_len must be at least 1, got {self.max_len}")
        object.__setattr__(self, 'kernels', tuple(int(k) for k in self.kernels))
        if any(k % 2 == 0 for k in self.kernels):
            raise InvalidInputError(f"Branch kernels must be odd, got {self.kernels}")

    @property
    def embedding_dim(self) -> int:
        return self.alignment_dim + self.type_dim + self.value_dim

    # Type vocabulary: component types, then EOS, then SOS (input only)
    @property
    def eos_type(self) -> int:
        return self.n_types

    @property
    def sos_type(self) -> int:
        return self.n_types + 1

    @property
    def type_classes(self) -> int:
        return self.n_types + 2

    @property
    def null_value(self) -> int:
        return self.n_bins

    @property
    def features(self) -> int:
        return self.projection * len(self.kernels)

    @classmethod
    def test_scale(cls, mode: str = MODE_HYPER_FULL) -> 'ModelConfig':
        """Tiny architecture for gradient checks and fast tests."""
        return cls(mode=mode, hidden=8, alignment_dim=2, type_dim=3, value_dim=3, projection=4,
                   branch_width=8, blocks=1, input_length=16, max_len=6)

    @classmethod
    def from_config(cls, config_manager: ConfigManager, mode: str = None) -> 'ModelConfig':
        def read(key: str, fallback: int) -> int:
            return int(config_manager.get('MODEL', key, fallback=str(fallback)))

        return cls(
            mode=mode or config_manager.get('MODEL', 'mode', fallback=MODE_HYPER_FULL),
            hidden=read('hidden', 64),
            alignment_dim=read('alignment_dim', 2),
            type_dim=read('type_dim', 31),
            value_dim=read('value_dim', 31),
            projection=read('projection', 256),
            branch_width=read('branch_width', 32),
            blocks=read('blocks', 3),
            n_types=int(config_manager.get('GA', 'n_c', fallback='3')),
            n_bins=int(config_manager.get('GA', 'n_v', fallback='5')),
            input_length=int(config_manager.get('SIMULATION', 'points', fallback='512')),
            max_len=read('max_len', 12),
        )

    def to_dict(self) -> dict:
        data = asdict(self)
        data['kernels'] = list(self.kernels)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> 'ModelConfig':
        return cls(**data)


class WeightLayout:
    """
    Fixed partition of W_g into named tensors.

    Offsets follow the entry order GRU, heads, tables; within the GRU the
    gate rows are stacked reset, update, candidate as in ``torch.nn.GRU``.
    """
    def __init__(self, config: ModelConfig):
        self.config = config
        h, i = config.hidden, config.embedding_dim
        self.shapes: Dict[str, Tuple[int, ...]] = {
            'gru_weight_ih': (3 * h, i),
            'gru_weight_hh': (3 * h, h),
            'gru_bias_ih': (3 * h,),
            'gru_bias_hh': (3 * h,),
            'align_weight': (ALIGN_CLASSES, h),
            'align_bias': (ALIGN_CLASSES,),
            'type_weight': (config.type_classes, h),
            'type_bias': (config.type_classes,),
            'value_weight': (config.n_bins, h),
            'value_bias': (config.n_bins,),
            'align_table': (ALIGN_CLASSES, config.alignment_dim),
            'type_table': (config.type_classes, config.type_dim),
            'value_table': (config.n_bins + 1, config.value_dim),
        }
        self.offsets: Dict[str, Tuple[int, int]] = {}
        offset = 0
        for name in GRU_ENTRIES + HEAD_ENTRIES + TABLE_ENTRIES:
            size = _numel(self.shapes[name])
            self.offsets[name] = (offset, offset + size)
            offset += size
        self.n_w = offset

    def generated_entries(self) -> Tuple[str, ...]:
        """Entries produced by the hypernetwork in this mode."""
        mode = self.config.mode
        if mode == MODE_HYPER_FULL:
            return GRU_ENTRIES + HEAD_ENTRIES + TABLE_ENTRIES
        if mode == MODE_HYPER_GRU_ONLY:
            return GRU_ENTRIES
        return ()

    def shared_entries(self) -> Tuple[str, ...]:
        generated = set(self.generated_entries())
        return tuple(name for name in self.shapes if name not in generated)

    def generated_size(self) -> int:
        return sum(_numel(self.shapes[name]) for name in self.generated_entries())

    def split(self, flat: torch.Tensor, entries: Tuple[str, ...]) -> Dict[str, torch.Tensor]:
        """
        Cut a batch of flat vectors into per-entry tensors.

        Args:
            flat: Tensor of shape (batch, sum of entry sizes), entries
                concatenated in the given order.
            entries: Entry names in ``flat``'s order.

        Returns:
            Mapping of entry name to a (batch, *shape) view.
        """
        expected = sum(_numel(self.shapes[name]) for name in entries)
        if flat.dim() != 2 or flat.shape[1] != expected:
            raise InvalidInputError(f"Expected flat weights of shape (batch, {expected}), got {tuple(flat.shape)}")
        pieces = {}
        offset = 0
        for name in entries:
            size = _numel(self.shapes[name])
            pieces[name] = flat[:, offset:offset + size].reshape(flat.shape[0], *self.shapes[name])
            offset += size
        return pieces

    def flatten(self, weights: Dict[str, torch.Tensor]) -> torch.Tensor:
        """Inverse of :meth:`split` over every entry, batch dimension kept."""
        names: List[str] = list(GRU_ENTRIES + HEAD_ENTRIES + TABLE_ENTRIES)
        batch = weights[names[0]].shape[0]
        return torch.cat([weights[name].reshape(batch, -1) for name in names], dim=1)


def _numel(shape: Tuple[int, ...]) -> int:
    size = 1
    for dim in shape:
        size *= dim
    return size


# N_w of the default architecture, the length of W_g the hypernetwork emits in hyper-full mode
DEFAULT_N_W = WeightLayout(ModelConfig()).n_w
