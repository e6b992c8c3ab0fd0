"""
Multi-scale convolutional hypernetwork and the decoder it drives.
"""
import math
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch
from torch import nn

from twoport_fit.exceptions import InvalidInputError
from twoport_fit.model.decoder import DecoderWeights, Tokens, TokenStep, run_decoder
from twoport_fit.model.layout import MODE_VANILLA, ModelConfig, WeightLayout
from twoport_fit.simulation.simulator import NormalizedSpectrum


class ResidualBlock(nn.Module):
    """Pre-activation block: x + conv(relu(conv(relu(x)))), no bias, no normalization."""

    def __init__(self, channels: int, kernel_size: int):
        super(ResidualBlock, self).__init__()
        padding = (kernel_size - 1) // 2
        self.conv1 = nn.Conv1d(channels, channels, kernel_size, padding=padding, bias=False)
        self.conv2 = nn.Conv1d(channels, channels, kernel_size, padding=padding, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.conv1(torch.relu(x))
        out = self.conv2(torch.relu(out))
        return x + out


class Branch(nn.Module):
    """One receptive-field scale: stem, residual blocks, temporal average, projection."""

    def __init__(self, in_channels: int, width: int, kernel_size: int, blocks: int, projection: int):
        super(Branch, self).__init__()
        padding = (kernel_size - 1) // 2
        self.stem = nn.Conv1d(in_channels, width, kernel_size, padding=padding, bias=False)
        self.blocks = nn.Sequential(*[ResidualBlock(width, kernel_size) for _ in range(blocks)])
        self.avgpool = nn.AdaptiveAvgPool1d(1)
        self.project = nn.Linear(width, projection, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.blocks(self.stem(x))
        x = self.avgpool(torch.relu(x)).squeeze(-1)
        return self.project(x)


class SpectrumEncoder(nn.Module):
    """
    Three branches with kernels 3, 5, 7 over the 4-channel spectrum,
    concatenated into one feature vector.
    """
    def __init__(self, config: ModelConfig):
        super(SpectrumEncoder, self).__init__()
        self.branches = nn.ModuleList([
            Branch(config.input_channels, config.branch_width, k, config.blocks, config.projection)
            for k in config.kernels
        ])

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.cat([branch(x) for branch in self.branches], dim=1)


def _base_init(layout: WeightLayout, name: str, generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """Starting values of one decoder entry, as torch.nn.GRU / nn.Linear / nn.Embedding would use."""
    shape = layout.shapes[name]
    if name.endswith('_table'):
        return torch.randn(shape, generator=generator)
    bound = 1.0 / math.sqrt(layout.config.hidden)
    return (torch.rand(shape, generator=generator) * 2.0 - 1.0) * bound


class HyperDecoder(nn.Module):
    """
    Hypernetwork f plus decoder g.

    In ``hyper-full`` mode f generates all of W_g; in ``hyper-gru-only`` it
    generates the GRU tensors and the heads and tables are shared
    parameters; in ``vanilla`` mode W_g is shared and f's features set the
    initial hidden state instead.
    """
    def __init__(self, config: ModelConfig):
        super(HyperDecoder, self).__init__()
        self.config = config
        self.layout = WeightLayout(config)
        self.encoder = SpectrumEncoder(config)
        self.generated = self.layout.generated_entries()
        self.shared_names = self.layout.shared_entries()

        self.generator = None
        if self.generated:
            self.generator = nn.Linear(config.features, self.layout.generated_size())
            with torch.no_grad():
                self.generator.bias.copy_(torch.cat([
                    _base_init(self.layout, name).reshape(-1) for name in self.generated
                ]))

        self.shared = nn.ParameterDict({
            name: nn.Parameter(_base_init(self.layout, name)) for name in self.shared_names
        })

        self.initial_state = nn.Linear(config.features, config.hidden) if config.mode == MODE_VANILLA else None

        generated = self.generator.out_features if self.generator is not None else 0
        shared = sum(p.numel() for p in self.shared.values())
        if generated + shared != self.layout.n_w:
            raise InvalidInputError(f"Decoder layout mismatch: {generated} generated + {shared} shared != {self.layout.n_w}")

    @property
    def n_w(self) -> int:
        return self.layout.n_w

    def _check_input(self, spectra: torch.Tensor) -> torch.Tensor:
        if spectra.dim() == 2:
            spectra = spectra.unsqueeze(0)
        expected = (self.config.input_channels, self.config.input_length)
        if spectra.dim() != 3 or tuple(spectra.shape[1:]) != expected:
            raise InvalidInputError(f"Expected spectra of shape (batch, {expected[0]}, {expected[1]}), got {tuple(spectra.shape)}")
        return spectra

    def decoder_weights(self, spectra: torch.Tensor) -> Tuple[DecoderWeights, torch.Tensor]:
        """
        Run f.

        Args:
            spectra: Normalized spectra, shape (batch, 4, d) or (4, d).

        Returns:
            The per-sample decoder weights and the initial hidden state.
        """
        spectra = self._check_input(spectra)
        features = self.encoder(spectra)
        batch = spectra.shape[0]

        tensors: Dict[str, torch.Tensor] = {}
        if self.generator is not None:
            tensors.update(self.layout.split(self.generator(features), self.generated))
        for name in self.shared_names:
            parameter = self.shared[name]
            tensors[name] = parameter.unsqueeze(0).expand(batch, *parameter.shape)

        if self.initial_state is not None:
            h0 = self.initial_state(features)
        else:
            h0 = features.new_zeros(batch, self.config.hidden)
        return DecoderWeights(self.config, tensors), h0

    def forward(
        self,
        spectra: torch.Tensor,
        steps: int,
        gold_inputs: Optional[Tokens] = None,
        force_mask: Optional[torch.Tensor] = None
    ) -> List[TokenStep]:
        weights, h0 = self.decoder_weights(spectra)
        return run_decoder(weights, h0, steps, gold_inputs, force_mask)


def spectra_tensor(spectra: List[NormalizedSpectrum], dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Stack normalized spectra into a (batch, 4, d) tensor."""
    return torch.from_numpy(np.stack([s.channels for s in spectra])).to(dtype)


def hypernet_forward(spectrum: NormalizedSpectrum, model: HyperDecoder) -> DecoderWeights:
    """
    Decoder weights for one normalized spectrum.

    Raises:
        InvalidInputError: when the spectrum shape does not match the model.
    """
    with torch.no_grad():
        dtype = next(model.parameters()).dtype
        weights, _ = model.decoder_weights(spectra_tensor([spectrum], dtype))
    return weights


def flat_weights(weights: DecoderWeights, layout: WeightLayout) -> torch.Tensor:
    """Flat W_g of every sample, shape (batch, N_w)."""
    return layout.flatten(weights.tensors)
