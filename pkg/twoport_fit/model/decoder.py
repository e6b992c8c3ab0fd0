"""
Functional GRU decoder driven by per-sample weights.

Every function takes a :class:`DecoderWeights` whose tensors carry a leading
batch dimension, so a batch of spectra decodes with a batch of different
weight sets in one pass.
"""
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F

from twoport_fit.circuit.components import Alignment, ComponentType, Configuration
from twoport_fit.dataset.grid import ValueGrid
from twoport_fit.exceptions import InvalidInputError
from twoport_fit.model.layout import GRU_ENTRIES, HEAD_ENTRIES, TABLE_ENTRIES, ModelConfig


IGNORE_INDEX = -100


@dataclass
class DecoderWeights:
    """
    Tensors of g, each shaped (batch, *entry shape).
    """
    config: ModelConfig
    tensors: Dict[str, torch.Tensor]

    def __post_init__(self):
        missing = [name for name in GRU_ENTRIES + HEAD_ENTRIES + TABLE_ENTRIES if name not in self.tensors]
        if missing:
            raise InvalidInputError(f"Decoder weights miss {', '.join(missing)}")

    def __getitem__(self, name: str) -> torch.Tensor:
        return self.tensors[name]

    @property
    def batch_size(self) -> int:
        return self.tensors['gru_weight_ih'].shape[0]

    def select(self, index: int) -> 'DecoderWeights':
        """Weights of one sample, batch dimension kept."""
        return DecoderWeights(self.config, {name: t[index:index + 1] for name, t in self.tensors.items()})


class Tokens(NamedTuple):
    """Batch of (alignment, type, value) indices, each a LongTensor of shape (batch,)."""
    alignment: torch.Tensor
    ctype: torch.Tensor
    value: torch.Tensor


@dataclass
class TokenStep:
    """
    Logits of one decoding step and the chosen token.

    Attributes:
        alignment_logits: Shape (batch, 2).
        type_logits: Shape (batch, n_types + 2).
        value_logits: Shape (batch, n_bins).
        token: Argmax token.
    """
    alignment_logits: torch.Tensor
    type_logits: torch.Tensor
    value_logits: torch.Tensor
    token: Optional[Tokens] = None


def sos_tokens(config: ModelConfig, batch: int, device=None) -> Tokens:
    zeros = torch.zeros(batch, dtype=torch.long, device=device)
    return Tokens(zeros, torch.full_like(zeros, config.sos_type), torch.full_like(zeros, config.null_value))


def _lookup(table: torch.Tensor, index: torch.Tensor, name: str) -> torch.Tensor:
    rows = table.shape[1]
    if index.numel() and (int(index.min()) < 0 or int(index.max()) >= rows):
        raise InvalidInputError(f"{name} index out of range [0, {rows})")
    return table[torch.arange(table.shape[0], device=table.device), index]


def embed(tokens: Tokens, weights: DecoderWeights) -> torch.Tensor:
    """
    ReLU of the concatenated alignment, type and value embeddings.

    Returns:
        Tensor of shape (batch, embedding_dim).
    """
    pieces = [
        _lookup(weights['align_table'], tokens.alignment, 'alignment'),
        _lookup(weights['type_table'], tokens.ctype, 'type'),
        _lookup(weights['value_table'], tokens.value, 'value'),
    ]
    return torch.relu(torch.cat(pieces, dim=1))


def gru_step(x: torch.Tensor, h: torch.Tensor, weights: DecoderWeights) -> torch.Tensor:
    """
    One GRU update with per-sample gate matrices (reset, update, candidate rows).

        r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
        z = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
        n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
        h' = (1 - z) * n + z * h
    """
    gi = torch.einsum('bgi,bi->bg', weights['gru_weight_ih'], x) + weights['gru_bias_ih']
    gh = torch.einsum('bgh,bh->bg', weights['gru_weight_hh'], h) + weights['gru_bias_hh']
    i_r, i_z, i_n = gi.chunk(3, dim=1)
    h_r, h_z, h_n = gh.chunk(3, dim=1)
    r = torch.sigmoid(i_r + h_r)
    z = torch.sigmoid(i_z + h_z)
    n = torch.tanh(i_n + r * h_n)
    return (1.0 - z) * n + z * h


def _affine(h: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    return torch.einsum('bkh,bh->bk', weight, h) + bias


def heads(h: torch.Tensor, weights: DecoderWeights) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    return (
        _affine(h, weights['align_weight'], weights['align_bias']),
        _affine(h, weights['type_weight'], weights['type_bias']),
        _affine(h, weights['value_weight'], weights['value_bias']),
    )


def greedy_tokens(step: TokenStep, config: ModelConfig) -> Tokens:
    """
    Argmax per head, lowest index on ties. The reserved SOS class is never chosen.
    """
    predictable = step.type_logits[:, :config.eos_type + 1]
    return Tokens(
        torch.argmax(step.alignment_logits, dim=1),
        torch.argmax(predictable, dim=1),
        torch.argmax(step.value_logits, dim=1),
    )


def _as_input(tokens: Tokens, config: ModelConfig) -> Tokens:
    # A predicted EOS is fed back like any control token
    is_control = tokens.ctype >= config.eos_type
    return Tokens(
        torch.where(is_control, torch.zeros_like(tokens.alignment), tokens.alignment),
        tokens.ctype,
        torch.where(is_control, torch.full_like(tokens.value, config.null_value), tokens.value),
    )


def run_decoder(
    weights: DecoderWeights,
    h0: torch.Tensor,
    steps: int,
    gold_inputs: Optional[Tokens] = None,
    force_mask: Optional[torch.Tensor] = None
) -> List[TokenStep]:
    """
    Unroll the decoder for a fixed number of steps.

    Args:
        weights: Per-sample decoder weights.
        h0: Initial hidden state, shape (batch, hidden).
        steps: Number of steps to unroll.
        gold_inputs: Gold input tokens, each of shape (batch, steps), SOS first.
        force_mask: Bool tensor (batch, steps); where True the gold input is
            fed, elsewhere the previous argmax. All True when omitted.

    Returns:
        One TokenStep per step.
    """
    config = weights.config
    batch = weights.batch_size
    h = h0
    fed = sos_tokens(config, batch, h0.device)
    result: List[TokenStep] = []

    for t in range(steps):
        if gold_inputs is not None and t > 0:
            gold = Tokens(gold_inputs.alignment[:, t], gold_inputs.ctype[:, t], gold_inputs.value[:, t])
            if force_mask is None:
                fed = gold
            else:
                mask = force_mask[:, t]
                fed = Tokens(*(torch.where(mask, g, p) for g, p in zip(gold, fed)))
        h = gru_step(embed(fed, weights), h, weights)
        step = TokenStep(*heads(h, weights))
        step.token = greedy_tokens(step, config)
        result.append(step)
        fed = _as_input(step.token, config)
    return result


@dataclass
class DecodeResult:
    """
    Attributes:
        config: Decoded configuration (empty when EOS came first).
        steps: Logits of every step taken.
        degenerate: True when nothing was decoded before EOS.
        terminated: True when EOS was emitted before max_len.
    """
    config: Configuration
    steps: List[TokenStep] = field(default_factory=list)
    degenerate: bool = False
    terminated: bool = True


def decode(
    weights: DecoderWeights,
    max_len: Optional[int] = None,
    h0: Optional[torch.Tensor] = None,
    grid: Optional[ValueGrid] = None
) -> DecodeResult:
    """
    Greedy decoding of one sample from SOS until EOS or ``max_len`` components.

    Each decoded value is the representative of its predicted bin.

    Args:
        weights: Decoder weights with batch size 1.
        max_len: Component cap, the architecture's when omitted.
        h0: Initial hidden state, zeros when omitted.
        grid: Value grid for representative values.
    """
    config = weights.config
    if weights.batch_size != 1:
        raise InvalidInputError(f"decode takes a single weight set, got a batch of {weights.batch_size}")
    max_len = max_len or config.max_len
    if max_len < 1:
        raise InvalidInputError(f"max_len must be at least 1, got {max_len}")
    grid = grid or ValueGrid.with_bins(config.n_bins)
    if h0 is None:
        h0 = torch.zeros(1, config.hidden, dtype=weights['gru_weight_ih'].dtype)

    h = h0
    fed = sos_tokens(config, 1, h0.device)
    steps: List[TokenStep] = []
    components = []
    terminated = False
    with torch.no_grad():
        # One extra step lets a max_len chain still emit its EOS
        for _ in range(max_len + 1):
            h = gru_step(embed(fed, weights), h, weights)
            step = TokenStep(*heads(h, weights))
            step.token = greedy_tokens(step, config)
            steps.append(step)
            ctype = int(step.token.ctype[0])
            if ctype == config.eos_type:
                terminated = True
                break
            if len(components) == max_len:
                break
            alignment = Alignment(int(step.token.alignment[0]))
            components.append(grid.component(alignment, ComponentType(ctype), int(step.token.value[0])))
            fed = _as_input(step.token, config)

    return DecodeResult(Configuration(tuple(components)), steps, degenerate=not components, terminated=terminated)


def gold_sequences(configs: Sequence[Configuration], config: ModelConfig) -> Tuple[Tokens, Tokens, torch.Tensor]:
    """
    Teacher-forcing inputs and targets for a batch of gold configurations.

    Step t of a length-n chain takes component t-1 as input (SOS at t = 0)
    and targets component t; step n targets EOS. Shorter chains are padded.

    Returns:
        (inputs, targets, lengths). Input and target tensors have shape
        (batch, max_n + 1); padded target entries hold IGNORE_INDEX. Control
        steps ignore the alignment and value targets.
    """
    steps = max(len(c) for c in configs) + 1
    batch = len(configs)
    in_align = torch.zeros(batch, steps, dtype=torch.long)
    in_type = torch.full((batch, steps), config.sos_type, dtype=torch.long)
    in_value = torch.full((batch, steps), config.null_value, dtype=torch.long)
    out_align = torch.full((batch, steps), IGNORE_INDEX, dtype=torch.long)
    out_type = torch.full((batch, steps), IGNORE_INDEX, dtype=torch.long)
    out_value = torch.full((batch, steps), IGNORE_INDEX, dtype=torch.long)

    for b, gold in enumerate(configs):
        for t, component in enumerate(gold):
            if component.value_bin is None:
                raise InvalidInputError(f"Gold component {component} has no value bin")
            out_align[b, t] = int(component.alignment)
            out_type[b, t] = int(component.ctype)
            out_value[b, t] = component.value_bin
            in_align[b, t + 1] = int(component.alignment)
            in_type[b, t + 1] = int(component.ctype)
            in_value[b, t + 1] = component.value_bin
        out_type[b, len(gold)] = config.eos_type

    lengths = torch.tensor([len(c) for c in configs], dtype=torch.long)
    return Tokens(in_align, in_type, in_value), Tokens(out_align, out_type, out_value), lengths


class SequenceLoss(NamedTuple):
    alignment: torch.Tensor
    type: torch.Tensor
    value: torch.Tensor
    total: torch.Tensor
    partial: torch.Tensor


def _summed_cross_entropy(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    # logits (batch, steps, classes), targets (batch, steps); sum over steps, mean over batch
    per_step = F.cross_entropy(logits.transpose(1, 2), targets, ignore_index=IGNORE_INDEX, reduction='none')
    return per_step.sum(dim=1).mean()


def sequence_loss(steps: Sequence[TokenStep], targets: Tokens) -> SequenceLoss:
    """
    Cross-entropy of each head summed over steps, averaged over the batch.

    Args:
        steps: Decoder steps, one per target column.
        targets: Target tokens from :func:`gold_sequences`.

    Returns:
        Alignment, type and value terms, their sum, and the partial loss
        (alignment + type).
    """
    if len(steps) != targets.ctype.shape[1]:
        raise InvalidInputError(f"{len(steps)} decoder steps for {targets.ctype.shape[1]} target steps")
    align_logits = torch.stack([s.alignment_logits for s in steps], dim=1)
    type_logits = torch.stack([s.type_logits for s in steps], dim=1)
    value_logits = torch.stack([s.value_logits for s in steps], dim=1)

    l_align = _summed_cross_entropy(align_logits, targets.alignment)
    l_type = _summed_cross_entropy(type_logits, targets.ctype)
    l_value = _summed_cross_entropy(value_logits, targets.value)
    return SequenceLoss(l_align, l_type, l_value, l_align + l_type + l_value, l_align + l_type)


def token_accuracy(steps: Sequence[TokenStep], targets: Tokens) -> Tuple[int, int]:
    """
    (correct, total) over supervised steps; a component step counts when all
    three heads are right, an EOS step when the type head is.
    """
    correct = total = 0
    for t, step in enumerate(steps):
        valid = targets.ctype[:, t] != IGNORE_INDEX
        if not bool(valid.any()):
            continue
        ok = step.token.ctype == targets.ctype[:, t]
        is_component = targets.alignment[:, t] != IGNORE_INDEX
        ok = ok & (~is_component | ((step.token.alignment == targets.alignment[:, t]) &
                                    (step.token.value == targets.value[:, t])))
        correct += int((ok & valid).sum())
        total += int(valid.sum())
    return correct, total
