"""
Training of the hypernetwork decoder.
"""
import copy
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import torch
from tqdm import tqdm

from twoport_fit.circuit.components import Configuration
from twoport_fit.config.config_manager import ConfigManager
from twoport_fit.dataset.records import DatasetRecord
from twoport_fit.dataset.storage import load_split, read_manifest
from twoport_fit.exceptions import DivergenceError, InvalidInputError
from twoport_fit.model.checkpoint import save_checkpoint
from twoport_fit.model.decoder import gold_sequences, sequence_loss, token_accuracy
from twoport_fit.model.hypernet import HyperDecoder, spectra_tensor
from twoport_fit.model.layout import ModelConfig
from twoport_fit.utils.common import ensure_dir


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingParams:
    """
    Attributes:
        epochs: Passes over the training split.
        lr: Adam learning rate.
        tf_prob: Per-step probability of feeding the gold token.
        batch_size: Samples per optimizer step.
        grad_clip: Maximum global gradient norm.
        seed: Seed for initialization, shuffling and teacher forcing.
    """
    epochs: int = 700
    lr: float = 1e-4
    tf_prob: float = 0.5
    batch_size: int = 32
    grad_clip: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidInputError(f"epochs must be at least 1, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidInputError(f"batch_size must be at least 1, got {self.batch_size}")
        if not 0.0 <= self.tf_prob <= 1.0:
            raise InvalidInputError(f"tf_prob must be in [0, 1], got {self.tf_prob}")


@dataclass
class SplitTensors:
    """Normalized spectra of a split as one tensor plus the gold configurations."""
    spectra: torch.Tensor
    configs: List[Configuration]

    @classmethod
    def from_records(cls, records: Sequence[DatasetRecord]) -> 'SplitTensors':
        if not records:
            raise InvalidInputError("Cannot train or validate on an empty split")
        return cls(spectra_tensor([r.spectrum for r in records]), [r.config for r in records])

    def __len__(self) -> int:
        return len(self.configs)


@dataclass
class TrainingResult:
    """
    Attributes:
        model: Model holding the best epoch's parameters.
        log: Header followed by one entry per epoch.
        best_epoch: Epoch with the lowest validation partial loss.
        best_val_partial: That loss.
    """
    model: HyperDecoder
    log: List[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_val_partial: float = math.inf


def evaluate_split(model: HyperDecoder, data: SplitTensors, batch_size: int = 256) -> Tuple[float, float]:
    """
    Partial loss (alignment + type) and token accuracy under full teacher forcing.

    Returns:
        (mean partial loss per sample, token accuracy).
    """
    model.eval()
    partial_sum = 0.0
    correct = total = 0
    with torch.no_grad():
        for start in range(0, len(data), batch_size):
            configs = data.configs[start:start + batch_size]
            inputs, targets, _ = gold_sequences(configs, model.config)
            steps = model(data.spectra[start:start + batch_size], inputs.ctype.shape[1], inputs)
            partial_sum += float(sequence_loss(steps, targets).partial) * len(configs)
            batch_correct, batch_total = token_accuracy(steps, targets)
            correct += batch_correct
            total += batch_total
    return partial_sum / len(data), (correct / total if total else 0.0)


def train(
    train_set: Sequence[DatasetRecord],
    val_set: Sequence[DatasetRecord],
    model_config: ModelConfig = ModelConfig(),
    params: TrainingParams = TrainingParams(),
    log_path: Optional[str] = None,
    progress: bool = False
) -> TrainingResult:
    """
    Train all hypernetwork parameters with Adam.

    Teacher forcing is drawn per sample and step. After every epoch the
    validation partial loss is measured with full teacher forcing; the
    returned model holds the parameters of the best epoch.

    Args:
        train_set: Training records.
        val_set: Validation records.
        model_config: Architecture.
        params: Optimization settings.
        log_path: JSON-Lines training log, written as training runs.
        progress: Show a progress bar over epochs.

    Raises:
        DivergenceError: on a non-finite loss, with epoch and step.
    """
    train_data = SplitTensors.from_records(train_set)
    val_data = SplitTensors.from_records(val_set)
    if train_data.spectra.shape[-1] != model_config.input_length:
        raise InvalidInputError(
            f"Spectra have {train_data.spectra.shape[-1]} samples, model expects {model_config.input_length}"
        )

    torch.manual_seed(params.seed)
    model = HyperDecoder(model_config)
    optimizer = torch.optim.Adam(model.parameters(), lr=params.lr)
    generator = torch.Generator().manual_seed(params.seed)

    header = {
        'type': 'header',
        'mode': model_config.mode,
        'architecture': model_config.to_dict(),
        'n_w': model.n_w,
        'optimizer': 'adam',
        'epochs': params.epochs,
        'lr': params.lr,
        'tf_prob': params.tf_prob,
        'batch_size': params.batch_size,
        'grad_clip': params.grad_clip,
        'seed': params.seed,
        'train_samples': len(train_data),
        'val_samples': len(val_data),
        'val_teacher_forcing': 'full',
    }
    result = TrainingResult(model, [header])
    log_file = None
    if log_path:
        ensure_dir(os.path.dirname(log_path))
        log_file = open(log_path, 'w', encoding='utf-8')
        log_file.write(json.dumps(header, sort_keys=True) + '\n')

    best_state = copy.deepcopy(model.state_dict())
    try:
        for epoch in tqdm(range(1, params.epochs + 1), desc='train', unit='epoch', disable=not progress):
            model.train()
            sums = [0.0, 0.0, 0.0]
            order = torch.randperm(len(train_data), generator=generator)
            for step, start in enumerate(range(0, len(train_data), params.batch_size)):
                index = order[start:start + params.batch_size]
                inputs, targets, _ = gold_sequences([train_data.configs[int(i)] for i in index], model_config)
                force_mask = torch.rand(inputs.ctype.shape, generator=generator) < params.tf_prob
                steps = model(train_data.spectra[index], inputs.ctype.shape[1], inputs, force_mask)
                loss = sequence_loss(steps, targets)
                if not torch.isfinite(loss.total):
                    raise DivergenceError("Non-finite training loss", epoch=epoch, step=step)

                optimizer.zero_grad()
                loss.total.backward()
                torch.nn.utils.clip_grad_norm_(model.parameters(), params.grad_clip)
                optimizer.step()

                for k, term in enumerate((loss.alignment, loss.type, loss.value)):
                    sums[k] += float(term) * len(index)

            val_partial, val_accuracy = evaluate_split(model, val_data)
            if not math.isfinite(val_partial):
                raise DivergenceError("Non-finite validation loss", epoch=epoch, step=-1)

            improved = val_partial < result.best_val_partial
            if improved:
                result.best_epoch, result.best_val_partial = epoch, val_partial
                best_state = copy.deepcopy(model.state_dict())

            entry = {
                'type': 'epoch',
                'epoch': epoch,
                'train_alignment': sums[0] / len(train_data),
                'train_type': sums[1] / len(train_data),
                'train_value': sums[2] / len(train_data),
                'train_total': sum(sums) / len(train_data),
                'val_partial': val_partial,
                'val_token_accuracy': val_accuracy,
                'best': improved,
            }
            result.log.append(entry)
            if log_file is not None:
                log_file.write(json.dumps(entry, sort_keys=True) + '\n')
                log_file.flush()
            logger.debug(f"Epoch {epoch}: train {entry['train_total']:.4f}, val partial {val_partial:.4f}")
    finally:
        if log_file is not None:
            log_file.close()

    model.load_state_dict(best_state)
    model.eval()
    return result


class Trainer:
    """
    Class to train models on generated datasets with settings from [TRAINING] and [MODEL].
    """
    def __init__(self, config_manager: ConfigManager):
        """
        Initialize the trainer.

        Args:
            config_manager: Instance of ConfigManager.
        """
        self.config = config_manager
        self.epochs = int(self.config.get('TRAINING', 'epochs', fallback='700'))
        self.lr = float(self.config.get('TRAINING', 'lr', fallback='1e-4'))
        self.tf_prob = float(self.config.get('TRAINING', 'tf_prob', fallback='0.5'))
        self.batch_size = int(self.config.get('TRAINING', 'batch_size', fallback='32'))
        self.grad_clip = float(self.config.get('TRAINING', 'grad_clip', fallback='5.0'))
        self.logger = logging.getLogger('Trainer')

    def train(
        self,
        dataset_dir: str,
        model_path: str,
        mode: Optional[str] = None,
        seed: int = 0,
        epochs: Optional[int] = None,
        log_path: Optional[str] = None
    ) -> TrainingResult:
        """
        Train on a dataset directory and save the best checkpoint.

        Args:
            dataset_dir: Directory written by the dataset generator.
            model_path: Checkpoint output path.
            mode: Model mode, the configured one when omitted.
            seed: Training seed.
            epochs: Overrides the configured epoch count.
            log_path: JSON-Lines log path, next to the checkpoint when omitted.

        Returns:
            The training result.
        """
        manifest = read_manifest(dataset_dir)
        model_config = ModelConfig.from_config(self.config, mode)
        model_config = ModelConfig.from_dict({
            **model_config.to_dict(),
            'input_length': int(manifest['grid']['points']),
            'n_types': int(manifest.get('n_c', model_config.n_types)),
            'n_bins': int(manifest.get('n_v', model_config.n_bins)),
        })
        params = TrainingParams(
            epochs=epochs or self.epochs,
            lr=self.lr,
            tf_prob=self.tf_prob,
            batch_size=self.batch_size,
            grad_clip=self.grad_clip,
            seed=seed,
        )
        log_path = log_path or os.path.splitext(model_path)[0] + '.log.jsonl'

        train_set = list(load_split(dataset_dir, 'train'))
        val_set = list(load_split(dataset_dir, 'val'))
        self.logger.info(
            f"Training {model_config.mode} model on {len(train_set)} samples "
            f"({len(val_set)} validation) for {params.epochs} epochs"
        )

        try:
            result = train(train_set, val_set, model_config, params, log_path, progress=True)
        except DivergenceError as e:
            self.logger.error(f"Training diverged: {e}")
            raise

        save_checkpoint(result.model, model_path, seed, result.best_epoch, result.best_val_partial)
        self.logger.info(
            f"Best epoch {result.best_epoch} with validation partial loss {result.best_val_partial:.6f}; "
            f"log written to {log_path}"
        )
        return result
