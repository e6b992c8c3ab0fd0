"""
Dataset generation: exhaustive short chains, seeded random longer ones.
"""
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Set

import numpy as np
from tqdm import tqdm

from twoport_fit.circuit.canonical import canonical_key
from twoport_fit.circuit.components import Configuration
from twoport_fit.circuit.enumeration import count_canonical, enumerate_canonical, random_canonical
from twoport_fit.config.config_manager import ConfigManager
from twoport_fit.dataset.grid import ValueGrid
from twoport_fit.dataset.records import SPLITS, DatasetRecord, SplitSpec
from twoport_fit.dataset.storage import (
    FORMAT_NAME, FORMAT_VERSION, SplitWriter, split_path, write_manifest
)
from twoport_fit.exceptions import CapacityError
from twoport_fit.simulation.simulator import FrequencyGrid, Termination, default_grid, normalize, simulate


logger = logging.getLogger(__name__)

DEFAULT_MAX_RETRIES = 1000

# Records simulated per thread-pool batch before they are written out
_BATCH = 256


@dataclass
class DrawPlan:
    """Configurations chosen for one split, in id order."""
    split: str
    configs: List[Configuration]
    per_length: Dict[int, int]
    retries: int


def _draw_split(
    split: str,
    lengths: Dict[int, Optional[int]],
    seen: Set[tuple],
    seed: int,
    n_c: int,
    n_v: int,
    grid: ValueGrid,
    max_retries: int
) -> DrawPlan:
    configs: List[Configuration] = []
    per_length: Dict[int, int] = {}
    retries = 0
    split_index = SPLITS.index(split)

    for length, count in sorted(lengths.items()):
        if count is None:
            drawn = 0
            for config in enumerate_canonical(length, n_c, n_v, cap=None, grid=grid):
                key = canonical_key(config)
                if key in seen:
                    raise CapacityError(f"{split}: length {length} is exhaustive but already used by another split")
                seen.add(key)
                configs.append(config)
                drawn += 1
            per_length[length] = drawn
            continue

        available = count_canonical(length, n_c, n_v).count
        rng = np.random.default_rng([seed, split_index, length])
        for _ in range(count):
            attempts = 0
            while True:
                config = random_canonical(length, n_c, n_v, rng=rng, grid=grid)
                key = canonical_key(config)
                if key not in seen:
                    break
                attempts += 1
                if attempts > max_retries:
                    raise CapacityError(
                        f"{split}: no unused length-{length} configuration after {max_retries} retries "
                        f"({len([k for k in seen if len(k) == length])} of {available} used)"
                    )
            retries += attempts
            seen.add(key)
            configs.append(config)
        per_length[length] = count

    return DrawPlan(split, configs, per_length, retries)


def _simulate_records(
    plan: DrawPlan,
    termination: Termination,
    grid: FrequencyGrid,
    embed_raw: bool,
    threads: int
) -> Iterator[DatasetRecord]:
    def build(item) -> DatasetRecord:
        record_id, config = item
        spectrum = simulate(config, grid, termination)
        return DatasetRecord(
            id=record_id,
            split=plan.split,
            config=config,
            termination=termination,
            spectrum=normalize(spectrum),
            raw=spectrum.channels() if embed_raw else None,
        )

    items = iter(enumerate(plan.configs))
    with ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        while True:
            batch = list(itertools.islice(items, _BATCH))
            if not batch:
                break
            # map keeps input order, so ids stay sequential whatever the thread count
            yield from executor.map(build, batch)


def generate(
    spec: SplitSpec,
    out_dir: str,
    termination: Optional[Termination] = None,
    seed: int = 0,
    grid: Optional[FrequencyGrid] = None,
    n_c: int = 3,
    n_v: int = 5,
    max_retries: int = DEFAULT_MAX_RETRIES,
    embed_raw: bool = True,
    threads: int = 1,
    progress: bool = False
) -> dict:
    """
    Generate every split and write it under ``out_dir``.

    Splits are drawn in train, val, test order; a configuration equivalent
    to one already drawn in any split is rejected and redrawn.

    Args:
        spec: Per-split, per-length composition.
        out_dir: Output directory.
        termination: Termination for every record, a 1 ohm load when omitted.
        seed: Seed for the random lengths.
        grid: Frequency grid, the default grid when omitted.
        n_c: Number of component types.
        n_v: Number of value bins.
        max_retries: Redraws allowed for a single record.
        embed_raw: Store the raw complex spectrum next to the normalized one.
        threads: Simulation workers; the output does not depend on it.
        progress: Show progress bars.

    Returns:
        The manifest written to ``manifest.json``.

    Raises:
        CapacityError: when duplicate rejection runs out of retries.
    """
    termination = termination or Termination.load()
    grid = grid or default_grid()
    value_grid = ValueGrid.with_bins(n_v)
    seen: Set[tuple] = set()

    splits = {}
    total_retries = 0
    for split in SPLITS:
        plan = _draw_split(split, spec.lengths(split), seen, seed, n_c, n_v, value_grid, max_retries)
        total_retries += plan.retries
        logger.info(f"{split}: {len(plan.configs)} configurations drawn, {plan.retries} duplicate redraws")

        path = split_path(out_dir, split)
        with SplitWriter(path, split, len(plan.configs)) as writer:
            records = _simulate_records(plan, termination, grid, embed_raw, threads)
            for record in tqdm(records, total=len(plan.configs), desc=split, unit='rec', disable=not progress):
                writer.write(record)

        splits[split] = {
            'count': len(plan.configs),
            'per_length': {str(length): count for length, count in sorted(plan.per_length.items())},
            'retries': plan.retries,
        }

    frequencies = grid.frequencies
    manifest = {
        'format': FORMAT_NAME,
        'version': FORMAT_VERSION,
        'seed': seed,
        'grid': {'points': len(grid), 'f_min': float(frequencies[0]), 'f_max': float(frequencies[-1])},
        'value_grid': value_grid.to_dict(),
        'n_c': n_c,
        'n_v': n_v,
        'termination': str(termination),
        'embed_raw': embed_raw,
        'spec': spec.to_dict(),
        'splits': splits,
        'retries': total_retries,
    }
    write_manifest(out_dir, manifest)
    return manifest


class DatasetGenerator:
    """
    Class to generate datasets with settings from the [DATASET] and [SIMULATION] sections.
    """
    def __init__(self, config_manager: ConfigManager):
        """
        Initialize the generator.

        Args:
            config_manager: Instance of ConfigManager.
        """
        self.config = config_manager
        self.max_retries = int(self.config.get('DATASET', 'max_retries', fallback=str(DEFAULT_MAX_RETRIES)))
        self.embed_raw = self.config.get('DATASET', 'embed_raw', fallback='true').lower() == 'true'
        self.points = int(self.config.get('SIMULATION', 'points', fallback='512'))
        self.f_min = float(self.config.get('SIMULATION', 'f_min', fallback='1.0'))
        self.f_max = float(self.config.get('SIMULATION', 'f_max', fallback='1e6'))
        self.termination = Termination.parse(self.config.get('SIMULATION', 'termination', fallback='load:1'))
        self.n_c = int(self.config.get('GA', 'n_c', fallback='3'))
        self.n_v = int(self.config.get('GA', 'n_v', fallback='5'))
        self.logger = logging.getLogger('DatasetGenerator')

    def generate(self, spec: SplitSpec, out_dir: str, seed: int = 0,
                 termination: Optional[Termination] = None, threads: int = 1) -> dict:
        """
        Generate a dataset.

        Args:
            spec: Split composition.
            out_dir: Output directory.
            seed: Random seed.
            termination: Overrides the configured termination.
            threads: Simulation workers.

        Returns:
            The dataset manifest.
        """
        termination = termination or self.termination
        grid = FrequencyGrid.log_spaced(self.points, self.f_min, self.f_max)
        expected = {split: spec.total(split, self.n_c, self.n_v) for split in SPLITS}
        self.logger.info(f"Generating dataset in {out_dir}: {expected}, termination {termination}, seed {seed}")

        try:
            manifest = generate(
                spec, out_dir, termination, seed, grid, self.n_c, self.n_v,
                self.max_retries, self.embed_raw, threads, progress=True
            )
        except CapacityError as e:
            self.logger.error(f"Dataset generation failed: {e}")
            raise

        self.logger.info(f"Dataset written to {out_dir} with {manifest['retries']} duplicate redraws")
        return manifest
