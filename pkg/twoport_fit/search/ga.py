"""
Genetic-algorithm search over configurations.

Individuals are canonical configurations whose values live on the quantized
grid. Each generation keeps the elites unchanged and fills the rest of the
population with children of fitness-proportional parents, fitness being
exp(-L_S) against the target spectrum.
"""
import csv
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from twoport_fit.circuit.canonical import canonical_key, canonicalize
from twoport_fit.circuit.components import Configuration
from twoport_fit.circuit.enumeration import random_canonical, random_component
from twoport_fit.config.config_manager import ConfigManager
from twoport_fit.dataset.grid import ValueGrid
from twoport_fit.diffsim.refine import RefinementResult, Refiner, spectrum_loss
from twoport_fit.exceptions import InvalidInputError, SingularityError
from twoport_fit.simulation.simulator import Spectrum, Termination, simulate
from twoport_fit.utils.common import ensure_dir


logger = logging.getLogger(__name__)

MUTATION_ADD = 'add'
MUTATION_REMOVE = 'remove'
MUTATION_REPLACE = 'replace'


@dataclass(frozen=True)
class GAParams:
    """
    Search settings.

    Attributes:
        population: Individuals per generation.
        elites: Individuals copied unchanged into the next generation.
        mutation_prob: Probability that a child is mutated.
        generations: Number of generations, the initial one included.
        n_c: Number of component types.
        n_v: Number of value bins per type.
        min_length: Shortest chain in the initial population.
        max_length: Longest chain in the initial population.
    """
    population: int = 100
    elites: int = 10
    mutation_prob: float = 0.01
    generations: int = 1000
    n_c: int = 3
    n_v: int = 5
    min_length: int = 1
    max_length: int = 10

    def __post_init__(self):
        if self.population < 1:
            raise InvalidInputError(f"Population must be positive, got {self.population}")
        if not 0 <= self.elites < self.population:
            raise InvalidInputError(f"Elites must be in [0, population), got {self.elites}")
        if not 0.0 <= self.mutation_prob <= 1.0:
            raise InvalidInputError(f"Mutation probability must be in [0, 1], got {self.mutation_prob}")
        if self.generations < 1:
            raise InvalidInputError(f"Generations must be positive, got {self.generations}")
        if not 1 <= self.min_length <= self.max_length:
            raise InvalidInputError(f"Bad initial length range [{self.min_length}, {self.max_length}]")


@dataclass(frozen=True)
class Individual:
    config: Configuration
    cached_loss: Optional[float] = None

    def with_loss(self, loss: float) -> 'Individual':
        return Individual(self.config, loss)

    @property
    def rank_key(self) -> Tuple[float, int, str]:
        """Loss first, then shorter chains, then the literal."""
        loss = math.inf if self.cached_loss is None else self.cached_loss
        return (loss, len(self.config), self.config.to_literal())


@dataclass
class GAResult:
    """
    Attributes:
        best: Best individual over the whole run.
        history: Best loss of every generation.
        refinement: Post-search refinement of the winner, when requested.
    """
    best: Individual
    history: List[float] = field(default_factory=list)
    refinement: Optional[RefinementResult] = None

    def __iter__(self):
        return iter((self.best, self.history))


def _apply_mutation(config: Configuration, rng: np.random.Generator, n_c: int, n_v: int,
                    grid: ValueGrid) -> Configuration:
    kinds = [MUTATION_ADD, MUTATION_REPLACE]
    if len(config) > 1:
        kinds.append(MUTATION_REMOVE)
    kind = kinds[int(rng.integers(0, len(kinds)))]

    components = list(config)
    if kind == MUTATION_ADD:
        position = int(rng.integers(0, len(components) + 1))
        components.insert(position, random_component(rng, n_c, n_v, grid))
    elif kind == MUTATION_REMOVE:
        del components[int(rng.integers(0, len(components)))]
    else:
        components[int(rng.integers(0, len(components)))] = random_component(rng, n_c, n_v, grid)
    return canonicalize(Configuration(tuple(components)))


def mutate(
    individual: Individual,
    p: float,
    rng: np.random.Generator,
    n_c: int = 3,
    n_v: int = 5,
    grid: Optional[ValueGrid] = None
) -> Individual:
    """
    With probability ``p``, add, remove or replace one component.

    The mutation kind is uniform over those available; removal is skipped
    for single-component chains.

    Returns:
        The input individual when no mutation happens, otherwise a new
        canonical individual without a cached loss.
    """
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError(f"Mutation probability must be in [0, 1], got {p}")
    if rng.random() >= p:
        return individual
    grid = grid or ValueGrid.with_bins(n_v)
    return Individual(_apply_mutation(individual.config, rng, n_c, n_v, grid))


def crossover(
    a: Individual,
    b: Individual,
    rng: np.random.Generator,
    cuts: Optional[Tuple[int, int]] = None
) -> Individual:
    """
    Single-point crossover: a prefix of ``a`` followed by a suffix of ``b``.

    Args:
        a: First parent.
        b: Second parent.
        rng: Random generator drawing the cut points.
        cuts: Explicit (cut_a, cut_b) instead of random ones.

    Returns:
        A canonical child; parent ``a`` when both pieces are empty.
    """
    if len(a.config) == 0 or len(b.config) == 0:
        raise InvalidInputError("Crossover parents must be non-empty")
    if cuts is None:
        cut_a = int(rng.integers(0, len(a.config) + 1))
        cut_b = int(rng.integers(0, len(b.config) + 1))
    else:
        cut_a, cut_b = cuts

    child = a.config[:cut_a] + b.config[cut_b:]
    if len(child) == 0:
        child = a.config
    return Individual(canonicalize(child))


def evaluate_loss(config: Configuration, target: Spectrum, termination: Optional[Termination] = None) -> float:
    """L_S of a configuration; infinite when the simulation is singular or overflows."""
    try:
        loss = spectrum_loss(simulate(config, target.grid, termination or target.termination), target)
    except SingularityError:
        return math.inf
    return loss if math.isfinite(loss) else math.inf


def fitness(individual: Individual, target: Spectrum, termination: Optional[Termination] = None) -> float:
    """
    exp(-L_S); zero for individuals whose simulation is singular.
    """
    loss = individual.cached_loss
    if loss is None:
        loss = evaluate_loss(individual.config, target, termination)
    return math.exp(-loss)


def selection_probabilities(fitnesses: Sequence[float]) -> np.ndarray:
    """
    Fitness values normalized over the population; uniform if all are zero.
    """
    weights = np.asarray(fitnesses, dtype=np.float64)
    total = weights.sum()
    if not total > 0:
        return np.full(len(weights), 1.0 / len(weights))
    return weights / total


def _initial_population(params: GAParams, rng: np.random.Generator, grid: ValueGrid) -> List[Individual]:
    population = []
    for _ in range(params.population):
        length = int(rng.integers(params.min_length, params.max_length + 1))
        population.append(Individual(random_canonical(length, params.n_c, params.n_v, rng=rng, grid=grid)))
    return population


class _LossCache:
    """Losses keyed by canonical form, filled by a thread pool in population order."""

    def __init__(self, target: Spectrum, termination: Optional[Termination], threads: int):
        self.target = target
        self.termination = termination
        self.threads = max(1, threads)
        self._losses: Dict[tuple, float] = {}

    def evaluate(self, population: List[Individual]) -> List[Individual]:
        pending = []
        seen = set()
        for individual in population:
            key = canonical_key(individual.config)
            if individual.cached_loss is None and key not in self._losses and key not in seen:
                seen.add(key)
                pending.append((key, individual.config))

        if pending:
            configs = [config for _, config in pending]
            if self.threads > 1:
                with ThreadPoolExecutor(max_workers=self.threads) as executor:
                    losses = list(executor.map(self._loss, configs))
            else:
                losses = [self._loss(config) for config in configs]
            for (key, _), loss in zip(pending, losses):
                self._losses[key] = loss

        return [
            individual if individual.cached_loss is not None
            else individual.with_loss(self._losses[canonical_key(individual.config)])
            for individual in population
        ]

    def _loss(self, config: Configuration) -> float:
        return evaluate_loss(config, self.target, self.termination)


def evolve(
    target: Spectrum,
    params: GAParams = GAParams(),
    termination: Optional[Termination] = None,
    rng_seed: Optional[int] = None,
    threads: int = 1,
    progress: bool = False
) -> GAResult:
    """
    Run the search for ``params.generations`` generations.

    Args:
        target: Target spectrum.
        params: Search settings.
        termination: Output termination, the target's own when omitted.
        rng_seed: Seed; identical seeds give identical histories.
        threads: Workers for loss evaluation. Results do not depend on it.
        progress: Show a progress bar.

    Returns:
        The overall best individual and the per-generation best loss.
    """
    if not target.is_finite:
        raise InvalidInputError("Target spectrum has non-finite entries")
    termination = termination or target.termination
    rng = np.random.default_rng(rng_seed)
    grid = ValueGrid.with_bins(params.n_v)
    cache = _LossCache(target, termination, threads)

    population = _initial_population(params, rng, grid)
    best: Optional[Individual] = None
    history: List[float] = []

    for generation in tqdm(range(params.generations), desc='GA', unit='gen', disable=not progress):
        population = cache.evaluate(population)
        ranked = sorted(population, key=lambda ind: ind.rank_key)
        if best is None or ranked[0].rank_key < best.rank_key:
            best = ranked[0]
        history.append(ranked[0].cached_loss)

        # Stop early only on a zero-loss single component
        if generation == params.generations - 1 or (best.cached_loss == 0.0 and len(best.config) == 1):
            if generation < params.generations - 1:
                history.extend([best.cached_loss] * (params.generations - 1 - generation))
            break

        probabilities = selection_probabilities([math.exp(-ind.cached_loss) for ind in population])
        children = list(ranked[:params.elites])
        while len(children) < params.population:
            first, second = rng.choice(len(population), size=2, p=probabilities)
            child = crossover(population[int(first)], population[int(second)], rng)
            children.append(mutate(child, params.mutation_prob, rng, params.n_c, params.n_v, grid))
        population = children

        logger.debug(f"Generation {generation}: best loss {history[-1]:.6e}")

    return GAResult(best, history)


def write_history(history: Sequence[float], path: str) -> str:
    """Write the per-generation best loss as CSV (generation, best_loss)."""
    ensure_dir(os.path.dirname(path))
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['generation', 'best_loss'])
        for generation, loss in enumerate(history):
            writer.writerow([generation, repr(float(loss))])
    return path


class GeneticSearch:
    """
    Class to run the genetic search with settings from the [GA] section.
    """
    def __init__(self, config_manager: ConfigManager):
        """
        Initialize the search.

        Args:
            config_manager: Instance of ConfigManager.
        """
        self.config = config_manager
        self.population = int(self.config.get('GA', 'population', fallback='100'))
        self.elites = int(self.config.get('GA', 'elites', fallback='10'))
        self.mutation = float(self.config.get('GA', 'mutation', fallback='0.01'))
        self.generations = int(self.config.get('GA', 'generations', fallback='1000'))
        self.n_c = int(self.config.get('GA', 'n_c', fallback='3'))
        self.n_v = int(self.config.get('GA', 'n_v', fallback='5'))
        self.min_length = int(self.config.get('GA', 'min_length', fallback='1'))
        self.max_length = int(self.config.get('GA', 'max_length', fallback='10'))
        self.logger = logging.getLogger('GeneticSearch')

    def params(self, **overrides) -> GAParams:
        """
        Build search settings, command-line overrides taking precedence.

        Args:
            **overrides: GAParams fields; None values are ignored.
        """
        settings = {
            'population': self.population,
            'elites': self.elites,
            'mutation_prob': self.mutation,
            'generations': self.generations,
            'n_c': self.n_c,
            'n_v': self.n_v,
            'min_length': self.min_length,
            'max_length': self.max_length,
        }
        settings.update({key: value for key, value in overrides.items() if value is not None})
        return GAParams(**settings)

    def run(
        self,
        target: Spectrum,
        params: Optional[GAParams] = None,
        termination: Optional[Termination] = None,
        seed: Optional[int] = None,
        threads: int = 1,
        refine: bool = False,
        progress: bool = True
    ) -> GAResult:
        """
        Search for a configuration reproducing the target spectrum.

        Args:
            target: Target spectrum.
            params: Search settings, the configured ones when omitted.
            termination: Output termination, the target's own when omitted.
            seed: Random seed.
            threads: Workers for loss evaluation.
            refine: Refine the winner's values afterwards.
            progress: Show a progress bar over generations.

        Returns:
            The search result.
        """
        params = params or self.params()
        self.logger.info(
            f"Starting GA: population {params.population}, elites {params.elites}, "
            f"mutation {params.mutation_prob}, generations {params.generations}, seed {seed}"
        )
        result = evolve(target, params, termination, seed, threads, progress=progress)
        self.logger.info(f"Best configuration {result.best.config.to_literal()} with loss {result.best.cached_loss:.6e}")

        if refine and result.best.cached_loss is not None and math.isfinite(result.best.cached_loss):
            result.refinement = Refiner(self.config).refine(result.best.config, target, termination)
        return result

    def predict(
        self,
        target: Spectrum,
        params: Optional[GAParams] = None,
        seed: Optional[int] = None,
        refine: bool = False
    ) -> Configuration:
        """
        Best configuration for a target, usable as an evaluation predictor.

        Args:
            target: Target spectrum.
            params: Search settings, the configured ones when omitted.
            seed: Random seed.
            refine: Refine the winner and snap its values back to the grid.

        Returns:
            The winner; with refinement, its refined values and their nearest bins.
        """
        params = params or self.params()
        result = self.run(target, params, seed=seed, refine=refine, progress=False)
        if result.refinement is None:
            return result.best.config
        return result.refinement.candidate.to_configuration(ValueGrid.with_bins(params.n_v))
