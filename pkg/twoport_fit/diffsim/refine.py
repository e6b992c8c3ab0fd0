"""
Refinement of component values against a target spectrum.

The structure (alignments and types) of a candidate is fixed; its values are
optimized in log space with Adam, differentiating the simulator through a
:class:`~twoport_fit.diffsim.tape.Tape`. The loss is

    L_S = (1/d) * sum_i ( |V_i - V(S)_i|^2 + |I_i - I(S)_i|^2 ),

the 1/d factor scaling both terms.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from twoport_fit.circuit.components import Alignment, ComponentType, Configuration, require_non_empty
from twoport_fit.config.config_manager import ConfigManager
from twoport_fit.dataset.grid import ValueGrid, quantize
from twoport_fit.diffsim.tape import ComplexVar, Node, Tape, add, div, exp, mul, neg, total
from twoport_fit.exceptions import DivergenceError, InvalidInputError, SingularityError
from twoport_fit.simulation.simulator import Spectrum, Termination, is_singular, simulate


DEFAULT_LR = 0.01
DEFAULT_BETA1 = 0.9
DEFAULT_BETA2 = 0.999
DEFAULT_EPS = 1e-8
DEFAULT_MAX_ITERS = 5000
DEFAULT_THRESHOLD = 1e-8


@dataclass(frozen=True)
class CandidateConfig:
    """
    Fixed structure with optimizable values stored as logarithms.

    Attributes:
        structure: Configuration supplying alignments and types.
        log_values: Natural logarithm of each component value.
    """
    structure: Configuration
    log_values: np.ndarray

    def __post_init__(self):
        require_non_empty(self.structure, 'structure')
        log_values = np.array(self.log_values, dtype=np.float64)
        if log_values.shape != (len(self.structure),):
            raise InvalidInputError(
                f"Expected {len(self.structure)} log-values, got shape {log_values.shape}"
            )
        if not np.all(np.isfinite(log_values)):
            raise InvalidInputError("Log-values must be finite")
        log_values.setflags(write=False)
        object.__setattr__(self, 'log_values', log_values)

    @classmethod
    def from_configuration(cls, config: Configuration) -> 'CandidateConfig':
        return cls(config, np.log(np.array(config.values, dtype=np.float64)))

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_values)

    def with_log_values(self, log_values: np.ndarray) -> 'CandidateConfig':
        return CandidateConfig(self.structure, log_values)

    def to_configuration(self, grid: Optional[ValueGrid] = None) -> Configuration:
        """
        Structure with the candidate's values substituted.

        Args:
            grid: When given, every component also gets the nearest bin.
        """
        components = []
        for component, value in zip(self.structure, self.values):
            value = float(value)
            value_bin = quantize(value, component.ctype, grid) if grid is not None else None
            components.append(component.with_value(value, value_bin))
        return Configuration(tuple(components))


@dataclass
class AdamState:
    """
    Adam moments for an n-vector of parameters.
    """
    m: np.ndarray
    v: np.ndarray
    lr: float = DEFAULT_LR
    beta1: float = DEFAULT_BETA1
    beta2: float = DEFAULT_BETA2
    eps: float = DEFAULT_EPS
    step_count: int = 0

    @classmethod
    def zeros(cls, n: int, lr: float = DEFAULT_LR, beta1: float = DEFAULT_BETA1,
              beta2: float = DEFAULT_BETA2, eps: float = DEFAULT_EPS) -> 'AdamState':
        return cls(np.zeros(n), np.zeros(n), lr, beta1, beta2, eps, 0)

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """
        One Adam update.

        Returns:
            The updated parameter vector (a new array).
        """
        self.step_count += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * (grad * grad)
        m_hat = self.m / (1.0 - self.beta1 ** self.step_count)
        v_hat = self.v / (1.0 - self.beta2 ** self.step_count)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _check_target(target: Spectrum, termination: Optional[Termination]) -> Termination:
    if not target.is_finite:
        raise InvalidInputError("Target spectrum has non-finite entries")
    return termination or target.termination


def _component_terms(tape_value: Node, ctype: ComponentType, omega: np.ndarray,
                     alignment: Alignment) -> ComplexVar:
    """Z for a series component or Y for a shunt one, as a function of the value node."""
    zero = np.zeros_like(omega)
    wants_impedance = alignment is Alignment.SERIES
    if ctype is ComponentType.RESISTOR:
        return ComplexVar(tape_value if wants_impedance else div(1.0, tape_value), zero)
    # Reactive part is +omega*x or -1/(omega*x) depending on type and alignment
    grows = (ctype is ComponentType.INDUCTOR) == wants_impedance
    if grows:
        return ComplexVar(zero, mul(omega, tape_value))
    return ComplexVar(zero, neg(div(1.0, mul(omega, tape_value))))


def simulate_on_tape(
    tape: Tape,
    structure: Configuration,
    log_values: List[Node],
    omega: np.ndarray,
    termination: Termination
) -> Tuple[ComplexVar, ComplexVar]:
    """
    Record the simulator on a tape.

    Returns:
        (V, I) as complex tape quantities over the grid.

    Raises:
        SingularityError: if the port solve is singular at some frequency.
    """
    ones = np.ones_like(omega)
    zeros = np.zeros_like(omega)
    a, b = ComplexVar(ones, zeros), ComplexVar(zeros, zeros)
    c, d = ComplexVar(zeros, zeros), ComplexVar(ones, zeros)

    for component, log_value in zip(structure, log_values):
        term = _component_terms(exp(log_value), component.ctype, omega, component.alignment)
        if component.alignment is Alignment.SERIES:
            a, b = a - term * c, b - term * d
        else:
            c, d = c - term * a, d - term * b

    # Unit determinant: V_out = -Z_L / (B - Z_L D) under a load, 1 / D when open
    denominator = d if termination.is_open else b - d.scale(termination.impedance)

    scale = np.abs(a.value) + np.abs(b.value) + np.abs(c.value) + np.abs(d.value)
    singular = is_singular(denominator.value, scale)
    if np.any(singular):
        index = int(np.argmax(singular))
        raise SingularityError(index, float(omega[index] / (2.0 * np.pi)))

    if termination.is_open:
        return ComplexVar(1.0) / denominator, -c / denominator
    i_out = -(ComplexVar(1.0) / denominator)
    return i_out.scale(termination.impedance), i_out


def _loss_and_grad(candidate: CandidateConfig, target: Spectrum,
                   termination: Termination) -> Tuple[float, np.ndarray]:
    tape = Tape()
    log_nodes = [tape.variable(x) for x in candidate.log_values]
    v, i = simulate_on_tape(tape, candidate.structure, log_nodes, target.grid.omega, termination)
    dv = v - ComplexVar.constant(target.V)
    di = i - ComplexVar.constant(target.I)
    loss = div(total(add(dv.abs2(), di.abs2())), float(len(target)))
    grads = tape.gradient(loss, log_nodes)
    return float(loss.value), np.array([float(g) for g in grads])


def loss_spectrum(candidate: CandidateConfig, target: Spectrum,
                  termination: Optional[Termination] = None) -> float:
    """
    Mean squared complex discrepancy between the candidate's spectrum and the target.

    Args:
        candidate: Candidate structure and values.
        target: Target spectrum; its grid is the simulation grid.
        termination: Output termination, the target's own when omitted.
    """
    termination = _check_target(target, termination)
    return spectrum_loss(simulate(candidate.to_configuration(), target.grid, termination), target)


def spectrum_loss(simulated: Spectrum, target: Spectrum) -> float:
    """L_S between two spectra on the same grid."""
    diff_v = simulated.V - target.V
    diff_i = simulated.I - target.I
    squared = diff_v.real ** 2 + diff_v.imag ** 2 + diff_i.real ** 2 + diff_i.imag ** 2
    return float(squared.sum() / len(target))


def grad_values(candidate: CandidateConfig, target: Spectrum,
                termination: Optional[Termination] = None) -> np.ndarray:
    """
    Reverse-mode gradient of :func:`loss_spectrum` with respect to the log-values.
    """
    termination = _check_target(target, termination)
    return _loss_and_grad(candidate, target, termination)[1]


@dataclass
class RefinementResult:
    """
    Outcome of :func:`refine`.

    Attributes:
        candidate: Best-seen iterate.
        initial_loss: Loss of the input candidate.
        final_loss: Loss of the best-seen iterate.
        iters: Number of Adam steps taken.
        best_history: Running minimum of the loss, one entry per evaluation.
    """
    candidate: CandidateConfig
    initial_candidate: CandidateConfig
    initial_loss: float
    final_loss: float
    iters: int
    best_history: List[float] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.final_loss < DEFAULT_THRESHOLD

    def report(self) -> dict:
        """JSON-ready refinement report."""
        return {
            'initial_loss': self.initial_loss,
            'final_loss': self.final_loss,
            'iters': self.iters,
            'values_before': [float(x) for x in self.initial_candidate.values],
            'values_after': [float(x) for x in self.candidate.values],
        }

    def to_json(self) -> str:
        return json.dumps(self.report(), indent=2)


def refine(
    candidate: CandidateConfig,
    target: Spectrum,
    termination: Optional[Termination] = None,
    max_iters: int = DEFAULT_MAX_ITERS,
    lr: float = DEFAULT_LR,
    threshold: float = DEFAULT_THRESHOLD,
    beta1: float = DEFAULT_BETA1,
    beta2: float = DEFAULT_BETA2,
    eps: float = DEFAULT_EPS
) -> RefinementResult:
    """
    Adam on the log-values until the loss drops below ``threshold``.

    Args:
        candidate: Starting structure and values.
        target: Target spectrum.
        termination: Output termination, the target's own when omitted.
        max_iters: Maximum number of Adam steps.
        lr: Adam learning rate.
        threshold: Stopping loss.

    Returns:
        The best-seen iterate; its loss never exceeds the input loss.

    Raises:
        DivergenceError: on a non-finite loss.
    """
    if max_iters < 1:
        raise InvalidInputError(f"max_iters must be at least 1, got {max_iters}")
    termination = _check_target(target, termination)

    params = candidate.log_values.copy()
    loss, grad = _loss_and_grad(candidate, target, termination)
    if not math.isfinite(loss):
        raise DivergenceError("Non-finite initial loss", history_length=0)

    initial_loss = loss
    best_loss, best_params = loss, params.copy()
    best_history = [best_loss]
    state = AdamState.zeros(len(params), lr, beta1, beta2, eps)

    iters = 0
    while best_loss >= threshold and iters < max_iters:
        params = state.step(params, grad)
        iters += 1
        if not np.all(np.isfinite(params)):
            raise DivergenceError("Non-finite parameters during refinement", history_length=len(best_history))
        loss, grad = _loss_and_grad(candidate.with_log_values(params), target, termination)
        if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
            raise DivergenceError("Non-finite loss during refinement", history_length=len(best_history))
        if loss < best_loss:
            best_loss, best_params = loss, params.copy()
        best_history.append(best_loss)

    return RefinementResult(
        candidate=candidate.with_log_values(best_params),
        initial_candidate=candidate,
        initial_loss=initial_loss,
        final_loss=best_loss,
        iters=iters,
        best_history=best_history,
    )


class Refiner:
    """
    Class to run refinements with settings from the [REFINE] section.
    """
    def __init__(self, config_manager: ConfigManager):
        """
        Initialize the refiner.

        Args:
            config_manager: Instance of ConfigManager.
        """
        self.config = config_manager
        self.lr = float(self.config.get('REFINE', 'lr', fallback=str(DEFAULT_LR)))
        self.beta1 = float(self.config.get('REFINE', 'beta1', fallback=str(DEFAULT_BETA1)))
        self.beta2 = float(self.config.get('REFINE', 'beta2', fallback=str(DEFAULT_BETA2)))
        self.eps = float(self.config.get('REFINE', 'eps', fallback=str(DEFAULT_EPS)))
        self.max_iters = int(self.config.get('REFINE', 'max_iters', fallback=str(DEFAULT_MAX_ITERS)))
        self.threshold = float(self.config.get('REFINE', 'threshold', fallback=str(DEFAULT_THRESHOLD)))
        self.logger = logging.getLogger('Refiner')

    def refine(self, config: Configuration, target: Spectrum,
               termination: Optional[Termination] = None,
               max_iters: Optional[int] = None) -> RefinementResult:
        """
        Refine the values of a configuration against a target spectrum.

        Args:
            config: Candidate configuration; its values are the starting point.
            target: Target spectrum.
            termination: Output termination, the target's own when omitted.
            max_iters: Overrides the configured iteration cap.

        Returns:
            The refinement result.
        """
        candidate = CandidateConfig.from_configuration(config)
        self.logger.info(f"Refining {len(config)} values of {config.to_literal()}")
        try:
            result = refine(
                candidate, target, termination,
                max_iters=max_iters or self.max_iters,
                lr=self.lr, threshold=self.threshold,
                beta1=self.beta1, beta2=self.beta2, eps=self.eps,
            )
        except (DivergenceError, SingularityError) as e:
            self.logger.error(f"Refinement failed: {e}")
            raise

        self.logger.info(
            f"Refinement finished after {result.iters} steps: "
            f"loss {result.initial_loss:.3e} -> {result.final_loss:.3e}"
        )
        return result
