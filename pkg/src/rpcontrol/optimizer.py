"""Projected gradient ascent with a halving line search.

Works on anything that exposes ``n_steps``, ``n_channels``, ``dt``, ``lower``,
``upper``, ``evaluate(schedule) -> Evaluation`` and
``gradient(schedule, evaluation) -> array``; the objective is always maximised.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .propagation import ControlSchedule

log = logging.getLogger(__name__)

TERMINATIONS = ("tolerance", "max-iters", "stalled-line-search")


@dataclass(frozen=True)
class OptimizerConfig:
    max_iterations: int = 500
    yield_rel_tol: float = 1e-4
    grad_norm_tol: float = 1e-8
    step_len_tol: float = 1e-10
    grad_change_tol: float = 1e-10
    max_initial_control_change: float = 0.1
    reset_period: int = 10
    init_std: float = 0.1
    rng_seed: int = 0
    max_halvings: int = 40

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ConfigError("max_iterations must be >= 0")
        for name in ("yield_rel_tol", "grad_norm_tol", "step_len_tol", "grad_change_tol",
                     "max_initial_control_change"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.reset_period < 1:
            raise ConfigError("reset_period must be >= 1")
        if self.init_std < 0:
            raise ConfigError("init_std must be non-negative")
        if self.max_halvings < 0:
            raise ConfigError("max_halvings must be >= 0")


@dataclass
class OptimizationResult:
    schedule: ControlSchedule
    objective_history: list[float]        # signed objective, entry 0 is the initial schedule
    termination: str
    iterations_used: int
    line_search_halvings: list[int]
    detail: str = ""
    rates: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    initial_schedule: ControlSchedule | None = None
    final_evaluation: object = field(default=None, repr=False)

    @property
    def best_value(self) -> float:
        return self.objective_history[-1]


@dataclass
class LineSearchState:
    rate: float | None = None
    iteration: int = 1


@dataclass
class LineSearchOutcome:
    schedule: ControlSchedule
    evaluation: object
    rate: float
    halvings: int
    stalled: bool
    step_length: float


def init_schedule(n_steps: int, n_channels: int, lower, upper, config: OptimizerConfig,
                  dt: float = 1.0) -> ControlSchedule:
    """Normal(0, init_std) amplitudes clipped into the channel boxes."""
    if n_steps < 1 or n_channels < 0:
        raise ConfigError("schedule needs at least one step")
    rng = np.random.default_rng(config.rng_seed)
    u = rng.normal(0.0, config.init_std, size=(n_steps, n_channels))
    return ControlSchedule(np.clip(u, lower, upper), dt)


def project(u: np.ndarray, lower, upper) -> np.ndarray:
    return np.clip(u, lower, upper)


def projected_gradient(u: np.ndarray, grad: np.ndarray, lower, upper) -> np.ndarray:
    """Zero the components that point out of the box at an active bound."""
    g = grad.copy()
    g[(u <= lower) & (g < 0)] = 0.0
    g[(u >= upper) & (g > 0)] = 0.0
    return g


def line_search(problem, schedule: ControlSchedule, value: float, grad: np.ndarray, state: LineSearchState,
                config: OptimizerConfig) -> LineSearchOutcome:
    """Ascend along ``grad``, halving the rate until the objective improves."""
    if not np.isfinite(grad).all():
        raise ConfigError("line search needs a finite gradient")
    gmax = float(np.abs(grad).max()) if grad.size else 0.0
    if gmax == 0.0:
        return LineSearchOutcome(schedule, None, state.rate or 0.0, 0, False, 0.0)
    reset = state.rate is None or (state.iteration - 1) % config.reset_period == 0
    rate = config.max_initial_control_change / gmax if reset else state.rate
    u = schedule.amplitudes
    halvings = 0
    while True:
        cand = project(u + rate * grad, problem.lower, problem.upper)
        step = float(np.abs(cand - u).max())
        if step == 0.0:
            # every ascent direction is blocked by an active bound
            return LineSearchOutcome(schedule, None, rate, halvings, True, 0.0)
        trial = ControlSchedule(cand, schedule.dt)
        ev = problem.evaluate(trial)
        if ev.value > value:
            return LineSearchOutcome(trial, ev, rate, halvings, False, step)
        if halvings == config.max_halvings:
            return LineSearchOutcome(schedule, None, rate, halvings, True, 0.0)
        rate *= 0.5
        halvings += 1


def optimize(problem, config: OptimizerConfig = OptimizerConfig(),
             schedule: ControlSchedule | None = None) -> OptimizationResult:
    """Maximise ``problem``'s signed objective from ``schedule`` (or a seeded random start)."""
    if schedule is None:
        schedule = init_schedule(problem.n_steps, problem.n_channels, problem.lower, problem.upper,
                                 config, problem.dt)
    else:
        schedule = ControlSchedule(project(schedule.amplitudes, problem.lower, problem.upper), schedule.dt)
    initial = schedule.copy()
    ev = problem.evaluate(schedule)
    value = ev.value
    history = [value]
    halvings: list[int] = []
    rates: list[float] = []
    gnorms: list[float] = []
    state = LineSearchState()
    g_prev = None

    def result(term, it, detail):
        log.info("optimizer stopped after %d iterations: %s (%s)", it, term, detail)
        return OptimizationResult(schedule, history, term, it, halvings, detail, rates, gnorms, initial, ev)

    for it in range(1, config.max_iterations + 1):
        grad = problem.gradient(schedule, ev)
        pg = projected_gradient(schedule.amplitudes, grad, problem.lower, problem.upper)
        gnorm = float(np.abs(pg).max()) if pg.size else 0.0
        gnorms.append(gnorm)
        if gnorm < config.grad_norm_tol:
            halvings.append(0)
            return result("tolerance", it, "gradient norm")
        if g_prev is not None and float(np.abs(grad - g_prev).max()) < config.grad_change_tol:
            halvings.append(0)
            return result("tolerance", it, "gradient change")
        g_prev = grad
        state.iteration = it
        out = line_search(problem, schedule, value, grad, state, config)
        halvings.append(out.halvings)
        rates.append(out.rate)
        if out.stalled:
            return result("stalled-line-search", it, f"no improvement after {out.halvings} halvings")
        state.rate = out.rate
        schedule, ev = out.schedule, out.evaluation
        change = abs(ev.value - value)
        value = ev.value
        history.append(value)
        log.debug("iteration %d: objective %.12g, rate %.3g, halvings %d", it, value, out.rate, out.halvings)
        if out.step_length < config.step_len_tol:
            return result("tolerance", it, "step length")
        if change <= config.yield_rel_tol * abs(history[-2]):
            return result("tolerance", it, "relative objective change")
    return result("max-iters", config.max_iterations, "iteration budget exhausted")
