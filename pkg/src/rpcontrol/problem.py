"""Control problems: drifts, channels, horizons and the objective they define.

A problem has one or more *terms*, each a drift Liouvillian (one field
orientation) with a weight. The signed objective to be maximised is

    J[u] = sense * sum_o weight_o * G[u; o]

where ``G`` is the singlet recombination yield on ``[0, t1]``. Minimising the
yield is ``sense=-1`` with a single ``+1`` term; the orientation contrast
``G[u; z] - G[u; x]`` is two terms with weights ``+1`` and ``-1``.

The control window ends at ``t_c = n_steps * dt``; the uncontrolled tail
``[t_c, t1]`` is folded into a linear functional of ``rho(t_c)``, namely the
costate at ``t_c``, which depends only on the drift and is computed once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import rk8
from .adjoint import CostateSystem, assemble_gradient, costate_backward, tail_costate
from .errors import ConfigError
from .model import FieldSpec, SpinSystem
from .propagation import (DEFAULT_TOL, TAIL_STEP, ControlSchedule, Propagator, Trajectory,
                          forward_trajectory, tail_evaluate)
from .spin import singlet_projector
from .superop import ChannelSpec, NoiseSpec, control_channels, drift_liouvillian, singlet_state


@dataclass
class Term:
    drift: sp.csr_matrix
    weight: float = 1.0
    label: str = ""


@dataclass
class Evaluation:
    """Signed objective value plus whatever is needed to reuse the forward pass."""

    value: float
    yields: np.ndarray                         # total yield per term
    trajectories: list[Trajectory] = field(default_factory=list, repr=False)


class ControlProblem:
    def __init__(self, terms, channels, *, k_b: float, P_S, rho0, n_steps: int, dt: float,
                 t1: float | None = None, sense: float = 1.0, tail: str = "finite",
                 expm_tol: float = DEFAULT_TOL, rk_rtol: float = rk8.RTOL, rk_atol: float = rk8.ATOL,
                 gradient_rule: str = "integrated", checkpoint_every: int = 1,
                 tail_step: float = TAIL_STEP):
        if sense not in (1.0, -1.0, 1, -1):
            raise ConfigError("sense must be +1 (maximise) or -1 (minimise)")
        self.terms = [t if isinstance(t, Term) else Term(*t) for t in terms]
        if not self.terms:
            raise ConfigError("a problem needs at least one drift")
        self.channels = list(channels)
        self.k_b = float(k_b)
        self.P_S = P_S
        self.rho0 = np.asarray(rho0, dtype=np.complex128)
        self.n_steps = int(n_steps)
        self.dt = float(dt)
        self.t_c = self.n_steps * self.dt
        self.t1 = self.t_c if t1 is None else float(t1)
        if self.t1 < self.t_c - 1e-12:
            raise ConfigError(f"t1={self.t1} precedes the end of the control window {self.t_c}")
        self.sense = float(sense)
        self.tail = tail
        self.tail_step = tail_step
        self.expm_tol = expm_tol
        self.rk_rtol = rk_rtol
        self.rk_atol = rk_atol
        self.gradient_rule = gradient_rule
        self.checkpoint_every = checkpoint_every
        self.lower = np.array([c.lower_bound for c in self.channels], dtype=float)
        self.upper = np.array([c.upper_bound for c in self.channels], dtype=float)
        self._propagators: dict[int, Propagator] = {}
        self._costate_systems: dict[int, CostateSystem] = {}
        self._tail_costates: dict[int, np.ndarray] = {}

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    def signs(self) -> list[float]:
        """Costate forcing sign per term."""
        return [self.sense * t.weight for t in self.terms]

    def propagator(self, o: int) -> Propagator:
        if o not in self._propagators:
            self._propagators[o] = Propagator(self.terms[o].drift, self.channels, self.k_b, self.P_S,
                                              self.expm_tol)
        return self._propagators[o]

    def costate_system(self, o: int) -> CostateSystem:
        if o not in self._costate_systems:
            self._costate_systems[o] = CostateSystem(
                self.terms[o].drift, self.channels, sign=self.signs()[o], k_b=self.k_b, P_S=self.P_S,
                with_sensitivities=self.gradient_rule == "integrated")
        return self._costate_systems[o]

    def tail_costate(self, o: int) -> np.ndarray:
        if o not in self._tail_costates:
            lam, _ = tail_costate(self.terms[o].drift, sign=self.signs()[o], k_b=self.k_b, P_S=self.P_S,
                                  t_c=self.t_c, t1=self.t1, mode=self.tail,
                                  rtol=self.rk_rtol, atol=self.rk_atol)
            self._tail_costates[o] = lam
        return self._tail_costates[o]

    def zero_schedule(self) -> ControlSchedule:
        return ControlSchedule.zeros(self.n_steps, self.n_channels, self.dt)

    def project(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, self.lower, self.upper)

    def trajectory(self, schedule: ControlSchedule, o: int = 0) -> Trajectory:
        return forward_trajectory(self.terms[o].drift, self.channels, schedule, self.rho0, k_b=self.k_b,
                                  P_S=self.P_S, tol=self.expm_tol, checkpoint_every=self.checkpoint_every,
                                  propagator=self.propagator(o))

    def tail_yield(self, o: int, rho_c: np.ndarray, method: str = "adjoint") -> float:
        """Yield collected on ``[t_c, t1]`` starting from ``rho_c``."""
        if self.t1 == self.t_c and self.tail == "finite":
            return 0.0
        if method == "adjoint":
            sign = self.signs()[o]
            if sign == 0.0:
                method = "forward"
            else:
                return float(np.vdot(self.tail_costate(o), rho_c).real / sign)
        if method == "forward":
            return tail_evaluate(self.terms[o].drift, rho_c, self.t_c, self.t1, self.tail, k_b=self.k_b,
                                 P_S=self.P_S, tol=self.expm_tol, coarse_step=self.tail_step)
        raise ConfigError(f"unknown tail method {method!r}")

    def evaluate(self, schedule: ControlSchedule, tail_method: str = "adjoint") -> Evaluation:
        trajs = [self.trajectory(schedule, o) for o in range(len(self.terms))]
        yields = np.array([tr.final_yield + self.tail_yield(o, tr.final_state, tail_method)
                           for o, tr in enumerate(trajs)])
        value = self.sense * float(sum(t.weight * y for t, y in zip(self.terms, yields)))
        return Evaluation(value, yields, trajs)

    def raw_value(self, signed: float) -> float:
        """Objective in natural units (yield or contrast) from a signed value."""
        return self.sense * signed

    def gradient(self, schedule: ControlSchedule, evaluation: Evaluation | None = None) -> np.ndarray:
        """d J / d u[k, i] summed over terms."""
        if evaluation is None or not evaluation.trajectories:
            evaluation = self.evaluate(schedule)
        grad = np.zeros((self.n_steps, self.n_channels))
        for o, term in enumerate(self.terms):
            cs = costate_backward(term.drift, self.channels, schedule, self.signs()[o], k_b=self.k_b,
                                  P_S=self.P_S, t1=self.t1, tail=self.tail, rtol=self.rk_rtol,
                                  atol=self.rk_atol, gradient_rule=self.gradient_rule,
                                  lambda_tc=self.tail_costate(o), system=self.costate_system(o))
            rule = "midpoint" if self.gradient_rule == "midpoint" else None
            grad += assemble_gradient(evaluation.trajectories[o], cs, self.channels, schedule, rule=rule).grad
        return grad


def yield_problem(system: SpinSystem, fld: FieldSpec, channel_spec: ChannelSpec | None, *, k_b: float,
                  k_f: float, noise: NoiseSpec = NoiseSpec(), n_steps: int, dt: float,
                  t1: float | None = None, minimize: bool = True, **kwargs) -> ControlProblem:
    """Minimise (or maximise) the singlet yield at one field orientation."""
    reg = system.register
    L0 = drift_liouvillian(system, fld, k_b, k_f, noise)
    chans = control_channels(channel_spec, reg) if channel_spec is not None else []
    return ControlProblem([Term(L0, 1.0, "yield")], chans, k_b=k_b, P_S=singlet_projector(reg),
                          rho0=singlet_state(reg), n_steps=n_steps, dt=dt, t1=t1,
                          sense=-1.0 if minimize else 1.0, **kwargs)


def contrast_problem(system: SpinSystem, field_z: FieldSpec, field_x: FieldSpec,
                     channel_spec: ChannelSpec | None, *, k_b: float, k_f: float,
                     noise: NoiseSpec = NoiseSpec(), n_steps: int, dt: float, t1: float | None = None,
                     swapped: bool = False, **kwargs) -> ControlProblem:
    """Maximise ``G[z] - G[x]`` (or ``G[x] - G[z]`` when ``swapped``)."""
    reg = system.register
    Lz = drift_liouvillian(system, field_z, k_b, k_f, noise)
    Lx = drift_liouvillian(system, field_x, k_b, k_f, noise)
    w = -1.0 if swapped else 1.0
    chans = control_channels(channel_spec, reg) if channel_spec is not None else []
    return ControlProblem([Term(Lz, w, "z"), Term(Lx, -w, "x")], chans, k_b=k_b, P_S=singlet_projector(reg),
                          rho0=singlet_state(reg), n_steps=n_steps, dt=dt, t1=t1, sense=1.0, **kwargs)
