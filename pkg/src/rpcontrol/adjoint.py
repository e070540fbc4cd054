"""Costate integration and control gradients.

The costate obeys ``d lambda/dt = -L(u)^dag lambda - sign * k_b vec(P_S)`` with
``lambda(t1) = 0``, integrated backwards with an adaptive order-8 Runge-Kutta
method restarted at every control boundary. The derivative of the signed
objective with respect to the amplitude of channel ``i`` on step ``k`` is the
time integral of ``Re <lambda(t)| scale_i L_i |rho(t)>`` over that step.

For the default ``"integrated"`` rule that integral is evaluated alongside the
costate: auxiliary covectors ``xi_i`` solve
``d xi_i/dt = -L^dag xi_i - (scale_i L_i)^dag lambda`` with ``xi_i(t_{k+1}) = 0``,
so that ``<xi_i(t_k)|rho(t_k)>`` equals the step integral. The cheaper
``"left"`` and ``"midpoint"`` rules sample the integrand at the boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import rk8
from .affine import AffineOperator
from .errors import AlignmentError, ConfigError, NumericError
from .propagation import ControlSchedule, Trajectory, _solve_drift

GRADIENT_RULES = ("integrated", "left", "midpoint")


def _vec(P) -> np.ndarray:
    return np.asarray(P.toarray() if sp.issparse(P) else P).reshape(-1, order="F").astype(np.complex128)


def _adj(M) -> sp.csr_matrix:
    return sp.csr_matrix(M, dtype=np.complex128).conj().T.tocsr()


@dataclass
class CostateTrajectory:
    t_grid: np.ndarray
    checkpoints: np.ndarray            # lambda at each control boundary
    t1: float
    terminal: np.ndarray               # lambda(t1), zero by transversality
    tail_costate: np.ndarray           # lambda at the end of the control window
    sensitivities: np.ndarray | None   # xi_i(t_k), shape (n_steps, n_channels, d^2)
    sign: float
    stats: rk8.RKStats = field(default_factory=rk8.RKStats)


@dataclass
class GradientReport:
    grad: np.ndarray
    norm: float
    control_hamiltonian_value: np.ndarray


def tail_costate(L0, *, sign: float, k_b: float, P_S, t_c: float, t1: float, mode: str = "finite",
                 rtol: float = rk8.RTOL, atol: float = rk8.ATOL) -> tuple[np.ndarray, rk8.RKStats]:
    """Costate at the end of the control window, from ``lambda(t1) = 0`` with no control."""
    p = _vec(P_S)
    d2 = p.size
    c = sign * k_b
    if mode == "infinite":
        return -c * _solve_drift(L0, p, adjoint=True), rk8.RKStats()
    if mode != "finite":
        raise ConfigError(f"unknown tail mode {mode!r}")
    if t1 < t_c:
        raise ConfigError("t1 must not precede the end of the control window")
    if t1 == t_c or c == 0.0:
        return np.zeros(d2, dtype=np.complex128), rk8.RKStats()
    M = sp.bmat([[_adj(L0), sp.csr_matrix(c * p.reshape(-1, 1))],
                 [None, sp.csr_matrix((1, 1))]], format="csr")
    family = AffineOperator(M)
    y0 = np.zeros(d2 + 1, dtype=np.complex128)
    y0[-1] = 1.0
    y, _, stats = rk8.integrate(family.at(), y0, t1 - t_c, rtol, atol)
    return y[:-1], stats


class CostateSystem:
    """Backward-time generator for ``(lambda, xi_1..xi_n, 1)`` as an affine family in ``u``."""

    def __init__(self, L0, channels, *, sign: float, k_b: float, P_S, with_sensitivities: bool = True):
        p = _vec(P_S)
        d2 = p.size
        self.d2 = d2
        self.n_channels = len(channels)
        self.with_sensitivities = with_sensitivities
        self.scales = np.array([ch.scale for ch in channels], dtype=float)
        L0a = _adj(L0)
        eff = [_adj(ch.scale * ch.generator) for ch in channels]
        nb = 1 + (self.n_channels if with_sensitivities else 0)
        zero = sp.csr_matrix((1, 1), dtype=np.complex128)
        force = sp.csr_matrix((sign * k_b) * p.reshape(-1, 1))

        def assemble(diag, coupling, forcing):
            blocks = [[None] * (nb + 1) for _ in range(nb + 1)]
            for b in range(nb):
                blocks[b][b] = diag
            if coupling is not None:
                for i in range(1, nb):
                    blocks[i][0] = coupling[i - 1]
            blocks[0][nb] = forcing
            blocks[nb][nb] = zero
            return sp.bmat(blocks, format="csr")

        base = assemble(L0a, eff if with_sensitivities else None, force)
        empty = sp.csr_matrix((d2, 1), dtype=np.complex128)
        gens = [assemble(_adj(ch.generator), None, empty) for ch in channels]
        self.family = AffineOperator(base, gens)
        self.size = nb * d2 + 1

    def generator(self, u) -> sp.csr_matrix:
        return self.family.at(np.asarray(u, dtype=float) * self.scales)


def costate_backward(L0, channels, schedule: ControlSchedule, sign: float, *, k_b: float, P_S,
                     t1: float | None = None, tail: str = "finite",
                     rtol: float = rk8.RTOL, atol: float = rk8.ATOL,
                     gradient_rule: str = "integrated", lambda_tc: np.ndarray | None = None,
                     system: CostateSystem | None = None) -> CostateTrajectory:
    """Integrate the costate from ``t1`` back to ``t0``, tail segment first.

    ``lambda_tc`` short-circuits the tail when it has already been computed for
    this drift and sign.
    """
    if gradient_rule not in GRADIENT_RULES:
        raise ConfigError(f"unknown gradient rule {gradient_rule!r}")
    schedule.check_bounds(channels)
    t_c = schedule.duration
    t1 = t_c if t1 is None else t1
    stats = rk8.RKStats()
    if lambda_tc is None:
        lambda_tc, tail_stats = tail_costate(L0, sign=sign, k_b=k_b, P_S=P_S, t_c=t_c, t1=t1,
                                             mode=tail, rtol=rtol, atol=atol)
        stats.add(tail_stats)
    integrated = gradient_rule == "integrated"
    sysm = system or CostateSystem(L0, channels, sign=sign, k_b=k_b, P_S=P_S,
                                   with_sensitivities=integrated)
    d2, nch, n = sysm.d2, sysm.n_channels, schedule.n_steps
    lam = np.empty((n + 1, d2), dtype=np.complex128)
    lam[n] = lambda_tc
    sens = np.empty((n, nch, d2), dtype=np.complex128) if integrated else None
    y = np.zeros(sysm.size, dtype=np.complex128)
    y[-1] = 1.0
    h = 0.0
    for k in range(n - 1, -1, -1):
        y[:d2] = lam[k + 1]
        y[d2:-1] = 0.0
        y, h, st = rk8.integrate(sysm.generator(schedule.amplitudes[k]), y, schedule.dt, rtol, atol, h)
        stats.add(st)
        if not np.isfinite(y).all():
            raise NumericError(f"non-finite costate at control step {k}")
        lam[k] = y[:d2]
        if integrated:
            sens[k] = y[d2:-1].reshape(nch, d2)
    return CostateTrajectory(schedule.t_grid, lam, t1, np.zeros(d2, dtype=np.complex128),
                             lam[n].copy(), sens, sign, stats)


def assemble_gradient(traj: Trajectory, costate: CostateTrajectory, channels, schedule: ControlSchedule,
                      *, rule: str | None = None, L0=None, k_b: float = 0.0, P_S=None) -> GradientReport:
    """Gradient of the signed objective with respect to every amplitude ``u[k, i]``.

    ``rule`` defaults to ``"integrated"`` when the costate carries sensitivities
    and to ``"left"`` otherwise. ``L0``, ``k_b`` and ``P_S`` are only needed for
    the control-Hamiltonian diagnostic (NaN without them).
    """
    n = schedule.n_steps
    if traj.t_grid.size != costate.t_grid.size or not np.allclose(traj.t_grid, costate.t_grid):
        raise AlignmentError("state and costate checkpoints are on different grids")
    if traj.n_steps != n or costate.checkpoints.shape[0] != n + 1:
        raise AlignmentError("trajectory or costate does not match the schedule")
    if rule is None:
        rule = "integrated" if costate.sensitivities is not None else "left"
    if rule not in GRADIENT_RULES:
        raise ConfigError(f"unknown gradient rule {rule!r}")
    if rule == "integrated" and costate.sensitivities is None:
        raise ConfigError("integrated rule needs a costate computed with sensitivities")
    eff = [ch.scale * ch.generator for ch in channels]
    diag = L0 is not None and P_S is not None
    if diag:
        family = AffineOperator(L0, [ch.generator for ch in channels])
        scales = np.array([ch.scale for ch in channels], dtype=float)
        p = _vec(P_S)
    grad = np.zeros((n, len(channels)))
    hc = np.full(n, np.nan)
    for k in range(n):
        rho = traj.state(k)
        lam = costate.checkpoints[k]
        if rule == "integrated":
            grad[k] = np.real(costate.sensitivities[k].conj() @ rho)
        else:
            pair = np.array([np.vdot(lam, G @ rho).real for G in eff])
            if rule == "left":
                grad[k] = pair * schedule.dt
            else:
                rho1 = traj.state(k + 1)
                pair_next = np.array([np.vdot(costate.checkpoints[k + 1], G @ rho1).real for G in eff])
                grad[k] = 0.5 * (pair + pair_next) * schedule.dt
        if diag:
            Lk = family.at(schedule.amplitudes[k] * scales)
            running = costate.sign * k_b * np.vdot(p, rho).real
            hc[k] = running + np.vdot(lam, Lk @ rho).real
    if not np.isfinite(grad).all():
        raise NumericError("non-finite gradient")
    return GradientReport(grad, float(np.linalg.norm(grad)), hc)
