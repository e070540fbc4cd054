"""Dense reference propagation for small systems.

Builds full propagators with ``scipy.linalg.expm`` and so shares no numerical
path with the sparse Taylor and Runge-Kutta machinery; used to cross-check it.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .errors import ConfigError
from .propagation import ControlSchedule, augment_generator

MAX_LIOUVILLE_DIM = 1024


def _dense(M) -> np.ndarray:
    return np.asarray(M.toarray() if hasattr(M, "toarray") else M, dtype=np.complex128)


def dense_yield(L0, channels, schedule: ControlSchedule, rho0, *, k_b: float, P_S, t1: float | None = None) -> float:
    """Recombination yield on ``[0, t1]`` by products of dense exponentials."""
    n = L0.shape[0]
    if n > MAX_LIOUVILLE_DIM:
        raise ConfigError(f"dense oracle limited to Liouville dimension {MAX_LIOUVILLE_DIM}, got {n}")
    base = _dense(augment_generator(L0, k_b, P_S))
    gens = [_dense(ch.effective) for ch in channels]
    w = np.zeros(n + 1, dtype=np.complex128)
    w[:n] = rho0
    for k in range(schedule.n_steps):
        A = base.copy()
        for u, G in zip(schedule.amplitudes[k], gens):
            A[:n, :n] += u * G
        w = sla.expm(A * schedule.dt) @ w
    t_c = schedule.duration
    if t1 is not None and t1 > t_c:
        w = sla.expm(base * (t1 - t_c)) @ w
    return float(w[-1].real)


def dense_gradient(problem, schedule: ControlSchedule, h: float = 1e-5) -> np.ndarray:
    """Central differences of the dense signed objective."""
    def value(s):
        return problem.sense * sum(t.weight * dense_yield(t.drift, problem.channels, s, problem.rho0,
                                                          k_b=problem.k_b, P_S=problem.P_S, t1=problem.t1)
                                   for t in problem.terms)

    g = np.zeros_like(schedule.amplitudes)
    for idx in np.ndindex(*g.shape):
        up = schedule.amplitudes.copy()
        dn = schedule.amplitudes.copy()
        up[idx] += h
        dn[idx] -= h
        g[idx] = (value(ControlSchedule(up, schedule.dt)) - value(ControlSchedule(dn, schedule.dt))) / (2 * h)
    return g


def compare(problem, schedule: ControlSchedule, with_gradient: bool = True) -> dict:
    """Sparse pipeline vs dense oracle on one schedule."""
    if problem.tail != "finite":
        raise ConfigError("the dense oracle covers finite horizons only")
    ev = problem.evaluate(schedule, tail_method="forward")
    dense = np.array([dense_yield(t.drift, problem.channels, schedule, problem.rho0, k_b=problem.k_b,
                                  P_S=problem.P_S, t1=problem.t1) for t in problem.terms])
    report = {"yields": ev.yields.tolist(), "dense_yields": dense.tolist(),
              "max_abs_yield_error": float(np.abs(ev.yields - dense).max())}
    if with_gradient and problem.n_channels:
        g = problem.gradient(schedule, ev)
        fd = dense_gradient(problem, schedule)
        report["max_rel_gradient_error"] = float(np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-300)))
        report["max_abs_gradient_error"] = float(np.abs(g - fd).max())
    return report
