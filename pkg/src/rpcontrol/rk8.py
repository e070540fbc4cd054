"""Explicit Runge-Kutta of order 8 (Dormand-Prince 8(5,3)) for linear systems ``y' = A y``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import NumericError, StiffCostateError

RTOL = 1e-10
ATOL = 1e-12
MAX_STEPS = 50_000_000


@dataclass
class RKStats:
    accepted: int = 0
    rejected: int = 0

    def add(self, other: "RKStats") -> None:
        self.accepted += other.accepted
        self.rejected += other.rejected


def integrate(A, y0, T: float, rtol: float = RTOL, atol: float = ATOL, h0: float = 0.0,
              max_steps: int = MAX_STEPS) -> tuple[np.ndarray, float, RKStats]:
    """Adaptive integration of ``y' = A y`` over ``[0, T]``.

    Returns the final state, a step-size suggestion for a continuation, and step counts.
    """
    y, h_next, acc, rej, status = kernels.dop853_linear(A, y0, T, rtol, atol, h0, max_steps)
    if status == kernels.STATUS_STEP_UNDERFLOW:
        raise StiffCostateError(f"step size underflow after {acc} accepted steps")
    if status == kernels.STATUS_MAX_STEPS:
        raise StiffCostateError(f"exceeded {max_steps} integrator steps")
    if status == kernels.STATUS_NONFINITE:
        raise NumericError("non-finite error estimate in RK8 integration")
    return y, h_next, RKStats(acc, rej)


def integrate_fixed(A, y0, h: float, n_steps: int) -> np.ndarray:
    """``n_steps`` steps of fixed size ``h`` (no error control)."""
    return kernels.dop853_fixed(A, y0, h, n_steps)
