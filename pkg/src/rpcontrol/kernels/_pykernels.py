"""Pure numpy/scipy implementations of the hot kernels.

Every function mirrors the compiled version in ``_ckernels.pyx`` argument for
argument. ``A`` is always a ``scipy.sparse.csr_matrix`` with complex128 data.
"""

import numpy as np

from . import _tableau as tab

STATUS_OK = 0
STATUS_STEP_UNDERFLOW = 1
STATUS_MAX_STEPS = 2
STATUS_NONFINITE = 3


def csr_matvec(A, x, out=None):
    y = A @ x
    if out is None:
        return y
    out[:] = y
    return out


def _inf_norm(v):
    return np.max(np.abs(v)) if v.size else 0.0


def taylor_action(A, b, h, mu, s, m, tol):
    """Apply ``exp(h*s*A) b`` as ``s`` chunks of an ``m``-term shifted Taylor series.

    Returns ``(F, n_matvec, converged)``; ``converged`` is False when some chunk
    exhausted all ``m`` terms without meeting the truncation test.
    """
    b = np.array(b, dtype=np.complex128, copy=True)
    F = b.copy()
    eta = np.exp(h * mu)
    n_mv = 0
    converged = True
    for _ in range(s):
        c1 = _inf_norm(b)
        done = m == 0
        for j in range(1, m + 1):
            b = (h / j) * (A @ b - mu * b)
            n_mv += 1
            c2 = _inf_norm(b)
            F += b
            if c1 + c2 <= tol * _inf_norm(F):
                done = True
                break
            c1 = c2
        converged &= done
        F *= eta
        if not np.isfinite(F).all():
            return F, n_mv, False
        b = F.copy()
    return F, n_mv, converged


def _rms(v):
    return np.sqrt(np.mean(np.abs(v) ** 2)) if v.size else 0.0


def _initial_step(A, y, f, T, rtol, atol):
    scale = atol + np.abs(y) * rtol
    d0 = _rms(y / scale)
    d1 = _rms(f / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, T)
    f1 = A @ (y + h0 * f)
    d2 = _rms((f1 - f) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / (tab.ERROR_ESTIMATOR_ORDER + 1))
    return min(100 * h0, h1, T)


def _stages(A, y, f, h, K):
    K[0] = f
    for s in range(1, tab.N_STAGES):
        K[s] = A @ (y + h * (tab.A[s, :s] @ K[:s]))
    return y + h * (tab.B @ K[:tab.N_STAGES])


def dop853_linear(A, y, T, rtol, atol, h0, max_steps):
    """Adaptive DOP853 for ``y' = A y`` on ``[0, T]``.

    Returns ``(y_T, h_next, n_accepted, n_rejected, status)``.
    """
    y = np.array(y, dtype=np.complex128, copy=True)
    n = y.size
    K = np.empty((tab.N_STAGES, n), dtype=np.complex128)
    if T <= 0:
        return y, h0, 0, 0, STATUS_OK
    f = A @ y
    h_abs = h0 if h0 > 0 else _initial_step(A, y, f, T, rtol, atol)
    t = 0.0
    n_acc = n_rej = 0
    exponent = -1.0 / (tab.ERROR_ESTIMATOR_ORDER + 1)
    while t < T:
        if n_acc + n_rej >= max_steps:
            return y, h_abs, n_acc, n_rej, STATUS_MAX_STEPS
        min_step = 10 * abs(np.nextafter(t, np.inf) - t)
        rejected = False
        while True:
            if h_abs < min_step:
                return y, h_abs, n_acc, n_rej, STATUS_STEP_UNDERFLOW
            t_new = t + h_abs
            last = t_new >= T
            if last:
                t_new = T
            h = t_new - t
            y_new = _stages(A, y, f, h, K)
            scale = atol + np.maximum(np.abs(y), np.abs(y_new)) * rtol
            err5 = (tab.E5 @ K) / scale
            err3 = (tab.E3 @ K) / scale
            e5 = np.vdot(err5, err5).real
            e3 = np.vdot(err3, err3).real
            if e5 == 0.0 and e3 == 0.0:
                err = 0.0
            else:
                err = h * e5 / np.sqrt((e5 + 0.01 * e3) * n)
            if not np.isfinite(err):
                return y, h_abs, n_acc, n_rej, STATUS_NONFINITE
            if err < 1.0:
                factor = tab.MAX_FACTOR if err == 0.0 else min(tab.MAX_FACTOR, tab.SAFETY * err ** exponent)
                if rejected:
                    factor = min(1.0, factor)
                # a truncated final step must not shrink the carried-over step size
                if not (last and h < h_abs):
                    h_abs = h * factor
                n_acc += 1
                break
            h_abs = h * max(tab.MIN_FACTOR, tab.SAFETY * err ** exponent)
            rejected = True
            n_rej += 1
        t = T if last else t_new
        y = y_new
        f = A @ y
    return y, h_abs, n_acc, n_rej, STATUS_OK


def dop853_fixed(A, y, h, n_steps):
    """``n_steps`` fixed DOP853 steps of size ``h`` for ``y' = A y``."""
    y = np.array(y, dtype=np.complex128, copy=True)
    K = np.empty((tab.N_STAGES, y.size), dtype=np.complex128)
    for _ in range(n_steps):
        y = _stages(A, y, A @ y, h, K)
    return y
