# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: CSR mat-vec, shifted Taylor action and linear DOP853.

Argument conventions match ``_pykernels``. ``A`` must be a CSR matrix with
int32 ``indptr``/``indices`` and complex128 ``data``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, pow, nextafter, INFINITY, isfinite

from . import _tableau as tab

cnp.import_array()

ctypedef double complex cplx

cdef int N_ST = 12
cdef double[:, ::1] TA = np.ascontiguousarray(tab.A[:12, :12])
cdef double[::1] TB = np.ascontiguousarray(tab.B[:12])
cdef double[::1] TE3 = np.ascontiguousarray(tab.E3[:12])
cdef double[::1] TE5 = np.ascontiguousarray(tab.E5[:12])
cdef double SAFETY = tab.SAFETY
cdef double MIN_FACTOR = tab.MIN_FACTOR
cdef double MAX_FACTOR = tab.MAX_FACTOR
cdef double EXPONENT = -1.0 / (tab.ERROR_ESTIMATOR_ORDER + 1)

cdef enum:
    STATUS_OK = 0
    STATUS_STEP_UNDERFLOW = 1
    STATUS_MAX_STEPS = 2
    STATUS_NONFINITE = 3


cdef inline double cabs2(cplx z) nogil:
    return z.real * z.real + z.imag * z.imag


cdef inline double cabs1(cplx z) nogil:
    return sqrt(z.real * z.real + z.imag * z.imag)


cdef inline void _matvec(const int[::1] indptr, const int[::1] indices, const cplx[::1] data,
                         const cplx* x, cplx* y, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef int k
    cdef cplx acc
    for i in range(n):
        acc = 0
        for k in range(indptr[i], indptr[i + 1]):
            acc = acc + data[k] * x[indices[k]]
        y[i] = acc


def csr_matvec(A, x, out=None):
    cdef const int[::1] indptr = A.indptr
    cdef const int[::1] indices = A.indices
    cdef const cplx[::1] data = A.data
    cdef const cplx[::1] xv = np.ascontiguousarray(x, dtype=np.complex128)
    cdef Py_ssize_t n = A.shape[0]
    if out is None:
        out = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] yv = out
    with nogil:
        _matvec(indptr, indices, data, &xv[0], &yv[0], n)
    return out


def taylor_action(A, b, double h, cplx mu, int s, int m, double tol):
    cdef const int[::1] indptr = A.indptr
    cdef const int[::1] indices = A.indices
    cdef const cplx[::1] data = A.data
    cdef Py_ssize_t n = A.shape[0]
    cdef cnp.ndarray F_arr = np.array(b, dtype=np.complex128, copy=True)
    cdef cplx[::1] F = F_arr
    cdef cplx[::1] cur = F_arr.copy()
    cdef cplx[::1] nxt = np.empty(n, dtype=np.complex128)
    cdef cplx eta = 0
    cdef double c1, c2, fn, coeff, a
    cdef int i, j, n_mv = 0
    cdef bint done, converged = True, finite = True
    cdef Py_ssize_t k
    cdef cplx* tmp
    cdef cplx* pc = &cur[0]
    cdef cplx* pn = &nxt[0]
    eta = np.exp(h * mu)
    with nogil:
        for i in range(s):
            c1 = 0.0
            for k in range(n):
                a = cabs1(pc[k])
                if a > c1:
                    c1 = a
            done = m == 0
            for j in range(1, m + 1):
                coeff = h / j
                _matvec(indptr, indices, data, pc, pn, n)
                n_mv += 1
                c2 = 0.0
                fn = 0.0
                for k in range(n):
                    pn[k] = coeff * (pn[k] - mu * pc[k])
                    a = cabs1(pn[k])
                    if a > c2:
                        c2 = a
                    F[k] = F[k] + pn[k]
                    a = cabs1(F[k])
                    if a > fn:
                        fn = a
                tmp = pc
                pc = pn
                pn = tmp
                if c1 + c2 <= tol * fn:
                    done = True
                    break
                c1 = c2
            if not done:
                converged = False
            for k in range(n):
                F[k] = F[k] * eta
                if not (isfinite(F[k].real) and isfinite(F[k].imag)):
                    finite = False
                pc[k] = F[k]
            if not finite:
                break
    return F_arr, n_mv, bool(converged and finite)


cdef inline void _axpy(double a, const cplx* x, cplx* y, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t k
    for k in range(n):
        y[k] = y[k] + a * x[k]


cdef inline void _stages(const int[::1] indptr, const int[::1] indices, const cplx[::1] data,
                         cplx[::1] y, double h, cplx[:, ::1] K, cplx[::1] tmp,
                         cplx[::1] y_new, Py_ssize_t n) noexcept nogil:
    # coefficient-outer loops keep the inner loops contiguous
    cdef int s, l
    cdef Py_ssize_t k
    cdef cplx* pt = &tmp[0]
    cdef cplx* pn = &y_new[0]
    cdef const cplx* py = &y[0]
    for s in range(1, N_ST):
        for k in range(n):
            pt[k] = py[k]
        for l in range(s):
            if TA[s, l] != 0.0:
                _axpy(h * TA[s, l], &K[l, 0], pt, n)
        _matvec(indptr, indices, data, pt, &K[s, 0], n)
    for k in range(n):
        pn[k] = py[k]
    for l in range(N_ST):
        if TB[l] != 0.0:
            _axpy(h * TB[l], &K[l, 0], pn, n)


cdef double _rms_scaled(cplx[::1] v, cplx[::1] y, double rtol, double atol, Py_ssize_t n) noexcept nogil:
    cdef double acc = 0.0, sc
    cdef Py_ssize_t k
    for k in range(n):
        sc = atol + cabs1(y[k]) * rtol
        acc += cabs2(v[k]) / (sc * sc)
    return sqrt(acc / n)


def dop853_linear(A, y0, double T, double rtol, double atol, double h0, long max_steps):
    cdef const int[::1] indptr = A.indptr
    cdef const int[::1] indices = A.indices
    cdef const cplx[::1] data = A.data
    cdef Py_ssize_t n = A.shape[0]
    cdef cnp.ndarray y_arr = np.array(y0, dtype=np.complex128, copy=True)
    cdef cplx[::1] y = y_arr
    cdef cplx[::1] y_new = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] tmp = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] f = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] err5 = np.empty(n, dtype=np.complex128)
    cdef cplx[:, ::1] K = np.empty((N_ST, n), dtype=np.complex128)
    cdef double t = 0.0, t_new, h, h_abs = h0, min_step, err, factor, e5, e3, sc, d0, d1, d2, h1
    cdef double ya, yb
    cdef long n_acc = 0, n_rej = 0
    cdef int status = STATUS_OK, l
    cdef bint rejected, last
    cdef Py_ssize_t k
    if T <= 0:
        return y_arr, h0, 0, 0, STATUS_OK
    with nogil:
        _matvec(indptr, indices, data, &y[0], &f[0], n)
        if h_abs <= 0:
            d0 = _rms_scaled(y, y, rtol, atol, n)
            d1 = _rms_scaled(f, y, rtol, atol, n)
            if d0 < 1e-5 or d1 < 1e-5:
                h_abs = 1e-6
            else:
                h_abs = 0.01 * d0 / d1
            if h_abs > T:
                h_abs = T
            for k in range(n):
                tmp[k] = y[k] + h_abs * f[k]
            _matvec(indptr, indices, data, &tmp[0], &K[1, 0], n)
            for k in range(n):
                tmp[k] = K[1, k] - f[k]
            d2 = _rms_scaled(tmp, y, rtol, atol, n) / h_abs
            if d1 <= 1e-15 and d2 <= 1e-15:
                h1 = h_abs * 1e-3
                if h1 < 1e-6:
                    h1 = 1e-6
            else:
                h1 = pow(0.01 / (d1 if d1 > d2 else d2), -EXPONENT)
            h_abs = min(100 * h_abs, min(h1, T))
        while t < T:
            if n_acc + n_rej >= max_steps:
                status = STATUS_MAX_STEPS
                break
            min_step = 10 * fabs(nextafter(t, INFINITY) - t)
            rejected = False
            while True:
                if h_abs < min_step:
                    status = STATUS_STEP_UNDERFLOW
                    break
                t_new = t + h_abs
                last = t_new >= T
                if last:
                    t_new = T
                h = t_new - t
                for k in range(n):
                    K[0, k] = f[k]
                _stages(indptr, indices, data, y, h, K, tmp, y_new, n)
                for k in range(n):
                    tmp[k] = 0
                    err5[k] = 0
                for l in range(N_ST):
                    if TE5[l] != 0.0:
                        _axpy(TE5[l], &K[l, 0], &err5[0], n)
                    if TE3[l] != 0.0:
                        _axpy(TE3[l], &K[l, 0], &tmp[0], n)
                e5 = 0.0
                e3 = 0.0
                for k in range(n):
                    ya = cabs1(y[k])
                    yb = cabs1(y_new[k])
                    sc = atol + (ya if ya > yb else yb) * rtol
                    e5 += cabs2(err5[k]) / (sc * sc)
                    e3 += cabs2(tmp[k]) / (sc * sc)
                if e5 == 0.0 and e3 == 0.0:
                    err = 0.0
                else:
                    err = h * e5 / sqrt((e5 + 0.01 * e3) * n)
                if not isfinite(err):
                    status = STATUS_NONFINITE
                    break
                if err < 1.0:
                    if err == 0.0:
                        factor = MAX_FACTOR
                    else:
                        factor = min(MAX_FACTOR, SAFETY * pow(err, EXPONENT))
                    if rejected and factor > 1.0:
                        factor = 1.0
                    if not (last and h < h_abs):
                        h_abs = h * factor
                    n_acc += 1
                    break
                h_abs = h * max(MIN_FACTOR, SAFETY * pow(err, EXPONENT))
                rejected = True
                n_rej += 1
            if status != STATUS_OK:
                break
            t = T if last else t_new
            for k in range(n):
                y[k] = y_new[k]
            _matvec(indptr, indices, data, &y[0], &f[0], n)
    return y_arr, h_abs, n_acc, n_rej, status


def dop853_fixed(A, y0, double h, long n_steps):
    cdef const int[::1] indptr = A.indptr
    cdef const int[::1] indices = A.indices
    cdef const cplx[::1] data = A.data
    cdef Py_ssize_t n = A.shape[0]
    cdef cnp.ndarray y_arr = np.array(y0, dtype=np.complex128, copy=True)
    cdef cplx[::1] y = y_arr
    cdef cplx[::1] y_new = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] tmp = np.empty(n, dtype=np.complex128)
    cdef cplx[:, ::1] K = np.empty((N_ST, n), dtype=np.complex128)
    cdef long i
    cdef Py_ssize_t k
    with nogil:
        for i in range(n_steps):
            _matvec(indptr, indices, data, &y[0], &K[0, 0], n)
            _stages(indptr, indices, data, y, h, K, tmp, y_new, n)
            for k in range(n):
                y[k] = y_new[k]
    return y_arr
