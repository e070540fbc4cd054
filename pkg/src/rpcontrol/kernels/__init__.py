"""Hot numerical kernels with a compiled backend and a pure-Python fallback.

The compiled extension is used when it imports; set ``RPCONTROL_KERNELS=python``
to force the fallback. Both backends expose the same functions.
"""

import os

import numpy as np
import scipy.sparse as sp

from . import _pykernels

STATUS_OK = _pykernels.STATUS_OK
STATUS_STEP_UNDERFLOW = _pykernels.STATUS_STEP_UNDERFLOW
STATUS_MAX_STEPS = _pykernels.STATUS_MAX_STEPS
STATUS_NONFINITE = _pykernels.STATUS_NONFINITE


def _load(name):
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


_requested = os.environ.get("RPCONTROL_KERNELS", "auto").lower()
if _requested == "auto":
    try:
        backend = _load("cython")
        BACKEND = "cython"
    except ImportError:
        backend = _pykernels
        BACKEND = "python"
else:
    backend = _load(_requested)
    BACKEND = _requested


def available_backends():
    names = ["python"]
    try:
        _load("cython")
        names.append("cython")
    except ImportError:
        pass
    return names


def kernel_csr(A) -> sp.csr_matrix:
    """Return ``A`` as CSR with int32 indices and contiguous complex128 data."""
    A = sp.csr_matrix(A, dtype=np.complex128)
    if not A.has_sorted_indices:
        A.sort_indices()
    A.indptr = np.ascontiguousarray(A.indptr, dtype=np.int32)
    A.indices = np.ascontiguousarray(A.indices, dtype=np.int32)
    A.data = np.ascontiguousarray(A.data, dtype=np.complex128)
    return A


def csr_matvec(A, x, out=None):
    return backend.csr_matvec(A, x, out)


def taylor_action(A, b, h, mu, s, m, tol):
    return backend.taylor_action(A, b, h, complex(mu), int(s), int(m), float(tol))


def dop853_linear(A, y, T, rtol, atol, h0=0.0, max_steps=10_000_000):
    return backend.dop853_linear(A, y, float(T), float(rtol), float(atol), float(h0), int(max_steps))


def dop853_fixed(A, y, h, n_steps):
    return backend.dop853_fixed(A, y, float(h), int(n_steps))
