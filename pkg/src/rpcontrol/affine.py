"""Families of sparse matrices ``base + sum_i c_i * G_i`` on one shared pattern.

Controls change only the coefficients ``c_i`` from step to step, so keeping all
members on a common CSR pattern turns generator assembly into a dense
combination of data arrays.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .kernels import kernel_csr


def _pattern(mats, n) -> sp.csr_matrix:
    pat = sp.identity(n, dtype=np.float64, format="csr")
    for m in mats:
        m = sp.csr_matrix(m)
        pat = pat + sp.csr_matrix((np.ones(m.nnz), m.indices, m.indptr), shape=m.shape)
    pat = sp.csr_matrix(pat)
    pat.sum_duplicates()
    pat.sort_indices()
    return pat


def _scatter(m, keys: np.ndarray, ncols: int) -> np.ndarray:
    """Place the entries of ``m`` at their positions within the shared pattern."""
    coo = sp.coo_matrix(m)
    out = np.zeros(keys.size, dtype=np.complex128)
    if coo.nnz:
        mkeys = coo.row.astype(np.int64) * ncols + coo.col
        pos = np.searchsorted(keys, mkeys)
        np.add.at(out, pos, coo.data)
    return out


class AffineOperator:
    """``base + sum_i c_i G_i`` with a reusable CSR buffer.

    ``at(c)`` writes into one internal matrix and returns it; the result is only
    valid until the next call.
    """

    def __init__(self, base, generators=()):
        base = sp.csr_matrix(base, dtype=np.complex128)
        gens = [sp.csr_matrix(g, dtype=np.complex128) for g in generators]
        n, ncols = base.shape
        if n != ncols:
            raise ValueError("operator family must be square")
        for g in gens:
            if g.shape != base.shape:
                raise ValueError("generator shapes must match the base")
        pat = _pattern([base, *gens], n)
        rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(pat.indptr))
        keys = rows * ncols + pat.indices
        self.shape = base.shape
        self.base_data = _scatter(base, keys, ncols)
        self.gen_data = np.array([_scatter(g, keys, ncols) for g in gens]).reshape(len(gens), keys.size)
        self.matrix = kernel_csr(sp.csr_matrix((self.base_data.copy(), pat.indices, pat.indptr), shape=base.shape))
        self.diag_pos = np.searchsorted(keys, np.arange(n, dtype=np.int64) * (ncols + 1))
        self._indices = self.matrix.indices
        self._coeffs = None

    @property
    def n_generators(self) -> int:
        return self.gen_data.shape[0]

    @property
    def nnz(self) -> int:
        return self.base_data.size

    def at(self, coeffs=None) -> sp.csr_matrix:
        data = self.matrix.data
        if coeffs is None or self.n_generators == 0:
            data[:] = self.base_data
        else:
            c = np.asarray(coeffs, dtype=float)
            np.add(self.base_data, c @ self.gen_data, out=data)
        return self.matrix

    def trace(self) -> complex:
        """Trace of the current member (the last ``at`` result)."""
        return complex(self.matrix.data[self.diag_pos].sum())

    def onenorm_shifted(self, mu: complex) -> float:
        """Exact 1-norm of ``current - mu*I``."""
        data = self.matrix.data
        absd = np.abs(data)
        absd[self.diag_pos] = np.abs(data[self.diag_pos] - mu)
        return float(np.bincount(self._indices, absd, minlength=self.shape[1]).max())
