"""Sparse spin operators and multi-spin registers.

All operators are ``scipy.sparse.csr_matrix`` objects with complex128 entries,
kept in canonical form (sorted unique indices, tiny entries dropped). Site
ordering follows the register: electron 1, electron 2, then nuclei grouped by
the electron they couple to. Each site uses the ``|s, m>`` basis ordered
``m = s ... -s``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache, reduce
from math import prod
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import EmbedDimensionError, InvalidMultiplicityError, RegisterShapeError

#: entries with magnitude below this are dropped after arithmetic
DROP_TOL = 1e-15

ELECTRON_LABELS = ("electron-1", "electron-2")


def canonical(m) -> sp.csr_matrix:
    """Return ``m`` as a canonical complex CSR matrix."""
    m = sp.csr_matrix(m, dtype=np.complex128)
    m.sum_duplicates()
    if m.nnz:
        small = np.abs(m.data) < DROP_TOL
        if small.any():
            m.data[small] = 0.0
            m.eliminate_zeros()
    m.sort_indices()
    return m


def identity(dim: int) -> sp.csr_matrix:
    return sp.identity(dim, dtype=np.complex128, format="csr")


def kron(a, b) -> sp.csr_matrix:
    """Kronecker product ``a (x) b``; ``a`` is the slower (left) site."""
    return canonical(sp.kron(a, b, format="csr"))


class SpinMatrices(NamedTuple):
    Sx: sp.csr_matrix
    Sy: sp.csr_matrix
    Sz: sp.csr_matrix


@lru_cache(maxsize=None)
def spin_matrices(multiplicity: int) -> SpinMatrices:
    """Angular momentum matrices for spin ``s = (multiplicity - 1) / 2`` (hbar = 1)."""
    if int(multiplicity) != multiplicity or multiplicity < 2:
        raise InvalidMultiplicityError(f"multiplicity must be an integer >= 2, got {multiplicity!r}")
    n = int(multiplicity)
    s = (n - 1) / 2
    m = s - np.arange(n)
    # <m+1|S+|m> sits one row above the diagonal because m decreases with index
    plus = np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1))
    splus = sp.diags(plus, 1, shape=(n, n), dtype=np.complex128)
    sminus = splus.T
    return SpinMatrices(
        canonical(0.5 * (splus + sminus)),
        canonical(-0.5j * (splus - sminus)),
        canonical(sp.diags(m, 0, dtype=np.complex128)),
    )


@dataclass(frozen=True)
class SpinRegister:
    """Ordered collection of spin sites defining a Hilbert space."""

    multiplicities: tuple[int, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "multiplicities", tuple(int(m) for m in self.multiplicities))
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.multiplicities) != len(self.labels):
            raise RegisterShapeError("one label per site required")
        for m in self.multiplicities:
            if m < 2:
                raise InvalidMultiplicityError(f"site multiplicity must be >= 2, got {m}")
        electrons = [lab for lab in self.labels if lab.startswith("electron")]
        if sorted(electrons) != list(ELECTRON_LABELS):
            raise RegisterShapeError(f"exactly two electron sites required, got {electrons}")

    @property
    def dim(self) -> int:
        return prod(self.multiplicities)

    @property
    def n_sites(self) -> int:
        return len(self.multiplicities)

    def electron_site(self, which: int) -> int:
        """Site index of electron 1 or 2."""
        return self.labels.index(f"electron-{which}")


def embed_site(op, site: int, register: SpinRegister) -> sp.csr_matrix:
    """Embed a single-site operator into the full register (identity elsewhere)."""
    mults = register.multiplicities
    if not 0 <= site < len(mults):
        raise EmbedDimensionError(f"site {site} outside register of {len(mults)} sites")
    if op.shape != (mults[site], mults[site]):
        raise EmbedDimensionError(
            f"operator shape {op.shape} does not match site multiplicity {mults[site]}"
        )
    left = prod(mults[:site])
    right = prod(mults[site + 1:])
    out = sp.csr_matrix(op, dtype=np.complex128)
    if right > 1:
        out = sp.kron(out, identity(right), format="csr")
    if left > 1:
        out = sp.kron(identity(left), out, format="csr")
    return canonical(out)


def site_spin(register: SpinRegister, site: int) -> SpinMatrices:
    """Full-register (Sx, Sy, Sz) for one site."""
    ops = spin_matrices(register.multiplicities[site])
    return SpinMatrices(*(embed_site(o, site, register) for o in ops))


def electron_spin(register: SpinRegister, which: int) -> SpinMatrices:
    return site_spin(register, register.electron_site(which))


def _check_electron_pair(register: SpinRegister) -> None:
    for which in (1, 2):
        site = register.electron_site(which)
        if register.multiplicities[site] != 2:
            raise RegisterShapeError("electron sites must be spin-1/2")


def singlet_projector(register: SpinRegister) -> sp.csr_matrix:
    """``P_S = I/4 - S1.S2`` on the electron pair, identity on nuclei."""
    _check_electron_pair(register)
    s1 = electron_spin(register, 1)
    s2 = electron_spin(register, 2)
    dot = reduce(lambda a, b: a + b, (a @ b for a, b in zip(s1, s2)))
    return canonical(0.25 * identity(register.dim) - dot)


def triplet_projector(register: SpinRegister) -> sp.csr_matrix:
    return canonical(identity(register.dim) - singlet_projector(register))
