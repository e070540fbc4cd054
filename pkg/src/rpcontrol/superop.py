"""Liouville-space superoperators.

Density operators are vectorised by column stacking, so that
``vec(A X B) = (B^T kron A) vec(X)`` and the Frobenius pairing
``<vec(A), vec(X)> = Tr(A^dagger X)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, InvalidRateError, ShapeError
from .model import FieldSpec, SpinSystem, build_hamiltonian
from .spin import SpinRegister, canonical, electron_spin, identity, kron, singlet_projector


def vectorize(rho) -> np.ndarray:
    rho = np.asarray(rho.toarray() if sp.issparse(rho) else rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {rho.shape}")
    return np.asarray(rho, dtype=np.complex128).reshape(-1, order="F")


def unvectorize(vec) -> np.ndarray:
    vec = np.asarray(vec)
    d = int(round(np.sqrt(vec.size)))
    if d * d != vec.size:
        raise ShapeError(f"vector length {vec.size} is not a perfect square")
    return vec.reshape((d, d), order="F")


def _dense_or_sparse(op) -> sp.csr_matrix:
    return sp.csr_matrix(op, dtype=np.complex128)


def commutator_superop(H) -> sp.csr_matrix:
    """Superoperator for ``-i [H, .]``."""
    H = _dense_or_sparse(H)
    eye = identity(H.shape[0])
    return canonical(-1j * (kron(eye, H) - kron(H.T, eye)))


def haberkorn_superop(k_b: float, k_f: float, P_S) -> sp.csr_matrix:
    """Superoperator for ``-(k_b/2){P_S, .} - k_f .``."""
    if k_b < 0 or k_f < 0:
        raise InvalidRateError(f"reaction rates must be non-negative, got k_b={k_b}, k_f={k_f}")
    P = _dense_or_sparse(P_S)
    eye = identity(P.shape[0])
    out = -0.5 * k_b * (kron(eye, P) + kron(P.T, eye)) - k_f * identity(P.shape[0] ** 2)
    return canonical(out)


def dissipator_superop(A) -> sp.csr_matrix:
    """Lindblad dissipator ``D[A] rho = A rho A^dag - 1/2 {A^dag A, rho}``."""
    A = _dense_or_sparse(A)
    if A.shape[0] != A.shape[1]:
        raise ShapeError("collapse operator must be square")
    eye = identity(A.shape[0])
    AdA = (A.conj().T @ A).tocsr()
    return canonical(kron(A.conj(), A) - 0.5 * kron(eye, AdA) - 0.5 * kron(AdA.T, eye))


class NoiseModel(str, Enum):
    NONE = "none"
    STD = "STD"
    URF = "URF"
    CRF = "CRF"


@dataclass(frozen=True)
class NoiseSpec:
    model: NoiseModel = NoiseModel.NONE
    rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "model", NoiseModel(self.model))
        if not self.rate >= 0:
            raise InvalidRateError(f"noise rate must be non-negative, got {self.rate}")


def _sum(ops, dim):
    out = sp.csr_matrix((dim, dim), dtype=np.complex128)
    for op in ops:
        out = out + op
    return canonical(out)


def relaxation_superop(spec: NoiseSpec, register: SpinRegister) -> sp.csr_matrix:
    D = register.dim ** 2
    if spec.model is NoiseModel.NONE or spec.rate == 0.0:
        return sp.csr_matrix((D, D), dtype=np.complex128)
    if spec.model is NoiseModel.STD:
        gen = dissipator_superop(singlet_projector(register))
    else:
        s1 = electron_spin(register, 1)
        s2 = electron_spin(register, 2)
        if spec.model is NoiseModel.URF:
            gen = _sum((dissipator_superop(op) for op in (*s1, *s2)), D)
        else:
            gen = _sum((dissipator_superop(a + b) for a, b in zip(s1, s2)), D)
    return canonical(spec.rate * gen)


@dataclass(frozen=True, eq=False)
class ControlChannel:
    """A control term ``u * scale * generator`` with ``u`` bounded to [lower, upper]."""

    kind: str
    generator: sp.csr_matrix
    lower_bound: float
    upper_bound: float
    scale: float
    label: str = ""

    def __post_init__(self):
        if self.kind == "coherent" and (self.lower_bound, self.upper_bound) != (-1.0, 1.0):
            raise ConfigError("coherent channels are bounded to [-1, 1]")
        if self.kind == "incoherent" and (self.lower_bound, self.upper_bound) != (0.0, 1.0):
            raise ConfigError("incoherent channels are bounded to [0, 1]")
        if self.kind not in ("coherent", "incoherent"):
            raise ConfigError(f"unknown channel kind {self.kind!r}")

    @property
    def effective(self) -> sp.csr_matrix:
        """Generator at full amplitude, ``scale * generator``."""
        return canonical(self.scale * self.generator)


CONTROL_KINDS = ("coherent-x", "CPC", "UPC", "UIC")


@dataclass(frozen=True)
class ChannelSpec:
    """Which control set to build; ``amplitude`` is omega_1 (rad/us) or gamma_max (1/us)."""

    kind: str
    amplitude: float


def control_channels(spec: ChannelSpec, register: SpinRegister) -> list[ControlChannel]:
    if spec.kind not in CONTROL_KINDS:
        raise ConfigError(f"unknown control model {spec.kind!r}; expected one of {CONTROL_KINDS}")
    s1 = electron_spin(register, 1)
    s2 = electron_spin(register, 2)
    D = dissipator_superop
    if spec.kind == "coherent-x":
        return [ControlChannel("coherent", commutator_superop(s1.Sx + s2.Sx), -1.0, 1.0,
                               spec.amplitude, "x-drive")]
    if spec.amplitude < 0:
        raise InvalidRateError("gamma_max must be non-negative")
    dim = register.dim ** 2

    def chan(ops, label):
        return ControlChannel("incoherent", _sum((D(o) for o in ops), dim), 0.0, 1.0,
                              spec.amplitude, label)

    if spec.kind == "CPC":
        return [chan([s1.Sx + s2.Sx, s1.Sy + s2.Sy], "equatorial"),
                chan([s1.Sz + s2.Sz], "axial")]
    if spec.kind == "UPC":
        return [chan([s1.Sx, s2.Sx, s1.Sy, s2.Sy], "equatorial"),
                chan([s1.Sz, s2.Sz], "axial")]
    return [chan([s1.Sx, s1.Sy], "equatorial-1"),
            chan([s2.Sx, s2.Sy], "equatorial-2"),
            chan([s1.Sz], "axial-1"),
            chan([s2.Sz], "axial-2")]


@lru_cache(maxsize=32)
def drift_liouvillian(system: SpinSystem, fld: FieldSpec, k_b: float, k_f: float,
                      noise: NoiseSpec = NoiseSpec()) -> sp.csr_matrix:
    """Uncontrolled generator: coherent part + Haberkorn kinetics + background relaxation.

    Cached per (system, field, rates, noise); callers must not mutate the result.
    """
    reg = system.register
    H = build_hamiltonian(system, fld)
    L = commutator_superop(H) + haberkorn_superop(k_b, k_f, singlet_projector(reg))
    L = L + relaxation_superop(noise, reg)
    return canonical(L)


def singlet_state(register: SpinRegister) -> np.ndarray:
    """Vectorised singlet-born initial state ``P_S / Tr P_S``."""
    P = singlet_projector(register)
    return vectorize(P.toarray() / P.diagonal().sum().real)
