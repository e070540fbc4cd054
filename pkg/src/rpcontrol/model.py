"""Radical-pair spin systems and their static Hamiltonians.

Internal units: angular frequencies in rad/us, time in us, fields in mT.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, InvalidMultiplicityError
from .spin import SpinRegister, canonical, electron_spin, site_spin

#: electron gyromagnetic ratio magnitude, rad us^-1 mT^-1
GAMMA_E = 176.0859
TWO_PI = 2.0 * np.pi


def mhz(value: float) -> float:
    """Convert MHz to rad/us."""
    return TWO_PI * value


def mt(value: float, gamma: float = GAMMA_E) -> float:
    """Convert a coupling quoted in mT to rad/us."""
    return gamma * value


def _as_tensor(t) -> tuple[tuple[float, ...], ...]:
    arr = np.asarray(t, dtype=float)
    if arr.shape != (3, 3):
        raise ConfigError(f"hyperfine tensor must be 3x3, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError("hyperfine tensor entries must be finite")
    return tuple(tuple(float(x) for x in row) for row in arr)


@dataclass(frozen=True)
class HyperfineCoupling:
    """One nucleus coupled to electron 1 or 2; ``tensor`` in rad/us."""

    electron: int
    tensor: tuple
    nucleus_multiplicity: int = 2

    def __post_init__(self):
        if self.electron not in (1, 2):
            raise ConfigError(f"electron must be 1 or 2, got {self.electron}")
        if self.nucleus_multiplicity < 2:
            raise InvalidMultiplicityError("nucleus multiplicity must be >= 2")
        object.__setattr__(self, "tensor", _as_tensor(self.tensor))

    @classmethod
    def isotropic(cls, electron: int, a: float, multiplicity: int = 2) -> "HyperfineCoupling":
        """Isotropic coupling ``a`` (rad/us)."""
        return cls(electron, a * np.eye(3), multiplicity)

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.tensor)


@dataclass(frozen=True)
class FieldSpec:
    """Static field of magnitude ``B0`` (mT) along polar ``theta``, azimuth ``phi``."""

    B0: float
    theta: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if not self.B0 >= 0:
            raise ConfigError(f"B0 must be >= 0, got {self.B0}")
        if not 0.0 <= self.theta <= np.pi:
            raise ConfigError(f"theta must lie in [0, pi], got {self.theta}")

    @property
    def direction(self) -> np.ndarray:
        st = np.sin(self.theta)
        return np.array([st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)])


@dataclass(frozen=True)
class SpinSystem:
    hyperfines: tuple[HyperfineCoupling, ...] = ()
    j_ex: float = 0.0
    gamma_e: float = GAMMA_E
    register: SpinRegister = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "hyperfines", tuple(self.hyperfines))
        if not self.gamma_e > 0:
            raise ConfigError("gamma_e must be positive")
        mults = [2, 2]
        labels = ["electron-1", "electron-2"]
        for e in (1, 2):
            for j, hf in enumerate(h for h in self.hyperfines if h.electron == e):
                mults.append(hf.nucleus_multiplicity)
                labels.append(f"nucleus({e},{j + 1})")
        object.__setattr__(self, "register", SpinRegister(tuple(mults), tuple(labels)))

    @property
    def dim(self) -> int:
        return self.register.dim

    def nucleus_sites(self) -> list[tuple[HyperfineCoupling, int]]:
        """Pairs (coupling, register site), in register order."""
        ordered = [h for e in (1, 2) for h in self.hyperfines if h.electron == e]
        return [(h, 2 + k) for k, h in enumerate(ordered)]


def build_hamiltonian(system: SpinSystem, fld: FieldSpec) -> sp.csr_matrix:
    """Zeeman + hyperfine + exchange Hamiltonian (rad/us)."""
    reg = system.register
    dim = reg.dim
    s1 = electron_spin(reg, 1)
    s2 = electron_spin(reg, 2)
    H = sp.csr_matrix((dim, dim), dtype=np.complex128)

    omega = system.gamma_e * fld.B0 * fld.direction
    for s in (s1, s2):
        for w, op in zip(omega, s):
            if w != 0.0:
                H = H + w * op

    for hf, site in system.nucleus_sites():
        spins = s1 if hf.electron == 1 else s2
        nuc = site_spin(reg, site)
        A = hf.matrix
        for a in range(3):
            for b in range(3):
                if A[a, b] != 0.0:
                    H = H + A[a, b] * (spins[a] @ nuc[b])

    if system.j_ex != 0.0:
        dot = reduce(lambda x, y: x + y, (a @ b for a, b in zip(s1, s2)))
        H = H - 2.0 * system.j_ex * dot
    return canonical(H)


def masuzawa7() -> SpinSystem:
    """Seven-spin pair: electron 1 with 0.2/0.5/1.0 mT nuclei, electron 2 with 0.2/0.3 mT."""
    hfs = [HyperfineCoupling.isotropic(1, mt(a)) for a in (0.2, 0.5, 1.0)]
    hfs += [HyperfineCoupling.isotropic(2, mt(a)) for a in (0.2, 0.3)]
    return SpinSystem(tuple(hfs), j_ex=mhz(1.0))


def fadh_z(j_ex: float = 0.0) -> SpinSystem:
    """Flavin radical with one axial N5 hyperfine (spin-1) and a bare partner radical."""
    tensor = np.diag([mhz(-2.6), mhz(-2.6), mhz(49.2)])
    return SpinSystem((HyperfineCoupling(1, tensor, 3),), j_ex=j_ex)
