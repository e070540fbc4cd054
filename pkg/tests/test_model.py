import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rpcontrol.errors import ConfigError, InvalidMultiplicityError
from rpcontrol.model import (GAMMA_E, FieldSpec, HyperfineCoupling, SpinSystem, build_hamiltonian, fadh_z,
                             masuzawa7, mhz, mt)


def eig(H):
    return np.sort(np.linalg.eigvalsh(H.toarray()))


def test_unit_conversions():
    assert mhz(1.0) == pytest.approx(2 * np.pi)
    assert mt(1.0) == GAMMA_E


def test_zeeman_levels():
    w = GAMMA_E * 0.7
    H = build_hamiltonian(SpinSystem(), FieldSpec(0.7, 0.3, 1.1))
    assert np.allclose(eig(H), [-w, 0, 0, w], atol=1e-10)


def test_exchange_levels():
    j = mhz(3.0)
    H = build_hamiltonian(SpinSystem(j_ex=j), FieldSpec(0.0))
    # -2J S1.S2: triplet at -J/2, singlet at 3J/2
    assert np.allclose(eig(H), np.sort([-j / 2] * 3 + [3 * j / 2]), atol=1e-10)


def test_isotropic_hyperfine_levels():
    a = mt(1.0)
    H = build_hamiltonian(SpinSystem((HyperfineCoupling.isotropic(1, a),)), FieldSpec(0.0))
    assert np.allclose(eig(H), np.sort([-3 * a / 4] * 2 + [a / 4] * 6), atol=1e-9)


def test_builtin_sizes():
    assert masuzawa7().dim == 128
    assert fadh_z().dim == 12
    assert fadh_z().register.multiplicities == (2, 2, 3)


@given(st.floats(0, 2), st.floats(0, np.pi), st.floats(-np.pi, np.pi))
def test_hamiltonian_hermitian(b0, theta, phi):
    H = build_hamiltonian(fadh_z(mhz(1.0)), FieldSpec(b0, theta, phi)).toarray()
    assert np.abs(H - H.conj().T).max() < 1e-10


@given(st.floats(0, np.pi), st.floats(-np.pi, np.pi))
def test_direction_is_unit(theta, phi):
    assert np.linalg.norm(FieldSpec(1.0, theta, phi).direction) == pytest.approx(1.0)


def test_zero_field_spectrum_is_orientation_free():
    a = eig(build_hamiltonian(fadh_z(), FieldSpec(0.0, 0.0)))
    b = eig(build_hamiltonian(fadh_z(), FieldSpec(0.0, np.pi / 2)))
    assert np.allclose(a, b)


def test_anisotropic_spectrum_depends_on_orientation():
    a = eig(build_hamiltonian(fadh_z(), FieldSpec(0.05, 0.0)))
    b = eig(build_hamiltonian(fadh_z(), FieldSpec(0.05, np.pi / 2)))
    assert np.abs(a - b).max() > 1e-3


def test_validation():
    with pytest.raises(ConfigError):
        FieldSpec(-1.0)
    with pytest.raises(ConfigError):
        FieldSpec(1.0, theta=4.0)
    with pytest.raises(ConfigError):
        HyperfineCoupling(3, np.eye(3))
    with pytest.raises(ConfigError):
        HyperfineCoupling(1, np.eye(2))
    with pytest.raises(InvalidMultiplicityError):
        HyperfineCoupling(1, np.eye(3), 1)


def test_register_groups_nuclei_by_electron():
    hfs = (HyperfineCoupling.isotropic(2, 1.0, 3), HyperfineCoupling.isotropic(1, 1.0, 2))
    reg = SpinSystem(hfs).register
    assert reg.multiplicities == (2, 2, 2, 3)
