import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from rpcontrol.errors import AlignmentError, ConfigError, NumericError, SingularDriftError
from rpcontrol.model import FieldSpec, SpinSystem, fadh_z
from rpcontrol.oracle import dense_yield
from rpcontrol.propagation import (ControlSchedule, Propagator, expm_action, forward_trajectory,
                                   taylor_parameters, tail_evaluate)
from rpcontrol.spin import singlet_projector
from rpcontrol.superop import ChannelSpec, NoiseModel, NoiseSpec, control_channels, drift_liouvillian, singlet_state

SYS = fadh_z()
REG = SYS.register
PS = singlet_projector(REG)
RHO0 = singlet_state(REG)


def random_stable(rng, n, spread=20.0):
    A = spread * (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(n)
    return A - (np.abs(np.linalg.eigvals(A).real).max() + 0.1) * np.eye(n)


def test_taylor_parameters():
    assert taylor_parameters(0.0) == (0, 1)
    m, s = taylor_parameters(100.0)
    assert s >= 1 and m >= 1


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 40), st.floats(0.001, 0.3), st.integers(0, 2**31))
def test_expm_action_matches_dense(n, dt, seed):
    rng = np.random.default_rng(seed)
    A = random_stable(rng, n)
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    want = sla.expm(A * dt) @ v
    got = expm_action(sp.csr_matrix(A), v, dt, tol=1e-14)
    assert np.linalg.norm(got - want) <= 1e-10 * np.linalg.norm(want)


def test_expm_action_edge_cases():
    A = sp.csr_matrix(np.diag([-1.0, -2.0]))
    v = np.array([1.0, 1.0])
    assert np.array_equal(expm_action(A, v, 0.0), v)
    assert np.allclose(expm_action(sp.csr_matrix((2, 2)), v, 3.0), v)
    with pytest.raises(ValueError):
        expm_action(A, v, -1.0)
    with pytest.raises(NumericError):
        expm_action(A, np.array([np.nan, 0.0]), 1.0)
    with pytest.raises(AlignmentError):
        expm_action(A, np.ones(3), 1.0)


def test_schedule_validation():
    with pytest.raises(ConfigError):
        ControlSchedule(np.zeros((3, 1)), 0.0)
    s = ControlSchedule(np.zeros((4, 2)), 0.25)
    assert s.duration == 1.0 and s.t_grid[-1] == 1.0
    chans = control_channels(ChannelSpec("UPC", 1.0), REG)
    with pytest.raises(ConfigError):
        ControlSchedule(-0.1 * np.ones((4, 2)), 0.25).check_bounds(chans)
    with pytest.raises(AlignmentError):
        ControlSchedule(np.zeros((4, 1)), 0.25).check_bounds(chans)


def decoupled_pair():
    system = SpinSystem()
    L0 = drift_liouvillian(system, FieldSpec(0.0), 1.0, 1.0)
    return system.register, L0


@pytest.mark.parametrize("t1", [0.5, 1.0, 3.0])
def test_decoupled_pair_yield(t1):
    reg, L0 = decoupled_pair()
    sched = ControlSchedule(np.zeros((10, 0)), t1 / 10)
    tr = forward_trajectory(L0, [], sched, singlet_state(reg), k_b=1.0, P_S=singlet_projector(reg))
    assert tr.final_yield == pytest.approx(0.5 * (1 - np.exp(-2 * t1)), abs=1e-9)


def test_decoupled_pair_infinite_tail():
    reg, L0 = decoupled_pair()
    y = tail_evaluate(L0, singlet_state(reg), 0.0, np.inf, "infinite", k_b=1.0, P_S=singlet_projector(reg))
    assert y == pytest.approx(0.5, abs=1e-12)


def test_infinite_tail_singular_drift():
    reg, _ = decoupled_pair()
    L0 = drift_liouvillian(SpinSystem(), FieldSpec(0.0), 0.0, 0.0)
    with pytest.raises(SingularDriftError):
        tail_evaluate(L0, singlet_state(reg), 0.0, np.inf, "infinite", k_b=0.0, P_S=singlet_projector(reg))


def controlled_setup(kind="UPC", amp=6.0, n=8, dt=0.05, seed=3):
    L0 = drift_liouvillian(SYS, FieldSpec(0.05, 0.4, 0.1), 1.0, 1.0, NoiseSpec(NoiseModel.URF, 0.5))
    chans = control_channels(ChannelSpec(kind, amp), REG)
    rng = np.random.default_rng(seed)
    lo = np.array([c.lower_bound for c in chans])
    u = np.clip(rng.uniform(-1, 1, size=(n, len(chans))), lo, 1.0)
    return L0, chans, ControlSchedule(u, dt)


@pytest.mark.parametrize("kind", ["coherent-x", "UPC", "UIC"])
def test_forward_matches_dense_oracle(kind):
    L0, chans, sched = controlled_setup(kind, 20.0 if kind == "coherent-x" else 6.0)
    tr = forward_trajectory(L0, chans, sched, RHO0, k_b=1.0, P_S=PS, tol=1e-14)
    want = dense_yield(L0, chans, sched, RHO0, k_b=1.0, P_S=PS)
    assert tr.final_yield == pytest.approx(want, abs=1e-12)


def test_streaming_checkpoints_reproduce_dense_storage():
    L0, chans, sched = controlled_setup(n=10)
    full = forward_trajectory(L0, chans, sched, RHO0, k_b=1.0, P_S=PS)
    thin = forward_trajectory(L0, chans, sched, RHO0, k_b=1.0, P_S=PS, checkpoint_every=4)
    assert set(thin._stored) == {0, 4, 8, 10}
    assert np.abs(full.checkpoints - thin.checkpoints).max() < 1e-14
    assert np.array_equal(full.yield_so_far, thin.yield_so_far)
    with pytest.raises(ConfigError):
        forward_trajectory(L0, chans, sched, RHO0, k_b=1.0, P_S=PS, checkpoint_every=0)


def test_forward_rejects_wrong_state_length():
    L0, chans, sched = controlled_setup()
    with pytest.raises(AlignmentError):
        forward_trajectory(L0, chans, sched, RHO0[:-1], k_b=1.0, P_S=PS)


def test_finite_tail_matches_dense():
    L0, chans, sched = controlled_setup()
    tr = forward_trajectory(L0, chans, sched, RHO0, k_b=1.0, P_S=PS, tol=1e-14)
    tail = tail_evaluate(L0, tr.final_state, sched.duration, 2.0, k_b=1.0, P_S=PS, tol=1e-14)
    want = dense_yield(L0, chans, sched, RHO0, k_b=1.0, P_S=PS, t1=2.0)
    assert tr.final_yield + tail == pytest.approx(want, abs=1e-12)


def test_tail_edge_cases():
    L0, _, _ = controlled_setup()
    assert tail_evaluate(L0, RHO0, 1.0, 1.0, k_b=1.0, P_S=PS) == 0.0
    assert tail_evaluate(L0, np.zeros_like(RHO0), 0.0, 1.0, k_b=1.0, P_S=PS) == 0.0
    with pytest.raises(ConfigError):
        tail_evaluate(L0, RHO0, 1.0, 0.5, k_b=1.0, P_S=PS)
    with pytest.raises(ConfigError):
        tail_evaluate(L0, RHO0, 0.0, 1.0, "sideways", k_b=1.0, P_S=PS)


def test_long_finite_tail_approaches_infinite():
    L0, _, _ = controlled_setup()
    fin = tail_evaluate(L0, RHO0, 0.0, 30.0, k_b=1.0, P_S=PS, tol=1e-12)
    inf = tail_evaluate(L0, RHO0, 0.0, np.inf, "infinite", k_b=1.0, P_S=PS)
    assert fin == pytest.approx(inf, abs=1e-10)


def test_propagator_advance_splits_steps():
    L0, chans, _ = controlled_setup()
    prop = Propagator(L0, chans, 1.0, PS, tol=1e-14)
    w = np.append(RHO0, 0.0)
    a = prop.advance(w, [0.3, 0.7], 0.3, 0.1)
    b = prop.step(w, [0.3, 0.7], 0.3)
    assert np.abs(a - b).max() < 1e-13
