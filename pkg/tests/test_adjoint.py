import numpy as np
import pytest
import scipy.sparse as sp

from rpcontrol.adjoint import assemble_gradient, costate_backward, tail_costate
from rpcontrol.errors import AlignmentError, ConfigError
from rpcontrol.model import FieldSpec, fadh_z
from rpcontrol.oracle import dense_gradient, dense_yield
from rpcontrol.problem import ControlProblem, Term, contrast_problem, yield_problem
from rpcontrol.propagation import ControlSchedule
from rpcontrol.spin import singlet_projector
from rpcontrol.superop import (ChannelSpec, ControlChannel, NoiseModel, NoiseSpec, control_channels,
                               drift_liouvillian, singlet_state)

SYS = fadh_z()
REG = SYS.register
PS = singlet_projector(REG)
RHO0 = singlet_state(REG)
P_VEC = PS.toarray().reshape(-1, order="F")
FIELD = FieldSpec(0.05, 0.5, 0.2)


def problem(kind="UPC", amp=6.0, n=6, dt=0.05, t1=1.0, **kw):
    return yield_problem(SYS, FIELD, ChannelSpec(kind, amp), k_b=1.0, k_f=1.0,
                         noise=NoiseSpec(NoiseModel.URF, 0.5), n_steps=n, dt=dt, t1=t1, **kw)


def random_schedule(prob, seed=0):
    rng = np.random.default_rng(seed)
    u = np.clip(rng.uniform(-1, 1, (prob.n_steps, prob.n_channels)), prob.lower, prob.upper)
    u = np.where(prob.lower == 0.0, np.maximum(u, 0.05), u)
    return ControlSchedule(u, prob.dt)


def test_terminal_costate_is_exactly_zero():
    prob = problem(t1=None)
    s = random_schedule(prob)
    cs = costate_backward(prob.terms[0].drift, prob.channels, s, -1.0, k_b=1.0, P_S=PS)
    assert not cs.checkpoints[-1].any()
    assert not cs.terminal.any()
    cs = costate_backward(prob.terms[0].drift, prob.channels, s, -1.0, k_b=1.0, P_S=PS, t1=1.0)
    assert not cs.terminal.any()
    assert cs.checkpoints[-1].any()


def test_zero_generator_closed_form():
    d2 = REG.dim ** 2
    L0 = sp.csr_matrix((d2, d2), dtype=complex)
    s = ControlSchedule(np.zeros((5, 0)), 0.2)
    cs = costate_backward(L0, [], s, 1.0, k_b=0.8, P_S=PS, t1=1.5)
    for k, t in enumerate(s.t_grid):
        assert np.abs(cs.checkpoints[k] - 0.8 * (1.5 - t) * P_VEC).max() < 1e-10


def test_costate_is_sensitivity_to_initial_state():
    prob = problem(n=10, dt=0.1, t1=2.0, expm_tol=1e-15)
    s = random_schedule(prob, 4)
    sign = 1.0
    cs = costate_backward(prob.terms[0].drift, prob.channels, s, sign, k_b=1.0, P_S=PS, t1=2.0)
    rng = np.random.default_rng(7)
    a = rng.normal(size=(REG.dim, REG.dim)) + 1j * rng.normal(size=(REG.dim, REG.dim))
    delta = (a + a.conj().T).reshape(-1, order="F")
    h = 1e-4

    def total(rho0):
        return dense_yield(prob.terms[0].drift, prob.channels, s, rho0, k_b=1.0, P_S=PS, t1=2.0)

    fd = (total(RHO0 + h * delta) - total(RHO0 - h * delta)) / (2 * h)
    pairing = np.vdot(cs.checkpoints[0], delta).real
    assert pairing == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("kind,amp", [("coherent-x", 30.0), ("UPC", 6.0), ("CPC", 6.0), ("UIC", 6.0)])
def test_gradient_matches_dense_finite_differences(kind, amp):
    prob = problem(kind, amp, n=5, dt=0.1, t1=1.5, expm_tol=1e-15)
    s = random_schedule(prob, 1)
    g = prob.gradient(s)
    fd = dense_gradient(prob, s)
    assert np.abs(g - fd).max() <= 1e-6 * np.abs(fd).max()


def test_left_and_midpoint_rules_converge_with_step_size():
    errs = {}
    for rule in ("left", "midpoint"):
        prob = problem("UPC", 6.0, n=40, dt=0.0025, t1=None, gradient_rule=rule, expm_tol=1e-14)
        exact = problem("UPC", 6.0, n=40, dt=0.0025, t1=None, expm_tol=1e-14)
        s = ControlSchedule(np.full((40, 2), 0.5), 0.0025)
        g, ref = prob.gradient(s), exact.gradient(s)
        errs[rule] = np.abs(g - ref).max() / np.abs(ref).max()
    assert errs["midpoint"] < errs["left"] < 0.05


def test_zero_costate_gives_zero_gradient():
    prob = problem()
    s = random_schedule(prob)
    tr = prob.trajectory(s)
    cs = costate_backward(prob.terms[0].drift, prob.channels, s, 0.0, k_b=1.0, P_S=PS)
    assert not assemble_gradient(tr, cs, prob.channels, s).grad.any()


def test_zero_generator_channel_gives_zero_column():
    L0 = drift_liouvillian(SYS, FIELD, 1.0, 1.0)
    d2 = REG.dim ** 2
    chans = [control_channels(ChannelSpec("coherent-x", 20.0), REG)[0],
             ControlChannel("coherent", sp.csr_matrix((d2, d2), dtype=complex), -1.0, 1.0, 5.0, "null")]
    prob = ControlProblem([Term(L0)], chans, k_b=1.0, P_S=PS, rho0=RHO0, n_steps=4, dt=0.1, sense=-1.0)
    s = ControlSchedule(np.full((4, 2), 0.3), 0.1)
    g = prob.gradient(s)
    assert not g[:, 1].any()
    assert np.abs(g[:, 0]).max() > 0


def test_contrast_gradient_is_difference_of_orientations():
    kw = dict(k_b=1.0, k_f=1.0, n_steps=6, dt=0.05, t1=1.0)
    fz, fx = FieldSpec(0.05, 0.0), FieldSpec(0.05, np.pi / 2)
    spec = ChannelSpec("UPC", 6.0)
    pc = contrast_problem(SYS, fz, fx, spec, **kw)
    pz = yield_problem(SYS, fz, spec, minimize=False, **kw)
    px = yield_problem(SYS, fx, spec, minimize=False, **kw)
    s = random_schedule(pc, 2)
    assert np.abs(pc.gradient(s) - (pz.gradient(s) - px.gradient(s))).max() < 1e-12


def test_assemble_gradient_alignment_checks():
    prob = problem()
    s = random_schedule(prob)
    tr = prob.trajectory(s)
    other = ControlSchedule(s.amplitudes, 0.07)
    cs = costate_backward(prob.terms[0].drift, prob.channels, other, -1.0, k_b=1.0, P_S=PS)
    with pytest.raises(AlignmentError):
        assemble_gradient(tr, cs, prob.channels, s)
    cs = costate_backward(prob.terms[0].drift, prob.channels, s, -1.0, k_b=1.0, P_S=PS, gradient_rule="left")
    with pytest.raises(ConfigError):
        assemble_gradient(tr, cs, prob.channels, s, rule="integrated")
    with pytest.raises(ConfigError):
        costate_backward(prob.terms[0].drift, prob.channels, s, -1.0, k_b=1.0, P_S=PS, gradient_rule="simpson")


def test_control_hamiltonian_diagnostic_is_finite():
    prob = problem()
    s = random_schedule(prob)
    tr = prob.trajectory(s)
    cs = costate_backward(prob.terms[0].drift, prob.channels, s, -1.0, k_b=1.0, P_S=PS, t1=1.0)
    rep = assemble_gradient(tr, cs, prob.channels, s, L0=prob.terms[0].drift, k_b=1.0, P_S=PS)
    assert np.isfinite(rep.control_hamiltonian_value).all()
    assert rep.norm == pytest.approx(np.linalg.norm(rep.grad))


def test_tail_costate_modes_agree_for_long_horizons():
    L0 = drift_liouvillian(SYS, FIELD, 1.0, 1.0, NoiseSpec(NoiseModel.URF, 0.5))
    fin, _ = tail_costate(L0, sign=1.0, k_b=1.0, P_S=PS, t_c=0.0, t1=30.0)
    inf, _ = tail_costate(L0, sign=1.0, k_b=1.0, P_S=PS, t_c=0.0, t1=np.inf, mode="infinite")
    assert np.abs(fin - inf).max() < 1e-9
    # pairing with the initial state is the whole uncontrolled yield
    assert np.vdot(inf, RHO0).real == pytest.approx(
        dense_yield(L0, [], ControlSchedule(np.zeros((1, 0)), 30.0), RHO0, k_b=1.0, P_S=PS), abs=1e-9)


def test_adjoint_and_forward_tail_routes_agree():
    prob = problem(t1=3.0, expm_tol=1e-14)
    s = random_schedule(prob)
    a = prob.evaluate(s, tail_method="adjoint")
    f = prob.evaluate(s, tail_method="forward")
    assert a.value == pytest.approx(f.value, abs=1e-10)
