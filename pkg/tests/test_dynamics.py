import math

import numpy as np
import pytest
from scipy.linalg import expm

from spincat.dynamics import (
    PhononEnvironment,
    PopulationState,
    SweepSchedule,
    boltzmann,
    build_rate_matrix,
    equilibrium_state,
    evolve,
    evolve_frozen,
    hysteresis_loop,
    magnetization,
    phonon_factor,
    relaxation_scan,
    relaxation_time,
    stationary_distribution,
    transition_rate,
)
from spincat.dynamics import _LabelledGenerator
from spincat.errors import DegenerateKernelError, InvalidEnvironmentError
from spincat.spinops import SpinModel, assign_labels, eigensystem

FE8 = SpinModel(10, D=-0.295, E=0.056, B40=1.15e-6, B42=-1.15e-6, B44=-2.18e-5, B=(0.01, 0, 0))
FE8_BATH = PhononEnvironment(C=3.13e3, D1=0.26, D2=0.26, T=0.04, gamma_t=0.002)
SMALL = SpinModel(2, D=-0.5, E=0.05, B=(0.05, 0, 0.1))
SMALL_BATH = PhononEnvironment(C=10.0, D1=0.3, D2=0.2, T=0.3)


def test_phonon_factor_limits():
    T = 0.1
    assert phonon_factor(0.0, T) == 0.0
    x = 1e-9
    assert phonon_factor(x, T) == pytest.approx(T * x * x, rel=1e-6)
    assert phonon_factor(1e3, 1e-3) == 0.0
    assert phonon_factor(-1e3, 1e-3) == pytest.approx(1e9)
    with pytest.raises(InvalidEnvironmentError):
        phonon_factor(1.0, 0.0)


def test_phonon_factor_balance():
    x = np.linspace(0.01, 2.0, 20)
    T = 0.3
    assert np.allclose(phonon_factor(-x, T) - phonon_factor(x, T), x**3)
    assert np.allclose(phonon_factor(x, T) / phonon_factor(-x, T), np.exp(-x / T))


@pytest.mark.parametrize("kwargs", [dict(T=0), dict(T=-1), dict(C=-1), dict(gamma_t=-0.1), dict(D1=math.nan)])
def test_environment_validation(kwargs):
    base = dict(C=1.0, D1=0.1, D2=0.1, T=0.1)
    base.update(kwargs)
    with pytest.raises(InvalidEnvironmentError):
        PhononEnvironment(**base)


def test_rate_matrix_structure():
    rm = build_rate_matrix(eigensystem(SMALL), SMALL_BATH)
    assert np.allclose(rm.G.sum(axis=1), 0.0, atol=1e-12)
    off = rm.G - np.diag(np.diag(rm.G))
    assert np.all(off >= 0)
    eigs = rm.eigenvalues()
    assert abs(eigs[0]) < 1e-12 * np.abs(rm.G).max()
    assert np.all(eigs[1:].real < 0)


def test_transition_rate_matches_matrix_entry():
    eig = eigensystem(SMALL)
    rm = build_rate_matrix(eig, SMALL_BATH)
    assert transition_rate(eig, 3, 1, SMALL_BATH) == pytest.approx(rm.gamma[3, 1])


def test_detailed_balance_without_tunnelling():
    eig = eigensystem(SMALL)
    rm = build_rate_matrix(eig, SMALL_BATH)
    p = boltzmann(eig.energies, SMALL_BATH.T)
    flux = p[:, None] * rm.gamma
    assert np.allclose(flux, flux.T, rtol=1e-10, atol=1e-300)


def test_stationary_vector_is_boltzmann():
    eig = eigensystem(SMALL)
    rm = build_rate_matrix(eig, SMALL_BATH)
    assert np.allclose(rm.stationary(), boltzmann(eig.energies, SMALL_BATH.T), atol=1e-14)


def test_reducible_chain_is_rejected():
    gamma = np.array([[0, 1.0, 0], [1.0, 0, 0], [0, 0, 0]])
    with pytest.raises(DegenerateKernelError):
        stationary_distribution(gamma)


def test_two_level_relaxation_time():
    a, b = 3.0, 0.5
    G = np.array([[-a, a], [b, -b]])
    assert relaxation_time(G) == pytest.approx(1 / (a + b))
    gamma = np.array([[0, a], [b, 0]])
    assert np.allclose(stationary_distribution(gamma), [b / (a + b), a / (a + b)])


def test_relaxation_time_survives_ten_decades_of_rates():
    # slow exchange between two fast clusters
    fast, slow = 1e9, 1e-2
    gamma = np.array([[0, fast, 0, 0], [fast, 0, slow, 0], [0, slow, 0, fast], [0, 0, fast, 0]])
    G = gamma - np.diag(gamma.sum(axis=1))
    assert relaxation_time(G) == pytest.approx(1 / slow, rel=1e-4)


def test_tunnelling_rate_added_between_labels():
    eig = eigensystem(SpinModel(2, D=-0.5, B=(0, 0, 0.3)))
    plain = build_rate_matrix(eig, SMALL_BATH)
    extra = build_rate_matrix(eig, SMALL_BATH.replace(gamma_t=0.7))
    labels = assign_labels(eig)
    i = int(np.nonzero(labels.m == -2)[0][0])
    j = int(np.nonzero(labels.m == 2)[0][0])
    assert extra.gamma[i, j] - plain.gamma[i, j] == pytest.approx(0.7)
    assert extra.gamma[j, i] - plain.gamma[j, i] == pytest.approx(0.7)


def test_frozen_evolution_matches_exponential():
    G, _, _ = _LabelledGenerator(SMALL, SMALL_BATH).at(SMALL.B)
    tau = relaxation_time(G)
    p0 = np.zeros(len(G))
    p0[0] = 1
    times = np.array([0.1, 1.0, 5.0]) * tau
    p = evolve_frozen(p0, SMALL, SMALL_BATH, times)
    for t, row in zip(times, p):
        assert np.allclose(row, p0 @ expm(G * t), atol=1e-9)
        assert row.sum() == pytest.approx(1.0, abs=1e-12)


def test_schedule_geometry():
    s = SweepSchedule(0.1, -1.0, 2.0, direction=(0, 0, 2), offset=(0.01, 0, 0))
    assert s.segments() == [(-1.0, 2.0), (2.0, -1.0)]
    assert s.duration == pytest.approx(60.0)
    assert s.field(1.0) == pytest.approx((0.01, 0.0, 1.0))
    assert SweepSchedule.tilted(90) == pytest.approx((1.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        SweepSchedule(0.0, -1, 1)
    with pytest.raises(ValueError):
        SweepSchedule(1.0, 1, -1)


@pytest.mark.parametrize("method", ["RK45", "Radau", "magnus"])
def test_sweep_conserves_probability(method):
    sch = SweepSchedule(0.5, -0.5, 0.5, pattern="up")
    p0 = equilibrium_state(SMALL, SMALL_BATH, sch.field(sch.b_start))
    out = evolve(PopulationState(0.0, -0.5, p0), sch, SMALL, SMALL_BATH, n_out=21, method=method, max_field_step=1e-3)
    assert len(out) == 21
    for s in out:
        assert s.p.sum() == pytest.approx(1.0, abs=1e-9)
        assert s.p.min() >= 0
    assert out[-1].t == pytest.approx(2.0)


def test_exponential_steps_converge_at_second_order():
    # the window holds no label swap, where label-order populations jump
    sch = SweepSchedule(0.5, -0.5, -0.3, pattern="up")
    p0 = equilibrium_state(SMALL, SMALL_BATH, sch.field(sch.b_start))
    start = PopulationState(0.0, -0.5, p0)
    ref = evolve(start, sch, SMALL, SMALL_BATH, n_out=3, method="RK45", rtol=1e-11, atol=1e-13)[-1].p
    err = [
        np.max(np.abs(evolve(start, sch, SMALL, SMALL_BATH, n_out=3, method="magnus", max_field_step=h)[-1].p - ref))
        for h in (4e-4, 2e-4)
    ]
    assert err[1] < 1e-6
    assert err[0] / err[1] == pytest.approx(4.0, rel=0.1)


def test_slow_sweep_follows_equilibrium():
    bath = SMALL_BATH.replace(C=1e4)  # tau ~ 2 ms
    sch = SweepSchedule(1e-4, -0.3, 0.3, pattern="up")
    # an even number of outputs skips b = 0, where the +-2 doublet ties
    loop = hysteresis_loop(SMALL, bath, sch, n_out=6, method="Radau", max_field_step=1e-3)
    gen = _LabelledGenerator(SMALL, bath)
    for s, m in zip(loop.states, loop.m):
        eq = equilibrium_state(SMALL, bath, s.field)
        assert np.allclose(s.p, eq, atol=1e-6)
        _, eig, perm = gen.at(s.field)
        assert m == pytest.approx(magnetization(eq, eig, perm)[1], abs=1e-6)


def test_invalid_initial_state():
    sch = SweepSchedule(0.5, -0.5, 0.5)
    with pytest.raises(ValueError):
        evolve(PopulationState(0.0, 0.0, np.full(SMALL.dim, 0.5)), sch, SMALL, SMALL_BATH)


def test_relaxation_scan_on_fe8_resonance():
    fields = [(0.01, 0, 0.0), (0.01, 0, 0.005)]
    tau, rate = relaxation_scan(FE8, FE8_BATH, fields)
    assert np.allclose(tau * rate, 1.0)
    # zero field is a tunnelling resonance
    assert tau[0] < tau[1]


def test_loop_leg_slices():
    sch = SweepSchedule(1.0, -0.2, 0.2)
    loop = hysteresis_loop(SMALL, SMALL_BATH, sch, n_out=5)
    up, down = loop.leg_slice(0), loop.leg_slice(1)
    assert loop.b[up][0] == -0.2 and loop.b[down][-1] == -0.2
    assert np.all(np.diff(loop.t) > 0)
