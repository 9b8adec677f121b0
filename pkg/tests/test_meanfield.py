import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lmgdpt.errors import CrossoverRegime, NoBarrier, StepNotConverged
from lmgdpt.meanfield import (
    barrier_height,
    bloch_evolve,
    classify_phase,
    critical_field_analytic,
    critical_field_longitudinal,
    effective_potential,
    initial_energy,
    meanfield_qfi,
    phase_boundary_numeric,
    time_averaged_sz,
)
from lmgdpt.qfi import compute_qfi
from lmgdpt.spin import LmgParams, coherent_state

PI = math.pi


def test_initial_energy_values():
    assert initial_energy(PI, 0.0, LmgParams(1, 1.0, 0.7, 0.0)) == pytest.approx(-0.25, abs=1e-15)
    assert initial_energy(PI / 2, PI / 2, LmgParams(1, 1.0, 0.7, 0.0)) == pytest.approx(0.0, abs=1e-15)
    assert initial_energy(PI, 0.0, LmgParams(1, 1.0, 0.0, 0.1)) == pytest.approx(-0.2, abs=1e-15)


def test_effective_potential_values():
    N = 40
    p = LmgParams(N, 1.0, 0.5, 0.0)
    E = N * initial_energy(PI, 0.0, p)
    assert effective_potential(-N / 2, p, E) == pytest.approx(0.0, abs=1e-10)
    assert effective_potential(0.0, p, E) == pytest.approx(0.0, abs=1e-10)
    p4 = p.replace(Omega=0.4)
    # (N chi / 4)^2 / 2 - Omega^2 N^2 / 8 with Omega = 0.4
    assert effective_potential(0.0, p4, E) == pytest.approx(N**2 / 32 - 0.02 * N**2, rel=1e-12)
    assert effective_potential(0.0, p4, E) > 0


def test_analytic_critical_fields():
    for phi in (0.0, 1.0, 2.5):
        cf = critical_field_analytic(PI, phi)
        assert cf.positive == pytest.approx(0.5, abs=1e-15)
        assert cf.negative == pytest.approx(-0.5, abs=1e-15)
    eq = critical_field_analytic(PI / 2, 0.0)
    assert eq.singular == (True, False)
    assert math.isnan(eq.positive) and eq.negative == pytest.approx(0.0, abs=1e-15)


def test_tilted_boundary_matches_numeric():
    th, ph = 0.9 * PI, 0.2 * PI
    cf = critical_field_analytic(th, ph)
    assert cf.positive != pytest.approx(-cf.negative, abs=1e-3)
    assert phase_boundary_numeric(th, ph, branch=1) == pytest.approx(cf.positive, abs=1e-6)
    assert phase_boundary_numeric(th, ph, branch=-1) == pytest.approx(cf.negative, abs=1e-6)


def test_longitudinal_boundary():
    assert critical_field_longitudinal(0.0) == pytest.approx(0.5, abs=1e-15)
    for w in (0.05, 0.1, -0.1):
        assert critical_field_longitudinal(w) == pytest.approx(phase_boundary_numeric(PI, 0.0, w), abs=1e-6)
    with pytest.raises(CrossoverRegime):
        critical_field_longitudinal(-0.125)
    with pytest.raises(CrossoverRegime):
        critical_field_longitudinal(-0.2)
    with pytest.raises(NoBarrier):
        phase_boundary_numeric(PI, 0.0, -0.2)
    assert critical_field_longitudinal(-0.125 + 1e-9) > 0


def test_rabi_limit():
    Om = 0.8
    traj = bloch_evolve(PI, 0.0, LmgParams(1, 0.0, Om, 0.0), 20.0)
    np.testing.assert_allclose(traj.sz, -np.cos(Om * traj.times), atol=1e-8)


def test_trapped_and_oscillating():
    trapped = bloch_evolve(PI, 0.0, LmgParams(1, 1.0, 0.4, 0.0), 1000.0, stride=10)
    assert np.all(trapped.sz < 0)
    assert abs(time_averaged_sz(trapped)) > 0.3
    assert classify_phase(time_averaged_sz(trapped)) == "ordered"
    free = bloch_evolve(PI, 0.0, LmgParams(1, 1.0, 0.6, 0.0), 1000.0, stride=10)
    assert free.sz.max() > 0 and free.sz.min() < 0
    assert abs(time_averaged_sz(free)) <= 0.05
    assert classify_phase(time_averaged_sz(free)) == "disordered"
    assert barrier_height(PI, 0.0, LmgParams(1, 1.0, 0.4, 0.0)) > 0
    assert barrier_height(PI, 0.0, LmgParams(1, 1.0, 0.6, 0.0)) < 0


def test_zero_field_keeps_polarization():
    traj = bloch_evolve(PI, 0.0, LmgParams(1, 1.0, 0.0, 0.1), 50.0)
    assert time_averaged_sz(traj) == -1.0


def test_trajectory_obeys_potential():
    traj = bloch_evolve(2.5, 0.4, LmgParams(50, 1.0, 0.45, 0.03), 60.0)
    assert traj.eom_residual() < 1e-8
    assert traj.energy_drift < 1e-9


def test_commuting_generator_saturates_bound():
    N, t = 30, 4.0
    assert meanfield_qfi(PI / 2, 0.0, LmgParams(N, 0.0, 0.0, 0.3), t, "z") == pytest.approx(N * t**2, rel=1e-12)


def test_meanfield_below_quantum_at_transition():
    N, t = 200, 100.0
    p = LmgParams(N, 1.0, 0.5, 0.0)
    assert meanfield_qfi(PI, 0.0, p, t, "z") / (N * t**2) <= 1.0
    assert compute_qfi(p, "z", t, coherent_state(N, PI, 0.0)).normalized > 1.0


@settings(max_examples=25, deadline=None)
@given(theta=st.floats(0, PI), phi=st.floats(0, 2 * PI), Om=st.floats(-1, 1), om=st.floats(-0.3, 0.3),
       t=st.floats(0.1, 200), axis=st.sampled_from(["x", "z"]))
def test_meanfield_sql_bound(theta, phi, Om, om, t, axis):
    N = 100
    f = meanfield_qfi(theta, phi, LmgParams(N, 1.0, Om, om), t, axis)
    assert 0 <= f <= N * t**2 + 1e-6


def test_rk4_step_halving_check():
    p = LmgParams(1, 1.0, 0.3, 0.05)
    bloch_evolve(np.pi, 0.0, p, 50.0, halving_tolerance=1e-8)
    with pytest.raises(StepNotConverged):
        bloch_evolve(np.pi, 0.0, p, 50.0, halving_tolerance=1e-16)
