import numpy as np
import pytest

from lmgdpt.echo import sensitivity_trace
from lmgdpt.errors import PositivityViolation, StepNotConverged, TraceDrift
from lmgdpt.opensystem import (
    BlockDensityMatrix,
    BlockLayout,
    LindbladStepper,
    brute_force_echo,
    brute_force_master_equation,
    collective_moments,
    dicke_degeneracy,
    lindblad_evolve,
    open_echo_sensitivity,
    open_order_parameter,
)
from lmgdpt.propagator import evolve_grid
from lmgdpt.spin import LmgParams, build_hamiltonian, coherent_state, expectation, spin_x, spin_z


@pytest.mark.parametrize("N", [1, 2, 5, 8, 13])
def test_degeneracies_count_all_states(N):
    layout = BlockLayout(N)
    assert np.sum(layout.degeneracies * layout.dims) == 2**N
    assert dicke_degeneracy(N, N / 2) == 1


def test_zero_dephasing_matches_closed_evolution():
    p = LmgParams(50, 1.0, 0.5, 0.01)
    psi = coherent_state(50, 2.0, 0.3)
    rho = lindblad_evolve(LindbladStepper(p, 0.0), BlockDensityMatrix.from_pure(psi), [10.0])[0]
    ref = evolve_grid(build_hamiltonian(p), psi, [10.0])[0]
    assert rho.expectation("z") == pytest.approx(expectation(spin_z(50), ref), abs=1e-8)
    assert rho.expectation("x") == pytest.approx(expectation(spin_x(50), ref), abs=1e-8)
    assert rho.trace() == pytest.approx(1.0, abs=1e-12)


def test_pure_dephasing_decays_transverse_spin():
    N, g = 20, 0.2
    p = LmgParams(N, 0.0, 0.0, 0.0)
    times = [0.0, 1.0, 3.0]
    rhos = lindblad_evolve(LindbladStepper(p, g), BlockDensityMatrix.from_pure(coherent_state(N, np.pi / 2, 0.0)), times)
    for t, r in zip(times, rhos):
        assert r.expectation("x") == pytest.approx(N / 2 * np.exp(-g * t / 2), rel=1e-9)
        assert r.expectation("z") == pytest.approx(0.0, abs=1e-12)


def test_small_system_against_full_space():
    p = LmgParams(4, 1.0, 0.7, 0.3)
    g, times = 0.1, [1.0, 5.0]
    ref = brute_force_master_equation(4, p, g, 1.1, 0.4, times)
    rhos = lindblad_evolve(LindbladStepper(p, g), BlockDensityMatrix.from_pure(coherent_state(4, 1.1, 0.4)), times)
    for r, m in zip(rhos, ref):
        mine = collective_moments(r)
        for k in m:
            assert mine[k] == pytest.approx(m[k], abs=1e-8)


def test_trace_and_positivity_preserved():
    p = LmgParams(30, 1.0, 0.5, 0.0)
    rhos = lindblad_evolve(LindbladStepper(p, 0.3), BlockDensityMatrix.from_pure(coherent_state(30, np.pi, 0)), [2.0, 8.0])
    for r in rhos:
        assert abs(r.trace() - 1) < 1e-10
        assert r.min_eigenvalue() > -1e-10
        assert r.hermiticity_error() < 1e-10


def test_check_raises_on_bad_matrices():
    rho = BlockDensityMatrix.from_pure(coherent_state(3, 0.4, 0.0))
    with pytest.raises(TraceDrift):
        BlockDensityMatrix(rho.layout, 1.1 * rho.data).check()
    bad = BlockDensityMatrix.from_pure(coherent_state(3, 0.4, 0.0)).data.copy()
    n = rho.layout.dims[0]
    bad[: n * n] = 0
    bad[0], bad[n + 1] = 1.5, -0.5
    with pytest.raises(PositivityViolation):
        BlockDensityMatrix(rho.layout, bad).check()


def test_open_echo_reduces_to_closed_echo():
    p = LmgParams(50, 1.0, 0.5, 0.0)
    psi = coherent_state(50, np.pi, 0.0)
    times = [2.0, 6.0, 10.0]
    closed = sensitivity_trace(p, "z", times, psi, method="eigen")
    opened = open_echo_sensitivity(p, 0.0, "z", times, psi, step=closed[0].step, richardson=True)
    for a, b in zip(closed, opened):
        assert b.inverse_variance == pytest.approx(a.inverse_variance, rel=1e-6)


def test_open_echo_against_full_space():
    p = LmgParams(4, 1.0, 0.7, 0.3)
    g, t, h = 0.2, 2.0, 1e-3
    res = open_echo_sensitivity(p, g, "x", [t], coherent_state(4, 1.1, 0.4), step=h)[0]
    plus = brute_force_echo(4, p, g, "x", h, t, 1.1, 0.4)
    minus = brute_force_echo(4, p, g, "x", -h, t, 1.1, 0.4)
    assert res.slope == pytest.approx((plus["y"] - minus["y"]) / (2 * h), rel=1e-5)


def test_noiseless_backward_arm_against_full_space():
    p = LmgParams(4, 1.0, 0.7, 0.3)
    g, t, h = 0.2, 2.0, 1e-3
    res = open_echo_sensitivity(p, g, "z", [t], coherent_state(4, 1.1, 0.4), step=h, backward_gamma=0.0)[0]
    plus = brute_force_echo(4, p, g, "z", h, t, 1.1, 0.4, backward_gamma=0.0)
    minus = brute_force_echo(4, p, g, "z", -h, t, 1.1, 0.4, backward_gamma=0.0)
    both = open_echo_sensitivity(p, g, "z", [t], coherent_state(4, 1.1, 0.4), step=h)[0]
    assert res.slope == pytest.approx((plus["y"] - minus["y"]) / (2 * h), rel=1e-5)
    assert abs(res.slope - both.slope) > 1e-3 * abs(both.slope)


def test_dephasing_lowers_echo_sensitivity():
    p = LmgParams(30, 1.0, 0.5, 0.0)
    psi = coherent_state(30, np.pi, 0.0)
    times = np.arange(1.0, 12.0, 1.0)
    peaks = [max(r.normalized for r in open_echo_sensitivity(p, g, "z", times, psi)) for g in (0.0, 0.05, 0.3)]
    assert peaks[0] > peaks[1] > peaks[2]


def test_zero_dephasing_order_parameter_matches_closed_average():
    p = LmgParams(50, 1.0, 0.3, 0.0)
    psi = coherent_state(50, np.pi, 0.0)
    T = 100.0
    times = np.linspace(0, T, 401)
    closed = evolve_grid(build_hamiltonian(p), psi, times)
    sz = np.array([expectation(spin_z(50), s) for s in closed]) / 25
    ref = np.trapezoid(sz, times) / T
    assert open_order_parameter(p, 0.0, psi, T, samples=401) == pytest.approx(ref, rel=1e-2)


def test_order_parameter_without_transverse_field():
    p = LmgParams(20, 1.0, 0.0, 0.0)
    assert open_order_parameter(p, 0.1, coherent_state(20, np.pi, 0.0), 10.0, samples=21) == pytest.approx(-1.0, abs=1e-12)


def test_weak_dephasing_keeps_dynamical_phases():
    psi = coherent_state(40, np.pi, 0.0)
    disordered = open_order_parameter(LmgParams(40, 1.0, 0.8, 0.0), 0.01, psi, 50.0)
    ordered = open_order_parameter(LmgParams(40, 1.0, 0.3, 0.0), 0.01, psi, 50.0)
    assert abs(disordered) < 0.05
    assert ordered < -0.5


def test_step_halving_certification():
    p = LmgParams(10, 1.0, 0.5, 0.0)
    rho0 = BlockDensityMatrix.from_pure(coherent_state(10, np.pi, 0))
    lindblad_evolve(LindbladStepper(p, 0.1), rho0, [1.0, 4.0], halving_tolerance=1e-9)
    coarse = LindbladStepper(p, 0.1, order=2, dt=0.05)
    with pytest.raises(StepNotConverged):
        lindblad_evolve(coarse, rho0, [4.0], check=False, halving_tolerance=1e-9)


def test_fourth_order_matches_high_order():
    p = LmgParams(10, 1.0, 0.5, 0.0)
    rho0 = BlockDensityMatrix.from_pure(coherent_state(10, np.pi, 0))
    a = lindblad_evolve(LindbladStepper(p, 0.1, order=4), rho0, [3.0])[0]
    b = lindblad_evolve(LindbladStepper(p, 0.1), rho0, [3.0])[0]
    assert np.linalg.norm(a.data - b.data) < 1e-6
