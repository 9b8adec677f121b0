import numpy as np
import pytest

from lmgdpt.errors import NoPeak
from lmgdpt.qfi import (
    compute_qfi,
    find_critical_field,
    first_transient_maximum,
    loschmidt_echo,
    parabolic_peak,
    qfi_exact,
    qfi_exact_trace,
    qfi_finite_difference,
    qfi_secular,
    qfi_short_time,
    scaling_fit,
)
from lmgdpt.spectrum import diagonalize
from lmgdpt.spin import DickeState, LmgParams, PerturbationAxis, coherent_state, spin_z, variance

DPT = LmgParams(100, 1.0, 0.5, 0.0)


def test_loschmidt_trivial_limits():
    psi = coherent_state(100, np.pi, 0.0)
    assert loschmidt_echo(DPT, "z", 0.0, 10.0, psi) == 1.0
    assert loschmidt_echo(DPT, "z", 0.3, 0.0, psi) == pytest.approx(1.0, abs=1e-15)


def test_loschmidt_matches_eigenbasis_overlap():
    psi = coherent_state(100, np.pi, 0.0)
    t, d = 10.0, 1e-3
    a = diagonalize(DPT).evolve(psi, t).amplitudes
    b = diagonalize(DPT.replace(omega=d)).evolve(psi, t).amplitudes
    val = loschmidt_echo(DPT, "z", d, t, psi)
    assert val < 1
    assert val == pytest.approx(abs(np.vdot(b, a)), abs=1e-9)


def test_commuting_generator_limit():
    N, t = 40, 3.0
    p = LmgParams(N, 0.0, 0.0, 0.2)
    psi = coherent_state(N, np.pi / 2, 0.0)
    val = qfi_exact(diagonalize(p), "z", t, psi).value
    assert val == pytest.approx(4 * t**2 * variance(spin_z(N), psi), rel=1e-10)
    assert val == pytest.approx(N * t**2, rel=1e-10)


def test_eigenstate_has_zero_qfi():
    # a non-degenerate level above the critical energy
    d = diagonalize(DPT)
    eig = DickeState(100, d.eigenvectors[:, 90])
    for ax in "xz":
        early = qfi_exact(d, ax, 1e2, eig).normalized
        late = qfi_exact(d, ax, 1e4, eig).normalized
        assert late < 1e-5 and late < 1e-2 * early
        assert qfi_secular(d, ax, eig) < 1e-12


@pytest.mark.parametrize("N", [100, 1000])
def test_short_time_laws(N):
    p = LmgParams(N, 1.0, 0.5, 0.0)
    psi = coherent_state(N, np.pi, 0.0)
    d = diagonalize(p)
    t = 0.05
    assert qfi_exact(d, "x", t, psi).value / (N * t**2) == pytest.approx(1.0, abs=0.02)
    assert qfi_exact(d, "z", t, psi).value / (0.25 * p.Omega**2 * N * t**4) == pytest.approx(1.0, abs=0.02)
    assert qfi_short_time(p, "x", t, psi).normalized == pytest.approx(1.0, abs=0.02)


def test_finite_difference_agrees_with_exact():
    N = 200
    p = LmgParams(N, 1.0, 0.5, 1e-4)
    psi = coherent_state(N, np.pi, 0.0)
    d = diagonalize(p)
    for ax in "xz":
        for t in (10.0, 100.0):
            ex = qfi_exact(d, ax, t, psi).value
            fd = qfi_finite_difference(p, ax, t, psi).value
            assert fd == pytest.approx(ex, rel=0.01)


def test_trace_matches_single_time():
    d = diagonalize(DPT)
    psi = coherent_state(100, np.pi, 0.0)
    times = [0.0, 1.0, 30.0]
    tr = qfi_exact_trace(d, "x", times, psi)
    assert tr[0] == 0.0
    for t, v in zip(times[1:], tr[1:]):
        assert v == pytest.approx(qfi_exact(d, "x", t, psi).value, rel=1e-12)


def test_secular_matches_long_time():
    N = 400
    p = LmgParams(N, 1.0, 0.5, 1e-4)
    psi = coherent_state(N, np.pi, 0.0)
    d = diagonalize(p)
    sec = compute_qfi(p, "x", 1000.0, psi, "secular", decomp=d)
    ex = compute_qfi(p, "x", 1000.0, psi, "exact", decomp=d)
    assert sec.value == pytest.approx(ex.value, rel=0.03)


def test_secular_vanishes_for_strong_field():
    N = 100
    p = LmgParams(N, 1.0, 20.0, 0.0)
    psi = coherent_state(N, np.pi, 0.0)
    assert qfi_secular(diagonalize(p), "z", psi) < 1e-3 * N


def test_parabolic_peak():
    x = np.linspace(0, 1, 21)
    loc, val = parabolic_peak(x, 1 - (x - 0.3) ** 2)
    assert loc == pytest.approx(0.3, abs=1e-12)
    assert val == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(NoPeak):
        parabolic_peak(x, x)


def test_scaling_fit_exact():
    Ns = np.array([100, 200, 400, 800])
    fit = scaling_fit(Ns, 2 * Ns**1.5)
    assert fit.a == pytest.approx(2, abs=1e-10)
    assert fit.b == pytest.approx(1.5, abs=1e-10)


def test_critical_field_near_half():
    N = 400
    psi = coherent_state(N, np.pi, 0.0)
    grid = np.linspace(0.4, 0.65, 26)
    cf = find_critical_field(LmgParams(N, 1.0, 0.5, 0.0), "x", 1000.0, psi, grid, refine=7)
    assert 0.5 < cf.location < 0.56


def test_tilted_state_breaks_field_symmetry():
    N = 200
    psi = coherent_state(N, 0.9 * np.pi, 0.2 * np.pi)
    base = LmgParams(N, 1.0, 0.5, 0.0)
    pos = find_critical_field(base, "x", 1000.0, psi, np.linspace(0.2, 0.8, 31))
    neg = find_critical_field(base, "x", 1000.0, psi, np.linspace(-0.8, -0.2, 31))
    assert pos.location > 0 > neg.location
    assert abs(pos.location + neg.location) > 0.02


def test_method_parse_errors():
    with pytest.raises(ValueError):
        compute_qfi(DPT, "x", 1.0, coherent_state(100, np.pi, 0.0), "bogus")
    assert PerturbationAxis.parse("z") is PerturbationAxis.LONGITUDINAL


def test_first_transient_maximum_picks_earliest_peak():
    t = np.linspace(0, 10, 201)
    y = np.exp(-((t - 2) ** 2)) + 2 * np.exp(-((t - 7) ** 2))
    ts, v = first_transient_maximum(t, y)
    assert ts == pytest.approx(2.0, abs=1e-3)
    assert v == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(NoPeak):
        first_transient_maximum(t, t)
