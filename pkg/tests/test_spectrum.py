import numpy as np
import pytest

from lmgdpt.errors import InsufficientPoints
from lmgdpt.spectrum import (
    diagonalize,
    energy_moments,
    eqpt_profile,
    exponent_stability,
    fit_eqpt_exponent,
    fit_offset_power_law,
    mean_energy_and_fluctuation,
    predicted_qfi_exponent,
)
from lmgdpt.spin import LmgParams, build_hamiltonian, coherent_state, spin_x, spin_z


def test_small_spectra():
    np.testing.assert_allclose(diagonalize(LmgParams(2, 1.0, 0.0, 0.0)).eigenvalues, [-0.5, -0.5, 0.0], atol=1e-14)
    np.testing.assert_allclose(diagonalize(LmgParams(2, 0.0, 1.0, 0.0)).eigenvalues, [-1, 0, 1], atol=1e-14)


def test_reconstruction_and_orthonormality():
    p = LmgParams(500, 1.0, 0.5, 1e-4)
    d = diagonalize(p)
    assert d.reconstruction_residual(build_hamiltonian(p)) <= 1e-9
    assert d.orthonormality_residual() <= 1e-9


def test_diagonal_elements_without_transverse_field():
    N = 6
    d = diagonalize(LmgParams(N, 1.0, 0.0, 1e-4))
    sz = d.diagonal_elements(spin_z(N))
    np.testing.assert_allclose(np.sort(np.abs(sz)), np.sort(np.abs(np.arange(-3, 4))), atol=1e-12)
    np.testing.assert_allclose(d.diagonal_elements(spin_x(N)), 0.0, atol=1e-12)


def test_energy_moments():
    N = 200
    p = LmgParams(N, 1.0, 0.5, 0.0)
    psi = coherent_state(N, np.pi, 0.0)
    d = diagonalize(p)
    mean_d, _ = energy_moments(d, psi)
    mean_h, _ = mean_energy_and_fluctuation(psi, build_hamiltonian(p))
    assert mean_d == pytest.approx(mean_h, abs=1e-9)
    assert mean_h == pytest.approx(-N / 4, abs=1e-12)
    eig = d.eigenvectors[:, 7]
    from lmgdpt.spin import DickeState
    assert mean_energy_and_fluctuation(DickeState(N, eig), build_hamiltonian(p))[1] == pytest.approx(0.0, abs=1e-6)


def test_energy_spread_scales_as_sqrt_n():
    ratios = []
    for N in (100, 400, 1600):
        _, spread = mean_energy_and_fluctuation(coherent_state(N, np.pi, 0.0), build_hamiltonian(LmgParams(N, 1.0, 0.5, 0.0)))
        ratios.append(spread / np.sqrt(N))
    assert max(ratios) / min(ratios) - 1 <= 0.05


def test_exact_model_recovered():
    x = np.linspace(0.01, 0.2, 60)
    y = 0.1 + 0.4 * x**0.5
    A, B, g, rms = fit_offset_power_law(x, y)
    assert (A, B, g) == pytest.approx((0.1, 0.4, 0.5), abs=1e-6)
    A, B, g, _ = fit_offset_power_law(x, 0.4 * x**0.25, pin_offset=True)
    assert (A, B, g) == pytest.approx((0.0, 0.4, 0.25), abs=1e-6)


def test_too_few_points():
    with pytest.raises(InsufficientPoints):
        fit_offset_power_law(np.array([0.1, 0.2]), np.array([1.0, 2.0]))


def test_critical_energy_features():
    N = 1000
    p = LmgParams(N, 1.0, 0.5, 1e-4)
    prof = eqpt_profile(diagonalize(p), coherent_state(N, np.pi, 0.0))
    assert prof.e_cr == -0.25
    # S_z^{nn} splits into two branches only below the critical energy
    below = (prof.energies < -0.27) & (prof.energies > -0.3)
    above = (prof.energies > -0.23) & (prof.energies < -0.2)
    assert np.min(np.abs(prof.sz[below])) > 0.05
    assert np.max(np.abs(prof.sz[above])) < 0.02


def test_exponents_at_n500():
    N = 500
    prof = eqpt_profile(diagonalize(LmgParams(N, 1.0, 0.5, 1e-4)), coherent_state(N, np.pi, 0.0))
    assert fit_eqpt_exponent(prof, "x").gamma == pytest.approx(0.495, abs=0.03)
    assert fit_eqpt_exponent(prof, "z").gamma == pytest.approx(0.25, abs=0.05)
    stab = exponent_stability(prof, "x", (2, 3, 4, 5))
    assert max(stab.values()) - min(stab.values()) < 0.02


def test_predicted_exponents():
    assert predicted_qfi_exponent(0.5) == 1.5
    assert predicted_qfi_exponent(0.25) == 1.75
    assert predicted_qfi_exponent(1.0) == 1.0
