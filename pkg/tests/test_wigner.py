import numpy as np
import pytest
from scipy.special import sph_harm_y
from sympy import Rational
from sympy.physics.quantum.cg import CG

from lmgdpt.opensystem import BlockDensityMatrix, LindbladStepper, lindblad_evolve
from lmgdpt.propagator import evolve_grid
from lmgdpt.spin import DickeState, LmgParams, build_hamiltonian, coherent_state
from lmgdpt.wigner import (
    multipole_diagonals,
    polar_radius,
    wigner_integral,
    wigner_polar_samples,
    wigner_sphere,
)


def _tensor(two_s, k, q):
    """Spherical tensor T_kq from Clebsch-Gordan coefficients, Dicke basis ascending in m."""
    S = Rational(two_s, 2)
    ms = [-S + i for i in range(two_s + 1)]
    T = np.zeros((two_s + 1, two_s + 1))
    for a, m in enumerate(ms):
        for b, mp in enumerate(ms):
            c = CG(S, m, S, -mp, k, q).doit()
            if c != 0:
                T[a, b] = float((-1) ** (S - mp) * c)
    return T


def _multipole_wigner(rho, two_s, theta, phi):
    S = two_s / 2
    W = np.zeros((len(theta), len(phi)), dtype=complex)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    for k in range(two_s + 1):
        for q in range(-k, k + 1):
            rkq = np.trace(rho @ _tensor(two_s, k, q).conj().T)
            W += rkq * sph_harm_y(k, q, tt, pp)
    return np.sqrt((2 * S + 1) / (4 * np.pi)) * W


@pytest.mark.parametrize("two_s", [1, 2, 3, 4, 5, 6])
def test_matches_multipole_expansion(two_s):
    rng = np.random.default_rng(two_s)
    v = rng.normal(size=two_s + 1) + 1j * rng.normal(size=two_s + 1)
    v /= np.linalg.norm(v)
    theta = np.linspace(0.1, 3.0, 7)
    phi = np.linspace(0.0, 6.0, 9)
    ref = _multipole_wigner(np.outer(v, v.conj()), two_s, theta, phi)
    assert np.max(np.abs(ref.imag)) < 1e-12
    mine = wigner_sphere(DickeState(two_s, v), theta, phi)
    assert np.max(np.abs(mine - ref.real)) < 1e-12


def test_multipole_diagonals_are_orthonormal():
    D = multipole_diagonals(9)
    assert np.allclose(D @ D.T, np.eye(10), atol=1e-12)
    m = np.arange(10) - 4.5
    assert np.allclose(D[1], m / np.linalg.norm(m))


def test_spin_half_closed_form():
    th0, ph0 = 1.0, 0.7
    psi = coherent_state(1, th0, ph0)
    n0 = np.array([np.sin(th0) * np.cos(ph0), np.sin(th0) * np.sin(ph0), np.cos(th0)])
    theta, phi = np.linspace(0, np.pi, 9), np.linspace(0, 2 * np.pi, 11)
    w = wigner_sphere(psi, theta, phi)
    for i, t in enumerate(theta):
        for k, f in enumerate(phi):
            n = np.array([np.sin(t) * np.cos(f), np.sin(t) * np.sin(f), np.cos(t)])
            assert w[i, k] == pytest.approx((1 + np.sqrt(3) * n @ n0) / (4 * np.pi), abs=1e-13)


@pytest.mark.parametrize("N", [1, 7, 40, 100])
def test_pure_state_normalization(N):
    psi = coherent_state(N, 0.8, 2.1)
    assert wigner_integral(psi) == pytest.approx(1.0, abs=1e-8)


def test_dephased_block_state_normalization():
    p = LmgParams(12, 1.0, 0.5, 0.0)
    rho = lindblad_evolve(LindbladStepper(p, 0.3), BlockDensityMatrix.from_pure(coherent_state(12, np.pi, 0)), [3.0])[0]
    assert wigner_integral(rho) == pytest.approx(1.0, abs=1e-8)


def test_pure_block_matches_pure_state():
    psi = coherent_state(9, 1.3, 0.2)
    theta, phi = np.linspace(0, np.pi, 5), np.linspace(0, 6, 7)
    a = wigner_sphere(psi, theta, phi)
    b = wigner_sphere(BlockDensityMatrix.from_pure(psi), theta, phi)
    assert np.allclose(a, b, atol=1e-12)


def test_all_down_state_peaks_at_disk_centre():
    table = wigner_polar_samples(coherent_state(30, np.pi, 0.0), n_theta=31, n_phi=12)
    r, _, w = table.peak()
    assert r == pytest.approx(0.0, abs=1e-12)
    assert w > 0


def test_coherent_state_peaks_along_its_direction():
    table = wigner_polar_samples(coherent_state(40, np.pi / 2, np.pi / 3), n_theta=37, n_phi=36)
    r, ph, _ = table.peak()
    assert r == pytest.approx(polar_radius(np.pi / 2), abs=1e-12)
    assert ph == pytest.approx(np.pi / 3, abs=1e-12)


def test_polar_radius_range():
    assert polar_radius(np.pi) == pytest.approx(0.0, abs=1e-12)
    assert polar_radius(0.0) == pytest.approx(2**0.25)
    assert polar_radius(np.pi / 2) == pytest.approx(1.0)


def test_table_layout():
    t = wigner_polar_samples(coherent_state(5, 1.0, 0.0), n_theta=4, n_phi=6)
    arr = t.as_array()
    assert arr.shape == (24, 3)
    assert np.allclose(arr[:, 0], t.r)


def test_intermediate_state_is_non_classical():
    p = LmgParams(100, 1.0, 0.5, 0.0)
    psi = coherent_state(100, np.pi, 0.0)
    mid = evolve_grid(build_hamiltonian(p), psi, [12.0])[0]
    w0 = wigner_polar_samples(psi, 61, 72).W
    w1 = wigner_polar_samples(mid, 61, 72).W
    assert w0.min() > -1e-3 * w0.max()
    assert w1.min() < -0.05 * w1.max()
    assert w1.max() < 0.5 * w0.max()
