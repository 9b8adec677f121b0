"""Exact diagonalization and excited-state criticality analysis.

The Hamiltonian is real symmetric tridiagonal, so diagonalization uses
LAPACK's tridiagonal solver through :func:`scipy.linalg.eigh_tridiagonal`.

The excited-state analysis looks at long-time averages of collective spin
components. After dephasing, the time average of ``<S_alpha>`` is the
diagonal-ensemble value ``sum_n |c_n|^2 S_alpha^{nn}``, and the eigenstate
expectation values ``S_alpha^{nn} / N`` as a function of ``E_n / N`` act as an
order parameter that vanishes at the critical energy ``E_cr / N = -Omega/2``.
Near that energy it behaves as ``A + B |E - E_cr|^gamma``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.linalg import LinAlgError, eigh_tridiagonal

from .errors import ConvergenceFailure, DegenerateSpectrum, DimensionMismatch, InsufficientPoints
from .spin import (
    CollectiveOperator,
    DickeState,
    LmgParams,
    PerturbationAxis,
    build_hamiltonian,
    spin_x,
    spin_z,
)

__all__ = [
    "SpectralDecomposition",
    "diagonalize",
    "EqptProfile",
    "EqptFit",
    "eqpt_profile",
    "fit_eqpt_exponent",
    "fit_offset_power_law",
    "predicted_qfi_exponent",
    "mean_energy_and_fluctuation",
    "energy_moments",
    "exponent_stability",
]


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenvalues (ascending) and orthonormal eigenvectors stored as columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    N: int
    params: LmgParams | None = None

    def __post_init__(self) -> None:
        ev = np.asarray(self.eigenvalues, dtype=float)
        vec = np.asarray(self.eigenvectors)
        if vec.shape != (self.N + 1, self.N + 1) or ev.shape != (self.N + 1,):
            raise DimensionMismatch("decomposition shapes do not match N")
        ev.setflags(write=False)
        vec.setflags(write=False)
        object.__setattr__(self, "eigenvalues", ev)
        object.__setattr__(self, "eigenvectors", vec)

    def coefficients(self, state: DickeState | np.ndarray) -> np.ndarray:
        """Eigenbasis amplitudes ``c_n = <n|psi>``."""
        vec = state.amplitudes if isinstance(state, DickeState) else np.asarray(state)
        if vec.shape != (self.N + 1,):
            raise DimensionMismatch("state does not match decomposition")
        return self.eigenvectors.conj().T @ vec

    def transform(self, op: CollectiveOperator) -> np.ndarray:
        """Dense matrix of ``op`` in the eigenbasis, ``V^dagger O V``."""
        if op.N != self.N:
            raise DimensionMismatch("operator does not match decomposition")
        V = self.eigenvectors
        return V.conj().T @ op.apply(V)

    def diagonal_elements(self, op: CollectiveOperator) -> np.ndarray:
        """``O^{nn} = <n|O|n>`` without forming the full transformed matrix."""
        V = self.eigenvectors
        return np.einsum("kn,kn->n", V.conj(), op.apply(V)).real

    def evolve(self, state: DickeState | np.ndarray, t: float) -> DickeState:
        c = self.coefficients(state)
        return DickeState(self.N, self.eigenvectors @ (np.exp(-1j * self.eigenvalues * t) * c))

    def reconstruction_residual(self, H: CollectiveOperator) -> float:
        V = self.eigenvectors
        return float(np.abs(H.apply(V) - V * self.eigenvalues).max())

    def orthonormality_residual(self) -> float:
        V = self.eigenvectors
        return float(np.abs(V.conj().T @ V - np.eye(self.N + 1)).max())


def diagonalize(H: CollectiveOperator | LmgParams, degeneracy_tol: float = 1e-12) -> SpectralDecomposition:
    """Full eigendecomposition of the tridiagonal Hamiltonian.

    Eigenvalues come out ascending with orthonormal eigenvectors. Pairs closer
    than ``degeneracy_tol`` (relative to the spectral width) trigger a
    :class:`DegenerateSpectrum` warning; downstream QFI formulas treat them as a
    single degenerate block.
    """
    params = H if isinstance(H, LmgParams) else None
    if params is not None:
        H = build_hamiltonian(params)
    try:
        if H.is_real:
            w, v = eigh_tridiagonal(H.diag, H.lower.real)
        else:
            w, v = np.linalg.eigh(H.dense())
    except (LinAlgError, np.linalg.LinAlgError) as exc:
        raise ConvergenceFailure(str(exc)) from exc
    if len(w) > 1:
        gaps = np.diff(w)
        width = max(w[-1] - w[0], 1.0)
        if np.any(gaps < degeneracy_tol * width):
            warnings.warn(
                f"{int(np.sum(gaps < degeneracy_tol * width))} near-degenerate eigenvalue pairs",
                DegenerateSpectrum,
                stacklevel=2,
            )
    return SpectralDecomposition(w, v, H.N, params)


@dataclass(frozen=True)
class EqptProfile:
    """Eigenstate expectation values per particle against energy per particle.

    ``weights`` are the eigenbasis populations ``|c_n|^2`` of the initial state.
    ``e_cr`` is the critical energy per particle and ``delta_e`` the total
    energy uncertainty of the reference state used to size fit windows.
    """

    energies: np.ndarray
    sx: np.ndarray
    sz: np.ndarray
    weights: np.ndarray
    e_cr: float
    delta_e: float
    N: int
    polarization: float = 0.0

    def values(self, axis: PerturbationAxis | str) -> np.ndarray:
        return self.sx if PerturbationAxis.parse(axis) is PerturbationAxis.TRANSVERSE else self.sz


def energy_moments(decomp: SpectralDecomposition, state: DickeState) -> tuple[float, float]:
    """Mean energy and energy uncertainty of ``state``."""
    p = np.abs(decomp.coefficients(state)) ** 2
    mean = float(np.sum(p * decomp.eigenvalues))
    var = float(np.sum(p * (decomp.eigenvalues - mean) ** 2))
    return mean, float(np.sqrt(max(var, 0.0)))


def mean_energy_and_fluctuation(state: DickeState, H: CollectiveOperator) -> tuple[float, float]:
    """``<H>`` and ``sqrt(<H^2> - <H>^2)`` computed directly in the Dicke basis."""
    if state.N != H.N:
        raise DimensionMismatch("state and Hamiltonian dimensions differ")
    v = state.amplitudes
    hv = H.apply(v)
    mean = float(np.vdot(v, hv).real)
    return mean, float(np.sqrt(max(np.vdot(hv, hv).real - mean**2, 0.0)))


def eqpt_profile(
    decomp: SpectralDecomposition,
    state: DickeState,
    Omega: float | None = None,
    reference: DickeState | None = None,
) -> EqptProfile:
    """Diagonal expectation values ``S_x^{nn}/N`` and ``S_z^{nn}/N`` against ``E_n/N``.

    :param decomp: eigendecomposition of the Hamiltonian.
    :param state: initial state supplying the weights ``|c_n|^2``.
    :param Omega: transverse field; taken from ``decomp.params`` if omitted.
    :param reference: state whose energy spread sets ``delta_e``. Defaults to
        ``state``.
    """
    N = decomp.N
    if Omega is None:
        if decomp.params is None:
            raise ValueError("Omega is required when the decomposition carries no parameters")
        Omega = decomp.params.Omega
    w = np.abs(decomp.coefficients(state)) ** 2
    _, spread = energy_moments(decomp, reference if reference is not None else state)
    sz_op = spin_z(N)
    return EqptProfile(
        energies=decomp.eigenvalues / N,
        sx=decomp.diagonal_elements(spin_x(N)) / N,
        sz=decomp.diagonal_elements(sz_op) / N,
        weights=w,
        e_cr=-Omega / 2.0,
        delta_e=spread,
        N=N,
        polarization=float(np.vdot(state.amplitudes, sz_op.apply(state.amplitudes)).real) / N,
    )


@dataclass(frozen=True)
class EqptFit:
    """Result of fitting ``A + B |E - E_cr|^gamma`` near the critical energy."""

    A: float
    B: float
    gamma: float
    rms: float
    n_points: int
    window: tuple[float, float]
    side: int
    pinned_offset: bool
    extras: dict = field(default_factory=dict)


def _weighted_linear(basis: np.ndarray, y: np.ndarray, w: np.ndarray):
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(basis * sw[:, None], y * sw, rcond=None)
    resid = y - basis @ coef
    return coef, float(np.sum(w * resid**2))


def fit_offset_power_law(
    x: np.ndarray,
    y: np.ndarray,
    weights: np.ndarray | None = None,
    pin_offset: bool = False,
    gamma_bounds: tuple[float, float] = (1e-3, 1.0),
    grid_size: int = 400,
) -> tuple[float, float, float, float]:
    """Least-squares fit of ``y = A + B x^gamma`` with ``x > 0``.

    For fixed ``gamma`` the model is linear in ``(A, B)``, so the objective is
    profiled over ``gamma``: a grid scan followed by bounded scalar refinement.
    With ``pin_offset`` the model is ``B x^gamma``.

    :returns: ``(A, B, gamma, weighted_rms)``
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    need = 2 if pin_offset else 3
    if len(x) < need:
        raise InsufficientPoints(f"need at least {need} points, got {len(x)}")
    if np.any(x <= 0):
        raise ValueError("distances from the critical energy must be positive")
    if np.sum(w) <= 0:
        raise InsufficientPoints("all fit weights vanish")

    def profile(g: float):
        xg = x**g
        basis = xg[:, None] if pin_offset else np.column_stack([np.ones_like(x), xg])
        return _weighted_linear(basis, y, w)

    grid = np.linspace(gamma_bounds[0], gamma_bounds[1], grid_size)
    costs = np.array([profile(g)[1] for g in grid])
    k = int(np.argmin(costs))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(lambda g: profile(g)[1], bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-9})
    gamma = float(res.x) if res.fun <= costs[k] else float(grid[k])
    coef, cost = profile(gamma)
    A, B = (0.0, float(coef[0])) if pin_offset else (float(coef[0]), float(coef[1]))
    return A, B, gamma, float(np.sqrt(cost / np.sum(w)))


def fit_eqpt_exponent(
    profile: EqptProfile,
    axis: PerturbationAxis | str,
    window_multiplier: float = 3.0,
    side: int | None = None,
    weighted: bool = True,
    pin_offset: bool | None = None,
    min_points: int = 20,
) -> EqptFit:
    """Fit the critical exponent of an order parameter near ``E_cr``.

    The window spans ``window_multiplier * delta_e`` (in energy per particle,
    ``n * delta_e / N``) on one side of the critical energy.

    Defaults by axis:

    * transverse: window above ``E_cr`` with a free offset ``A``.
    * longitudinal: window below ``E_cr`` with ``A = 0``, because the order
      parameter vanishes at the critical energy. Below ``E_cr`` the levels come
      in two branches with opposite ``S_z^{nn}``; only the branch sharing the
      sign of the initial polarization is kept.

    Points are weighted by the initial-state populations so the fit describes
    the energy shell that the dynamics actually samples. ``weighted=False``
    gives the plain least-squares variant.
    """
    axis = PerturbationAxis.parse(axis)
    transverse = axis is PerturbationAxis.TRANSVERSE
    if side is None:
        side = 1 if transverse else -1
    if pin_offset is None:
        pin_offset = not transverse
    half = window_multiplier * profile.delta_e / profile.N
    e = profile.energies
    dist = side * (e - profile.e_cr)
    mask = (dist > 0) & (dist <= half)
    if not transverse and profile.polarization != 0.0:
        mask &= np.sign(profile.sz) == np.sign(profile.polarization)
    if weighted:
        w = profile.weights[mask]
        mask_w = w > 0
    else:
        w = np.ones(int(mask.sum()))
        mask_w = np.ones_like(w, dtype=bool)
    x = dist[mask][mask_w]
    y = profile.values(axis)[mask][mask_w]
    w = w[mask_w]
    if len(x) < min_points:
        raise InsufficientPoints(f"only {len(x)} eigenstates inside the fit window")
    A, B, gamma, rms = fit_offset_power_law(x, y, w if weighted else None, pin_offset=pin_offset)
    lo, hi = sorted((profile.e_cr, profile.e_cr + side * half))
    return EqptFit(A, B, gamma, rms, len(x), (lo, hi), side, bool(pin_offset))


def exponent_stability(
    profile: EqptProfile,
    axis: PerturbationAxis | str,
    multipliers=(1, 2, 3, 4, 5),
    **kwargs,
) -> dict[int, float]:
    """Fitted ``gamma`` for each window multiplier; failed windows map to ``nan``."""
    out = {}
    for n in multipliers:
        try:
            out[n] = fit_eqpt_exponent(profile, axis, n, **kwargs).gamma
        except InsufficientPoints:
            out[n] = float("nan")
    return out


def predicted_qfi_exponent(gamma: float) -> float:
    """Finite-size QFI exponent ``b`` in ``F_Q / t^2 ~ N^b`` implied by ``gamma``.

    The secular QFI grows as ``N^(2 - gamma)`` for an order parameter with
    exponent ``gamma`` on a shell of width ``~ sqrt(N)``.
    """
    if not 0.0 < gamma < 2.0:
        raise ValueError(f"gamma must lie in (0, 2), got {gamma}")
    return 2.0 - gamma
