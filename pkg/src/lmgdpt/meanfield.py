"""Classical (large-N) dynamics of the collective spin.

The normalized Bloch vector ``s = S / (N/2)`` precesses as ``ds/dt = h x s``
in the self-consistent field ``h = (-Omega, 0, -chi s_z - omega)``. Energy
conservation reduces the motion of ``S_z`` to a particle in the effective
potential

    V(S_z) = (E + chi S_z^2/N + omega S_z)^2 / 2 + Omega^2 S_z^2 / 2 - Omega^2 N^2 / 8

with ``(dS_z/dt)^2 / 2 + V(S_z) = 0``. When the potential has a double well
and its barrier top stays positive, the trajectory is trapped on one side and
the time-averaged magnetization is non-zero (ordered phase).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np
from scipy import optimize

from .errors import CrossoverRegime, EnergyDrift, NoBarrier, StepNotConverged
from .spin import LmgParams, PerturbationAxis

__all__ = [
    "BlochTrajectory",
    "CriticalFields",
    "initial_energy",
    "effective_potential",
    "potential_critical_points",
    "barrier_height",
    "critical_field_analytic",
    "critical_field_longitudinal",
    "phase_boundary_numeric",
    "bloch_evolve",
    "time_averaged_sz",
    "classify_phase",
    "meanfield_qfi",
    "ORDER_THRESHOLD",
]

ORDER_THRESHOLD = 0.05


def _polarization(theta: float, phi: float) -> np.ndarray:
    return np.array([math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)])


def initial_energy(theta: float, phi: float, params: LmgParams) -> float:
    """Mean-field energy per particle ``E/N`` of the coherent state at ``(theta, phi)``."""
    ct = math.cos(theta)
    return -0.5 * (0.5 * params.chi * ct**2 + params.Omega * math.sin(theta) * math.cos(phi) + params.omega * ct)


def effective_potential(sz, params: LmgParams, energy: float):
    """Effective potential for ``S_z`` at total energy ``energy`` (not per particle)."""
    sz = np.asarray(sz, dtype=float)
    N = params.N
    u = energy + params.chi * sz**2 / N + params.omega * sz
    return 0.5 * u**2 + 0.5 * params.Omega**2 * sz**2 - params.Omega**2 * N**2 / 8.0


def _scaled_potential(sigma, chi, Omega, omega, eps):
    # V / N^2 with sigma = S_z / N and eps = E / N
    u = eps + chi * sigma**2 + omega * sigma
    return 0.5 * u**2 + 0.5 * Omega**2 * sigma**2 - Omega**2 / 8.0


def _scaled_critical_points(chi, Omega, omega, eps):
    coeffs = [2 * chi**2, 3 * chi * omega, omega**2 + 2 * chi * eps + Omega**2, eps * omega]
    if chi == 0:
        coeffs = coeffs[2:]
    roots = np.roots(coeffs) if any(coeffs) else np.array([])
    return np.sort(roots[np.abs(roots.imag) < 1e-10 * (1 + np.abs(roots.real))].real)


def potential_critical_points(params: LmgParams, energy: float) -> np.ndarray:
    """Real stationary points of :func:`effective_potential`.

    An outer well may lie beyond ``|S_z| = N/2``; the motion never reaches it,
    but it still shapes the barrier between the physical turning points.
    """
    N = params.N
    return N * _scaled_critical_points(params.chi, params.Omega, params.omega, energy / N)


def barrier_height(theta: float, phi: float, params: LmgParams) -> float:
    """``V(S_z*) / N^2`` at the interior local maximum of the effective potential.

    Positive values block the passage between the wells. Raises
    :class:`NoBarrier` when the potential has a single well.
    """
    eps = initial_energy(theta, phi, params)
    pts = _scaled_critical_points(params.chi, params.Omega, params.omega, eps)
    if len(pts) < 3 or abs(pts[1]) > 0.5:
        raise NoBarrier("effective potential has no interior barrier")
    return float(_scaled_potential(pts[1], params.chi, params.Omega, params.omega, eps))


@dataclass(frozen=True)
class CriticalFields:
    """Positive and negative transverse critical fields (``nan`` on a singular branch)."""

    positive: float
    negative: float
    singular: tuple[bool, bool]


def critical_field_analytic(theta: float, phi: float, chi: float = 1.0) -> CriticalFields:
    """Closed-form critical fields at zero longitudinal field.

    ``Omega_cr = +- (chi/2) cos^2(theta) / (1 -+ sin(theta) cos(phi))``. A branch
    whose denominator vanishes is flagged singular and returned as ``nan``.
    """
    c2 = math.cos(theta) ** 2
    sc = math.sin(theta) * math.cos(phi)
    out = []
    flags = []
    for sign in (1.0, -1.0):
        denom = 1.0 - sign * sc
        if abs(denom) < 1e-12:
            out.append(float("nan"))
            flags.append(True)
        else:
            out.append(sign * 0.5 * chi * c2 / denom)
            flags.append(False)
    return CriticalFields(out[0], out[1], (flags[0], flags[1]))


def critical_field_longitudinal(omega: float, chi: float = 1.0) -> float:
    """Critical transverse field for the all-down state at longitudinal field ``omega``.

    Valid for ``omega/chi > -1/8``; at or below that value the barrier
    disappears before it can be crossed and :class:`CrossoverRegime` is
    raised. For ``omega >= chi`` the all-down state is not trapped at any
    field, the radicand turns negative, and the boundary is pinned at zero.
    """
    w = omega / chi
    if w <= -0.125:
        raise CrossoverRegime(f"omega/chi = {w} is at or below -1/8")
    bracket = 2 * (1 - w) * (1 + 2 * w) - 1.5 * (8 * w + 1) + 0.5 * (1 + 8 * w) ** 1.5
    if w >= 1.0:
        return 0.0
    return 0.5 * chi * math.sqrt(max(bracket, 0.0))


def phase_boundary_numeric(
    theta: float,
    phi: float,
    omega: float = 0.0,
    chi: float = 1.0,
    branch: int = 1,
    Omega_max: float = 5.0,
    samples: int = 2000,
    xtol: float = 1e-13,
) -> float:
    """Transverse field where the barrier top of the effective potential reaches zero.

    Scans ``|Omega|`` upward on the requested branch (sign ``branch``). The
    barrier stops blocking either because its top ``V(S_z*)`` drops through
    zero (a sharp transition, refined with Brent's method) or because the
    barrier itself disappears while still positive. The latter is a smooth
    crossover and raises :class:`NoBarrier`, as does a state that is not
    trapped at vanishing field.
    """
    sign = 1.0 if branch >= 0 else -1.0

    def g(mag: float) -> float:
        try:
            return barrier_height(theta, phi, LmgParams(1, chi, sign * mag, omega))
        except NoBarrier:
            return float("nan")

    grid = np.linspace(1e-9, Omega_max * chi, samples)
    prev_x, prev_v = grid[0], g(grid[0])
    if not prev_v > 0:
        raise NoBarrier("no trapping barrier at vanishing transverse field")
    for x in grid[1:]:
        v = g(x)
        if v <= 0:
            return sign * float(optimize.brentq(g, prev_x, x, xtol=xtol))
        if np.isnan(v):
            # barrier vanished inside (prev_x, x): locate the merger and test just before it
            lo, hi = prev_x, x
            while hi - lo > xtol * max(1.0, hi):
                mid = 0.5 * (lo + hi)
                if np.isnan(g(mid)):
                    hi = mid
                else:
                    lo = mid
            if g(lo) > 0:
                raise NoBarrier(f"barrier disappears at |Omega| ~ {lo:.6g} before the turning point reaches it")
            return sign * float(optimize.brentq(g, prev_x, lo, xtol=xtol))
        prev_x, prev_v = x, v
    raise NoBarrier(f"barrier persists up to |Omega| = {Omega_max * chi}")


@numba.njit(cache=True)
def _rhs(y, chi, Omega, omega, axis_row, out):
    sx, sy, sz = y[0], y[1], y[2]
    hx = -Omega
    hy = 0.0
    hz = -chi * sz - omega
    out[0] = hy * sz - hz * sy
    out[1] = hz * sx - hx * sz
    out[2] = hx * sy - hy * sx
    if y.shape[0] > 3:
        # R' = K R with K = [[0, -hz, hy], [hz, 0, -hx], [-hy, hx, 0]]
        for c in range(3):
            r0 = y[3 + c]
            r1 = y[6 + c]
            r2 = y[9 + c]
            out[3 + c] = -hz * r1 + hy * r2
            out[6 + c] = hz * r0 - hx * r2
            out[9 + c] = -hy * r0 + hx * r1
        for c in range(3):
            out[12 + c] = y[3 + 3 * axis_row + c]


@numba.njit(cache=True)
def _rk4(y0, chi, Omega, omega, axis_row, dt, nsteps, stride):
    n = y0.shape[0]
    nsave = nsteps // stride + 1
    saved = np.empty((nsave, n))
    y = y0.copy()
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    saved[0] = y
    j = 1
    for step in range(1, nsteps + 1):
        _rhs(y, chi, Omega, omega, axis_row, k1)
        for i in range(n):
            tmp[i] = y[i] + 0.5 * dt * k1[i]
        _rhs(tmp, chi, Omega, omega, axis_row, k2)
        for i in range(n):
            tmp[i] = y[i] + 0.5 * dt * k2[i]
        _rhs(tmp, chi, Omega, omega, axis_row, k3)
        for i in range(n):
            tmp[i] = y[i] + dt * k3[i]
        _rhs(tmp, chi, Omega, omega, axis_row, k4)
        for i in range(n):
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        if step % stride == 0:
            saved[j] = y
            j += 1
    return saved[:j], y


def _default_dt(params: LmgParams) -> float:
    scale = max(abs(params.Omega), params.chi, abs(params.omega), 1e-12)
    return 0.01 / scale


def _scaled_energy(s: np.ndarray, params: LmgParams) -> np.ndarray:
    return -0.25 * params.chi * s[..., 2] ** 2 - 0.5 * params.Omega * s[..., 0] - 0.5 * params.omega * s[..., 2]


@dataclass(frozen=True, eq=False)
class BlochTrajectory:
    """Sampled classical trajectory of the normalized Bloch vector."""

    times: np.ndarray
    s: np.ndarray
    params: LmgParams
    energy_drift: float

    @property
    def sz(self) -> np.ndarray:
        return self.s[:, 2]

    def eom_residual(self) -> float:
        """Largest ``|(dS_z/dt)^2/2 + V(S_z)| / (chi N)^2`` along the trajectory."""
        p = self.params
        N = p.N
        Sz = 0.5 * N * self.s[:, 2]
        Sy = 0.5 * N * self.s[:, 1]
        E = N * _scaled_energy(self.s[0], p)
        res = 0.5 * (p.Omega * Sy) ** 2 + effective_potential(Sz, p, E)
        return float(np.max(np.abs(res)) / (max(p.chi, 1e-300) * N) ** 2)


def bloch_evolve(
    theta: float,
    phi: float,
    params: LmgParams,
    T: float,
    dt: float | None = None,
    stride: int = 1,
    drift_tolerance: float = 1e-6,
    halving_tolerance: float | None = None,
) -> BlochTrajectory:
    """Integrate the precession equation with fixed-step RK4.

    The step defaults to ``0.01 / max(|Omega|, chi, |omega|)``. Raises
    :class:`EnergyDrift` if the relative energy error exceeds ``drift_tolerance``.
    With ``halving_tolerance`` the run is repeated at half the step and
    :class:`StepNotConverged` is raised if the sampled Bloch vectors differ
    by more than that amount.
    """
    dt = dt or _default_dt(params)
    if dt > _default_dt(params) * (1 + 1e-12):
        raise ValueError(f"dt={dt} exceeds the stability bound {_default_dt(params)}")
    nsteps = max(int(math.ceil(T / dt)), 1)
    dt = T / nsteps
    y0 = _polarization(theta, phi)
    saved, _ = _rk4(y0, params.chi, params.Omega, params.omega, 0, dt, nsteps, stride)
    times = np.arange(saved.shape[0]) * dt * stride
    e = _scaled_energy(saved, params)
    scale = 0.25 * params.chi + 0.5 * abs(params.Omega) + 0.5 * abs(params.omega)
    drift = float(np.max(np.abs(e - e[0])) / max(abs(e[0]), scale, 1e-300))
    if drift > drift_tolerance:
        raise EnergyDrift(f"relative energy drift {drift:.2e} exceeds {drift_tolerance:.1e}")
    if halving_tolerance is not None:
        fine, _ = _rk4(y0, params.chi, params.Omega, params.omega, 0, dt / 2, 2 * nsteps, 2 * stride)
        gap = float(np.max(np.abs(fine - saved)))
        if gap > halving_tolerance:
            raise StepNotConverged(f"halving the step moved the trajectory by {gap:.2e}")
    return BlochTrajectory(times, saved, params, drift)


def time_averaged_sz(trajectory: BlochTrajectory, T: float | None = None) -> float:
    """Trapezoidal time average of ``S_z / (N/2)`` over ``[0, T]``."""
    t = trajectory.times
    sz = trajectory.sz
    if T is not None:
        keep = t <= T + 1e-12
        t, sz = t[keep], sz[keep]
    if t[-1] == 0:
        return float(sz[0])
    return float(np.trapezoid(sz, t) / t[-1])


def classify_phase(sz_bar: float, threshold: float = ORDER_THRESHOLD) -> str:
    """``"ordered"`` when ``|S_z_bar| / (N/2)`` exceeds the threshold, else ``"disordered"``."""
    return "ordered" if abs(sz_bar) > threshold else "disordered"


def meanfield_qfi(
    theta: float,
    phi: float,
    params: LmgParams,
    t: float,
    axis: PerturbationAxis | str,
    dt: float | None = None,
) -> float:
    """Mean-field QFI of the coherent state for a field perturbation.

    The Heisenberg operator of the perturbed spin component is carried along
    the classical trajectory in a rotating frame, ``S_a(t) = sum_c R_ac(t) S_c``
    with ``dR/dt = K(h(t)) R``. Its time integral ``v`` defines the generator
    ``v . S`` whose coherent-state variance gives
    ``F = N |v|^2 (1 - (v_hat . n)^2) <= N t^2``.
    """
    axis = PerturbationAxis.parse(axis)
    if t == 0:
        return 0.0
    dt = dt or _default_dt(params)
    nsteps = max(int(math.ceil(abs(t) / dt)), 1)
    dt = abs(t) / nsteps
    n = _polarization(theta, phi)
    y0 = np.zeros(15)
    y0[:3] = n
    y0[3:12] = np.eye(3).ravel()
    row = 0 if axis is PerturbationAxis.TRANSVERSE else 2
    _, y = _rk4(y0, params.chi, params.Omega, params.omega, row, dt, nsteps, nsteps)
    v = y[12:15]
    norm2 = float(v @ v)
    if norm2 == 0:
        return 0.0
    proj = float(v @ n) ** 2 / norm2
    return float(params.N * norm2 * max(1.0 - proj, 0.0))
