"""Chebyshev expansion of ``exp(-iHt)`` for tridiagonal Hamiltonians.

The Hamiltonian is rescaled onto ``[-1, 1]`` with guaranteed spectral bounds,

    H_n = (2H - (E_max + E_min)) / (E_max - E_min),

and the propagator is expanded as

    exp(-iHt) = exp(-i (E_max + E_min) t / 2) sum_n (2 - delta_n0) (-i)^n J_n(x) T_n(H_n)

with ``x = (E_max - E_min) t / 2``. The Bessel coefficients come from a Miller
downward recurrence, which gives all orders at once and keeps the sum rule
``J_0 + 2 sum J_2k = 1`` exact to rounding even for ``x ~ 1e6``.

Every propagated state is checked for norm conservation. The running count and
worst deviation are kept in a module-level certificate so callers can report
that all propagations in a run passed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import DimensionMismatch, NormDrift
from .spin import CollectiveOperator, DickeState, LmgParams

__all__ = [
    "SpectralBounds",
    "ChebyshevPlan",
    "spectral_bounds",
    "bessel_sequence",
    "chebyshev_evolve",
    "evolve_grid",
    "evolve_sequence",
    "norm_certificate",
    "reset_norm_certificate",
]

NORM_TOLERANCE = 1e-10

_certificate = {"count": 0, "max_deviation": 0.0}


def norm_certificate() -> dict:
    """Number of propagations checked so far and the worst ``| ||psi||^2 - 1 |``."""
    return dict(_certificate)


def reset_norm_certificate() -> None:
    _certificate["count"] = 0
    _certificate["max_deviation"] = 0.0


def _certify(vec: np.ndarray, tol: float) -> None:
    dev = abs(float(np.vdot(vec, vec).real) - 1.0)
    _certificate["count"] += 1
    _certificate["max_deviation"] = max(_certificate["max_deviation"], dev)
    if not dev < tol:
        raise NormDrift(f"norm deviation {dev:.3e} exceeds {tol:.1e}")


@dataclass(frozen=True)
class SpectralBounds:
    e_min: float
    e_max: float

    def __post_init__(self) -> None:
        if not self.e_max > self.e_min:
            raise ValueError("spectral bounds must satisfy e_max > e_min")

    @property
    def half_width(self) -> float:
        return 0.5 * (self.e_max - self.e_min)

    @property
    def center(self) -> float:
        return 0.5 * (self.e_max + self.e_min)


def spectral_bounds(params: LmgParams | None = None, H: CollectiveOperator | None = None) -> SpectralBounds:
    """Guaranteed bounds on the spectrum.

    From model parameters the bound is ``+-N(chi + |omega|) + ...``; the
    Gershgorin discs of ``H`` are used when an operator is given. Either way
    a small relative margin keeps the rescaled spectrum strictly inside ``[-1, 1]``.
    """
    if H is None and params is None:
        raise ValueError("need params or H")
    if H is not None:
        radius = np.zeros(H.dim)
        radius[1:] += np.abs(H.lower)
        radius[:-1] += np.abs(H.lower)
        lo = float(np.min(H.diag - radius))
        hi = float(np.max(H.diag + radius))
    else:
        N = params.N
        b = N * (params.chi + abs(params.omega)) + N * abs(params.Omega) / 2.0
        lo, hi = -b, b
    span = max(hi - lo, 1e-12)
    pad = 1e-6 * span + 1e-12
    return SpectralBounds(lo - pad, hi + pad)


@dataclass(frozen=True)
class ChebyshevPlan:
    """Truncation settings for one propagation.

    ``n_cut`` defaults to ``max(ceil(margin * x), ceil(x) + extra)`` where
    ``x = (E_max - E_min) t / 2``; beyond order ``x`` the Bessel coefficients
    decay faster than exponentially.
    """

    bounds: SpectralBounds
    margin: float = 1.3
    extra: int = 40
    norm_tolerance: float = NORM_TOLERANCE

    def n_cut(self, t: float) -> int:
        x = self.bounds.half_width * abs(t)
        return int(max(math.ceil(self.margin * x), math.ceil(x) + self.extra))


@numba.njit(cache=True)
def _bessel_sequence(nmax, x):
    out = np.zeros(nmax + 1)
    if x == 0.0:
        out[0] = 1.0
        return out
    top = max(float(nmax), x)
    start = int(top) + 30 + int(10.0 * x ** (1.0 / 3.0)) + 2 * int(math.sqrt(top))
    if start % 2 == 1:
        start += 1
    jp1 = 0.0
    j = 1e-300
    s = 0.0
    for k in range(start, 0, -1):
        jm1 = (2.0 * k / x) * j - jp1
        jp1 = j
        j = jm1
        n = k - 1
        if n <= nmax:
            out[n] = j
        if n > 0 and n % 2 == 0:
            s += 2.0 * j
        if abs(j) > 1e250:
            j *= 1e-250
            jp1 *= 1e-250
            s *= 1e-250
            for q in range(n, nmax + 1):
                out[q] *= 1e-250
    s += j
    for q in range(nmax + 1):
        out[q] /= s
    return out


def bessel_sequence(nmax: int, x: float) -> np.ndarray:
    """``J_0(x), ..., J_nmax(x)`` for ``x >= 0`` via normalized Miller recurrence."""
    if x < 0:
        raise ValueError("bessel_sequence expects x >= 0")
    return _bessel_sequence(int(nmax), float(x))


@numba.njit(cache=True)
def _tri_apply(d, lo, v, out, a, b):
    # out = a * (H v) - b * v, H tridiagonal with lower band lo
    n = d.shape[0]
    for i in range(n):
        acc = d[i] * v[i]
        if i > 0:
            acc += lo[i - 1] * v[i - 1]
        if i < n - 1:
            acc += np.conj(lo[i]) * v[i + 1]
        out[i] = a * acc - b * v[i]


@numba.njit(cache=True)
def _chebyshev_accumulate(d, lo, psi, coeffs, scale, shift):
    # coeffs[k, n]: coefficient of T_n for output k; returns outputs[k, :]
    K, ncoef = coeffs.shape
    n = psi.shape[0]
    out = np.zeros((K, n), dtype=np.complex128)
    t_prev = psi.copy()
    t_cur = np.empty(n, dtype=np.complex128)
    t_next = np.empty(n, dtype=np.complex128)
    a = 1.0 / scale
    b = shift / scale
    for k in range(K):
        for i in range(n):
            out[k, i] += coeffs[k, 0] * t_prev[i]
    if ncoef == 1:
        return out
    _tri_apply(d, lo, t_prev, t_cur, a, b)
    for k in range(K):
        c = coeffs[k, 1]
        for i in range(n):
            out[k, i] += c * t_cur[i]
    for m in range(2, ncoef):
        _tri_apply(d, lo, t_cur, t_next, 2.0 * a, 2.0 * b)
        for i in range(n):
            t_next[i] -= t_prev[i]
        for k in range(K):
            c = coeffs[k, m]
            if c != 0.0:
                for i in range(n):
                    out[k, i] += c * t_next[i]
        tmp = t_prev
        t_prev = t_cur
        t_cur = t_next
        t_next = tmp
    return out


_PHASES = np.array([1.0, -1j, -1.0, 1j])


def _coefficients(times: np.ndarray, bounds: SpectralBounds, ncoef: int, plan: ChebyshevPlan) -> np.ndarray:
    coeffs = np.zeros((len(times), ncoef), dtype=complex)
    orders = np.arange(ncoef)
    phase = _PHASES[orders % 4]
    for k, t in enumerate(times):
        nk = min(plan.n_cut(t), ncoef - 1)
        x = bounds.half_width * abs(t)
        jn = _bessel_sequence(nk, x)
        c = 2.0 * jn * phase[: nk + 1]
        c[0] = jn[0]
        if t < 0:
            # exp(+i|H||t|) uses the conjugated coefficients
            c = np.conj(c)
        coeffs[k, : nk + 1] = c * np.exp(-1j * bounds.center * t)
    return coeffs


def _as_vector(state: DickeState | np.ndarray, H: CollectiveOperator) -> np.ndarray:
    vec = state.amplitudes if isinstance(state, DickeState) else np.asarray(state, dtype=complex)
    if vec.shape != (H.dim,):
        raise DimensionMismatch(f"state of shape {vec.shape} for Hamiltonian of dim {H.dim}")
    return np.ascontiguousarray(vec, dtype=complex)


# Bessel coefficients held in memory at once are limited to about this many entries.
_COEFF_BUDGET = 20_000_000


def evolve_grid(
    H: CollectiveOperator,
    state: DickeState | np.ndarray,
    times,
    plan: ChebyshevPlan | None = None,
) -> list[DickeState]:
    """Propagate one state to several times, reusing the Chebyshev vectors.

    Times may be negative (backward evolution). Every output state is norm
    checked and :class:`NormDrift` is raised on failure.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    plan = plan or ChebyshevPlan(spectral_bounds(H=H))
    psi = _as_vector(state, H)
    norm2 = float(np.vdot(psi, psi).real)
    if abs(norm2 - 1.0) > plan.norm_tolerance:
        raise NormDrift(f"input state has norm^2 {norm2:.12f}")
    bounds = plan.bounds
    scale, shift = bounds.half_width, bounds.center
    d = np.ascontiguousarray(H.diag, dtype=float)
    lo = np.ascontiguousarray(H.lower, dtype=complex)

    order = np.argsort(np.abs(times))
    results: list[np.ndarray | None] = [None] * len(times)
    i = 0
    while i < len(order):
        # group times so the coefficient table stays bounded in memory
        group = [order[i]]
        ncoef = plan.n_cut(times[order[i]]) + 1
        i += 1
        while i < len(order):
            nc = plan.n_cut(times[order[i]]) + 1
            if nc * (len(group) + 1) > _COEFF_BUDGET:
                break
            group.append(order[i])
            ncoef = nc
            i += 1
        coeffs = _coefficients(times[group], bounds, ncoef, plan)
        outs = _chebyshev_accumulate(d, lo, psi, coeffs, scale, shift)
        for k, idx in enumerate(group):
            results[idx] = outs[k]
    states = []
    for vec in results:
        _certify(vec, plan.norm_tolerance)
        states.append(DickeState(H.N, vec))
    return states


def chebyshev_evolve(
    H: CollectiveOperator,
    state: DickeState | np.ndarray,
    t: float,
    plan: ChebyshevPlan | None = None,
) -> DickeState:
    """Return ``exp(-iHt)|psi>``."""
    return evolve_grid(H, state, [t], plan)[0]


def evolve_sequence(
    H: CollectiveOperator,
    state: DickeState | np.ndarray,
    times,
    plan: ChebyshevPlan | None = None,
) -> list[DickeState]:
    """Propagate through sorted ``times`` by chaining steps between neighbours.

    Each step costs only the expansion order of its own increment, which makes
    dense long traces far cheaper than :func:`evolve_grid`. Every intermediate
    state is norm checked.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be sorted")
    plan = plan or ChebyshevPlan(spectral_bounds(H=H))
    current = state
    t_prev = 0.0
    out = []
    for t in times:
        if t != t_prev:
            current = evolve_grid(H, current, [t - t_prev], plan)[0]
        elif not isinstance(current, DickeState):
            current = DickeState(H.N, _as_vector(current, H))
        out.append(current)
        t_prev = t
    return out
