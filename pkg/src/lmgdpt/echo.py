"""Echo protocols and error-propagation sensitivity.

A parameter shift ``delta`` of the perturbed field is imprinted by evolving
forward under ``H(lambda + delta/2)`` and then backward under
``H(lambda - delta/2)``:

    psi_f(delta) = exp(+i H(lambda - delta/2) t) exp(-i H(lambda + delta/2) t) psi0.

The sensitivity of a collective observable ``M`` follows from error
propagation, ``(Delta lambda)^-2 = |d<M>/d delta|^2 / Var(M)``, with the slope
from a central difference around the working point and the variance taken at
the working point.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NoPeak, StepNotConverged, ZeroVariance
from .propagator import evolve_grid
from .spectrum import SpectralDecomposition, diagonalize
from .spin import (
    DickeState,
    LmgParams,
    PerturbationAxis,
    build_hamiltonian,
    collective,
)

__all__ = [
    "EchoSpec",
    "SensitivityResult",
    "echo_state",
    "observable_sensitivity",
    "sensitivity_trace",
    "TimeMaximum",
    "sensitivity_time_maximum",
    "default_step",
]


@dataclass(frozen=True)
class EchoSpec:
    """One echo: base parameters, perturbed field, shift ``delta`` and arm duration ``t``."""

    params: LmgParams
    axis: PerturbationAxis
    delta: float
    t: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "axis", PerturbationAxis.parse(self.axis))
        if self.t < 0:
            raise ValueError("echo duration must be non-negative")

    @property
    def forward_params(self) -> LmgParams:
        return self.axis.shifted(self.params, 0.5 * self.delta)

    @property
    def backward_params(self) -> LmgParams:
        return self.axis.shifted(self.params, -0.5 * self.delta)


def echo_state(spec: EchoSpec, state: DickeState, method: str = "chebyshev") -> DickeState:
    """Final echo state via Chebyshev propagation or exact diagonalization."""
    if method == "chebyshev":
        fwd = evolve_grid(build_hamiltonian(spec.forward_params), state, [spec.t])[0]
        return evolve_grid(build_hamiltonian(spec.backward_params), fwd, [-spec.t])[0]
    if method == "eigen":
        fwd = diagonalize(spec.forward_params).evolve(state, spec.t)
        return diagonalize(spec.backward_params).evolve(fwd, -spec.t)
    raise ValueError(f"unknown propagation method {method!r}")


@dataclass(frozen=True)
class SensitivityResult:
    """Error-propagation sensitivity at one echo duration.

    ``inverse_variance`` is ``(Delta lambda)^-2`` and ``normalized`` divides it
    by ``N t^2``. ``variance_mismatch`` is set when the variance at the working
    point and at zero shift differ by more than 5%.
    """

    inverse_variance: float
    t: float
    N: int
    observable: str
    slope: float
    variance: float
    variance_at_zero: float
    step: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def normalized(self) -> float:
        if self.t == 0:
            return float("nan")
        return self.inverse_variance / (self.N * self.t**2)

    @property
    def variance_mismatch(self) -> bool:
        ref = max(abs(self.variance), abs(self.variance_at_zero), 1e-300)
        return abs(self.variance - self.variance_at_zero) > 0.05 * ref


def default_step(params: LmgParams, t: float) -> float:
    """Slope step ``0.1 chi / (chi t sqrt N)``; the response scales as ``t sqrt N``."""
    chi = params.chi if params.chi > 0 else 1.0
    return 0.1 * chi / (chi * max(abs(t), 1e-12) * np.sqrt(params.N))


def _moments(vec: np.ndarray, op) -> tuple[float, float]:
    w = op.apply(vec)
    mean = float(np.vdot(vec, w).real)
    return mean, float(max(np.vdot(w, w).real - mean**2, 0.0))


class _EigenCache:
    def __init__(self, params: LmgParams, axis: PerturbationAxis):
        self.params = params
        self.axis = axis
        self._store: dict[float, SpectralDecomposition] = {}
        self._overlaps: dict[tuple[float, float], np.ndarray] = {}

    def get(self, shift: float) -> SpectralDecomposition:
        key = float(shift)
        if key not in self._store:
            self._store[key] = diagonalize(self.axis.shifted(self.params, key))
        return self._store[key]

    def overlap(self, a: float, b: float) -> np.ndarray:
        key = (float(a), float(b))
        if key not in self._overlaps:
            self._overlaps[key] = self.get(b).eigenvectors.conj().T @ self.get(a).eigenvectors
        return self._overlaps[key]


def _echo_vectors_eigen(cache: _EigenCache, delta: float, state: DickeState, times: np.ndarray) -> np.ndarray:
    fwd = cache.get(0.5 * delta)
    bwd = cache.get(-0.5 * delta)
    c = fwd.coefficients(state)
    ov = cache.overlap(0.5 * delta, -0.5 * delta)
    phases = np.exp(-1j * np.outer(fwd.eigenvalues, times)) * c[:, None]
    a = ov @ phases
    a *= np.exp(1j * np.outer(bwd.eigenvalues, times))
    return (bwd.eigenvectors @ a).T


def _echo_vectors_chebyshev(params: LmgParams, axis: PerturbationAxis, delta: float,
                            state: DickeState, times: np.ndarray) -> np.ndarray:
    Hf = build_hamiltonian(axis.shifted(params, 0.5 * delta))
    Hb = build_hamiltonian(axis.shifted(params, -0.5 * delta))
    fwd = evolve_grid(Hf, state, times)
    return np.array([evolve_grid(Hb, f, [-t])[0].amplitudes for f, t in zip(fwd, times)])


def _means(vecs: np.ndarray, op) -> np.ndarray:
    return np.einsum("ki,ik->k", vecs.conj(), op.apply(vecs.T)).real


def sensitivity_trace(
    params: LmgParams,
    axis: PerturbationAxis | str,
    times,
    state: DickeState,
    observable: str = "y",
    delta: float = 0.0,
    step: float | None = None,
    method: str = "eigen",
    rtol: float = 0.01,
    max_halvings: int = 4,
) -> list[SensitivityResult]:
    """Sensitivity at each echo duration in ``times``.

    The slope uses a central difference with one step for the whole trace
    (default :func:`default_step` at the longest time) and is accepted when
    it agrees with the half-step slope within ``rtol``. Failing times are
    retried with halved steps before :class:`StepNotConverged` is raised.
    A vanishing variance raises :class:`ZeroVariance`.
    """
    axis = PerturbationAxis.parse(axis)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    op = collective(params.N, observable)
    cache = _EigenCache(params, axis) if method == "eigen" else None

    def vectors(d: float, ts: np.ndarray) -> np.ndarray:
        if method == "eigen":
            return _echo_vectors_eigen(cache, d, state, ts)
        if method == "chebyshev":
            return _echo_vectors_chebyshev(params, axis, d, state, ts)
        raise ValueError(f"unknown propagation method {method!r}")

    centre = vectors(delta, times)
    zero = centre if delta == 0 else vectors(0.0, times)
    h0 = step if step is not None else default_step(params, float(np.max(np.abs(times))))
    n = len(times)
    slopes = np.full(n, np.nan)
    s_full = np.full(n, np.nan)
    s_half = np.full(n, np.nan)
    used = np.full(n, h0)
    todo = np.nonzero(times != 0)[0]
    h = h0
    for _ in range(max_halvings + 1):
        if len(todo) == 0:
            break
        ts = times[todo]
        mp = _means(vectors(delta + h, ts), op)
        mm = _means(vectors(delta - h, ts), op)
        mph = _means(vectors(delta + 0.5 * h, ts), op)
        mmh = _means(vectors(delta - 0.5 * h, ts), op)
        full = (mp - mm) / (2 * h)
        half = (mph - mmh) / h
        scale = np.maximum(np.abs(half), 1e-300)
        ok = np.abs(full - half) <= rtol * scale
        # a slope far below the quantum noise scale carries no information to converge
        _, var_t = np.array([_moments(centre[k], op) for k in todo]).T
        ok |= np.abs(half) * h < 1e-12 * np.sqrt(np.maximum(var_t, 1e-300))
        for j, k in enumerate(todo):
            if ok[j]:
                s_full[k], s_half[k], used[k] = full[j], half[j], h
                slopes[k] = (4 * half[j] - full[j]) / 3
        todo = todo[~ok]
        h *= 0.5
    if len(todo):
        raise StepNotConverged(f"sensitivity slope did not converge at t={times[todo].tolist()}")

    results = []
    for k, t in enumerate(times):
        mean_c, var_c = _moments(centre[k], op)
        _, var_0 = _moments(zero[k], op)
        if t == 0:
            results.append(SensitivityResult(0.0, 0.0, params.N, observable, 0.0, var_c, var_0, 0.0))
            continue
        if var_c <= 1e-300:
            raise ZeroVariance(f"Var({observable}) vanishes at t={t}")
        results.append(SensitivityResult(
            float(slopes[k] ** 2 / var_c), float(t), params.N, observable, float(slopes[k]),
            var_c, var_0, float(used[k]),
            {"slope_full": float(s_full[k]), "slope_half": float(s_half[k]), "mean": mean_c},
        ))
    return results


def observable_sensitivity(
    spec: EchoSpec,
    state: DickeState,
    observable: str = "y",
    step: float | None = None,
    method: str = "chebyshev",
) -> SensitivityResult:
    """Sensitivity of ``<M>`` to the echo shift around the working point ``spec.delta``."""
    return sensitivity_trace(spec.params, spec.axis, [spec.t], state, observable,
                             delta=spec.delta, step=step, method=method)[0]


@dataclass(frozen=True)
class TimeMaximum:
    """Time maximum of a sensitivity trace.

    ``t`` and ``value`` are parabolically refined when the grid maximum is
    interior; ``sample`` is the grid entry with the largest value.
    """

    t: float
    value: float
    sample: SensitivityResult
    refined: bool


def sensitivity_time_maximum(
    results: list[SensitivityResult],
    normalized: bool = True,
) -> TimeMaximum:
    """Largest (normalized) sensitivity over a time trace.

    The global maximum over the grid is taken, then refined with a parabola
    through it and its two neighbours. A maximum on the first or last grid
    time is returned unrefined. Raises :class:`NoPeak` for an identically
    vanishing trace.
    """
    from .qfi import parabolic_peak

    vals = np.array([r.normalized if normalized else r.inverse_variance for r in results])
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    if len(vals) == 0 or not np.any(vals > 0):
        raise NoPeak("sensitivity vanishes on the whole time grid")
    k = int(np.argmax(vals))
    best = results[k]
    if 0 < k < len(vals) - 1 and np.all(np.isfinite(vals[k - 1 : k + 2])):
        t, v = parabolic_peak([r.t for r in results[k - 1 : k + 2]], vals[k - 1 : k + 2])
        return TimeMaximum(t, v, best, True)
    return TimeMaximum(best.t, float(vals[k]), best, False)
