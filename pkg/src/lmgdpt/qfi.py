"""Quantum Fisher information of quench dynamics with respect to a field.

For a state ``|psi_lambda(t)> = exp(-i H(lambda) t) |psi0>`` the QFI is
``F_Q = 4 (<G^2> - <G>^2)`` with the accumulated generator
``G = int_0^t e^{iHs} (dH/dlambda) e^{-iHs} ds``. Four evaluation routes are
provided:

``exact``
    Eigenbasis formula. With ``D_nm = E_n - E_m`` the generator matrix is
    ``G_nm = t H1_nm e^{i D t/2} sinc(D t/2)``.
``secular``
    Long-time limit keeping only diagonal elements: ``4 t^2 Var_c(H1^{nn})``.
``fd``
    Echo fidelity ``|<psi_{lambda+d}|psi_{lambda}>|`` by Chebyshev propagation and
    ``F_Q = -4 [F(d) + F(-d) - 2] / d^2``, with a Richardson check at ``d/2``.
``short``
    Leading short-time expansion ``G ~ t (H1 + (i t/2)[H, H1])``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InsufficientPoints, NoPeak, NonPositiveValue, StepNotConverged
from .propagator import ChebyshevPlan, evolve_grid, spectral_bounds
from .spectrum import SpectralDecomposition, diagonalize
from .spin import (
    DickeState,
    LmgParams,
    PerturbationAxis,
    build_hamiltonian,
)

__all__ = [
    "QfiMethod",
    "QfiResult",
    "StepPolicy",
    "CriticalField",
    "ScalingFit",
    "fidelity_deficit",
    "loschmidt_echo",
    "qfi_exact",
    "qfi_exact_trace",
    "qfi_secular",
    "qfi_finite_difference",
    "qfi_short_time",
    "compute_qfi",
    "parabolic_peak",
    "first_transient_maximum",
    "find_critical_field",
    "scaling_fit",
]


class QfiMethod(Enum):
    EXACT = "exact"
    SECULAR = "secular"
    FINITE_DIFFERENCE = "fd"
    SHORT_TIME = "short"

    @classmethod
    def parse(cls, value: "QfiMethod | str") -> "QfiMethod":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"exact": cls.EXACT, "exacteigen": cls.EXACT, "eigen": cls.EXACT,
                   "secular": cls.SECULAR, "fd": cls.FINITE_DIFFERENCE,
                   "echofd": cls.FINITE_DIFFERENCE, "echo": cls.FINITE_DIFFERENCE,
                   "short": cls.SHORT_TIME, "shorttime": cls.SHORT_TIME}
        if key not in aliases:
            raise ValueError(f"unknown QFI method {value!r}")
        return aliases[key]


@dataclass(frozen=True)
class QfiResult:
    """QFI value with its ``F_Q / (N t^2)`` normalization.

    ``normalized`` is ``nan`` at ``t = 0``.
    """

    value: float
    t: float
    N: int
    method: QfiMethod
    axis: PerturbationAxis
    diagnostics: dict = field(default_factory=dict)

    @property
    def normalized(self) -> float:
        if self.t == 0:
            return float("nan")
        return self.value / (self.N * self.t**2)


def _sinc(x: np.ndarray) -> np.ndarray:
    # sin(x)/x; numpy's sinc carries a factor pi
    return np.sinc(x / np.pi)


def qfi_exact_trace(
    decomp: SpectralDecomposition,
    axis: PerturbationAxis | str,
    times,
    state: DickeState,
) -> np.ndarray:
    """Exact QFI at several times sharing one eigenbasis transform."""
    axis = PerturbationAxis.parse(axis)
    H1 = decomp.transform(axis.derivative(decomp.N))
    c = decomp.coefficients(state)
    E = decomp.eigenvalues
    D = E[:, None] - E[None, :]
    out = []
    for t in np.atleast_1d(np.asarray(times, dtype=float)):
        if t == 0:
            out.append(0.0)
            continue
        half = 0.5 * D * t
        G = H1 * np.exp(1j * half) * _sinc(half)  # G_nm / t
        w = G @ c
        mean = np.vdot(c, w)
        val = 4.0 * t**2 * (np.vdot(w, w).real - abs(mean) ** 2)
        out.append(max(float(val), 0.0))
    return np.array(out)


def qfi_exact(
    decomp: SpectralDecomposition,
    axis: PerturbationAxis | str,
    t: float,
    state: DickeState,
) -> QfiResult:
    """Exact QFI from the eigendecomposition at a single time."""
    axis = PerturbationAxis.parse(axis)
    val = float(qfi_exact_trace(decomp, axis, [t], state)[0])
    return QfiResult(val, float(t), decomp.N, QfiMethod.EXACT, axis)


def qfi_secular(decomp: SpectralDecomposition, axis: PerturbationAxis | str, state: DickeState) -> float:
    """Coefficient of ``4 t^2`` in the long-time QFI: ``Var_c(H1^{nn})``.

    Returns the variance of the diagonal elements of ``dH/dlambda`` over the
    eigenbasis populations of ``state``.
    """
    axis = PerturbationAxis.parse(axis)
    diag = decomp.diagonal_elements(axis.derivative(decomp.N))
    p = np.abs(decomp.coefficients(state)) ** 2
    mean = float(np.sum(p * diag))
    return float(max(np.sum(p * (diag - mean) ** 2), 0.0))


def fidelity_deficit(a: np.ndarray, b: np.ndarray) -> float:
    """``1 - |<a|b>|`` for unit vectors, computed without cancellation.

    Uses ``1 - |<a|b>| = ||a - b e^{-i arg<a|b>}||^2 / 2``.
    """
    z = np.vdot(b, a)
    phase = z / abs(z) if abs(z) > 0 else 1.0
    diff = a - b * phase
    return 0.5 * float(np.vdot(diff, diff).real)


def loschmidt_echo(
    params: LmgParams,
    axis: PerturbationAxis | str,
    delta: float,
    t: float,
    state: DickeState,
) -> float:
    """Echo fidelity ``|<psi_{lambda+delta}(t)|psi_lambda(t)>|``."""
    axis = PerturbationAxis.parse(axis)
    a = evolve_grid(build_hamiltonian(params), state, [t])[0].amplitudes
    b = evolve_grid(build_hamiltonian(axis.shifted(params, delta)), state, [t])[0].amplitudes
    return 1.0 - fidelity_deficit(a, b)


@dataclass(frozen=True)
class StepPolicy:
    """Adaptive finite-difference step control.

    The trial step is ``initial_scale * chi / (chi t sqrt(N))`` (``1/(t sqrt N)``
    when ``chi = 0``) and is rescaled until the symmetric infidelity lies in
    ``[low, high]``. The estimate is accepted when it agrees with the
    half-step estimate within ``rtol``.
    """

    initial_scale: float = 1e-3
    low: float = 1e-8
    high: float = 1e-2
    rtol: float = 0.01
    max_iter: int = 30

    def initial_step(self, params: LmgParams, t: float) -> float:
        chi = params.chi if params.chi > 0 else 1.0
        return self.initial_scale * chi / (chi * max(abs(t), 1e-12) * np.sqrt(params.N))


def _fd_estimate(ref: np.ndarray, plus: np.ndarray, minus: np.ndarray, delta: float) -> tuple[float, float]:
    dp = fidelity_deficit(ref, plus)
    dm = fidelity_deficit(ref, minus)
    # F(d) + F(-d) - 2 = -(dp + dm)
    return 4.0 * (dp + dm) / delta**2, 0.5 * (dp + dm)


def qfi_finite_difference(
    params: LmgParams,
    axis: PerturbationAxis | str,
    t: float,
    state: DickeState,
    policy: StepPolicy | None = None,
) -> QfiResult:
    """QFI from echo fidelities of Chebyshev-propagated states.

    Raises :class:`StepNotConverged` when no step brings the infidelity into
    the policy window or the Richardson half-step check keeps failing.
    """
    axis = PerturbationAxis.parse(axis)
    policy = policy or StepPolicy()
    if t == 0:
        return QfiResult(0.0, 0.0, params.N, QfiMethod.FINITE_DIFFERENCE, axis)
    H0 = build_hamiltonian(params)
    ref = evolve_grid(H0, state, [t])[0].amplitudes

    def shifted(d: float) -> np.ndarray:
        Hd = build_hamiltonian(axis.shifted(params, d))
        return evolve_grid(Hd, state, [t], ChebyshevPlan(spectral_bounds(H=Hd)))[0].amplitudes

    delta = policy.initial_step(params, t)
    history = []
    for _ in range(policy.max_iter):
        f_full, infid = _fd_estimate(ref, shifted(delta), shifted(-delta), delta)
        history.append((delta, infid, f_full))
        if infid < policy.low:
            if infid <= 0:
                delta *= 100.0
            else:
                delta *= min(np.sqrt(np.sqrt(policy.low * policy.high) / infid), 100.0)
            continue
        if infid > policy.high:
            delta *= max(np.sqrt(np.sqrt(policy.low * policy.high) / infid), 0.01)
            continue
        half = 0.5 * delta
        f_half, infid_half = _fd_estimate(ref, shifted(half), shifted(-half), half)
        scale = max(abs(f_full), abs(f_half), 1e-300)
        if abs(f_full - f_half) <= policy.rtol * scale:
            # Richardson extrapolation removes the O(delta^2) truncation term
            value = (4.0 * f_half - f_full) / 3.0
            diag = {"delta": delta, "infidelity": infid, "half_step_value": f_half,
                    "full_step_value": f_full, "iterations": len(history)}
            return QfiResult(float(value), float(t), params.N, QfiMethod.FINITE_DIFFERENCE, axis, diag)
        if infid_half < policy.low:
            break
        delta = half
    raise StepNotConverged(f"finite-difference QFI did not converge; history={history[-3:]}")


def qfi_short_time(
    params: LmgParams,
    axis: PerturbationAxis | str,
    t: float,
    state: DickeState,
) -> QfiResult:
    """Short-time QFI ``4 Var(G)`` with ``G = t H1 + (i t^2 / 2) [H, H1]``.

    For the all-down state this reproduces ``N t^2`` (transverse) and
    ``Omega^2 N t^4 / 4`` (longitudinal).
    """
    axis = PerturbationAxis.parse(axis)
    H = build_hamiltonian(params).dense()
    H1 = axis.derivative(params.N).dense()
    G = t * H1 + 0.5j * t**2 * (H @ H1 - H1 @ H)
    v = state.amplitudes
    gv = G @ v
    mean = np.vdot(v, gv)
    val = 4.0 * (np.vdot(gv, gv).real - abs(mean) ** 2)
    return QfiResult(float(max(val, 0.0)), float(t), params.N, QfiMethod.SHORT_TIME, axis)


def compute_qfi(
    params: LmgParams,
    axis: PerturbationAxis | str,
    t: float,
    state: DickeState,
    method: QfiMethod | str = QfiMethod.EXACT,
    decomp: SpectralDecomposition | None = None,
) -> QfiResult:
    """Dispatch to one of the QFI routes."""
    method = QfiMethod.parse(method)
    axis = PerturbationAxis.parse(axis)
    if method is QfiMethod.FINITE_DIFFERENCE:
        return qfi_finite_difference(params, axis, t, state)
    if method is QfiMethod.SHORT_TIME:
        return qfi_short_time(params, axis, t, state)
    decomp = decomp or diagonalize(params)
    if method is QfiMethod.EXACT:
        return qfi_exact(decomp, axis, t, state)
    coef = qfi_secular(decomp, axis, state)
    return QfiResult(4.0 * t**2 * coef, float(t), params.N, QfiMethod.SECULAR, axis, {"coefficient": coef})


def parabolic_peak(x, y) -> tuple[float, float]:
    """Locate the maximum of sampled data with three-point parabolic refinement.

    Raises :class:`NoPeak` when the maximum sits on the boundary of the scan
    or the data are flat.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3:
        raise InsufficientPoints("need at least three samples to locate a peak")
    if not np.all(np.isfinite(y)) or np.ptp(y) <= 1e-14 * max(np.max(np.abs(y)), 1e-300):
        raise NoPeak("scan is flat or non-finite")
    k = int(np.argmax(y))
    if k == 0 or k == len(x) - 1:
        raise NoPeak(f"maximum at scan boundary x={x[k]:.6g}")
    x0, x1, x2 = x[k - 1 : k + 2]
    y0, y1, y2 = y[k - 1 : k + 2]
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
    if a >= 0:
        return float(x1), float(y1)
    xv = -b / (2 * a)
    c = y1 - a * x1**2 - b * x1
    xv = float(np.clip(xv, x0, x2))
    return xv, float(a * xv**2 + b * xv + c)


def first_transient_maximum(times, values) -> tuple[float, float]:
    """Earliest interior local maximum of a time trace, parabolically refined.

    Transient traces can carry several peaks; this returns the first one,
    ``(t*, value)``. Raises :class:`NoPeak` when the trace has no interior
    local maximum.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if len(t) < 3:
        raise InsufficientPoints("need at least three samples to locate a peak")
    for k in range(1, len(t) - 1):
        if y[k] > y[k - 1] and y[k] >= y[k + 1]:
            return parabolic_peak(t[k - 1 : k + 2], y[k - 1 : k + 2])
    raise NoPeak("trace has no interior local maximum")


@dataclass(frozen=True)
class CriticalField:
    """Peak of ``F_Q / (N t^2)`` in a transverse-field scan."""

    location: float
    peak_value: float
    grid: np.ndarray
    values: np.ndarray

    @property
    def grid_spacing(self) -> float:
        return float(np.min(np.diff(self.grid))) if len(self.grid) > 1 else float("nan")


def find_critical_field(
    base: LmgParams,
    axis: PerturbationAxis | str,
    t: float,
    state: DickeState,
    grid,
    method: QfiMethod | str = QfiMethod.EXACT,
    refine: int = 0,
) -> CriticalField:
    """Scan ``Omega`` over ``grid`` and locate the normalized QFI maximum.

    ``refine > 0`` adds a second pass of ``refine`` points spanning the two
    neighbours of the coarse maximum.
    """
    axis = PerturbationAxis.parse(axis)

    def scan(values):
        out = []
        for Om in values:
            res = compute_qfi(base.replace(Omega=float(Om)), axis, t, state, method)
            out.append(res.normalized)
        return np.array(out)

    grid = np.asarray(grid, dtype=float)
    vals = scan(grid)
    loc, peak = parabolic_peak(grid, vals)
    if refine:
        k = int(np.argmax(vals))
        fine = np.linspace(grid[k - 1], grid[k + 1], refine)
        fvals = scan(fine)
        all_x = np.concatenate([grid, fine])
        all_y = np.concatenate([vals, fvals])
        order = np.argsort(all_x)
        all_x, idx = np.unique(all_x[order], return_index=True)
        all_y = all_y[order][idx]
        loc, peak = parabolic_peak(fine, fvals)
        grid, vals = all_x, all_y
    return CriticalField(loc, peak, grid, vals)


@dataclass(frozen=True)
class ScalingFit:
    """``y = a N^b`` fitted in log-log space."""

    a: float
    b: float
    rms: float

    def __call__(self, N):
        return self.a * np.asarray(N, dtype=float) ** self.b


def scaling_fit(N_values, values) -> ScalingFit:
    """Least-squares fit of ``log y = log a + b log N``."""
    N_values = np.asarray(N_values, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(N_values) < 2:
        raise InsufficientPoints("need at least two system sizes")
    if np.any(values <= 0) or np.any(N_values <= 0):
        raise NonPositiveValue("log-log fit needs positive sizes and values")
    X = np.column_stack([np.ones_like(N_values), np.log(N_values)])
    coef, *_ = np.linalg.lstsq(X, np.log(values), rcond=None)
    resid = np.log(values) - X @ coef
    return ScalingFit(float(np.exp(coef[0])), float(coef[1]), float(np.sqrt(np.mean(resid**2))))
