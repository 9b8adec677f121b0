"""Per-kind task enumeration and point evaluators.

A task is a plain dict of grid values. Evaluators are module-level functions
so that worker processes can import them; each returns a list of row dicts
(several rows when a task covers a whole time trace).
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from ..echo import sensitivity_time_maximum, sensitivity_trace
from ..errors import LmgError, NoBarrier
from ..meanfield import barrier_height, bloch_evolve, classify_phase, time_averaged_sz
from ..opensystem import open_echo_sensitivity
from ..qfi import compute_qfi, find_critical_field
from ..spectrum import diagonalize, eqpt_profile, fit_eqpt_exponent, predicted_qfi_exponent
from ..spin import LmgParams, coherent_state

__all__ = ["SCHEMA_VERSION", "COLUMNS", "TASK_KEYS", "enumerate_tasks", "evaluate", "empty_rows", "fit_scaling_rows", "transient_maxima"]

SCHEMA_VERSION = "1"

# grid dimensions that define one task; the remaining grids are handled inside it
TASK_KEYS = {
    "phase-diagram": ("Omega", "omega", "theta", "phi"),
    "qfi-sweep": ("N", "Omega", "omega", "theta", "phi", "t", "axis"),
    "scaling": ("axis", "N", "omega", "theta", "phi", "t"),
    "spectrum": ("N", "Omega", "omega", "theta", "phi", "axis", "window"),
    "echo": ("N", "Omega", "omega", "theta", "phi", "axis"),
    "open-sweep": ("N", "Omega", "omega", "theta", "phi", "gamma", "axis"),
}

COLUMNS = {
    "phase-diagram": ["chi", "Omega", "omega", "theta", "phi", "T", "Sz_bar", "phase",
                      "barrier", "barrier_phase", "error_flag"],
    "qfi-sweep": ["N", "chi", "Omega", "omega", "theta", "phi", "t", "axis", "method",
                  "F_Q", "F_Q_normalized", "error_flag"],
    "scaling": ["N", "chi", "omega", "theta", "phi", "t", "axis", "quantity", "Omega_star",
                "peak_normalized", "peak_value", "grid_spacing", "error_flag"],
    "spectrum": ["N", "chi", "Omega", "omega", "theta", "phi", "axis", "window", "gamma",
                 "A", "B", "n_points", "E_cr", "delta_E", "predicted_exponent", "error_flag"],
    "echo": ["N", "chi", "Omega", "omega", "theta", "phi", "axis", "observable", "delta", "t",
             "inverse_variance", "normalized", "slope", "variance", "variance_mismatch",
             "is_time_max", "t_max", "max_normalized", "error_flag"],
    "open-sweep": ["N", "chi", "Omega", "omega", "theta", "phi", "gamma", "axis", "observable",
                   "t", "inverse_variance", "normalized", "slope", "variance", "is_time_max",
                   "t_max", "max_normalized", "error_flag"],
}


def enumerate_tasks(kind: str, grids: dict) -> list[dict]:
    """Cartesian product of the task grids in a fixed, documented order."""
    keys = TASK_KEYS[kind]
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grids[k] for k in keys))]


def _params(task: dict, chi: float, Omega: float | None = None) -> LmgParams:
    return LmgParams(int(task.get("N", 1)), chi, float(task["Omega"] if Omega is None else Omega),
                     float(task["omega"]))


def _base_row(kind: str, task: dict, chi: float, options: dict) -> dict:
    row = {c: "" for c in COLUMNS[kind]}
    row.update({k: v for k, v in task.items() if k in row})
    row["chi"] = chi
    for key in ("method", "observable", "quantity", "T", "delta"):
        if key in row and key in options:
            row[key] = options[key]
    row["error_flag"] = ""
    return row


def _phase_diagram(task, chi, options, grids):
    row = _base_row("phase-diagram", task, chi, options)
    p = _params(task, chi)
    T = float(options["T"])
    traj = bloch_evolve(task["theta"], task["phi"], p, T, stride=10)
    sz = time_averaged_sz(traj)
    row["Sz_bar"] = sz
    row["phase"] = classify_phase(sz, float(options["threshold"]))
    try:
        b = barrier_height(task["theta"], task["phi"], p)
        row["barrier"] = b
        row["barrier_phase"] = "ordered" if b > 0 else "disordered"
    except NoBarrier:
        row["barrier"] = float("nan")
        row["barrier_phase"] = "disordered"
    return [row]


def _qfi_sweep(task, chi, options, grids):
    row = _base_row("qfi-sweep", task, chi, options)
    p = _params(task, chi)
    psi = coherent_state(p.N, task["theta"], task["phi"])
    res = compute_qfi(p, task["axis"], task["t"], psi, options["method"])
    row["F_Q"] = res.value
    row["F_Q_normalized"] = res.normalized
    return [row]


def _echo_peak_over_omega(task, chi, options, grid):
    vals = []
    psi = coherent_state(int(task["N"]), task["theta"], task["phi"])
    for Om in grid:
        p = _params(task, chi, Om)
        r = sensitivity_trace(p, task["axis"], [task["t"]], psi, options["observable"])[0]
        vals.append(r.normalized)
    vals = np.array(vals)
    k = int(np.argmax(vals))
    return float(grid[k]), float(vals[k])


def _scaling(task, chi, options, grids):
    row = _base_row("scaling", task, chi, options)
    grid = np.asarray(grids["Omega"], dtype=float)
    N, t = int(task["N"]), float(task["t"])
    if options["quantity"] == "qfi":
        base = LmgParams(N, chi, float(grid[0]), float(task["omega"]))
        psi = coherent_state(N, task["theta"], task["phi"])
        cf = find_critical_field(base, task["axis"], t, psi, grid, options["method"],
                                 refine=int(options["refine"]))
        loc, peak, spacing = cf.location, cf.peak_value, cf.grid_spacing
    elif options["quantity"] == "echo":
        loc, peak = _echo_peak_over_omega(task, chi, options, grid)
        spacing = float(np.min(np.diff(grid))) if len(grid) > 1 else float("nan")
    else:
        raise LmgError(f"unknown scaling quantity {options['quantity']!r}")
    row.update(Omega_star=loc, peak_normalized=peak, peak_value=peak * N * t**2, grid_spacing=spacing)
    return [row]


def _spectrum(task, chi, options, grids):
    row = _base_row("spectrum", task, chi, options)
    p = _params(task, chi)
    psi = coherent_state(p.N, task["theta"], task["phi"])
    prof = eqpt_profile(diagonalize(p), psi)
    weighted = str(options.get("weighted", "yes")).lower() not in ("no", "false")
    fit = fit_eqpt_exponent(prof, task["axis"], float(task["window"]), weighted=weighted)
    row.update(gamma=fit.gamma, A=fit.A, B=fit.B, n_points=fit.n_points, E_cr=prof.e_cr,
               delta_E=prof.delta_e)
    row["predicted_exponent"] = predicted_qfi_exponent(fit.gamma) if 0 < fit.gamma < 2 else float("nan")
    return [row]


def _trace_rows(kind, task, chi, options, times, results):
    best = sensitivity_time_maximum(results) if any(r.inverse_variance > 0 for r in results) else None
    rows = []
    for t, r in zip(times, results):
        row = _base_row(kind, task, chi, options)
        row.update(t=t, inverse_variance=r.inverse_variance, normalized=r.normalized,
                   slope=r.slope, variance=r.variance, is_time_max=int(best is not None and r is best.sample),
                   t_max=best.t if best else float("nan"), max_normalized=best.value if best else float("nan"))
        if "variance_mismatch" in row:
            row["variance_mismatch"] = int(r.variance_mismatch)
        rows.append(row)
    return rows


def _echo(task, chi, options, grids):
    p = _params(task, chi)
    psi = coherent_state(p.N, task["theta"], task["phi"])
    times = [float(t) for t in grids["t"]]
    res = sensitivity_trace(p, task["axis"], times, psi, options["observable"],
                            delta=float(options["delta"]), method=options["method"])
    return _trace_rows("echo", task, chi, options, times, res)


def _open_sweep(task, chi, options, grids):
    p = _params(task, chi)
    psi = coherent_state(p.N, task["theta"], task["phi"])
    times = sorted(float(t) for t in grids["t"])
    back = options.get("backward_gamma")
    res = open_echo_sensitivity(p, float(task["gamma"]), task["axis"], times, psi,
                                options["observable"], order=int(options["order"]),
                                backward_gamma=None if back is None else float(back))
    return _trace_rows("open-sweep", task, chi, options, times, res)


_EVALUATORS = {
    "phase-diagram": _phase_diagram,
    "qfi-sweep": _qfi_sweep,
    "scaling": _scaling,
    "spectrum": _spectrum,
    "echo": _echo,
    "open-sweep": _open_sweep,
}


def empty_rows(kind: str, task: dict, chi: float, options: dict, grids: dict, flag: str) -> list[dict]:
    """Placeholder rows for a failed task, with ``nan`` results and the error recorded."""
    times = sorted(float(t) for t in grids["t"]) if kind in ("echo", "open-sweep") else [None]
    rows = []
    for t in times:
        row = _base_row(kind, task, chi, options)
        for c in COLUMNS[kind]:
            if row[c] == "" and c != "error_flag":
                row[c] = float("nan")
        if t is not None:
            row["t"] = t
        row["error_flag"] = flag
        rows.append(row)
    return rows


def evaluate(kind: str, task: dict, chi: float, options: dict, grids: dict) -> list[dict]:
    """Run one task; errors become flagged rows rather than exceptions."""
    try:
        return _EVALUATORS[kind](task, chi, options, grids)
    except (LmgError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        flag = f"{type(exc).__name__}: {exc}".replace("\n", " ")[:200]
        return empty_rows(kind, task, chi, options, grids, flag)


def fit_scaling_rows(rows: list[dict]) -> list[dict]:
    """Log-log exponent of the peak value against ``N`` for every other grid combination."""
    from ..qfi import scaling_fit

    keys = ("axis", "omega", "theta", "phi", "t", "quantity")
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for combo, members in groups.items():
        good = [r for r in members if not r["error_flag"]
                and math.isfinite(r["peak_value"]) and r["peak_value"] > 0]
        if len(good) >= 2:
            fit = scaling_fit([r["N"] for r in good], [r["peak_value"] for r in good])
            out.append({**dict(zip(keys, combo)), "a": fit.a, "b": fit.b, "rms": fit.rms,
                        "N": [r["N"] for r in good]})
    return out


def transient_maxima(rows: list[dict]) -> list[dict]:
    """First transient maximum ``t*`` of ``F_Q/(N t^2)`` for each qfi-sweep trace."""
    from ..errors import NoPeak
    from ..qfi import first_transient_maximum

    keys = ("N", "Omega", "omega", "theta", "phi", "axis")
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        if not r["error_flag"]:
            groups.setdefault(tuple(r[k] for k in keys), []).append(r)
    out = []
    for combo, members in groups.items():
        members = sorted(members, key=lambda r: r["t"])
        entry = dict(zip(keys, combo))
        try:
            t_star, value = first_transient_maximum([r["t"] for r in members],
                                                    [r["F_Q_normalized"] for r in members])
            entry.update(t_star=t_star, value=value)
        except (NoPeak, LmgError):
            entry.update(t_star=None, value=None)
        out.append(entry)
    return out


def wigner_tables(task: dict, chi: float, options: dict) -> dict:
    """Wigner samples of the initial, half-echo and final states for one echo task."""
    from ..echo import EchoSpec, echo_state
    from ..propagator import evolve_grid
    from ..spin import build_hamiltonian
    from ..wigner import wigner_polar_samples

    p = _params(task, chi)
    psi = coherent_state(p.N, task["theta"], task["phi"])
    spec = EchoSpec(p, task["axis"], float(options["wigner_delta"]), float(options["wigner_t"]))
    mid = evolve_grid(build_hamiltonian(spec.forward_params), psi, [spec.t])[0]
    final = echo_state(spec, psi)
    n_theta = int(options.get("wigner_n_theta", 61))
    n_phi = int(options.get("wigner_n_phi", 72))
    return {name: wigner_polar_samples(s, n_theta, n_phi)
            for name, s in (("initial", psi), ("intermediate", mid), ("final", final))}
