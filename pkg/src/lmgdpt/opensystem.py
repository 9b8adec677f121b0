"""Collective dynamics with local dephasing in the permutation-invariant representation.

Each spin dephases at rate ``Gamma``:

    drho/dt = -i[H, rho] + (Gamma/4) sum_i (sigma_z^i rho sigma_z^i - rho).

For permutation-symmetric initial states the density matrix stays a direct sum
over total-spin sectors, ``rho = (+)_j rho_j (x) 1_{d_j}``, where ``d_j`` counts
the copies of spin ``j`` among ``N`` spin-1/2 particles. Storing one
``(2j+1) x (2j+1)`` block per ``j`` reduces memory from ``4^N`` to ``O(N^3)``.
Probabilities carry the multiplicity: ``Tr rho = sum_j d_j Tr rho_j``.

Local dephasing maps block ``j`` into ``j`` and ``j +- 1`` at fixed ``(m, m')``.
With ``Phi(rho) = sum_i sigma_z^i rho sigma_z^i`` the transfer coefficients are

* ``j -> j``:      ``(N + 2) m m' / (j (j + 1))`` (zero for ``j = 0``)
* ``j -> j - 1``:  ``(d_j / d_{j-1}) (N + 2j + 2) / (j (2j + 1)) sqrt((j^2 - m^2)(j^2 - m'^2))``
* ``j -> j + 1``:  ``(d_j / d_{j+1}) (N - 2j) / ((j + 1)(2j + 1)) sqrt(((j+1)^2 - m^2)((j+1)^2 - m'^2))``

These follow from the Wigner-Eckart theorem for the rank-one operator
``sigma_z^i`` together with trace preservation, and are checked against a
brute-force solver on the full ``2^N`` space for small ``N``.

Time stepping uses a fixed-step Taylor expansion of ``exp(L dt)`` of
adjustable order. For a linear autonomous generator, order 4 coincides with
classical RK4.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.special import comb

from .errors import DimensionMismatch, PositivityViolation, StepNotConverged, TraceDrift, ZeroVariance
from .spin import DickeState, LmgParams, PerturbationAxis, ladder_elements
from .echo import SensitivityResult

__all__ = [
    "dicke_degeneracy",
    "BlockLayout",
    "BlockDensityMatrix",
    "LindbladStepper",
    "block_spin_operator",
    "liouvillian",
    "lindblad_evolve",
    "collective_moments",
    "brute_force_master_equation",
    "brute_force_echo",
    "open_echo_sensitivity",
    "open_order_parameter",
    "taylor_step_budget",
]

TRACE_TOLERANCE = 1e-7
POSITIVITY_TOLERANCE = 1e-8


def dicke_degeneracy(N: int, j: float) -> float:
    """Number of spin-``j`` multiplets among ``N`` spin-1/2 particles."""
    k = int(round(N / 2 - j))
    if k < 0 or 2 * j < 0 or abs(N / 2 - j - k) > 1e-9:
        return 0.0
    return float(comb(N, k, exact=True) - (comb(N, k - 1, exact=True) if k >= 1 else 0))


@dataclass(frozen=True, eq=False)
class BlockLayout:
    """Ordering of spin sectors ``j = N/2, N/2 - 1, ...`` and their flattened offsets."""

    N: int

    @cached_property
    def js(self) -> np.ndarray:
        return np.arange(self.N / 2, -0.25, -1.0)

    @cached_property
    def dims(self) -> np.ndarray:
        return (2 * self.js + 1).round().astype(int)

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.dims**2)])

    @cached_property
    def degeneracies(self) -> np.ndarray:
        return np.array([dicke_degeneracy(self.N, j) for j in self.js])

    @property
    def size(self) -> int:
        return int(self.offsets[-1])

    @cached_property
    def weights(self) -> np.ndarray:
        """Per-entry multiplicity, so ``<X, Y> = sum w conj(x) y`` is ``Tr(X^dagger Y)``."""
        return np.repeat(self.degeneracies, self.dims**2)

    def block(self, vec: np.ndarray, k: int) -> np.ndarray:
        n = self.dims[k]
        return vec[self.offsets[k] : self.offsets[k + 1]].reshape(n, n)

    def flatten(self, blocks: list[np.ndarray]) -> np.ndarray:
        if len(blocks) != len(self.js):
            raise DimensionMismatch("wrong number of blocks")
        return np.concatenate([np.asarray(b, dtype=complex).ravel() for b in blocks])

    def inner(self, x: np.ndarray, y: np.ndarray) -> complex:
        return complex(np.sum(self.weights * np.conj(x) * y))


def _spin_matrices(j: float) -> dict[str, np.ndarray]:
    two_j = int(round(2 * j))
    m = np.arange(two_j + 1) - j
    off = ladder_elements(two_j)
    sx = np.diag(off, -1) + np.diag(off, 1)
    sy = np.diag(-1j * off, -1) + np.diag(1j * off, 1)
    sz = np.diag(m)
    return {"x": sx.astype(complex), "y": sy, "z": sz.astype(complex)}


_ALIASES = {"sx": "x", "sy": "y", "sz": "z"}


def block_spin_operator(layout: BlockLayout, name: str) -> np.ndarray:
    """Flattened block representation of a collective operator.

    ``name`` is one of ``x, y, z`` or a product such as ``xy`` (meaning
    ``S_x S_y``) or ``yy``.
    """
    key = _ALIASES.get(name.lower(), name.lower())
    blocks = []
    for j in layout.js:
        mats = _spin_matrices(j)
        out = np.eye(int(round(2 * j + 1)), dtype=complex)
        for c in key:
            out = out @ mats[c]
        blocks.append(out)
    return layout.flatten(blocks)


@dataclass(frozen=True, eq=False)
class BlockDensityMatrix:
    """Permutation-invariant density matrix stored as flattened spin sectors."""

    layout: BlockLayout
    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=complex)
        if data.shape != (self.layout.size,):
            raise DimensionMismatch(f"expected {self.layout.size} entries, got {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def N(self) -> int:
        return self.layout.N

    @classmethod
    def from_pure(cls, state: DickeState) -> "BlockDensityMatrix":
        layout = BlockLayout(state.N)
        data = np.zeros(layout.size, dtype=complex)
        v = state.amplitudes
        data[: layout.offsets[1]] = np.outer(v, v.conj()).ravel()
        return cls(layout, data)

    def block(self, k: int) -> np.ndarray:
        return self.layout.block(self.data, k)

    def blocks(self) -> dict[float, np.ndarray]:
        return {float(j): self.block(k) for k, j in enumerate(self.layout.js)}

    def trace(self) -> float:
        return float(sum(d * np.trace(self.block(k)).real
                         for k, d in enumerate(self.layout.degeneracies)))

    def expectation(self, name: str) -> float:
        """Real part of ``Tr(O rho)`` for a collective operator or product (see :func:`block_spin_operator`)."""
        op = block_spin_operator(self.layout, name)
        total = 0.0
        for k, d in enumerate(self.layout.degeneracies):
            total += d * np.trace(self.layout.block(op, k) @ self.block(k))
        return float(np.real(total))

    def min_eigenvalue(self) -> float:
        """Smallest eigenvalue over blocks, weighted by the sector multiplicity."""
        worst = 0.0
        for k, d in enumerate(self.layout.degeneracies):
            b = self.block(k)
            herm = 0.5 * (b + b.conj().T)
            worst = min(worst, float(np.linalg.eigvalsh(herm)[0]) * d)
        return worst

    def hermiticity_error(self) -> float:
        return max(float(np.abs(self.block(k) - self.block(k).conj().T).max())
                   for k in range(len(self.layout.js)))

    def check(self, trace_tol: float = TRACE_TOLERANCE, positivity_tol: float = POSITIVITY_TOLERANCE) -> None:
        tr = self.trace()
        if abs(tr - 1.0) > trace_tol:
            raise TraceDrift(f"trace {tr:.12f} deviates from 1 by more than {trace_tol:.0e}")
        lam = self.min_eigenvalue()
        if lam < -positivity_tol:
            raise PositivityViolation(f"block eigenvalue {lam:.3e} below -{positivity_tol:.0e}")


def _block_hamiltonian(j: float, params: LmgParams) -> np.ndarray:
    mats = _spin_matrices(j)
    sz = mats["z"].real
    return (-(params.chi / params.N) * sz @ sz - params.Omega * mats["x"].real
            - params.omega * sz)


def _dephasing_coefficients(layout: BlockLayout):
    """Yield ``(target_k, source_k, coefficient_matrix)`` for ``Phi`` at fixed ``(m, m')``.

    Coefficient matrices are indexed in the target block's ``(m, m')`` order.
    """
    N = layout.N
    js = layout.js
    deg = layout.degeneracies
    out = []
    for k, j in enumerate(js):
        n = layout.dims[k]
        m = np.arange(n) - j
        if j > 0:
            out.append((k, k, (N + 2) * np.outer(m, m) / (j * (j + 1))))
        # source j -> target j - 1 (next block in layout order)
        if k + 1 < len(js):
            jt = js[k + 1]
            mt = np.arange(layout.dims[k + 1]) - jt
            f = np.sqrt(np.maximum(j * j - mt**2, 0.0))
            c = deg[k] / deg[k + 1] * (N + 2 * j + 2) / (j * (2 * j + 1))
            out.append((k + 1, k, c * np.outer(f, f)))
        # source j -> target j + 1 (previous block)
        if k >= 1:
            jt = js[k - 1]
            mt = np.arange(layout.dims[k - 1]) - jt
            f = np.sqrt(np.maximum((j + 1) ** 2 - mt**2, 0.0)) * (np.abs(mt) <= j)
            c = deg[k] / deg[k - 1] * (N - 2 * j) / ((j + 1) * (2 * j + 1))
            out.append((k - 1, k, c * np.outer(f, f)))
    return out


def liouvillian(params: LmgParams, gamma: float, layout: BlockLayout | None = None) -> sp.csr_matrix:
    """Sparse generator on the flattened block vector (row-major blocks)."""
    layout = layout or BlockLayout(params.N)
    if layout.N != params.N:
        raise DimensionMismatch("layout and parameters disagree on N")
    rows, cols, vals = [], [], []
    for k, j in enumerate(layout.js):
        n = layout.dims[k]
        off = layout.offsets[k]
        Hj = sp.csr_matrix(_block_hamiltonian(j, params))
        eye = sp.identity(n, format="csr")
        comm = (-1j * (sp.kron(Hj, eye) - sp.kron(eye, Hj.T))).tocoo()
        rows.append(comm.row + off)
        cols.append(comm.col + off)
        vals.append(comm.data)
        diag_idx = np.arange(n * n) + off
        rows.append(diag_idx)
        cols.append(diag_idx)
        vals.append(np.full(n * n, -0.25 * gamma * params.N, dtype=complex))
    if gamma != 0:
        for kt, ks, coef in _dephasing_coefficients(layout):
            nt = layout.dims[kt]
            ns = layout.dims[ks]
            jt, js_ = layout.js[kt], layout.js[ks]
            mt = np.arange(nt) - jt
            # source indices for the same (m, m')
            src = np.round(mt + js_).astype(int)
            valid = (src >= 0) & (src < ns)
            a, b = np.meshgrid(np.nonzero(valid)[0], np.nonzero(valid)[0], indexing="ij")
            sa, sb = src[a], src[b]
            c = coef[a, b].ravel()
            keep = c != 0
            rows.append((layout.offsets[kt] + a * nt + b).ravel()[keep])
            cols.append((layout.offsets[ks] + sa * ns + sb).ravel()[keep])
            vals.append(0.25 * gamma * c[keep].astype(complex))
    L = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(layout.size, layout.size))
    return L.tocsr()


def _theta_for_order(order: int, tol: float = 1e-12) -> float:
    if order == 4:
        return 0.1
    return (tol * math.factorial(order + 1)) ** (1.0 / (order + 1))


def taylor_step_budget(params: LmgParams, gamma: float, order: int) -> float:
    """Largest step with ``dt * (spectral spread + Gamma N / 2) <= theta(order)``.

    ``theta(4) = 0.1`` gives the classical RK4 budget; higher orders use the
    value where the truncated Taylor remainder of one step drops to ``1e-12``.
    """
    layout = BlockLayout(params.N)
    spread = 0.0
    for j in layout.js:
        ev = np.linalg.eigvalsh(_block_hamiltonian(j, params))
        spread = max(spread, ev[-1] - ev[0])
    radius = spread + 0.5 * gamma * params.N
    return _theta_for_order(order) / max(radius, 1e-12)


@dataclass
class LindbladStepper:
    """Fixed-step Taylor integrator for the block master equation."""

    params: LmgParams
    gamma: float
    order: int = 20
    dt: float | None = None
    heisenberg: bool = False
    layout: BlockLayout = field(init=False)

    def __post_init__(self) -> None:
        if self.gamma < 0:
            raise ValueError("dephasing rate must be non-negative")
        if self.order < 1:
            raise ValueError("integrator order must be positive")
        self.layout = BlockLayout(self.params.N)
        budget = taylor_step_budget(self.params, self.gamma, self.order)
        if self.dt is None:
            self.dt = budget
        self._L = liouvillian(self.params, self.gamma, self.layout)
        if self.heisenberg:
            # the dephasing part is self-adjoint under the multiplicity-weighted
            # inner product, so only the commutator changes sign
            coherent = liouvillian(self.params, 0.0, self.layout)
            self._L = (self._L - 2.0 * coherent).tocsr()

    @property
    def generator(self) -> sp.csr_matrix:
        return self._L

    def step(self, y: np.ndarray, dt: float) -> np.ndarray:
        acc = y.copy()
        term = y
        for k in range(1, self.order + 1):
            term = (self._L @ term) * (dt / k)
            acc += term
        return acc

    def propagate(self, y: np.ndarray, t: float) -> np.ndarray:
        nsteps = max(int(math.ceil(abs(t) / self.dt - 1e-9)), 1) if t else 0
        h = t / nsteps if nsteps else 0.0
        for _ in range(nsteps):
            y = self.step(y, h)
        return y


def lindblad_evolve(
    stepper: LindbladStepper,
    rho0: BlockDensityMatrix,
    times,
    check: bool = True,
    halving_tolerance: float | None = None,
) -> list[BlockDensityMatrix]:
    """Density matrices at the requested (increasing, non-negative) times.

    With ``halving_tolerance`` the evolution is repeated at half the step and
    :class:`StepNotConverged` is raised when any returned state moves by more
    than that amount in the flattened 2-norm.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(np.diff(times) < 0) or np.any(times < 0):
        raise ValueError("times must be non-negative and increasing")
    y = rho0.data.copy()
    out = []
    now = 0.0
    for t in times:
        y = stepper.propagate(y, t - now)
        now = t
        rho = BlockDensityMatrix(rho0.layout, y.copy())
        if check:
            rho.check()
        out.append(rho)
    if halving_tolerance is not None:
        fine = LindbladStepper(stepper.params, stepper.gamma, stepper.order, stepper.dt / 2,
                               stepper.heisenberg)
        for a, b in zip(out, lindblad_evolve(fine, rho0, times, check=False)):
            gap = float(np.linalg.norm(a.data - b.data))
            if gap > halving_tolerance:
                raise StepNotConverged(f"halving the step moved the state by {gap:.2e}")
    return out


MOMENT_NAMES = ("x", "y", "z", "xx", "yy", "zz", "xy", "yz", "zx")


def _symmetrized(values: dict[str, complex]) -> dict[str, float]:
    out = {k: float(np.real(values[k])) for k in ("x", "y", "z", "xx", "yy", "zz")}
    out["xy"] = float(np.real(values["xy"] + values["yx"])) / 2
    out["yz"] = float(np.real(values["yz"] + values["zy"])) / 2
    out["zx"] = float(np.real(values["zx"] + values["xz"])) / 2
    return out


def collective_moments(rho: BlockDensityMatrix) -> dict[str, float]:
    """First moments and symmetrized second moments of the collective spin."""
    names = ("x", "y", "z", "xx", "yy", "zz", "xy", "yx", "yz", "zy", "zx", "xz")
    raw = {}
    for n in names:
        blocks = []
        for k, j in enumerate(rho.layout.js):
            mats = _spin_matrices(j)
            op = np.eye(rho.layout.dims[k], dtype=complex)
            for c in n:
                op = op @ mats[c]
            blocks.append(np.trace(op @ rho.block(k)) * rho.layout.degeneracies[k])
        raw[n] = sum(blocks)
    return _symmetrized(raw)


def _full_space_operators(N: int):
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]])
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    ops = {}
    for name, s in (("x", sx), ("y", sy), ("z", sz)):
        total = np.zeros((2**N, 2**N), dtype=complex)
        for i in range(N):
            mats = [np.eye(2)] * N
            mats[i] = s
            term = mats[0]
            for mm in mats[1:]:
                term = np.kron(term, mm)
            total += term
        ops[name] = 0.5 * total
    return ops


class _BruteForce:
    """Dense ``2^N`` density-matrix integrator used as an independent oracle."""

    NAMES = ("x", "y", "z", "xx", "yy", "zz", "xy", "yx", "yz", "zy", "zx", "xz")

    def __init__(self, N: int, rtol: float = 1e-12, atol: float = 1e-13):
        if N > 8:
            raise ValueError("brute-force solver is limited to N <= 8")
        self.N = N
        self.dim = 2**N
        self.ops = _full_space_operators(N)
        bits = (np.arange(self.dim)[:, None] >> np.arange(N)[::-1][None, :]) & 1
        s = 1 - 2 * bits  # bit 0 -> up (+1)
        # sum_i sigma_z^i rho sigma_z^i acts elementwise with sum_i s_i(a) s_i(b)
        self.C = (s @ s.T).astype(float)
        self.rtol = rtol
        self.atol = atol

    def hamiltonian(self, params: LmgParams) -> np.ndarray:
        o = self.ops
        return -(params.chi / self.N) * o["z"] @ o["z"] - params.Omega * o["x"] - params.omega * o["z"]

    def product_state(self, theta: float, phi: float) -> np.ndarray:
        single = np.array([np.cos(theta / 2) * np.exp(-1j * phi), np.sin(theta / 2)])
        psi = single
        for _ in range(self.N - 1):
            psi = np.kron(psi, single)
        return np.outer(psi, psi.conj())

    def evolve(self, rho0: np.ndarray, H: np.ndarray, gamma: float, times) -> list[np.ndarray]:
        dim, N, C = self.dim, self.N, self.C

        def rhs(_t, y):
            rho = y.view(complex).reshape(dim, dim)
            d = -1j * (H @ rho - rho @ H) + 0.25 * gamma * (C * rho - N * rho)
            return d.ravel().view(float)

        times = np.atleast_1d(np.asarray(times, dtype=float))
        sol = solve_ivp(rhs, (0.0, float(times[-1])), rho0.ravel().view(float), method="DOP853",
                        t_eval=times, rtol=self.rtol, atol=self.atol)
        return [np.ascontiguousarray(sol.y[:, k]).view(complex).reshape(dim, dim)
                for k in range(len(times))]

    def moments(self, rho: np.ndarray) -> dict[str, float]:
        raw = {}
        for n in self.NAMES:
            op = np.eye(self.dim, dtype=complex)
            for c in n:
                op = op @ self.ops[c]
            raw[n] = np.trace(op @ rho)
        return _symmetrized(raw)


def brute_force_master_equation(
    N: int,
    params: LmgParams,
    gamma: float,
    theta: float,
    phi: float,
    times,
) -> list[dict[str, float]]:
    """Collective moments from the full ``2^N`` density matrix (small ``N`` only).

    The initial state is the product of identical single-spin states
    ``cos(theta/2) e^{-i phi}|up> + sin(theta/2)|down>``; the equation of motion is
    integrated with an explicit eighth-order Runge-Kutta method.
    """
    bf = _BruteForce(N)
    rhos = bf.evolve(bf.product_state(theta, phi), bf.hamiltonian(params), gamma, times)
    return [bf.moments(r) for r in rhos]


def brute_force_echo(
    N: int,
    params: LmgParams,
    gamma: float,
    axis: PerturbationAxis | str,
    delta: float,
    t: float,
    theta: float,
    phi: float,
    backward_gamma: float | None = None,
) -> dict[str, float]:
    """Collective moments after a dephased echo, computed on the full ``2^N`` space."""
    axis = PerturbationAxis.parse(axis)
    bf = _BruteForce(N)
    rho = bf.product_state(theta, phi)
    g_back = gamma if backward_gamma is None else backward_gamma
    if t > 0:
        rho = bf.evolve(rho, bf.hamiltonian(axis.shifted(params, 0.5 * delta)), gamma, [t])[0]
        rho = bf.evolve(rho, -bf.hamiltonian(axis.shifted(params, -0.5 * delta)), g_back, [t])[0]
    return bf.moments(rho)


def _default_echo_step(params: LmgParams, t_max: float) -> float:
    chi = params.chi if params.chi > 0 else 1.0
    return 0.1 * chi / (chi * max(t_max, 1e-12) * np.sqrt(params.N))


def open_echo_sensitivity(
    params: LmgParams,
    gamma: float,
    axis: PerturbationAxis | str,
    times,
    state: DickeState,
    observable: str = "y",
    delta: float = 0.0,
    step: float | None = None,
    order: int = 20,
    richardson: bool = False,
    rtol: float = 0.01,
    backward_gamma: float | None = None,
) -> list[SensitivityResult]:
    """Echo sensitivity under dephasing at every time in ``times``.

    Both echo arms last ``t`` and dephasing acts throughout. Instead of
    running a separate echo per duration, the forward state and the
    Heisenberg-picture observables are evolved together:

        <M>(t) = < exp(L[H_-] t) M , exp(L[H_+] t) rho0 >

    where ``H_+-`` are the forward and backward Hamiltonians and ``L[H]`` is the
    Schroedinger-picture generator. The same identity with ``M^2`` gives the
    variance. One pass over the time grid thus yields every sample.

    With ``richardson`` the slope is also computed with half the step and
    the two must agree within ``rtol``. ``backward_gamma`` sets a separate
    dephasing rate for the backward arm; by default both arms dephase at
    ``gamma``.
    """
    axis = PerturbationAxis.parse(axis)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValueError("times must be increasing and non-negative")
    layout = BlockLayout(params.N)
    h = step if step is not None else _default_echo_step(params, float(times[-1]))
    shifts = [delta + h, delta - h, delta]
    if richardson:
        shifts += [delta + 0.5 * h, delta - 0.5 * h]

    rho0 = BlockDensityMatrix.from_pure(state).data
    m_op = block_spin_operator(layout, observable)
    m2_op = block_spin_operator(layout, observable * 2)

    g_back = gamma if backward_gamma is None else backward_gamma
    if g_back < 0:
        raise ValueError("dephasing rate must be non-negative")
    # vectors grouped by the (field shift, dephasing rate) of the generator that evolves them
    groups: dict[tuple[float, float], list[tuple[str, float]]] = {}
    for d in shifts:
        groups.setdefault((0.5 * d, gamma), []).append(("rho", d))
        groups.setdefault((-0.5 * d, g_back), []).append(("m", d))
    groups.setdefault((-0.5 * delta, g_back), []).append(("m2", delta))

    steppers = {}
    stacks = {}
    index = {}
    for (f, g), members in groups.items():
        st = LindbladStepper(axis.shifted(params, f), g, order=order)
        steppers[(f, g)] = st
        cols = []
        for col, (kind, d) in enumerate(members):
            cols.append(rho0 if kind == "rho" else (m_op if kind == "m" else m2_op))
            index[(kind, d)] = ((f, g), col)
        stacks[(f, g)] = np.column_stack(cols).astype(complex)

    w = layout.weights
    trace_mask = np.zeros(layout.size)
    for k, n in enumerate(layout.dims):
        trace_mask[layout.offsets[k] + np.arange(n) * (n + 1)] = layout.degeneracies[k]

    def get(kind: str, d: float) -> np.ndarray:
        f, col = index[(kind, d)]
        return stacks[f][:, col]

    def expect(d: float, kind: str = "m") -> float:
        return float(np.real(np.sum(w * np.conj(get(kind, d)) * get("rho", d))))

    dt_common = min(st.dt for st in steppers.values())
    results = []
    now = 0.0
    for t in times:
        span = t - now
        if span > 0:
            nsteps = max(int(math.ceil(span / dt_common - 1e-9)), 1)
            hstep = span / nsteps
            for f, st in steppers.items():
                y = stacks[f]
                for _ in range(nsteps):
                    y = st.step(y, hstep)
                stacks[f] = y
        now = t
        for d in shifts:
            tr = float(np.real(trace_mask @ get("rho", d)))
            if abs(tr - 1.0) > TRACE_TOLERANCE:
                raise TraceDrift(f"trace {tr:.12f} at t={t}")
        mean_c = expect(delta)
        var_c = expect(delta, "m2") - mean_c**2
        if t == 0:
            results.append(SensitivityResult(0.0, 0.0, params.N, observable, 0.0, var_c, var_c, h))
            continue
        if var_c <= 0:
            raise ZeroVariance(f"Var({observable}) vanishes at t={t}")
        slope = (expect(delta + h) - expect(delta - h)) / (2 * h)
        diag = {"mean": mean_c, "gamma": gamma}
        if richardson:
            half = (expect(delta + 0.5 * h) - expect(delta - 0.5 * h)) / h
            diag["slope_half"] = half
            diag["richardson_ok"] = abs(half - slope) <= rtol * max(abs(half), 1e-300)
            slope = (4 * half - slope) / 3
        results.append(SensitivityResult(slope**2 / var_c, float(t), params.N, observable,
                                         slope, var_c, var_c, h, diag))
    return results


def open_order_parameter(
    params: LmgParams,
    gamma: float,
    state: DickeState,
    T: float,
    samples: int = 201,
    order: int = 20,
) -> float:
    """Time average of ``<S_z> / (N/2)`` over ``[0, T]`` (trapezoidal rule)."""
    stepper = LindbladStepper(params, gamma, order=order)
    times = np.linspace(0.0, T, samples)
    rhos = lindblad_evolve(stepper, BlockDensityMatrix.from_pure(state), times)
    sz = np.array([r.expectation("z") for r in rhos]) / (params.N / 2)
    return float(np.trapezoid(sz, times) / T)
