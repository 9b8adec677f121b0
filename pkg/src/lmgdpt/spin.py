"""Collective spin algebra in the symmetric (Dicke) subspace.

States of ``N`` spin-1/2 particles with maximal total spin ``S = N/2`` are
stored as complex vectors of length ``N + 1``. Index ``k`` holds the
amplitude of ``|S, m>`` with ``m = k - S``, so index 0 is the all-down state.

All collective operators used here are Hermitian and tridiagonal in this
basis and are stored as a real diagonal plus a complex lower band.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import gammaln, xlogy

from .errors import DimensionMismatch

__all__ = [
    "LmgParams",
    "DickeState",
    "CollectiveOperator",
    "PerturbationAxis",
    "magnetic_numbers",
    "ladder_elements",
    "spin_x",
    "spin_y",
    "spin_z",
    "build_hamiltonian",
    "coherent_state",
    "expectation",
    "variance",
]


@dataclass(frozen=True)
class LmgParams:
    """Parameters of the collective Hamiltonian

    ``H = -(chi/N) Sz^2 - Omega Sx - omega Sz``.

    :param N: number of spins (positive integer).
    :param chi: interaction strength, non-negative. Zero gives linear dynamics.
    :param Omega: transverse field.
    :param omega: longitudinal field.
    """

    N: int
    chi: float = 1.0
    Omega: float = 0.0
    omega: float = 0.0

    def __post_init__(self) -> None:
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        if not np.isfinite(self.chi) or self.chi < 0:
            raise ValueError(f"chi must be finite and non-negative, got {self.chi!r}")
        for name in ("Omega", "omega"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def spin(self) -> float:
        return self.N / 2.0

    @property
    def dim(self) -> int:
        return self.N + 1

    def replace(self, **changes) -> "LmgParams":
        return dataclasses.replace(self, **changes)


def magnetic_numbers(N: int) -> np.ndarray:
    """Return ``m = -N/2, ..., N/2`` in basis order."""
    return np.arange(N + 1, dtype=float) - N / 2.0


def ladder_elements(N: int) -> np.ndarray:
    """Matrix elements ``<m+1| S_x |m> = sqrt(S(S+1) - m(m+1)) / 2``.

    Works for any spin length ``N/2``, including odd ``N``.
    """
    s = N / 2.0
    m = magnetic_numbers(N)[:-1]
    return 0.5 * np.sqrt(np.maximum(s * (s + 1.0) - m * (m + 1.0), 0.0))


@dataclass(frozen=True, eq=False)
class DickeState:
    """Pure state in the symmetric subspace of ``N`` spins."""

    N: int
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amps = np.array(self.amplitudes, dtype=complex)
        if amps.ndim != 1 or amps.shape[0] != self.N + 1:
            raise DimensionMismatch(
                f"expected {self.N + 1} amplitudes for N={self.N}, got shape {amps.shape}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.N + 1

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "DickeState":
        return DickeState(self.N, self.amplitudes / self.norm())

    def overlap(self, other: "DickeState") -> complex:
        """Return ``<self|other>``."""
        if other.N != self.N:
            raise DimensionMismatch("states live in different Dicke spaces")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True, eq=False)
class CollectiveOperator:
    """Hermitian tridiagonal operator on the Dicke space.

    ``lower[k]`` is the matrix element ``<k+1|O|k>``; the upper band is its
    complex conjugate so Hermiticity holds by construction.
    """

    N: int
    diag: np.ndarray
    lower: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        d = np.array(self.diag, dtype=float)
        lo = np.array(self.lower, dtype=complex)
        if d.shape != (self.N + 1,) or lo.shape != (self.N,):
            raise DimensionMismatch(
                f"operator bands have shapes {d.shape}, {lo.shape} for N={self.N}"
            )
        d.setflags(write=False)
        lo.setflags(write=False)
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "lower", lo)

    @property
    def dim(self) -> int:
        return self.N + 1

    @property
    def is_real(self) -> bool:
        return not np.any(self.lower.imag)

    def _check(self, other: "CollectiveOperator") -> None:
        if other.N != self.N:
            raise DimensionMismatch("operators live in different Dicke spaces")

    def __add__(self, other: "CollectiveOperator") -> "CollectiveOperator":
        self._check(other)
        return CollectiveOperator(self.N, self.diag + other.diag, self.lower + other.lower)

    def __sub__(self, other: "CollectiveOperator") -> "CollectiveOperator":
        return self + (-1.0) * other

    def __mul__(self, scalar: float) -> "CollectiveOperator":
        scalar = float(scalar)
        return CollectiveOperator(self.N, scalar * self.diag, scalar * self.lower, self.label)

    __rmul__ = __mul__

    def __neg__(self) -> "CollectiveOperator":
        return (-1.0) * self

    def apply(self, vec: np.ndarray) -> np.ndarray:
        """Multiply a vector (or the columns of a matrix) by the operator."""
        v = np.asarray(vec)
        if v.shape[0] != self.dim:
            raise DimensionMismatch(f"vector of length {v.shape[0]} for dim {self.dim}")
        lo = self.lower if v.ndim == 1 else self.lower[:, None]
        d = self.diag if v.ndim == 1 else self.diag[:, None]
        out = (d * v).astype(complex)
        out[1:] += lo * v[:-1]
        out[:-1] += np.conj(lo) * v[1:]
        return out

    def dense(self) -> np.ndarray:
        mat = np.diag(self.diag.astype(complex))
        idx = np.arange(self.N)
        mat[idx + 1, idx] = self.lower
        mat[idx, idx + 1] = np.conj(self.lower)
        return mat if not self.is_real else mat.real.copy()


def spin_z(N: int) -> CollectiveOperator:
    return CollectiveOperator(N, magnetic_numbers(N), np.zeros(N), "Sz")


def spin_x(N: int) -> CollectiveOperator:
    return CollectiveOperator(N, np.zeros(N + 1), ladder_elements(N), "Sx")


def spin_y(N: int) -> CollectiveOperator:
    # <m+1|Sy|m> = off / i = -i off
    return CollectiveOperator(N, np.zeros(N + 1), -1j * ladder_elements(N), "Sy")


def collective(N: int, name: str) -> CollectiveOperator:
    """Look up ``Sx``, ``Sy`` or ``Sz`` by name (``x``, ``y``, ``z`` also accepted)."""
    key = name.lower().lstrip("s")
    table = {"x": spin_x, "y": spin_y, "z": spin_z}
    if key not in table:
        raise ValueError(f"unknown collective operator {name!r}")
    return table[key](N)


def build_hamiltonian(params: LmgParams) -> CollectiveOperator:
    """Tridiagonal Hamiltonian ``-(chi/N) Sz^2 - Omega Sx - omega Sz``."""
    N = params.N
    m = magnetic_numbers(N)
    diag = -(params.chi / N) * m**2 - params.omega * m
    lower = -params.Omega * ladder_elements(N)
    return CollectiveOperator(N, diag, lower, "H")


class PerturbationAxis(Enum):
    """Which field is perturbed: the transverse ``Omega`` or longitudinal ``omega``."""

    TRANSVERSE = "x"
    LONGITUDINAL = "z"

    @classmethod
    def parse(cls, value: "PerturbationAxis | str") -> "PerturbationAxis":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"x": cls.TRANSVERSE, "transverse": cls.TRANSVERSE, "omega_x": cls.TRANSVERSE,
                   "z": cls.LONGITUDINAL, "longitudinal": cls.LONGITUDINAL, "omega_z": cls.LONGITUDINAL}
        if key not in aliases:
            raise ValueError(f"unknown perturbation axis {value!r}")
        return aliases[key]

    @property
    def field_name(self) -> str:
        return "Omega" if self is PerturbationAxis.TRANSVERSE else "omega"

    def derivative(self, N: int) -> CollectiveOperator:
        """``dH/dlambda``, i.e. ``-Sx`` or ``-Sz``."""
        op = spin_x(N) if self is PerturbationAxis.TRANSVERSE else spin_z(N)
        return -op

    def shifted(self, params: LmgParams, delta: float) -> LmgParams:
        name = self.field_name
        return params.replace(**{name: getattr(params, name) + delta})


def coherent_state(N: int, theta: float, phi: float) -> DickeState:
    """Spin coherent state pointing along ``(theta, phi)``.

    ``theta = 0`` is all spins up, ``theta = pi`` all spins down. Each spin is
    ``cos(theta/2) e^{-i phi} |up> + sin(theta/2) |down>``.
    """
    k = np.arange(N + 1)  # number of up spins = N/2 + m
    c = abs(np.cos(theta / 2.0))
    s = abs(np.sin(theta / 2.0))
    log_binom = gammaln(N + 1) - gammaln(k + 1) - gammaln(N - k + 1)
    log_mag = 0.5 * log_binom + xlogy(k, c) + xlogy(N - k, s)
    # sign only matters when theta leaves [0, pi]; zero factors already vanish in log_mag
    sign = np.where(np.cos(theta / 2.0) < 0, (-1.0) ** k, 1.0)
    sign = sign * np.where(np.sin(theta / 2.0) < 0, (-1.0) ** (N - k), 1.0)
    amps = sign * np.exp(log_mag) * np.exp(-1j * k * phi)
    return DickeState(N, amps / np.linalg.norm(amps))


def _vec(state: DickeState | np.ndarray) -> np.ndarray:
    return state.amplitudes if isinstance(state, DickeState) else np.asarray(state, dtype=complex)


def expectation(op: CollectiveOperator, state: DickeState | np.ndarray) -> float:
    """``<psi|O|psi>`` for a normalized state; real because ``O`` is Hermitian."""
    v = _vec(state)
    return float(np.vdot(v, op.apply(v)).real)


def variance(op: CollectiveOperator, state: DickeState | np.ndarray) -> float:
    """``<O^2> - <O>^2`` evaluated as ``||O psi||^2 - <O>^2``."""
    v = _vec(state)
    w = op.apply(v)
    mean = np.vdot(v, w).real
    return float(max(np.vdot(w, w).real - mean**2, 0.0))
