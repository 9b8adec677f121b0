"""Spin Wigner quasi-probability on the collective Bloch sphere.

The kernel is the multipole expansion

    W(n) = sqrt(2S+1)/(4 pi) sum_k sqrt(2k+1) Tr[rho R(n) T_k0 R(n)^dagger],

with ``R(n) = exp(-i phi S_z) exp(-i theta S_y)`` rotating the z axis onto
``n`` and ``T_k0`` the diagonal rank-``k`` spherical tensors, normalized as
``Tr(T_k0^2) = 1``. Their diagonals are the polynomials in ``m`` that are
orthonormal on ``m = -S..S`` with positive leading coefficient; these are
generated by a Lanczos recursion on ``diag(m)``. The rank-0 term fixes
``int W dOmega = 1``. Because ``T_k0`` is diagonal the kernel collapses to

    W(n) = sum_m Delta_m <m| R^dagger rho R |m>,

so each sample costs one rotation of the state.

Samples are remapped to a disk with ``r = (1 + cos theta)^(1/4)``, i.e.
``r = (1 + 2 S_z / N)^(1/4)`` for a classical spin, and azimuth ``phi``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DimensionMismatch
from .opensystem import BlockDensityMatrix
from .spin import DickeState

__all__ = [
    "multipole_diagonals",
    "wigner_kernel",
    "wigner_sphere",
    "WignerTable",
    "wigner_polar_samples",
    "wigner_integral",
    "polar_radius",
]


@lru_cache(maxsize=64)
def multipole_diagonals(two_j: int) -> np.ndarray:
    """Rows ``k = 0..2j`` hold the diagonal of ``T_k0`` for spin ``j = two_j/2``."""
    d = two_j + 1
    m = np.arange(d) - 0.5 * two_j
    q = np.zeros((d, d))
    q[0] = 1.0 / np.sqrt(d)
    beta = 0.0
    for k in range(d - 1):
        w = m * q[k]
        if k > 0:
            w -= beta * q[k - 1]
        w -= np.dot(q[k], w) * q[k]
        # two passes of full reorthogonalization keep the recursion stable
        for _ in range(2):
            w -= q[: k + 1].T @ (q[: k + 1] @ w)
        beta = np.linalg.norm(w)
        q[k + 1] = w / beta
    q.setflags(write=False)
    return q


@lru_cache(maxsize=64)
def wigner_kernel(two_j: int) -> np.ndarray:
    """Kernel weights ``Delta_m`` for spin ``j = two_j/2`` in ascending ``m``."""
    d = two_j + 1
    t = multipole_diagonals(two_j)
    k = np.arange(d)
    out = np.sqrt(d) / (4 * np.pi) * (np.sqrt(2 * k + 1) @ t)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def _sy_eig(two_j: int) -> tuple[np.ndarray, np.ndarray]:
    d = two_j + 1
    j = 0.5 * two_j
    m = np.arange(d) - j
    off = 0.5 * np.sqrt(j * (j + 1) - m[:-1] * (m[:-1] + 1))
    sy = np.zeros((d, d), dtype=complex)
    sy[np.arange(1, d), np.arange(d - 1)] = -1j * off
    sy[np.arange(d - 1), np.arange(1, d)] = 1j * off
    return np.linalg.eigh(sy)


def _small_d(two_j: int, theta: float) -> np.ndarray:
    """Real orthogonal matrix ``exp(i theta S_y)``."""
    mu, u = _sy_eig(two_j)
    return ((u * np.exp(1j * theta * mu)) @ u.conj().T).real


def _pure_populations(two_j: int, vec: np.ndarray, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    m = np.arange(two_j + 1) - 0.5 * two_j
    twisted = vec[:, None] * np.exp(1j * np.outer(m, phi))
    out = np.empty((len(theta), two_j + 1, len(phi)))
    for i, th in enumerate(theta):
        out[i] = np.abs(_small_d(two_j, th) @ twisted) ** 2
    return out


def _mixed_populations(two_j: int, rho: np.ndarray, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    # p_m = sum_q e^{i phi q} sum_a E_{m,a} E_{m,a-q} rho_{a,a-q}
    d = two_j + 1
    qs = np.arange(-(d - 1), d)
    phase = np.exp(1j * np.outer(qs, phi))
    diags = [np.diagonal(rho, -q) for q in qs]
    out = np.empty((len(theta), d, len(phi)))
    for i, th in enumerate(theta):
        e = _small_d(two_j, th)
        c = np.empty((d, len(qs)), dtype=complex)
        for col, q in enumerate(qs):
            if q >= 0:
                c[:, col] = (e[:, q:] * e[:, : d - q]) @ diags[col]
            else:
                c[:, col] = (e[:, : d + q] * e[:, -q:]) @ diags[col]
        out[i] = (c @ phase).real
    return out


def wigner_sphere(state: DickeState | BlockDensityMatrix, theta, phi) -> np.ndarray:
    """Wigner function on the product grid ``theta x phi``, shape ``(len(theta), len(phi))``.

    For a :class:`BlockDensityMatrix` the sector functions are summed with
    their multiplicities, ``W = sum_j d_j W_j``.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    if isinstance(state, DickeState):
        p = _pure_populations(state.N, state.amplitudes, theta, phi)
        return np.einsum("m,imk->ik", wigner_kernel(state.N), p)
    if isinstance(state, BlockDensityMatrix):
        layout = state.layout
        total = np.zeros((len(theta), len(phi)))
        for k, (j, d) in enumerate(zip(layout.js, layout.degeneracies)):
            rho = state.block(k)
            if not np.any(rho):
                continue
            two_j = int(round(2 * j))
            p = _mixed_populations(two_j, rho, theta, phi)
            total += d * np.einsum("m,imk->ik", wigner_kernel(two_j), p)
        return total
    raise DimensionMismatch(f"unsupported state type {type(state).__name__}")


def polar_radius(theta) -> np.ndarray:
    """Disk radius ``(1 + cos theta)^(1/4)``: 0 at the south pole, ``2^(1/4)`` at the north pole."""
    return np.maximum(1.0 + np.cos(np.asarray(theta, dtype=float)), 0.0) ** 0.25


@dataclass(frozen=True)
class WignerTable:
    """Flat samples ``(r, phi, W)`` together with the sphere angles they came from."""

    theta: np.ndarray
    r: np.ndarray
    phi: np.ndarray
    W: np.ndarray

    def as_array(self) -> np.ndarray:
        """Three-column array ``[r, phi, W]``."""
        return np.column_stack([self.r, self.phi, self.W])

    def peak(self) -> tuple[float, float, float]:
        k = int(np.argmax(self.W))
        return float(self.r[k]), float(self.phi[k]), float(self.W[k])


def wigner_polar_samples(
    state: DickeState | BlockDensityMatrix,
    n_theta: int = 61,
    n_phi: int = 72,
    theta=None,
    phi=None,
) -> WignerTable:
    """Sample the Wigner function and remap it to disk coordinates.

    The default grid is uniform in ``theta`` on ``[0, pi]`` and in ``phi`` on
    ``[0, 2 pi)``.
    """
    theta = np.linspace(0.0, np.pi, n_theta) if theta is None else np.asarray(theta, dtype=float)
    phi = np.linspace(0.0, 2 * np.pi, n_phi, endpoint=False) if phi is None else np.asarray(phi, dtype=float)
    w = wigner_sphere(state, theta, phi)
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    return WignerTable(tt.ravel(), polar_radius(tt.ravel()), pp.ravel(), w.ravel())


def wigner_integral(state: DickeState | BlockDensityMatrix, n_nodes: int | None = None) -> float:
    """``int W dOmega`` by Gauss-Legendre in ``cos theta`` and a uniform ``phi`` rule.

    ``W`` is band limited to degree ``N``, so ``N + 1`` nodes in ``cos theta``
    and ``2N + 1`` in ``phi`` integrate it exactly.
    """
    N = state.N
    n = n_nodes if n_nodes is not None else N + 1
    x, wx = np.polynomial.legendre.leggauss(n)
    nphi = 2 * max(n, N + 1) + 1
    phi = 2 * np.pi * np.arange(nphi) / nphi
    w = wigner_sphere(state, np.arccos(x), phi)
    return float(np.sum(wx[:, None] * w) * 2 * np.pi / nphi)
