"""Single-level bi-orthogonal (Schmidt) decomposition of a two-group function.

The function is held as a matrix of grid values (rows: left variable group,
columns: right group). The decomposition solves the correlation-kernel
eigenproblem on the smaller side and recovers the other side by projection.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .grids import Grid1D

__all__ = [
    "Side",
    "MatricizedFunction",
    "SchmidtPair",
    "correlation_kernel",
    "eigen_sym_weighted",
    "schmidt_decompose",
    "NOISE_FLOOR_FACTOR",
]

# Kernel eigenvalues below ~eps * trace are round-off; the corresponding
# Schmidt values lambda = sqrt(eig) are capped at this multiple of
# sqrt(eps * trace). Calibrated so that thresholding reproduces exact mode
# counts for analytic inputs whose true spectra decay below the floor.
NOISE_FLOOR_FACTOR = 2.0

# Modes this far below lambda_1 are never projected (1/lambda amplifies noise).
_PROJECTION_FLOOR = 1e-14


class Side(Enum):
    LEFT = "left"
    RIGHT = "right"


def _composite_weights(grids: tuple[Grid1D, ...]) -> np.ndarray:
    w = np.ones(1)
    for g in grids:
        w = np.kron(w, g.weights)
    return w


@dataclass(frozen=True)
class MatricizedFunction:
    """Grid values of u arranged as (left-group points) x (right-group points)."""

    values: np.ndarray
    left_grids: tuple[Grid1D, ...]
    right_grids: tuple[Grid1D, ...]

    def __post_init__(self):
        m = int(np.prod([g.n for g in self.left_grids]))
        n = int(np.prod([g.n for g in self.right_grids]))
        if self.values.shape != (m, n):
            raise ValueError(
                f"values shape {self.values.shape} does not match grids ({m}, {n})"
            )

    @property
    def left_weights(self) -> np.ndarray:
        return _composite_weights(self.left_grids)

    @property
    def right_weights(self) -> np.ndarray:
        return _composite_weights(self.right_grids)


@dataclass(frozen=True)
class SchmidtPair:
    """One level of bi-orthogonal decomposition.

    lambdas are nonnegative and descending; both mode families are orthonormal
    under their quadrature weights. ``full_lambdas`` retains the whole
    spectrum (clamped at zero) for truncation-error accounting.
    """

    lambdas: np.ndarray
    left_modes: np.ndarray
    right_modes: np.ndarray
    full_lambdas: np.ndarray

    @property
    def rank(self) -> int:
        return self.lambdas.size


def correlation_kernel(u: MatricizedFunction, side: Side) -> np.ndarray:
    """Two-point correlation of u over the opposite variable group.

    Side.LEFT returns the m x m kernel l_u (integrated over the right group);
    Side.RIGHT returns the n x n kernel r_u.
    """
    if side is Side.LEFT:
        K = u.values @ (u.right_weights[:, None] * u.values.T)
    else:
        K = u.values.T @ (u.left_weights[:, None] * u.values)
    return 0.5 * (K + K.T)


def eigen_sym_weighted(K: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Solve the quadrature-weighted eigenproblem K W psi = mu psi.

    Symmetrized as W^{1/2} K W^{1/2} phi = mu phi with psi = W^{-1/2} phi, so
    the returned eigenvectors are orthonormal under the weights. Eigenvalues
    are returned descending with round-off negatives clamped at zero.
    """
    K = np.asarray(K, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0):
        raise ValueError("quadrature weights must be positive")
    scale = np.max(np.abs(K)) if K.size else 0.0
    if scale > 0 and np.max(np.abs(K - K.T)) > 1e-10 * scale:
        raise ValueError("kernel is not symmetric within tolerance")
    sw = np.sqrt(w)
    A = sw[:, None] * K * sw[None, :]
    mu, phi = np.linalg.eigh(A)
    mu = mu[::-1]
    phi = phi[:, ::-1]
    mu = np.clip(mu, 0.0, None)
    psi = phi / sw[:, None]
    return mu, psi


def _fix_signs(left: np.ndarray, right: np.ndarray) -> None:
    # largest-magnitude entry of each left mode made positive, right mode
    # compensates (Schmidt pairs are unique only up to paired signs)
    for k in range(left.shape[1]):
        j = int(np.argmax(np.abs(left[:, k])))
        if left[j, k] < 0:
            left[:, k] = -left[:, k]
            right[:, k] = -right[:, k]


def schmidt_decompose(
    u: MatricizedFunction,
    threshold: float,
    max_rank: int | None = None,
) -> SchmidtPair:
    """Bi-orthogonal decomposition keeping modes with lambda >= threshold.

    The eigenproblem is solved on the smaller-dimension side; the other side
    follows from the dispersion projection psi_k = <u, psi_k>/lambda_k and is
    re-normalized. Schmidt values below the round-off floor of the kernel
    eigensolve (NOISE_FLOOR_FACTOR * sqrt(eps * trace)) are dropped regardless
    of the threshold: they are indistinguishable from zero at working
    precision and 1/lambda would amplify noise.
    """
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    m, n = u.values.shape
    wl, wr = u.left_weights, u.right_weights

    eig_side = Side.LEFT if m <= n else Side.RIGHT
    K = correlation_kernel(u, eig_side)
    w_eig = wl if eig_side is Side.LEFT else wr
    mu, psi = eigen_sym_weighted(K, w_eig)
    full_lambdas = np.sqrt(mu)

    trace = float(np.sum(mu))
    if trace == 0.0:
        empty = np.zeros((0,))
        return SchmidtPair(empty, np.zeros((m, 0)), np.zeros((n, 0)), full_lambdas)

    floor = NOISE_FLOOR_FACTOR * np.sqrt(np.finfo(float).eps * trace)
    cut = max(threshold, floor, _PROJECTION_FLOOR * full_lambdas[0])
    r = int(np.sum(full_lambdas >= cut))
    if max_rank is not None:
        r = min(r, max_rank)

    lambdas = full_lambdas[:r].copy()
    psi_eig = psi[:, :r]
    if r == 0:
        return SchmidtPair(lambdas, np.zeros((m, 0)), np.zeros((n, 0)), full_lambdas)

    # dispersion projection onto the other side, then re-normalize
    if eig_side is Side.LEFT:
        other = u.values.T @ (wl[:, None] * psi_eig) / lambdas[None, :]
        norms = np.sqrt(np.sum(wr[:, None] * other**2, axis=0))
        other /= norms[None, :]
        left, right = psi_eig.copy(), other
    else:
        other = u.values @ (wr[:, None] * psi_eig) / lambdas[None, :]
        norms = np.sqrt(np.sum(wl[:, None] * other**2, axis=0))
        other /= norms[None, :]
        left, right = other, psi_eig.copy()

    _fix_signs(left, right)
    return SchmidtPair(lambdas, left, right, full_lambdas)
