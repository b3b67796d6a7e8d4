"""One-dimensional collocation grids: nodes, quadrature weights, differentiation matrices.

Two rules are provided: Gauss-Legendre (bounded non-periodic intervals) and
equispaced Fourier (periodic domains). Every integral and derivative in the
library reduces to applications of these objects.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = ["GridKind", "Grid1D", "gauss_legendre_grid", "fourier_grid", "inner_product"]


class GridKind(Enum):
    GAUSS_LEGENDRE = "gauss-legendre"
    FOURIER_EQUISPACED = "fourier"


@dataclass(frozen=True)
class Grid1D:
    """Immutable 1D collocation rule.

    Attributes
    ----------
    kind : GridKind
    nodes : (n,) ascending collocation points
    weights : (n,) quadrature weights, sum(weights) == b - a
    domain : (a, b)
    d1, d2 : (n, n) first/second derivative collocation matrices
    """

    kind: GridKind
    nodes: np.ndarray
    weights: np.ndarray
    domain: tuple[float, float]
    d1: np.ndarray = field(repr=False)
    d2: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("nodes", "weights", "d1", "d2"):
            getattr(self, name).setflags(write=False)

    @property
    def n(self) -> int:
        return self.nodes.size

    def key(self):
        """Identity for caching: (kind, n, domain)."""
        return (self.kind, self.n, self.domain)


def _legendre_nodes_weights(n: int) -> tuple[np.ndarray, np.ndarray]:
    # Newton iteration on P_n; Chebyshev-based initial guess converges in a
    # handful of sweeps for all n of interest.
    k = np.arange(n)
    x = -np.cos(np.pi * (k + 0.75) / (n + 0.5))
    for _ in range(100):
        p0 = np.ones_like(x)
        p1 = x.copy()
        if n == 1:
            p0, p1 = p1, p0  # P_0 = 1, handled below
            p1 = x.copy()
            p0 = np.ones_like(x)
        for j in range(1, n):
            p0, p1 = p1, ((2 * j + 1) * x * p1 - j * p0) / (j + 1)
        # p1 = P_n, p0 = P_{n-1}
        dp = n * (x * p1 - p0) / (x**2 - 1.0) if n > 0 else np.zeros_like(x)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    # final derivative for the weight formula
    p0 = np.ones_like(x)
    p1 = x.copy()
    for j in range(1, n):
        p0, p1 = p1, ((2 * j + 1) * x * p1 - j * p0) / (j + 1)
    dp = n * (x * p1 - p0) / (x**2 - 1.0)
    w = 2.0 / ((1.0 - x**2) * dp**2)
    order = np.argsort(x)
    return x[order], w[order]


def _barycentric_diffmats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Polynomial-collocation d1/d2 on arbitrary distinct nodes."""
    n = x.size
    if n == 1:
        return np.zeros((1, 1)), np.zeros((1, 1))
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    # barycentric weights, normalized to avoid overflow
    logw = -np.sum(np.log(np.abs(diff)), axis=1)
    sign = np.prod(np.sign(diff), axis=1)
    logw -= logw.max()
    bw = sign * np.exp(logw)
    d1 = (bw[None, :] / bw[:, None]) / diff
    np.fill_diagonal(d1, 0.0)
    np.fill_diagonal(d1, -d1.sum(axis=1))
    # Welfert recursion for the second derivative
    diag1 = np.diag(d1)
    d2 = 2.0 * d1 * (diag1[:, None] - 1.0 / diff)
    np.fill_diagonal(d2, 0.0)
    np.fill_diagonal(d2, -d2.sum(axis=1))
    return d1, d2


def gauss_legendre_grid(n: int, a: float, b: float) -> Grid1D:
    """Gauss-Legendre rule with n nodes mapped affinely to [a, b]."""
    if n < 1:
        raise ValueError(f"need at least one node, got n={n}")
    if not a < b:
        raise ValueError(f"invalid interval [{a}, {b}]")
    xr, wr = _legendre_nodes_weights(n)
    half = 0.5 * (b - a)
    x = a + half * (xr + 1.0)
    w = half * wr
    d1, d2 = _barycentric_diffmats(x)
    return Grid1D(GridKind.GAUSS_LEGENDRE, x, w, (float(a), float(b)), d1, d2)


def _fourier_diffmat(n: int, period: float, order: int) -> np.ndarray:
    # spectral differentiation via FFT of the identity; for odd derivative
    # orders the Nyquist mode of even grids is zeroed (standard convention)
    k = np.fft.fftfreq(n, d=1.0 / n)
    ik = 1j * k * (2.0 * np.pi / period)
    if n % 2 == 0 and order % 2 == 1:
        ik[n // 2] = 0.0
    mult = ik**order
    D = np.fft.ifft(mult[:, None] * np.fft.fft(np.eye(n), axis=0), axis=0)
    return np.ascontiguousarray(D.real)


def fourier_grid(n: int, period: float) -> Grid1D:
    """Equispaced periodic rule on [0, period), right endpoint excluded."""
    if n < 2:
        raise ValueError(f"need at least two nodes, got n={n}")
    if period <= 0:
        raise ValueError(f"period must be positive, got {period}")
    h = period / n
    x = h * np.arange(n)
    w = np.full(n, h)
    d1 = _fourier_diffmat(n, period, 1)
    d2 = _fourier_diffmat(n, period, 2)
    return Grid1D(GridKind.FOURIER_EQUISPACED, x, w, (0.0, float(period)), d1, d2)


def inner_product(g: Grid1D, f: np.ndarray, h: np.ndarray) -> float:
    """Quadrature L2 inner product of two node-value vectors."""
    f = np.asarray(f)
    h = np.asarray(h)
    if f.shape != (g.n,) or h.shape != (g.n,):
        raise ValueError(f"expected vectors of length {g.n}, got {f.shape} and {h.shape}")
    # elementwise product first: the result is exactly symmetric in f and h
    return float(np.dot(g.weights, f * h))
