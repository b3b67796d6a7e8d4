"""Reference solutions and error metrics for the experiment suite.

Hyperbolic problems are benchmarked by the method of characteristics,
periodic diffusion by exact Fourier-symbol propagation, and the
fifty-dimensional runs by closed-form solutions whose L2 distances reduce to
products of one-dimensional integrals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .grids import Grid1D

__all__ = [
    "CharacteristicsField",
    "advection_2d_field",
    "hyperbolic_4d_field",
    "characteristics_solve",
    "fourier_diffusion_solution",
    "analytic_50d_hyperbolic",
    "analytic_50d_diffusion",
    "l2_error_full",
    "l2_error_rank1_vs_analytic",
]


@dataclass(frozen=True)
class CharacteristicsField:
    """Advection field v for du/dt = v . grad u on a periodic box."""

    d: int
    velocity: Callable[[np.ndarray], np.ndarray]
    substep: float = 1e-3

    def flow(self, points: np.ndarray, t: float) -> np.ndarray:
        """Integrate dx/dt = +v(x) from the points over duration t (RK4)."""
        x = np.array(points, dtype=float)
        if t == 0.0:
            return x
        n_sub = max(int(np.ceil(abs(t) / self.substep)), 1)
        dt = t / n_sub
        for _ in range(n_sub):
            k1 = self.velocity(x)
            k2 = self.velocity(x + 0.5 * dt * k1)
            k3 = self.velocity(x + 0.5 * dt * k2)
            k4 = self.velocity(x + dt * k3)
            x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        return x


def advection_2d_field(substep: float = 1e-3) -> CharacteristicsField:
    def v(x):
        return np.stack([np.sin(x[..., 0]) + 3 * np.cos(x[..., 1]), np.cos(x[..., 1])], axis=-1)

    return CharacteristicsField(2, v, substep)


def hyperbolic_4d_field(c: np.ndarray, f: Sequence[Callable], substep: float = 1e-3) -> CharacteristicsField:
    c = np.asarray(c, dtype=float)

    def v(x):
        fx = np.stack([f[j](x[..., j]) for j in range(4)], axis=-1)
        return fx @ c.T

    return CharacteristicsField(4, v, substep)


def characteristics_solve(
    field: CharacteristicsField,
    u0: Callable[[np.ndarray], np.ndarray],
    eval_points: np.ndarray,
    t: float,
) -> np.ndarray:
    """u(x, t) = u0(X(t; x)) for du/dt = v . grad u (X integrates +v)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    origins = field.flow(np.atleast_2d(eval_points), t)
    return u0(origins)


def fourier_diffusion_solution(u0: np.ndarray, t: float, period: float = 2.0 * np.pi) -> np.ndarray:
    """Exact heat propagation of a periodic grid tensor via the Fourier symbol."""
    freqs = [np.fft.fftfreq(n, d=1.0 / n) * (2.0 * np.pi / period) for n in u0.shape]
    sym = np.zeros(u0.shape)
    for axis, w in enumerate(freqs):
        shape = [1] * u0.ndim
        shape[axis] = -1
        sym = sym + (w**2).reshape(shape)
    return np.real(np.fft.ifftn(np.exp(-sym * t) * np.fft.fftn(u0)))


def analytic_50d_hyperbolic(
    t: float,
    grids: Sequence[Grid1D],
    factor_fns: Sequence[Callable[[np.ndarray], np.ndarray]],
    speeds: Sequence[float],
) -> list[np.ndarray]:
    """Shifted rank-one factors psi0_j(x_j + c_j t) sampled at the nodes."""
    return [fn(g.nodes + c * t) for fn, g, c in zip(factor_fns, grids, speeds)]


def analytic_50d_diffusion(
    t: float,
    grids: Sequence[Grid1D],
    factor_fns: Sequence[Callable[[np.ndarray], np.ndarray]],
    rate: float = 50.0,
) -> tuple[float, list[np.ndarray]]:
    """Separation-of-variables solution: initial factors times exp(-rate*t)."""
    return float(np.exp(-rate * t)), [fn(g.nodes) for fn, g in zip(factor_fns, grids)]


def l2_error_full(a: np.ndarray, b: np.ndarray, grids: Sequence[Grid1D]) -> float:
    """Quadrature L2 distance of two dense grid tensors."""
    if a.shape != b.shape:
        raise ValueError("shape mismatch")
    out = (a - b) ** 2
    for axis in range(len(grids) - 1, -1, -1):
        out = np.tensordot(out, grids[axis].weights, axes=([axis], [0]))
    return float(np.sqrt(max(out, 0.0)))


def l2_error_rank1_vs_analytic(
    state_factors: Sequence[np.ndarray],
    analytic_factors: Sequence[np.ndarray],
    grids: Sequence[Grid1D],
) -> float:
    """L2 distance of two rank-one functions from one-dimensional integrals.

    ||u - v||^2 = prod <u_j, u_j> + prod <v_j, v_j> - 2 prod <u_j, v_j>,
    clamped at zero before the square root.
    """
    pa = pb = pc = 1.0
    for fa, fb, g in zip(state_factors, analytic_factors, grids):
        w = g.weights
        pa *= float(np.dot(w, np.asarray(fa) ** 2))
        pb *= float(np.dot(w, np.asarray(fb) ** 2))
        pc *= float(np.dot(w, np.asarray(fa) * np.asarray(fb)))
    return float(np.sqrt(max(pa + pb - 2.0 * pc, 0.0)))
