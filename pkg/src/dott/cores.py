"""Numerical tensor-train core arithmetic.

Cores are stored in the quadrature-weighted space (sqrt(w) absorbed into the
physical axis), so Euclidean orthogonality of unfoldings coincides with
quadrature orthogonality of the represented functions. Core ``v`` has shape
(r_{v-1}, n_v, r_v) with boundary ranks 1.

The ragged (branch-dependent) rank structure of a TtState embeds exactly as a
sparse standard TT whose level rank equals the total branch count; the
inverse direction runs a right-orthogonalization sweep followed by per-branch
singular value decompositions, which is precisely the recursive thresholded
bi-orthogonal decomposition restricted to the caterpillar tree.
"""

from __future__ import annotations

import numpy as np

from .errors import RankExplosionError
from .grids import Grid1D
from .state import BoTtState, DoTtState, TtState

__all__ = [
    "state_to_cores",
    "cores_to_state",
    "cores_norm",
    "add",
    "scale",
    "apply_operator",
    "round_cores",
    "rk4_core_step",
    "core_ranks",
]


def state_to_cores(state: TtState) -> list[np.ndarray]:
    """Exact embedding of the ragged state into standard (weighted) TT cores."""
    d = state.d
    sw = [np.sqrt(g.weights) for g in state.grids]
    cores = []
    G0 = (sw[0][:, None] * state.leaf[0])[None, :, :]
    cores.append(np.ascontiguousarray(G0))
    for l in range(1, d - 1):
        parent = state.parent_map(l)
        m_prev = state.width(l - 1)
        m = state.width(l)
        G = np.zeros((m_prev, state.grids[l].n, m))
        blk = sw[l][:, None] * state.leaf[l]
        for b in range(m):
            G[parent[b], :, b] = blk[:, b]
        cores.append(G)
    Gd = (sw[d - 1][:, None] * state.final).T[:, :, None]
    cores.append(np.ascontiguousarray(Gd))
    return cores


def core_ranks(cores: list[np.ndarray]) -> list[int]:
    return [c.shape[2] for c in cores[:-1]]


def _right_orthonormalize(cores: list[np.ndarray]) -> list[np.ndarray]:
    """Make every core except the first row-orthonormal in its (r, n*r') unfolding."""
    cores = [c.copy() for c in cores]
    d = len(cores)
    for v in range(d - 1, 0, -1):
        r, n, rp = cores[v].shape
        T = cores[v].reshape(r, n * rp)
        Q, R = np.linalg.qr(T.T)
        rnew = Q.shape[1]
        cores[v] = Q.T.reshape(rnew, n, rp)
        cores[v - 1] = np.einsum("anb,bc->anc", cores[v - 1], R.T, optimize=True)
    return cores


def cores_norm(cores: list[np.ndarray]) -> float:
    """Quadrature L2 norm of the represented function."""
    right = _right_orthonormalize(cores)
    return float(np.linalg.norm(right[0]))


def _fix_signs_svd(U: np.ndarray, SVt: np.ndarray) -> None:
    for k in range(U.shape[1]):
        j = int(np.argmax(np.abs(U[:, k])))
        if U[j, k] < 0:
            U[:, k] = -U[:, k]
            SVt[k, :] = -SVt[k, :]


def cores_to_state(
    cores: list[np.ndarray],
    grids,
    sigma: float,
    noise_floor_rel: float = 8.0,
    max_level1_rank: int | None = None,
    time: float = 0.0,
    cls=DoTtState,
    min_keep: int = 0,
    per_branch_caps: list | None = None,
) -> TtState:
    """Re-orthogonalize cores and extract the sigma-thresholded ragged state.

    The left-to-right sweep keeps, at every node, the singular values (which
    equal the cumulative eigenvalue products of the recursive decomposition)
    that are >= sigma. Values below noise_floor_rel * eps * ||u|| are pure
    round-off of the orthogonalization sweep and are dropped regardless (the
    sweep works on the function values directly, so unlike the correlation-
    kernel eigenproblem its resolution is eps, not sqrt(eps)).
    """
    grids = tuple(grids)
    d = len(grids)
    if len(cores) != d:
        raise ValueError("need one core per variable")
    right = _right_orthonormalize(cores)
    norm = float(np.linalg.norm(right[0]))
    floor = noise_floor_rel * np.finfo(float).eps * norm
    cut = max(sigma, floor)
    sw = [np.sqrt(g.weights) for g in grids]

    bo = cls is BoTtState
    leaf: list[np.ndarray] = []
    counts: list[np.ndarray] = []
    # rows of B: retained branches, columns: current core's left rank
    B = np.ones((1, 1))
    amps = np.array([1.0])  # cumulative amplitude per branch
    for v in range(d - 1):
        n = grids[v].n
        blocks, cnt, rows, new_amps = [], [], [], []
        for b in range(B.shape[0]):
            M = np.tensordot(B[b], right[v], axes=(0, 0))  # (n, r_next)
            U, S, Vt = np.linalg.svd(M, full_matrices=False)
            keep = int(np.sum(S >= cut))
            if max_level1_rank is not None and v == 0:
                keep = min(keep, max_level1_rank)
            if per_branch_caps is not None and b < len(per_branch_caps[v]):
                keep = min(keep, int(per_branch_caps[v][b]))
            keep = max(keep, min(min_keep, S.size))
            U, S, Vt = U[:, :keep], S[:keep], Vt[:keep]
            SVt = S[:, None] * Vt
            _fix_signs_svd(U, SVt)
            if bo:
                lam_local = S / amps[b] if amps[b] > 0 else S
                blocks.append((U * lam_local[None, :]) / sw[v][:, None])
            else:
                blocks.append(U / sw[v][:, None])
            cnt.append(keep)
            rows.append(SVt)
            new_amps.extend(S)
        leaf.append(np.concatenate(blocks, axis=1) if blocks else np.zeros((n, 0)))
        counts.append(np.array(cnt, dtype=int))
        B = np.concatenate(rows, axis=0) if rows else np.zeros((0, right[v].shape[2]))
        amps = np.array(new_amps)
        if B.shape[0] == 0:
            raise ValueError("all branches fell below the threshold")
    fin = (B @ right[d - 1][:, :, 0]).T / sw[d - 1][:, None]
    if bo and amps.size:
        fin = fin / amps[None, :]
    return cls(grids, leaf, fin, counts, time)


def add(c1: list[np.ndarray], c2: list[np.ndarray]) -> list[np.ndarray]:
    d = len(c1)
    out = []
    for v in range(d):
        a, b = c1[v], c2[v]
        n = a.shape[1]
        if v == 0:
            out.append(np.concatenate([a, b], axis=2))
        elif v == d - 1:
            out.append(np.concatenate([a, b], axis=0))
        else:
            G = np.zeros((a.shape[0] + b.shape[0], n, a.shape[2] + b.shape[2]))
            G[: a.shape[0], :, : a.shape[2]] = a
            G[a.shape[0] :, :, a.shape[2] :] = b
            out.append(G)
    return out


def scale(cores: list[np.ndarray], alpha: float) -> list[np.ndarray]:
    out = [c.copy() for c in cores]
    out[0] = out[0] * alpha
    return out


def _weighted_matrix(action, grid: Grid1D) -> np.ndarray:
    sw = np.sqrt(grid.weights)
    return (sw[:, None] * action.matrix(grid)) / sw[None, :]


def apply_operator(
    cores: list[np.ndarray], op, grids, t: float = 0.0
) -> list[np.ndarray] | None:
    """Cores of G(u) for a separable operator; None for a zero operator."""
    grids = tuple(grids)
    d = len(grids)
    sw = [np.sqrt(g.weights) for g in grids]
    total = None
    for term in op.terms:
        c = term.coeff_at(t)
        if c == 0.0:
            continue
        tc = []
        for v in range(d):
            act = term.actions[v]
            if act.is_identity():
                tc.append(cores[v].copy())
            else:
                A = _weighted_matrix(act, grids[v])
                tc.append(np.einsum("mn,anb->amb", A, cores[v], optimize=True))
        tc = scale(tc, c)
        total = tc if total is None else add(total, tc)
    for src in op.sources:
        c = src.coeff_at(t)
        if c == 0.0:
            continue
        sc = []
        for v in range(d):
            g = (src.factors[v](grids[v].nodes) * sw[v])[None, :, None]
            sc.append(np.ascontiguousarray(g))
        sc = scale(sc, c)
        total = sc if total is None else add(total, sc)
    return total


def round_cores(
    cores: list[np.ndarray], rel_eps: float = 1e-14, max_rank: int | None = None
) -> list[np.ndarray]:
    """Standard TT rounding at a relative tolerance (lossless at 1e-14)."""
    right = _right_orthonormalize(cores)
    norm = float(np.linalg.norm(right[0]))
    if norm == 0.0:
        return right
    floor = rel_eps * norm
    d = len(right)
    out = []
    carry = np.ones((1, 1))
    for v in range(d - 1):
        G = np.einsum("ab,bnc->anc", carry, right[v], optimize=True)
        r, n, rp = G.shape
        U, S, Vt = np.linalg.svd(G.reshape(r * n, rp), full_matrices=False)
        keep = max(int(np.sum(S >= floor)), 1)
        if max_rank is not None:
            keep = min(keep, max_rank)
        out.append(U[:, :keep].reshape(r, n, keep))
        carry = S[:keep, None] * Vt[:keep]
    out.append(np.einsum("ab,bnc->anc", carry, right[d - 1], optimize=True))
    return out


def rk4_core_step(
    cores: list[np.ndarray],
    op,
    grids,
    t: float,
    dt: float,
    rank_cap: int = 200,
    compress_eps: float = 1e-14,
) -> list[np.ndarray]:
    """One explicit RK4 step in tensor arithmetic without lossy truncation.

    Ranks grow additively per separable term per stage; stages are compressed
    orthogonally at machine precision (relative 1e-14) to keep the additive
    growth bounded, and a cap guards against runaway ranks.
    """

    def guard(cs):
        if max(core_ranks(cs)) > rank_cap:
            raise RankExplosionError(f"core rank {max(core_ranks(cs))} exceeds cap {rank_cap}")
        return cs

    def G(cs, tau):
        out = apply_operator(cs, op, grids, tau)
        if out is None:
            return scale(cs, 0.0)
        return guard(round_cores(out, compress_eps))

    k1 = G(cores, t)
    y2 = guard(round_cores(add(cores, scale(k1, 0.5 * dt)), compress_eps))
    k2 = G(y2, t + 0.5 * dt)
    y3 = guard(round_cores(add(cores, scale(k2, 0.5 * dt)), compress_eps))
    k3 = G(y3, t + 0.5 * dt)
    y4 = guard(round_cores(add(cores, scale(k3, dt)), compress_eps))
    k4 = G(y4, t + dt)
    incr = add(add(k1, scale(k4, 1.0)), add(scale(k2, 2.0), scale(k3, 2.0)))
    out = add(cores, scale(incr, dt / 6.0))
    return guard(round_cores(out, compress_eps))
