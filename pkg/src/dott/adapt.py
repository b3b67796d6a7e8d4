"""Dynamic addition and removal of modes during propagation.

Removal truncates the weakest branches once their amplitude falls below a
threshold (diffusion-dominated runs). Two addition mechanisms are provided:
zero-energy insertion with a frozen-leaf warm-up phase, and restart through
explicit time stepping in raw tensor-train arithmetic, which lets the PDE
itself grow the rank before re-orthogonalization and thresholding.
"""

from __future__ import annotations

import numpy as np

from .cores import cores_to_state, rk4_core_step, state_to_cores
from .grids import Grid1D, GridKind
from .propagator import do_rhs, rk4_step
from .state import DoTtState

__all__ = [
    "remove_modes",
    "add_modes_zero_energy",
    "warmup_new_modes",
    "adapt_by_explicit_step",
]


def _drop_branch(state: DoTtState, level: int, col: int) -> None:
    """Remove one branch column and its whole subtree in place."""
    d = state.d
    parent = state.parent_map(level)[col] if level > 0 else 0
    cols = [col]
    state.leaf[level] = np.delete(state.leaf[level], col, axis=1)
    state.counts[level] = state.counts[level].copy()
    state.counts[level][parent] -= 1
    for lv in range(level + 1, d - 1):
        off = state.offsets(lv)
        drop = [c for p in cols for c in range(off[p], off[p + 1])]
        state.leaf[lv] = np.delete(state.leaf[lv], drop, axis=1)
        state.counts[lv] = np.delete(state.counts[lv], cols)
        cols = drop
    if level == d - 2:
        state.final = np.delete(state.final, col, axis=1)
    else:
        state.final = np.delete(state.final, cols, axis=1)


def remove_modes(state: DoTtState, epsilon: float, levels: str = "first") -> DoTtState:
    """Drop branches whose amplitude is below epsilon (never below rank 1).

    Amplitudes are the square roots of the composite Gram eigenvalues; the
    weakest branch (smallest Gram diagonal) is removed while the smallest
    singular value stays below epsilon. With levels="all" the same rule is
    applied to every deeper family.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    st = state.copy()
    while st.counts[0][0] > 1:
        C = st.grams()[0]
        s = np.sqrt(np.clip(np.linalg.eigvalsh(C), 0.0, None))
        if s.min() >= epsilon:
            break
        _drop_branch(st, 0, int(np.argmin(np.diag(C))))
    if levels == "all":
        for l in range(1, st.d - 1):
            changed = True
            while changed:
                changed = False
                G = st.grams()[l]
                off = st.offsets(l)
                for p in range(st.counts[l].size):
                    if st.counts[l][p] <= 1:
                        continue
                    sl = slice(off[p], off[p + 1])
                    C = G[sl, sl]
                    s = np.sqrt(np.clip(np.linalg.eigvalsh(C), 0.0, None))
                    if s.min() < epsilon:
                        _drop_branch(st, l, sl.start + int(np.argmin(np.diag(C))))
                        changed = True
                        break
    return st


def _candidate_basis(grid: Grid1D, count: int) -> np.ndarray:
    """First ``count`` functions of the grid's natural spectral basis."""
    x = grid.nodes
    cols = []
    if grid.kind is GridKind.FOURIER_EQUISPACED:
        scale = 2.0 * np.pi / (grid.domain[1] - grid.domain[0])
        cols.append(np.ones_like(x))
        k = 1
        while len(cols) < count:
            cols.append(np.cos(k * scale * x))
            if len(cols) < count:
                cols.append(np.sin(k * scale * x))
            k += 1
    else:
        a, b = grid.domain
        xi = 2.0 * (x - a) / (b - a) - 1.0
        p0, p1 = np.ones_like(xi), xi.copy()
        cols.append(p0)
        j = 1
        while len(cols) < count:
            cols.append(p1)
            p0, p1 = p1, ((2 * j + 1) * xi * p1 - j * p0) / (j + 1)
            j += 1
    return np.stack(cols[:count], axis=1)


def _orthonormal_extension(block: np.ndarray, grid: Grid1D, count: int) -> np.ndarray:
    """New unit columns orthogonal to ``block`` under the quadrature weights."""
    w = grid.weights
    cand = _candidate_basis(grid, grid.n)
    new = []
    cur = block
    for j in range(cand.shape[1]):
        v = cand[:, j].astype(float)
        for _ in range(2):  # twice-is-enough Gram-Schmidt
            if cur.shape[1]:
                v = v - cur @ (cur.T @ (w * v))
        nrm = np.sqrt(np.dot(w, v * v))
        if nrm < 1e-8:
            continue
        v /= nrm
        new.append(v)
        cur = np.concatenate([cur, v[:, None]], axis=1)
        if len(new) == count:
            return np.stack(new, axis=1)
    raise ValueError(
        f"grid of size {grid.n} cannot host {count} more orthonormal directions"
    )


def add_modes_zero_energy(
    state: DoTtState, level: int, family: int, count: int
) -> DoTtState:
    """Append ``count`` zero-energy sibling pairs at a 1-based tree level.

    New left modes come from the grid's spectral basis, orthonormalized
    against the existing siblings; the attached subtrees get unit chain modes
    with zero final amplitude, so the reconstruction is unchanged.
    """
    if count < 1:
        raise ValueError("count must be positive")
    l = level - 1
    if not 0 <= l <= state.d - 2:
        raise ValueError(f"level must be in 1..{state.d - 1}")
    st = state.copy()
    d = st.d
    off = st.offsets(l)
    sl = slice(int(off[family]), int(off[family + 1]))
    new_cols = _orthonormal_extension(st.leaf[l][:, sl], st.grids[l], count)
    pos = int(off[family + 1])  # new siblings go at the end of the family
    st.leaf[l] = np.insert(st.leaf[l], [pos] * count, new_cols, axis=1)
    st.counts[l] = st.counts[l].copy()
    st.counts[l][family] += count

    # rank-one unit chain below each new branch, zero amplitude at the end;
    # the new subtrees sit consecutively at every deeper level
    for lv in range(l + 1, d - 1):
        child_pos = int(st.offsets(lv)[pos])  # offsets over pre-insertion counts
        st.counts[lv] = np.insert(st.counts[lv], pos, np.ones(count, dtype=int))
        unit = _candidate_basis(st.grids[lv], 1)[:, 0]
        unit = unit / np.sqrt(np.dot(st.grids[lv].weights, unit**2))
        st.leaf[lv] = np.insert(
            st.leaf[lv], [child_pos] * count, np.repeat(unit[:, None], count, axis=1), axis=1
        )
        pos = child_pos
    st.final = np.insert(st.final, [pos] * count, 0.0, axis=1)
    return st


def warmup_new_modes(
    state: DoTtState,
    op,
    dt: float,
    n_steps: int = 10,
    lambda_eps: float = 1e-8,
) -> DoTtState:
    """Evolve only the amplitude equations with leaf modes frozen.

    No Gram inversion is involved, so singular covariances from freshly
    inserted zero-energy modes are harmless. Stops early once the smallest
    level-1 amplitude reaches lambda_eps.
    """
    st = state
    for _ in range(n_steps):
        st = rk4_step(st, lambda s, t: do_rhs(s, op, t, final_only=True), dt)
        s_min = st.level1_singular_values().min()
        if s_min >= lambda_eps:
            break
    return st


def adapt_by_explicit_step(
    state: DoTtState,
    op,
    dt: float,
    n_steps: int,
    sigma: float,
    max_rank_increase: int | None = None,
    rank_cap: int = 200,
) -> DoTtState:
    """Grow rank by explicit RK4 steps in raw tensor-train arithmetic.

    The state is converted to numerical cores, advanced without lossy rank
    truncation, re-orthogonalized (orthogonalization sweep plus per-node
    singular value decomposition), thresholded at sigma, and returned as a
    fresh DO state. ``max_rank_increase`` caps the level-1 rank growth per
    call (one new mode per adaptation event in the scheduled runs).
    """
    if n_steps < 1:
        raise ValueError("n_steps must be positive")
    cores = state_to_cores(state)
    t = state.time
    for _ in range(n_steps):
        cores = rk4_core_step(cores, op, state.grids, t, dt, rank_cap=rank_cap)
        t += dt
    max_r1 = None
    if max_rank_increase is not None:
        max_r1 = int(state.counts[0][0]) + max_rank_increase
    return cores_to_state(
        cores, state.grids, sigma, max_level1_rank=max_r1, time=t, cls=DoTtState
    )
