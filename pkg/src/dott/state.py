"""Time-evolving tensor-train states with ragged (branch-dependent) ranks.

Layout: splitting level ``l`` (0-based, one per variable except the last)
holds the leaf modes of variable ``l`` as columns of ``leaf[l]``, one column
per full multi-index of length l+1. Columns are grouped into sibling families
by their parent multi-index; ``counts[l][p]`` is the number of children of
parent column p (``counts[0]`` has the single root entry). ``final`` pairs
one amplitude-carrying column of variable d-1 with each column of the last
leaf level.

DO states keep every sibling family quadrature-orthonormal with amplitudes in
``final``; BO states keep sibling Gram matrices diagonal (modes carry the
eigenvalues) with ``final`` families orthonormal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .decomp import DEFAULT_ELEMENT_CAP, HierarchicalDecomposition, grid_from_meta, _grid_meta
from .grids import Grid1D

__all__ = ["TtState", "DoTtState", "BoTtState", "assemble_gram", "save_state", "load_state"]


def _segment_sum(M: np.ndarray, counts: np.ndarray, axis: int) -> np.ndarray:
    """Sum over contiguous segments; zero-length segments yield zero rows."""
    off = np.concatenate(([0], np.cumsum(counts)))
    if M.shape[axis] == 0:
        shape = list(M.shape)
        shape[axis] = counts.size
        return np.zeros(shape)
    if counts.min() > 0:
        return np.add.reduceat(M, off[:-1], axis=axis)
    idx = np.minimum(off[:-1], M.shape[axis] - 1)
    out = np.add.reduceat(M, idx, axis=axis)
    sel = [slice(None)] * out.ndim
    sel[axis] = counts == 0
    out[tuple(sel)] = 0.0
    return out


@dataclass
class TtState:
    grids: tuple[Grid1D, ...]
    leaf: list[np.ndarray]
    final: np.ndarray
    counts: list[np.ndarray]
    time: float = 0.0

    def __post_init__(self):
        d = len(self.grids)
        if d < 2:
            raise ValueError("states need at least two variables")
        if len(self.leaf) != d - 1 or len(self.counts) != d - 1:
            raise ValueError("expected one leaf level per variable except the last")
        for l in range(d - 1):
            if self.leaf[l].shape != (self.grids[l].n, self.width(l)):
                raise ValueError(f"leaf level {l} has shape {self.leaf[l].shape}")
        if self.final.shape != (self.grids[-1].n, self.width(d - 2)):
            raise ValueError(f"final block has shape {self.final.shape}")

    # -- structure ------------------------------------------------------

    @property
    def d(self) -> int:
        return len(self.grids)

    def width(self, level: int) -> int:
        """Total number of branches (columns) at a leaf level."""
        return int(self.counts[level].sum())

    def offsets(self, level: int) -> np.ndarray:
        return np.concatenate(([0], np.cumsum(self.counts[level])))

    def n_families(self, level: int) -> int:
        return self.counts[level].size

    def family_slice(self, level: int, family: int) -> slice:
        off = self.offsets(level)
        return slice(int(off[family]), int(off[family + 1]))

    def parent_map(self, level: int) -> np.ndarray:
        """Column index at ``level`` -> parent column index at level-1."""
        return np.repeat(np.arange(self.counts[level].size), self.counts[level])

    def multi_indices(self, level: int) -> list[tuple[int, ...]]:
        """Full multi-index tuples (1-based entries) for each column."""
        idx = [()]
        for l in range(level + 1):
            new = []
            off = self.offsets(l)
            for p, tup in enumerate(idx):
                for k in range(self.counts[l][p]):
                    new.append(tup + (k + 1,))
            idx = new
        return idx

    def level_ranks(self, level: int) -> list[int]:
        return [int(c) for c in self.counts[level]]

    def rank_profile(self) -> list[list[int]]:
        return [self.level_ranks(l) for l in range(self.d - 1)]

    def copy(self) -> "TtState":
        return type(self)(
            self.grids,
            [b.copy() for b in self.leaf],
            self.final.copy(),
            [c.copy() for c in self.counts],
            self.time,
        )

    # -- numerics ---------------------------------------------------------

    def weights(self, level: int) -> np.ndarray:
        return self.grids[level].weights

    def grams(self) -> list[np.ndarray]:
        """Bottom-up composite Gram matrices.

        grams()[l][p, q] is the inner product of the composite factors (over
        variables l+1..d-1) attached to columns p, q of leaf level l, taken
        across all branch pairs, not just siblings.
        """
        d = self.d
        G = [None] * (d - 1)
        w = self.grids[d - 1].weights
        G[d - 2] = self.final.T @ (w[:, None] * self.final)
        for l in range(d - 3, -1, -1):
            L = self.leaf[l + 1].T @ (self.weights(l + 1)[:, None] * self.leaf[l + 1])
            M = L * G[l + 1]
            M = _segment_sum(M, self.counts[l + 1], axis=0)
            M = _segment_sum(M, self.counts[l + 1], axis=1)
            G[l] = M
        return G

    def family_gram(self, level: int, family: int, grams: list[np.ndarray] | None = None) -> np.ndarray:
        G = (grams or self.grams())[level]
        sl = self.family_slice(level, family)
        return G[sl, sl]

    def norm(self) -> float:
        """Quadrature L2 norm of the represented function."""
        G = self.grams()
        L0 = self.leaf[0].T @ (self.weights(0)[:, None] * self.leaf[0])
        return float(np.sqrt(max(np.sum(L0 * G[0]), 0.0)))

    def reconstruct(self, element_cap: int = DEFAULT_ELEMENT_CAP) -> np.ndarray:
        shape = tuple(g.n for g in self.grids)
        if int(np.prod(shape)) > element_cap:
            raise MemoryError("reconstruction exceeds element cap")
        # sweep from the final level upward, contracting one variable at a time
        cur = self.final.T  # (m_{d-2}, n_{d-1})
        for l in range(self.d - 2, -1, -1):
            off = self.offsets(l)
            n_par = self.counts[l].size
            rest = cur.shape[1:]
            out = np.zeros((n_par,) + (self.grids[l].n,) + rest)
            for p in range(n_par):
                sl = slice(off[p], off[p + 1])
                # sum_k leaf[:, k] (x) cur[k, ...]
                out[p] = np.tensordot(self.leaf[l][:, sl], cur[sl], axes=(1, 0))
            cur = out
        return cur[0]

    # -- flattening for time integration ----------------------------------

    def pack(self) -> np.ndarray:
        return np.concatenate([b.ravel() for b in self.leaf] + [self.final.ravel()])

    def unpack_like(self, vec: np.ndarray) -> "TtState":
        blocks, pos = [], 0
        for b in self.leaf:
            blocks.append(vec[pos : pos + b.size].reshape(b.shape))
            pos += b.size
        fin = vec[pos : pos + self.final.size].reshape(self.final.shape)
        return type(self)(self.grids, blocks, fin, [c.copy() for c in self.counts], self.time)

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_rank_one(cls, grids, factors, time: float = 0.0) -> "TtState":
        """Build a rank-one state from per-variable node-value factors.

        Factor norms are pushed into the final amplitude-carrying mode.
        """
        grids = tuple(grids)
        d = len(grids)
        if len(factors) != d:
            raise ValueError("need one factor per variable")
        amp = 1.0
        leaf = []
        for l in range(d - 1):
            f = np.asarray(factors[l], dtype=float)
            nrm = float(np.sqrt(np.dot(grids[l].weights, f * f)))
            if nrm == 0.0:
                raise ValueError(f"factor {l} is identically zero")
            leaf.append((f / nrm)[:, None])
            amp *= nrm
        fin = amp * np.asarray(factors[d - 1], dtype=float)[:, None]
        counts = [np.array([1], dtype=int) for _ in range(d - 1)]
        return cls(grids, leaf, fin, counts, time)

    @classmethod
    def from_decomposition(cls, h: HierarchicalDecomposition, time: float = 0.0) -> "TtState":
        """Convert a static TT-tree decomposition; eigenvalue products are
        folded into the final modes.

        Branches whose subtree was truncated to rank zero contribute nothing
        and are pruned (the propagator cannot carry empty mode families).
        """
        if not h.tree.is_tt():
            raise ValueError("only TT (caterpillar) decompositions convert to states")
        d = h.d

        def effective(l: int, path: tuple) -> list[int]:
            """Child indices of a branch whose subtrees are nonempty."""
            lam = h.spectra.get(l, {}).get(path)
            if lam is None:
                return []
            if l == d - 2:
                return list(range(lam.size))
            return [k for k in range(lam.size) if effective(l + 1, path + (k,))]

        counts, leaf = [], []
        paths = [()]
        for l in range(d - 1):
            keep = {p: effective(l, p) for p in paths}
            cnt = np.array([len(keep[p]) for p in paths], dtype=int)
            counts.append(cnt)
            var = l + 1
            blocks = [h.leaf_modes[var][p][:, keep[p]] for p in paths if keep[p]]
            if blocks:
                leaf.append(np.concatenate(blocks, axis=1))
            else:
                leaf.append(np.zeros((h.grids[l].n, 0)))
            paths = [p + (k,) for p in paths for k in keep[p]]
        # paths now index the last-level columns; final = lambda-product * psi^{(d)}
        def lam_product(path: tuple) -> float:
            prod = 1.0
            for j in range(len(path)):
                prod *= float(h.spectra[j][path[:j]][path[j]])
            return prod

        fin_cols = []
        for p in paths:
            psi_d = h.leaf_modes[d][p[:-1]][:, p[-1]]
            fin_cols.append(lam_product(p) * psi_d)
        fin = np.stack(fin_cols, axis=1) if fin_cols else np.zeros((h.grids[-1].n, 0))
        return cls(h.grids, leaf, fin, counts, time)


class DoTtState(TtState):
    """Orthonormal leaf families; amplitudes carried by the final modes."""

    def orthonormality_drift(self) -> float:
        worst = 0.0
        for l in range(self.d - 1):
            off = self.offsets(l)
            for p in range(self.counts[l].size):
                sl = slice(off[p], off[p + 1])
                blk = self.leaf[l][:, sl]
                G = blk.T @ (self.weights(l)[:, None] * blk)
                if G.size:
                    worst = max(worst, float(np.max(np.abs(G - np.eye(G.shape[0])))))
        return worst

    def level1_singular_values(self) -> np.ndarray:
        """Schmidt-like amplitudes at the first level: sqrt eig of the root Gram."""
        C = self.grams()[0]
        mu = np.linalg.eigvalsh(C)[::-1]
        return np.sqrt(np.clip(mu, 0.0, None))


class BoTtState(TtState):
    """Eigenvalue-carrying leaf families; orthonormal final modes."""

    def family_lambdas(self, level: int, family: int) -> np.ndarray:
        sl = self.family_slice(level, family)
        blk = self.leaf[level][:, sl]
        return np.sum(self.weights(level)[:, None] * blk * blk, axis=0)

    def biorthogonality_drift(self) -> float:
        worst = 0.0
        for l in range(self.d - 1):
            off = self.offsets(l)
            for p in range(self.counts[l].size):
                sl = slice(off[p], off[p + 1])
                blk = self.leaf[l][:, sl]
                G = blk.T @ (self.weights(l)[:, None] * blk)
                if G.size:
                    worst = max(worst, float(np.max(np.abs(G - np.diag(np.diag(G))))))
        return worst


def assemble_gram(state: TtState, level: int, family: int) -> np.ndarray:
    """Sibling Gram of the composite factors at a 1-based tree level.

    Entry [i, k] is the inner product of the composites attached to siblings
    i, k of the given family, computed from chained one-dimensional products
    (composites are never materialized).
    """
    if not 1 <= level <= state.d - 1:
        raise ValueError(f"level must be in 1..{state.d - 1}")
    return state.family_gram(level - 1, family)


def save_state(state: TtState, path: str) -> None:
    meta = {
        "format_version": 1,
        "kind": type(state).__name__,
        "time": state.time,
        "grids": [_grid_meta(g) for g in state.grids],
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for l, blk in enumerate(state.leaf):
        arrays[f"leaf{l}"] = np.asarray(blk, dtype="<f8")
        arrays[f"counts{l}"] = np.asarray(state.counts[l], dtype="<i8")
    arrays["final"] = np.asarray(state.final, dtype="<f8")
    np.savez(path, **arrays)


def load_state(path: str) -> TtState:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        grids = tuple(grid_from_meta(m) for m in meta["grids"])
        d = len(grids)
        leaf = [data[f"leaf{l}"] for l in range(d - 1)]
        counts = [data[f"counts{l}"].astype(int) for l in range(d - 1)]
        fin = data["final"]
    cls = {"DoTtState": DoTtState, "BoTtState": BoTtState, "TtState": TtState}[meta["kind"]]
    return cls(grids, leaf, fin, counts, float(meta["time"]))
