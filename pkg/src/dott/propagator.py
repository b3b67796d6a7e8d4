"""DO-TT and BO-TT propagators.

Both right-hand sides reduce every projection to chains of one-dimensional
quadratures; multi-variable composites are never materialized. The DO system
solves a sibling Gram system per mode family and evolves the amplitude-
carrying final modes directly. The BO system resolves the mode-rotation
matrices from the bi-orthogonality constraints (divided differences over
eigenvalue gaps) and therefore refuses to integrate through eigenvalue
crossings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EigenvalueCrossingError, SingularGramError
from .operators import SeparableOperator
from .state import BoTtState, DoTtState, TtState

__all__ = [
    "do_rhs",
    "bo_rhs",
    "rk4_step",
    "rk4_step_vector",
    "do_condition_residual",
    "do_to_bo",
    "bo_to_do",
    "reorthonormalize",
    "EquivalenceTransform",
    "transform_rhs",
    "DEFAULT_GRAM_CONDITION_CAP",
]

DEFAULT_GRAM_CONDITION_CAP = 1e12


def _expand2(M: np.ndarray, counts: np.ndarray) -> np.ndarray:
    if M.shape[0] == counts.size and (counts == 1).all():
        return M
    return np.repeat(np.repeat(M, counts, axis=0), counts, axis=1)


def _reduceat2(M: np.ndarray, counts: np.ndarray) -> np.ndarray:
    if M.shape[0] == counts.size and (counts == 1).all():
        return M
    offsets = np.concatenate(([0], np.cumsum(counts)))
    out = np.add.reduceat(M, offsets[:-1], axis=0)
    return np.add.reduceat(out, offsets[:-1], axis=1)


def _solve_gram(C: np.ndarray, B: np.ndarray, cond_cap: float) -> np.ndarray:
    """Solve C X = B for SPD C with a diagonal-jitter fallback."""
    r = C.shape[0]
    mu = np.linalg.eigvalsh(C)
    if mu[0] <= 0 or mu[-1] / mu[0] > cond_cap:
        jitter = 1e-14 * np.trace(C) / max(r, 1)
        Cj = C + jitter * np.eye(r)
        mu = np.linalg.eigvalsh(Cj)
        if mu[0] <= 0 or mu[-1] / mu[0] > cond_cap:
            raise SingularGramError(
                f"gram condition {mu[-1] / max(mu[0], 1e-300):.3e} exceeds cap "
                f"{cond_cap:.1e}; rank adaptation required"
            )
        C = Cj
    return np.linalg.solve(C, B)


class _SharedCrosses:
    """Plain mode crosses and composite Grams shared across operator terms."""

    def __init__(self, state: TtState):
        self.state = state
        self.PL = [
            state.leaf[l].T @ (state.weights(l)[:, None] * state.leaf[l])
            for l in range(state.d - 1)
        ]
        self.grams = state.grams()
        # levels where every family has a single branch: expansions and
        # reductions over siblings are identities there
        self.trivial = [bool((c == 1).all()) for c in state.counts]

    def leaf_gram_solve(self, l: int, M: np.ndarray) -> np.ndarray:
        """Apply the inverse family leaf Gram to the rows of M.

        The leaf families are orthonormal on the DO manifold, but integrator
        stages step off it by O(dt^2); projecting with the exact Gram keeps
        the right-hand side a smooth extension and preserves the RK4 order.
        """
        state = self.state
        if self.trivial[l]:
            diag = np.diag(self.PL[l])
            return M / diag[:, None] if M.ndim == 2 else M / diag
        out = np.array(M, dtype=float, copy=True)
        off = state.offsets(l)
        for p in range(state.counts[l].size):
            sl = slice(off[p], off[p + 1])
            L = self.PL[l][sl, sl]
            out[sl] = np.linalg.solve(L, out[sl])
        return out


class _TermWork:
    """Per-term projections; identity factors reuse the shared crosses."""

    def __init__(self, state: TtState, term, shared: _SharedCrosses):
        d = state.d
        self.Aleaf = {}  # level -> applied block, only for non-identity actions
        self.a1d = []
        for l in range(d - 1):
            act = term.actions[l]
            if act.is_identity():
                self.a1d.append(shared.PL[l])
            else:
                Ablk = act.apply(state.leaf[l], state.grids[l])
                self.Aleaf[l] = Ablk
                self.a1d.append(state.leaf[l].T @ (state.weights(l)[:, None] * Ablk))
        act = term.actions[d - 1]
        if act.is_identity():
            self.Afin = state.final
            afin = shared.grams[d - 2]
        else:
            self.Afin = act.apply(state.final, state.grids[d - 1])
            afin = state.final.T @ (state.grids[d - 1].weights[:, None] * self.Afin)
        # OG[l][j, b] = <composite_j, (applied) composite_b>; wherever every
        # factor on variables > l is the identity this is the plain Gram
        deepest = d - 1 if not act.is_identity() else max(
            (l for l in self.Aleaf), default=-1
        )
        self.OG = [None] * (d - 1)
        self.OG[d - 2] = afin
        for l in range(d - 3, -1, -1):
            if deepest <= l:
                self.OG[l] = shared.grams[l]
            elif shared.trivial[l + 1]:
                self.OG[l] = self.a1d[l + 1] * self.OG[l + 1]
            else:
                self.OG[l] = _reduceat2(self.a1d[l + 1] * self.OG[l + 1], state.counts[l + 1])

    def applied_leaf(self, state: TtState, l: int) -> np.ndarray:
        return self.Aleaf.get(l, state.leaf[l])


def do_rhs(
    state: DoTtState,
    op: SeparableOperator,
    t: float | None = None,
    cond_cap: float = DEFAULT_GRAM_CONDITION_CAP,
    diagnostics: dict | None = None,
    final_only: bool = False,
) -> np.ndarray:
    """Packed time derivative of all DO-TT leaf and final modes.

    Level by level the operator is projected through the retained modes; the
    sibling Gram system C dpsi/dt = M is solved per family and the final
    amplitude modes evolve by the accumulated projection directly. With
    final_only=True the leaf modes are frozen and no Gram system is solved
    (the warm-up phase after inserting zero-energy modes).
    """
    if t is None:
        t = state.time
    d = state.d
    if any(c.min() < 1 for c in state.counts):
        raise SingularGramError("state has an empty mode family")
    shared = _SharedCrosses(state)
    grams = shared.grams

    coeffs = [tm.coeff_at(t) for tm in op.terms]
    works = [
        _TermWork(state, tm, shared) if c != 0.0 else None
        for tm, c in zip(op.terms, coeffs)
    ]
    # Wm[l][j, b]: coefficient of (applied branch b) in the projection of
    # G(u) through target branch j, accumulated over levels <= l; every
    # projection applies the inverse family leaf Gram
    for wk in works:
        if wk is None:
            continue
        Wm = [shared.leaf_gram_solve(0, wk.a1d[0])]
        for l in range(1, d - 1):
            prev = Wm[l - 1] if shared.trivial[l] else _expand2(Wm[l - 1], state.counts[l])
            Wm.append(prev * shared.leaf_gram_solve(l, wk.a1d[l]))
        wk.Wm = Wm

    src_coeffs = [src.coeff_at(t) for src in op.sources]
    src_data = []
    for src, c in zip(op.sources, src_coeffs):
        if c == 0.0:
            src_data.append(None)
            continue
        g = [src.factors[v](state.grids[v].nodes) for v in range(d)]
        proj = [state.leaf[l].T @ (state.weights(l) * g[l]) for l in range(d - 1)]
        pfin = state.final.T @ (state.grids[d - 1].weights * g[d - 1])
        OV = [None] * (d - 1)
        OV[d - 2] = pfin
        for l in range(d - 3, -1, -1):
            OV[l] = np.add.reduceat(proj[l + 1] * OV[l + 1], state.offsets(l + 1)[:-1])
        projP = [shared.leaf_gram_solve(l, proj[l]) for l in range(d - 1)]
        Ws = [projP[0]]
        for l in range(1, d - 1):
            Ws.append(np.repeat(Ws[l - 1], state.counts[l]) * projP[l])
        src_data.append((g, proj, OV, Ws))

    dleaf = [np.zeros_like(b) for b in state.leaf]
    dfinal = np.zeros_like(state.final)

    # final (amplitude) modes: dPsi^(d) = projected operator action
    for c, wk in zip(coeffs, works):
        if wk is not None:
            dfinal += c * (wk.Afin @ wk.Wm[d - 2].T)
    for c, data in zip(src_coeffs, src_data):
        if data is not None:
            g, _, _, Ws = data
            dfinal += c * np.outer(g[d - 1], Ws[d - 2])

    worst_cond = 0.0
    for l in range(d - 1):
        if final_only:
            break
        m = state.width(l)
        T1 = np.zeros((state.grids[l].n, m))
        plain_coeff = None  # batched coefficients for identity-at-l terms
        for c, wk in zip(coeffs, works):
            if wk is None:
                continue
            if l == 0:
                coeffM = wk.OG[0]
            elif shared.trivial[l]:
                coeffM = wk.Wm[l - 1] * wk.OG[l]
            else:
                coeffM = _expand2(wk.Wm[l - 1], state.counts[l]) * wk.OG[l]
            if l in wk.Aleaf:
                T1 += c * (wk.Aleaf[l] @ coeffM.T)
            else:
                plain_coeff = c * coeffM if plain_coeff is None else plain_coeff + c * coeffM
        if plain_coeff is not None:
            T1 += state.leaf[l] @ plain_coeff.T
        for c, data in zip(src_coeffs, src_data):
            if data is None:
                continue
            g, _, OV, Ws = data
            Wprev = np.ones(1) if l == 0 else Ws[l - 1]
            T1 += c * np.outer(g[l], np.repeat(Wprev, state.counts[l]) * OV[l])

        w = state.weights(l)
        off = state.offsets(l)
        for p in range(state.counts[l].size):
            sl = slice(off[p], off[p + 1])
            blk = state.leaf[l][:, sl]
            T1f = T1[:, sl]
            L = shared.PL[l][sl, sl]
            M = T1f - blk @ np.linalg.solve(L, blk.T @ (w[:, None] * T1f))
            C = grams[l][sl, sl]
            if C.shape[0] == 1:
                c00 = float(C[0, 0])
                worst_cond = max(worst_cond, 1.0)
                if c00 <= 0:
                    raise SingularGramError("zero-energy branch in the Gram system")
                dleaf[l][:, sl] = M / c00
                continue
            mu = np.linalg.eigvalsh(C)
            worst_cond = max(worst_cond, mu[-1] / max(mu[0], 1e-300))
            dleaf[l][:, sl] = _solve_gram(C, M.T, cond_cap).T

    if diagnostics is not None:
        diagnostics["gram_condition"] = worst_cond
    return np.concatenate([b.ravel() for b in dleaf] + [dfinal.ravel()])


def bo_rhs(
    state: BoTtState,
    op: SeparableOperator,
    t: float | None = None,
    crossing_tol: float = 1e-8,
    diagnostics: dict | None = None,
) -> np.ndarray:
    """Packed time derivative of all BO-TT modes.

    The rotation matrices M (orthonormal side) and S (eigenvalue side) are
    recovered from the bi-orthogonality constraints: for distinct eigenvalues
    M_ik = (a_ik + a_ki) / (lambda_i - lambda_k) with a the projections of the
    effective right-hand side onto mode pairs. Eigenvalue gaps below
    ``crossing_tol`` (relative) abort the evaluation.
    """
    if t is None:
        t = state.time
    d = state.d
    if any(c.min() < 1 for c in state.counts):
        raise SingularGramError("state has an empty mode family")
    shared = _SharedCrosses(state)
    grams, PL = shared.grams, shared.PL

    coeffs = [tm.coeff_at(t) for tm in op.terms]
    works = [
        _TermWork(state, tm, shared) if c != 0.0 else None
        for tm, c in zip(op.terms, coeffs)
    ]
    for wk in works:
        if wk is not None:
            wk.Wrun = np.ones((1, 1))  # running projection coefficients

    src_coeffs = [src.coeff_at(t) for src in op.sources]
    src_data = []
    for src, c in zip(op.sources, src_coeffs):
        if c == 0.0:
            src_data.append(None)
            continue
        g = [src.factors[v](state.grids[v].nodes) for v in range(d)]
        proj = [state.leaf[l].T @ (state.weights(l) * g[l]) for l in range(d - 1)]
        pfin = state.final.T @ (state.grids[d - 1].weights * g[d - 1])
        OV = [None] * (d - 1)
        OV[d - 2] = pfin
        for l in range(d - 3, -1, -1):
            OV[l] = np.add.reduceat(proj[l + 1] * OV[l + 1], state.offsets(l + 1)[:-1])
        src_data.append([g, proj, OV, np.ones(1)])  # last: running Ws

    dleaf = [np.zeros_like(b) for b in state.leaf]
    dfinal = np.zeros_like(state.final)
    R = np.zeros((1, 1))  # rotation corrections accumulated from ancestors

    for l in range(d - 1):
        m = state.width(l)
        n = state.grids[l].n
        w = state.weights(l)
        off = state.offsets(l)

        # p_k = <EffN, composite_k>, a function of x_l per branch
        T1 = np.zeros((n, m))
        for c, wk in zip(coeffs, works):
            if wk is None:
                continue
            prev = wk.Wrun if shared.trivial[l] else _expand2(wk.Wrun, state.counts[l])
            coeffM = prev * wk.OG[l]
            T1 += c * (wk.applied_leaf(state, l) @ coeffM.T)
        for c, data in zip(src_coeffs, src_data):
            if data is None:
                continue
            g, _, OV, Wprev = data
            T1 += c * np.outer(g[l], np.repeat(Wprev, state.counts[l]) * OV[l])
        Rexp = _expand2(R, state.counts[l])
        T1 += state.leaf[l] @ (Rexp * grams[l].T).T

        lambdas = np.sum(w[:, None] * state.leaf[l] ** 2, axis=0)
        S_blocks = []
        for p in range(state.counts[l].size):
            sl = slice(off[p], off[p + 1])
            blk = state.leaf[l][:, sl]
            lam = lambdas[sl]
            r = lam.size
            gaps = np.abs(lam[:, None] - lam[None, :]) + np.eye(r) * max(lam.max(), 1.0)
            if r > 1 and gaps.min() < crossing_tol * max(lam.max(), 1e-300):
                raise EigenvalueCrossingError(
                    f"eigenvalue gap {gaps.min():.3e} at level {l + 1} family {p}"
                )
            a = blk.T @ (w[:, None] * T1[:, sl])
            M = np.zeros((r, r))
            if r > 1:
                denom = lam[:, None] - lam[None, :]
                np.fill_diagonal(denom, 1.0)
                M = (a + a.T) / denom
                np.fill_diagonal(M, 0.0)
            S = a - lam[:, None] * M
            S_blocks.append((p, sl, S, lam))
            dleaf[l][:, sl] = blk @ M.T + T1[:, sl]

        if diagnostics is not None:
            diagnostics.setdefault("families", {})
            for p, sl, S, lam in S_blocks:
                diagnostics["families"][(l, p)] = {"S": S.copy(), "lambdas": lam.copy()}

        if l == d - 2:
            # final equation: Lambda dphi^(d)/dt = -S phi^(d) + h
            H = np.zeros_like(state.final)
            for c, wk in zip(coeffs, works):
                if wk is None:
                    continue
                Wfin = _expand2(wk.Wrun, state.counts[l]) * wk.a1d[l]
                H += c * (wk.Afin @ Wfin.T)
            for c, data in zip(src_coeffs, src_data):
                if data is None:
                    continue
                g, proj, _, Wprev = data
                Wfin = np.repeat(Wprev, state.counts[l]) * proj[l]
                H += c * np.outer(g[d - 1], Wfin)
            H += state.final @ (Rexp * PL[l]).T
            for p, sl, S, lam in S_blocks:
                dfinal[:, sl] = (H[:, sl] - state.final[:, sl] @ S.T) / lam[None, :]
        else:
            # propagate effective-N coefficients to the child level
            inv_lam = 1.0 / lambdas
            R_next = (Rexp * PL[l]).copy()
            for p, sl, S, lam in S_blocks:
                R_next[sl, sl] -= S
            R = inv_lam[:, None] * R_next
            for c, wk in zip(coeffs, works):
                if wk is None:
                    continue
                wk.Wrun = inv_lam[:, None] * (_expand2(wk.Wrun, state.counts[l]) * wk.a1d[l])
            for c, data in zip(src_coeffs, src_data):
                if data is None:
                    continue
                proj = data[1]
                data[3] = inv_lam * (np.repeat(data[3], state.counts[l]) * proj[l])

    return np.concatenate([b.ravel() for b in dleaf] + [dfinal.ravel()])


def rk4_step_vector(y: np.ndarray, t: float, dt: float, f) -> np.ndarray:
    """Classical fourth-order step for dy/dt = f(y, t)."""
    k1 = f(y, t)
    k2 = f(y + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = f(y + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = f(y + dt * k3, t + dt)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step(state: TtState, rhs, dt: float) -> TtState:
    """Advance a state by one RK4 step; rhs(state, t) returns a packed vector."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    t0 = state.time

    def f(y: np.ndarray, t: float) -> np.ndarray:
        s = state.unpack_like(y)
        s.time = t
        return rhs(s, t)

    out = state.unpack_like(rk4_step_vector(state.pack(), t0, dt, f))
    out.time = t0 + dt
    return out


def do_condition_residual(state: DoTtState, packed_deriv: np.ndarray) -> float:
    """Max |<dpsi_i/dt, psi_k>| over all sibling families (DO condition)."""
    deriv = state.unpack_like(packed_deriv)
    worst = 0.0
    for l in range(state.d - 1):
        off = state.offsets(l)
        w = state.weights(l)
        for p in range(state.counts[l].size):
            sl = slice(off[p], off[p + 1])
            G = deriv.leaf[l][:, sl].T @ (w[:, None] * state.leaf[l][:, sl])
            if G.size:
                worst = max(worst, float(np.max(np.abs(G))))
    return worst


# -- DO <-> BO equivalence ----------------------------------------------------


@dataclass
class EquivalenceTransform:
    """Per-family transform data: orthogonal P, Gram diagonal, skew part of S."""

    level: int
    family: int
    P: np.ndarray
    lambdas: np.ndarray
    sigma: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def orthogonality_defect(self) -> float:
        r = self.P.shape[0]
        return float(np.linalg.norm(self.P.T @ self.P - np.eye(r)))


def transform_rhs(tr: EquivalenceTransform, S: np.ndarray, lambdas: np.ndarray) -> np.ndarray:
    """dP/dt for co-integration: -Lambda^{-1/2} Sigma Lambda^{-1/2} P."""
    sigma = S - np.diag(np.diag(S))
    inv_sqrt = 1.0 / np.sqrt(lambdas)
    F = -(inv_sqrt[:, None] * sigma * inv_sqrt[None, :])
    return F @ tr.P


def do_to_bo(state: DoTtState) -> tuple[BoTtState, list[EquivalenceTransform]]:
    """Convert a DO state to the equivalent BO state at fixed time (P = I).

    The state is re-orthogonalized through its tensor-train cores, which
    diagonalizes every sibling Gram exactly; the eigenvalue carriers move into
    the leaf modes. Reconstruction is invariant up to round-off. Branch ranks
    may change: the bi-orthogonal re-representation of a rotated mid-run state
    genuinely requires the Schmidt ranks of the underlying function.
    """
    from . import cores as tc

    bo = tc.cores_to_state(
        tc.state_to_cores(state), state.grids, 0.0, time=state.time, cls=BoTtState
    )
    transforms = []
    for l in range(bo.d - 1):
        for p in range(bo.counts[l].size):
            lam = bo.family_lambdas(l, p)
            transforms.append(EquivalenceTransform(l + 1, p, np.eye(lam.size), lam))
    return bo, transforms


def reorthonormalize(
    state: DoTtState,
    sigma: float = 0.0,
    rank_floor_rel: float = 1e-13,
    preserve_ranks: bool = False,
) -> DoTtState:
    """Restore exact orthonormality of every sibling family.

    Runs the orthogonalization sweep through the tensor-train cores (the same
    restart step used after explicit-tensor adaptation): the reconstruction is
    preserved to round-off while the mode families come back quadrature-
    orthonormal and bi-orthogonal. Numerically dependent siblings (branch
    amplitudes below ``rank_floor_rel`` relative to the function norm) reduce
    the rank.

    With preserve_ranks=True every family rank is capped at its current
    value, giving the best same-rank re-orthonormalization. Propagation loops
    need this: the drifted function picks up weak content beyond the state's
    rank budget, and resurrecting it as near-zero branches makes the Gram
    systems arbitrarily stiff.
    """
    from . import cores as tc

    nrm = state.norm()
    cut = max(sigma, rank_floor_rel * nrm if nrm > 0 else 0.0)
    caps = [c.copy() for c in state.counts] if preserve_ranks else None
    out = tc.cores_to_state(
        tc.state_to_cores(state),
        state.grids,
        cut,
        time=state.time,
        cls=type(state),
        min_keep=1,
        per_branch_caps=caps,
    )
    return out


def bo_to_do(state: BoTtState) -> tuple[DoTtState, list[EquivalenceTransform]]:
    """Convert a BO state to the equivalent DO state (P = I).

    Leaf families are normalized; the norms are per-branch scalars, so they
    push straight through to the final modes without mixing branches.
    """
    st = state.copy()
    d = st.d
    transforms = []
    final_scale = np.ones(st.width(d - 2))
    for l in range(d - 1):
        w = st.weights(l)
        norms = np.sqrt(np.sum(w[:, None] * st.leaf[l] ** 2, axis=0))
        if np.any(norms == 0):
            raise SingularGramError("zero-norm BO mode cannot be normalized")
        st.leaf[l] = st.leaf[l] / norms[None, :]
        # broadcast each branch norm onto all final columns below it
        scale = norms.copy()
        for lv in range(l + 1, d - 1):
            scale = np.repeat(scale, st.counts[lv])
        final_scale *= scale
        off = st.offsets(l)
        for p in range(st.counts[l].size):
            sl = slice(off[p], off[p + 1])
            lam = norms[sl] ** 2
            transforms.append(EquivalenceTransform(l + 1, p, np.eye(lam.size), lam))
    st.final = st.final * final_scale[None, :]
    do = DoTtState(st.grids, st.leaf, st.final, st.counts, st.time)
    return do, transforms
