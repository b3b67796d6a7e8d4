"""Separable operators: sums of rank-one products of single-variable actions.

Each term applies one factor action per variable (multiply by a function,
first or second spectral derivative, identity, or a combination of multiply
and derivative). Pure source terms carry fixed rank-one functions instead of
actions on the solution. Applied inside the propagator, every Galerkin inner
product then factors into one-dimensional quadratures.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .grids import Grid1D
from .decomp import DEFAULT_ELEMENT_CAP

__all__ = [
    "FactorAction",
    "OperatorTerm",
    "SourceTerm",
    "SeparableOperator",
    "apply_factor",
    "advection_2d",
    "hyperbolic_4d",
    "hyperbolic_separable",
    "diffusion",
    "forcing_3d_example",
    "dense_apply",
    "FUNCTION_REGISTRY",
    "make_registry_function",
    "HYPERBOLIC_4D_C",
]


@dataclass(frozen=True)
class FactorAction:
    """One single-variable factor: optional derivative then optional multiplier.

    deriv = 0, 1 or 2 selects identity, d1 or d2; prefactor (if given) is an
    analytic function evaluated at the grid nodes and applied pointwise after
    the derivative.
    """

    deriv: int = 0
    prefactor: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = ""

    def is_identity(self) -> bool:
        return self.deriv == 0 and self.prefactor is None

    def matrix(self, grid: Grid1D) -> np.ndarray:
        """Dense n x n matrix of the action on node values."""
        if self.deriv == 0:
            A = np.eye(grid.n)
        elif self.deriv == 1:
            A = grid.d1.copy()
        elif self.deriv == 2:
            A = grid.d2.copy()
        else:
            raise ValueError(f"unsupported derivative order {self.deriv}")
        if self.prefactor is not None:
            A = self.prefactor(grid.nodes)[:, None] * A
        return A

    def apply(self, modes: np.ndarray, grid: Grid1D) -> np.ndarray:
        """Apply to node-value vectors (columns of ``modes``)."""
        v = np.asarray(modes, dtype=float)
        squeeze = v.ndim == 1
        if squeeze:
            v = v[:, None]
        if v.shape[0] != grid.n:
            raise ValueError(f"mode length {v.shape[0]} does not match grid size {grid.n}")
        if self.deriv == 1:
            v = grid.d1 @ v
        elif self.deriv == 2:
            v = grid.d2 @ v
        elif self.deriv != 0:
            raise ValueError(f"unsupported derivative order {self.deriv}")
        else:
            v = v.copy()
        if self.prefactor is not None:
            v *= self.prefactor(grid.nodes)[:, None]
        return v[:, 0] if squeeze else v


def apply_factor(action: FactorAction, mode: np.ndarray, grid: Grid1D) -> np.ndarray:
    return action.apply(mode, grid)


@dataclass(frozen=True)
class OperatorTerm:
    actions: tuple[FactorAction, ...]
    coefficient: float = 1.0
    time_dependence: Callable[[float], float] | None = None

    def coeff_at(self, t: float) -> float:
        c = self.coefficient
        if self.time_dependence is not None:
            c *= self.time_dependence(t)
        return c


@dataclass(frozen=True)
class SourceTerm:
    """u-independent rank-one forcing: coeff(t) * prod_j g_j(x_j)."""

    factors: tuple[Callable[[np.ndarray], np.ndarray], ...]
    coefficient: float = 1.0
    time_dependence: Callable[[float], float] | None = None

    def coeff_at(self, t: float) -> float:
        c = self.coefficient
        if self.time_dependence is not None:
            c *= self.time_dependence(t)
        return c


@dataclass(frozen=True)
class SeparableOperator:
    d: int
    terms: tuple[OperatorTerm, ...] = ()
    sources: tuple[SourceTerm, ...] = ()

    def __post_init__(self):
        for term in self.terms:
            if len(term.actions) != self.d:
                raise ValueError("every term needs exactly d factor actions")
        for src in self.sources:
            if len(src.factors) != self.d:
                raise ValueError("every source needs exactly d factors")

    @property
    def rank(self) -> int:
        return len(self.terms) + len(self.sources)

    def term_coefficients(self, t: float) -> list[float]:
        return [tm.coeff_at(t) for tm in self.terms] + [s.coeff_at(t) for s in self.sources]


def _ident() -> FactorAction:
    return FactorAction()


def advection_2d() -> SeparableOperator:
    """du/dt = (sin x1 + 3 cos x2) du/dx1 + cos x2 du/dx2 on [0, 2pi]^2."""
    t1 = OperatorTerm((FactorAction(1, np.sin, "sin(x)*d1"), _ident()))
    t2 = OperatorTerm((FactorAction(1, None, "d1"), FactorAction(0, np.cos, "cos(x)")), 3.0)
    t3 = OperatorTerm((_ident(), FactorAction(1, np.cos, "cos(x)*d1")))
    return SeparableOperator(2, (t1, t2, t3))


HYPERBOLIC_4D_C = np.array(
    [
        [0.0, 0.5, 0.0, 0.0],
        [0.0, 0.0, -0.3, 0.0],
        [0.0, 0.0, 0.0, -1.0],
        [0.5, 0.0, 0.0, 0.0],
    ]
)


def _default_4d_functions() -> list[Callable[[np.ndarray], np.ndarray]]:
    return [
        lambda x: np.sin(x),
        lambda x: np.cos(2 * x),
        lambda x: np.sin(3 * x),
        lambda x: np.cos(4 * x),
    ]


def hyperbolic_4d(c: np.ndarray | None = None, f: Sequence[Callable] | None = None) -> SeparableOperator:
    """du/dt = sum_{i,j} c_ij f_j(x_j) du/dx_i, one term per nonzero c_ij."""
    c = HYPERBOLIC_4D_C if c is None else np.asarray(c, dtype=float)
    f = _default_4d_functions() if f is None else list(f)
    terms = []
    for i in range(4):
        for j in range(4):
            if c[i, j] == 0.0:
                continue
            actions = [_ident() for _ in range(4)]
            if i == j:
                actions[i] = FactorAction(1, f[j], f"f{j + 1}*d1")
            else:
                actions[i] = FactorAction(1, None, "d1")
                actions[j] = FactorAction(0, f[j], f"f{j + 1}")
            terms.append(OperatorTerm(tuple(actions), float(c[i, j])))
    return SeparableOperator(4, tuple(terms))


def hyperbolic_separable(d: int, f: Sequence[Callable]) -> SeparableOperator:
    """du/dt = sum_j f_j(x_j) du/dx_j; zero-function factors are dropped."""
    if len(f) != d:
        raise ValueError("need one coefficient function per variable")
    terms = []
    for j in range(d):
        actions = [_ident() for _ in range(d)]
        actions[j] = FactorAction(1, f[j], f"f{j + 1}*d1")
        terms.append(OperatorTerm(tuple(actions)))
    return SeparableOperator(d, tuple(terms))


def diffusion(d: int) -> SeparableOperator:
    """du/dt = sum_j d2u/dx_j^2."""
    terms = []
    for j in range(d):
        actions = [_ident() for _ in range(d)]
        actions[j] = FactorAction(2, None, "d2")
        terms.append(OperatorTerm(tuple(actions)))
    return SeparableOperator(d, tuple(terms))


def forcing_3d_example() -> SeparableOperator:
    """Pure source du/dt = x2 x3 + 2t x1 x3 - 4 cos(t) x1 x2 x3 on [-1,1]^3."""
    one = lambda x: np.ones_like(x)
    lin = lambda x: x
    s1 = SourceTerm((one, lin, lin), 1.0)
    s2 = SourceTerm((lin, one, lin), 2.0, lambda t: t)
    s3 = SourceTerm((lin, lin, lin), -4.0, np.cos)
    return SeparableOperator(3, (), (s1, s2, s3))


def dense_apply(
    op: SeparableOperator,
    u: np.ndarray,
    grids: Sequence[Grid1D],
    t: float = 0.0,
    element_cap: int = DEFAULT_ELEMENT_CAP,
) -> np.ndarray:
    """Apply the operator on a dense grid tensor (test oracle for small d)."""
    if u.size > element_cap:
        raise MemoryError("dense application exceeds element cap")
    out = np.zeros_like(u, dtype=float)
    for term in op.terms:
        v = u.astype(float, copy=True)
        for axis, (action, grid) in enumerate(zip(term.actions, grids)):
            if action.is_identity():
                continue
            A = action.matrix(grid)
            v = np.moveaxis(np.tensordot(A, v, axes=(1, axis)), 0, axis)
        out += term.coeff_at(t) * v
    for src in op.sources:
        v = np.ones(())
        for g, grid in zip(src.factors, grids):
            v = np.multiply.outer(v, g(grid.nodes))
        out += src.coeff_at(t) * v
    return out


# analytic functions nameable in experiment configs
def make_registry_function(spec: dict) -> Callable[[np.ndarray], np.ndarray]:
    """Build a callable from {'fn': name, ...} with fn in the fixed registry."""
    kind = spec["fn"]
    if kind not in FUNCTION_REGISTRY:
        raise ValueError(f"unknown registry function {kind!r}")
    return FUNCTION_REGISTRY[kind](spec)


FUNCTION_REGISTRY: dict[str, Callable[[dict], Callable]] = {
    "sin": lambda s: (lambda x, k=s.get("k", 1): np.sin(k * x)),
    "cos": lambda s: (lambda x, k=s.get("k", 1): np.cos(k * x)),
    "monomial": lambda s: (lambda x, k=s.get("k", 1): x**k),
    "constant": lambda s: (lambda x, c=s.get("value", 1.0): np.full_like(x, float(c))),
}
