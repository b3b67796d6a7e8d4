"""Hierarchical bi-orthogonal decomposition and dynamically orthogonal
tensor-train propagators for high-dimensional time-dependent PDEs."""

from .grids import Grid1D, GridKind, fourier_grid, gauss_legendre_grid, inner_product
from .schmidt import (
    MatricizedFunction,
    SchmidtPair,
    Side,
    correlation_kernel,
    eigen_sym_weighted,
    schmidt_decompose,
)
from .trees import DimensionTree, ht_tree, tt_tree
from .decomp import (
    HierarchicalDecomposition,
    decompose,
    evaluate_at_node,
    load_decomposition,
    reconstruct,
    save_decomposition,
    truncation_error,
)
from .operators import (
    FactorAction,
    OperatorTerm,
    SeparableOperator,
    SourceTerm,
    advection_2d,
    apply_factor,
    dense_apply,
    diffusion,
    forcing_3d_example,
    hyperbolic_4d,
    hyperbolic_separable,
)
from .state import BoTtState, DoTtState, TtState, assemble_gram, load_state, save_state
from .propagator import (
    EquivalenceTransform,
    bo_rhs,
    bo_to_do,
    do_condition_residual,
    do_rhs,
    do_to_bo,
    reorthonormalize,
    rk4_step,
    rk4_step_vector,
    transform_rhs,
)
from .adapt import (
    add_modes_zero_energy,
    adapt_by_explicit_step,
    remove_modes,
    warmup_new_modes,
)
from .errors import EigenvalueCrossingError, RankExplosionError, SingularGramError

__version__ = "0.1.0"
