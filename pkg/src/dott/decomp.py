"""Recursive thresholded bi-orthogonal decomposition over a dimension tree.

Produces the static hierarchical expansion: per internal node a spectrum of
eigenvalues keyed by the multi-index path from the root, per leaf the
one-dimensional modes. Child decompositions operate on re-normalized parent
modes, so every non-root eigenvalue is at most 1 and a term retained with
path product Lambda satisfies Lambda >= sigma.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .grids import Grid1D, GridKind, fourier_grid, gauss_legendre_grid
from .schmidt import MatricizedFunction, schmidt_decompose
from .trees import DimensionTree

__all__ = [
    "HierarchicalDecomposition",
    "decompose",
    "reconstruct",
    "truncation_error",
    "evaluate_at_node",
    "save_decomposition",
    "load_decomposition",
    "DEFAULT_ELEMENT_CAP",
]

DEFAULT_ELEMENT_CAP = 10**8

_FORMAT_VERSION = 1


@dataclass
class HierarchicalDecomposition:
    """Static hierarchical expansion of a multivariate grid function.

    spectra[node_id][path] holds the retained eigenvalues of the node reached
    through multi-index ``path`` (node ids index ``tree.internal_nodes()`` in
    preorder). leaf_modes[var][path] holds the sibling modes of leaf ``var``
    as columns. full_spectra is populated in diagnostic mode and retains the
    discarded eigenvalues needed for exact truncation-error accounting.
    """

    tree: DimensionTree
    grids: tuple[Grid1D, ...]
    spectra: dict[int, dict[tuple, np.ndarray]]
    leaf_modes: dict[int, dict[tuple, np.ndarray]]
    full_spectra: dict[int, dict[tuple, np.ndarray]] = field(default_factory=dict)

    @property
    def d(self) -> int:
        return len(self.grids)

    def rank_profile(self) -> dict[int, dict[tuple, int]]:
        return {
            nid: {p: lam.size for p, lam in sorted(spec.items())}
            for nid, spec in self.spectra.items()
        }

    def root_rank(self) -> int:
        return self.spectra[0][()].size if self.spectra.get(0) else 0

    def flatten_ranks(self) -> list[int]:
        """Ranks in (node preorder, lexicographic path) order."""
        out = []
        for nid in sorted(self.spectra):
            for p in sorted(self.spectra[nid]):
                out.append(self.spectra[nid][p].size)
        return out

    def tt_level_ranks(self, level: int) -> list[int]:
        """For TT trees: ranks r_level in lexicographic parent order."""
        if not self.tree.is_tt():
            raise ValueError("level ranks are only defined for TT trees")
        nid = level - 1
        spec = self.spectra.get(nid, {})
        return [spec[p].size for p in sorted(spec)]


def _grid_shape(tree: DimensionTree, grids) -> tuple[int, ...]:
    return tuple(grids[v - 1].n for v in tree.variables)


def _node_ids(tree: DimensionTree) -> dict[int, int]:
    return {id(node): i for i, node in enumerate(tree.internal_nodes())}


def decompose(
    u: np.ndarray,
    tree: DimensionTree,
    grids,
    sigma: float,
    keep_full_spectra: bool = False,
    element_cap: int = DEFAULT_ELEMENT_CAP,
) -> HierarchicalDecomposition:
    """Recursive thresholded decomposition of a dense grid tensor.

    At the root the Schmidt threshold is sigma; a child reached through
    accumulated eigenvalue product Lambda uses sigma / Lambda. With
    keep_full_spectra=True the complete spectrum of every visited node is
    retained for truncation-error verification.
    """
    grids = tuple(grids)
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    d = len(grids)
    shape = tuple(g.n for g in grids)
    if u.shape != shape:
        raise ValueError(f"tensor shape {u.shape} does not match grids {shape}")
    if sorted(tree.variables) != list(range(1, d + 1)) or tree.variables != tuple(
        sorted(tree.variables)
    ):
        raise ValueError("tree must cover variables 1..d in order")
    if u.size > element_cap:
        raise MemoryError(f"tensor of {u.size} elements exceeds cap {element_cap}")

    ids = _node_ids(tree)
    spectra: dict[int, dict[tuple, np.ndarray]] = {}
    leaf_modes: dict[int, dict[tuple, np.ndarray]] = {}
    full_spectra: dict[int, dict[tuple, np.ndarray]] = {}

    def visit(node: DimensionTree, path: tuple, values: np.ndarray, thr: float):
        nid = ids[id(node)]
        lvars, rvars = node.left.variables, node.right.variables
        m = int(np.prod([grids[v - 1].n for v in lvars]))
        n = int(np.prod([grids[v - 1].n for v in rvars]))
        mat = MatricizedFunction(
            values.reshape(m, n),
            tuple(grids[v - 1] for v in lvars),
            tuple(grids[v - 1] for v in rvars),
        )
        pair = schmidt_decompose(mat, thr)
        spectra.setdefault(nid, {})[path] = pair.lambdas
        if keep_full_spectra:
            full_spectra.setdefault(nid, {})[path] = pair.full_lambdas
        for child, modes, vars_ in (
            (node.left, pair.left_modes, lvars),
            (node.right, pair.right_modes, rvars),
        ):
            if child.is_leaf:
                leaf_modes.setdefault(vars_[0], {})[path] = modes
            else:
                cshape = tuple(grids[v - 1].n for v in vars_)
                for k in range(pair.rank):
                    visit(child, path + (k,), modes[:, k].reshape(cshape), thr / pair.lambdas[k])

    visit(tree, (), u, sigma)
    # an all-zero branch leaves no leaf entries; normalize empty containers
    for leaf in tree.leaves():
        leaf_modes.setdefault(leaf.variables[0], {})
    return HierarchicalDecomposition(tree, grids, spectra, leaf_modes, full_spectra)


def _recon_node(h: HierarchicalDecomposition, ids, node: DimensionTree, path: tuple) -> np.ndarray:
    if node.is_leaf:
        block = h.leaf_modes[node.variables[0]].get(path[:-1])
        return block[:, path[-1]]
    lam = h.spectra.get(ids[id(node)], {}).get(path)
    size = int(np.prod([h.grids[v - 1].n for v in node.variables]))
    out = np.zeros(size)
    if lam is None:
        return out
    for k in range(lam.size):
        lv = _recon_node(h, ids, node.left, path + (k,))
        rv = _recon_node(h, ids, node.right, path + (k,))
        out += lam[k] * np.outer(lv, rv).ravel()
    return out


def reconstruct(
    h: HierarchicalDecomposition, element_cap: int = DEFAULT_ELEMENT_CAP
) -> np.ndarray:
    """Dense grid tensor of the expansion (summed over all retained terms)."""
    shape = tuple(g.n for g in h.grids)
    if int(np.prod(shape)) > element_cap:
        raise MemoryError(f"reconstruction of {np.prod(shape)} elements exceeds cap")
    ids = _node_ids(h.tree)
    return _recon_node(h, ids, h.tree, ()).reshape(shape)


def truncation_error(h: HierarchicalDecomposition) -> float:
    """Exact squared L2 truncation error from the retained/discarded spectra.

    Sums, over every internal node reached through retained branches, the
    squared-eigenvalue tail beyond the retained rank weighted by the squared
    eigenvalue product accumulated along the path. Requires a decomposition
    built with keep_full_spectra=True.
    """
    if not h.full_spectra:
        raise ValueError("decomposition lacks full spectra; rerun with keep_full_spectra=True")
    ids = _node_ids(h.tree)

    def walk(node: DimensionTree, path: tuple, acc2: float) -> float:
        if node.is_leaf:
            return 0.0
        nid = ids[id(node)]
        lam = h.spectra.get(nid, {}).get(path)
        full = h.full_spectra.get(nid, {}).get(path)
        if full is None:
            return 0.0
        r = 0 if lam is None else lam.size
        if r > full.size:
            raise ValueError("retained rank exceeds available spectrum")
        total = acc2 * float(np.sum(full[r:] ** 2))
        for k in range(r):
            a2 = acc2 * float(lam[k] ** 2)
            total += walk(node.left, path + (k,), a2)
            total += walk(node.right, path + (k,), a2)
        return total

    return walk(h.tree, (), 1.0)


def evaluate_at_node(h: HierarchicalDecomposition, index: tuple[int, ...]) -> float:
    """Evaluate the expansion at one tensor-product grid point."""
    if len(index) != h.d:
        raise IndexError(f"expected {h.d} indices, got {len(index)}")
    for i, g in zip(index, h.grids):
        if not 0 <= i < g.n:
            raise IndexError(f"index {i} out of range for grid of size {g.n}")
    ids = _node_ids(h.tree)
    idx = dict(zip((v for v in range(1, h.d + 1)), index))

    def walk(node: DimensionTree, path: tuple) -> float:
        if node.is_leaf:
            var = node.variables[0]
            return float(h.leaf_modes[var][path[:-1]][idx[var], path[-1]])
        lam = h.spectra.get(ids[id(node)], {}).get(path)
        if lam is None:
            return 0.0
        return float(
            sum(
                lam[k] * walk(node.left, path + (k,)) * walk(node.right, path + (k,))
                for k in range(lam.size)
            )
        )

    return walk(h.tree, ())


# -- serialization -----------------------------------------------------------


def _tree_to_obj(node: DimensionTree):
    if node.is_leaf:
        return list(node.variables)
    return [list(node.variables), _tree_to_obj(node.left), _tree_to_obj(node.right)]


def _tree_from_obj(obj) -> DimensionTree:
    if obj and isinstance(obj[0], int):
        return DimensionTree(tuple(obj))
    return DimensionTree(tuple(obj[0]), _tree_from_obj(obj[1]), _tree_from_obj(obj[2]))


def _grid_meta(g: Grid1D):
    return {"kind": g.kind.value, "n": g.n, "domain": list(g.domain)}


def grid_from_meta(meta) -> Grid1D:
    if meta["kind"] == GridKind.GAUSS_LEGENDRE.value:
        return gauss_legendre_grid(meta["n"], *meta["domain"])
    return fourier_grid(meta["n"], meta["domain"][1])


def _path_key(prefix: str, path: tuple) -> str:
    return prefix + "/" + ",".join(map(str, path))


def save_decomposition(h: HierarchicalDecomposition, path: str) -> None:
    """Write a self-describing .npz (mode arrays as little-endian float64)."""
    meta = {
        "format_version": _FORMAT_VERSION,
        "tree": _tree_to_obj(h.tree),
        "grids": [_grid_meta(g) for g in h.grids],
        "has_full_spectra": bool(h.full_spectra),
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for nid, spec in h.spectra.items():
        for p, lam in spec.items():
            arrays[_path_key(f"spec{nid}", p)] = np.asarray(lam, dtype="<f8")
    for nid, spec in h.full_spectra.items():
        for p, lam in spec.items():
            arrays[_path_key(f"full{nid}", p)] = np.asarray(lam, dtype="<f8")
    for var, blocks in h.leaf_modes.items():
        for p, block in blocks.items():
            arrays[_path_key(f"leaf{var}", p)] = np.asarray(block, dtype="<f8")
    np.savez(path, **arrays)


def load_decomposition(path: str) -> HierarchicalDecomposition:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta["format_version"] != _FORMAT_VERSION:
            raise ValueError(f"unsupported format version {meta['format_version']}")
        tree = _tree_from_obj(meta["tree"])
        grids = tuple(grid_from_meta(m) for m in meta["grids"])
        spectra: dict[int, dict[tuple, np.ndarray]] = {}
        full: dict[int, dict[tuple, np.ndarray]] = {}
        leaf: dict[int, dict[tuple, np.ndarray]] = {}
        for key in data.files:
            if key == "meta":
                continue
            head, pstr = key.split("/", 1)
            p = tuple(int(s) for s in pstr.split(",")) if pstr else ()
            if head.startswith("spec"):
                spectra.setdefault(int(head[4:]), {})[p] = data[key]
            elif head.startswith("full"):
                full.setdefault(int(head[4:]), {})[p] = data[key]
            elif head.startswith("leaf"):
                leaf.setdefault(int(head[4:]), {})[p] = data[key]
        for lf in tree.leaves():
            leaf.setdefault(lf.variables[0], {})
    return HierarchicalDecomposition(tree, grids, spectra, leaf, full)
