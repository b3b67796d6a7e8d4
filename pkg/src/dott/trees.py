"""Dimension trees: binary trees of variable-index sets.

The root holds all variables, children partition their parent, leaves are
singletons, and left-child indices precede right-child indices.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["DimensionTree", "tt_tree", "ht_tree", "binary_tree_from_splits"]


@dataclass(frozen=True)
class DimensionTree:
    variables: tuple[int, ...]
    left: "DimensionTree | None" = None
    right: "DimensionTree | None" = None

    def __post_init__(self):
        if (self.left is None) != (self.right is None):
            raise ValueError("internal nodes need both children")
        if self.left is not None:
            joined = self.left.variables + self.right.variables
            if joined != self.variables:
                raise ValueError(
                    f"children {self.left.variables} | {self.right.variables} "
                    f"do not partition {self.variables} in order"
                )
        elif len(self.variables) != 1:
            raise ValueError("leaves must hold a single variable")

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def internal_nodes(self) -> list["DimensionTree"]:
        """Internal nodes in preorder (root first)."""
        if self.is_leaf:
            return []
        return [self] + self.left.internal_nodes() + self.right.internal_nodes()

    def leaves(self) -> list["DimensionTree"]:
        if self.is_leaf:
            return [self]
        return self.left.leaves() + self.right.leaves()

    def is_tt(self) -> bool:
        """True for the caterpillar tree splitting one variable off at a time."""
        node = self
        while not node.is_leaf:
            if not node.left.is_leaf:
                return False
            node = node.right
        return True


def tt_tree(d: int) -> DimensionTree:
    """Caterpillar tree of depth d-1: variable j split off at level j."""
    if d < 2:
        raise ValueError(f"need at least two variables, got d={d}")

    def build(lo: int) -> DimensionTree:
        if lo == d:
            return DimensionTree((d,))
        return DimensionTree(
            tuple(range(lo, d + 1)), DimensionTree((lo,)), build(lo + 1)
        )

    return build(1)


def ht_tree(d: int) -> DimensionTree:
    """Balanced tree splitting variable sets in half (ceil(size/2) left)."""
    if d < 2:
        raise ValueError(f"need at least two variables, got d={d}")

    def build(vs: tuple[int, ...]) -> DimensionTree:
        if len(vs) == 1:
            return DimensionTree(vs)
        p = (len(vs) + 1) // 2
        return DimensionTree(vs, build(vs[:p]), build(vs[p:]))

    return build(tuple(range(1, d + 1)))


def binary_tree_from_splits(variables: tuple[int, ...], split_at) -> DimensionTree:
    """Custom tree: split_at(vars) -> how many variables go to the left child."""
    if len(variables) == 1:
        return DimensionTree(variables)
    p = split_at(variables)
    if not 1 <= p < len(variables):
        raise ValueError(f"invalid split {p} for {variables}")
    return DimensionTree(
        variables,
        binary_tree_from_splits(variables[:p], split_at),
        binary_tree_from_splits(variables[p:], split_at),
    )
