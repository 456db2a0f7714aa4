"""Category definitions, proof trees and evidence combination.

Primitive memberships are conjoined with the probabilistic AND
(``a * b``); a subcategory's own evidence is merged with its parent
category's measure through the probabilistic OR (``a + b - a * b``),
gated on the subcategory evidence exceeding a threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache, reduce
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .errors import CyclicDefinition, EmptyInput, MissingMeasurement, PartialModel, UnknownCategory
from .membership import evaluate_trapezoid


# --- definitions -----------------------------------------------------------


@dataclass
class FunctionalProperty:
    name: str
    ranges: list[str] = field(default_factory=list)
    units: dict[str, str] = field(default_factory=dict)


@dataclass
class CategoryDef:
    name: str
    parent: Optional[str] = None
    binary_props: list[str] = field(default_factory=list)
    range_groups: list[FunctionalProperty] = field(default_factory=list)

    @property
    def carries_measure(self) -> bool:
        # categories with no functional properties only structure the hierarchy
        return bool(self.binary_props or self.range_groups)

    @property
    def range_ids(self) -> list[str]:
        return [r for g in self.range_groups for r in g.ranges]


@dataclass
class DefinitionTree:
    categories: list[CategoryDef] = field(default_factory=list)

    def __contains__(self, name: str) -> bool:
        return any(c.name == name for c in self.categories)

    def __len__(self) -> int:
        return len(self.categories)

    def get(self, name: str) -> CategoryDef:
        for c in self.categories:
            if c.name == name:
                return c
        raise UnknownCategory(f"unknown category {name!r}")

    def ancestry(self, name: str) -> list[CategoryDef]:
        """Categories from the root down to ``name`` (inclusive)."""
        chain = []
        seen = set()
        cur: Optional[str] = name
        while cur is not None:
            if cur in seen:
                raise CyclicDefinition(f"category {cur!r} extends itself through {name!r}")
            seen.add(cur)
            cat = self.get(cur)
            chain.append(cat)
            cur = cat.parent
        return chain[::-1]

    def measured_chain(self, name: str) -> list[CategoryDef]:
        return [c for c in self.ancestry(name) if c.carries_measure]

    def ranges_for(self, name: str) -> list[str]:
        """All range ids an example of ``name`` must supply."""
        return [r for c in self.ancestry(name) for r in c.range_ids]

    def binaries_for(self, name: str) -> list[str]:
        return [b for c in self.ancestry(name) for b in c.binary_props]

    def owner_of(self, range_id: str) -> CategoryDef:
        for c in self.categories:
            if range_id in c.range_ids:
                return c
        raise KeyError(range_id)

    def all_ranges(self) -> list[str]:
        return [r for c in self.categories for r in c.range_ids]

    def unit_of(self, range_id: str) -> Optional[str]:
        for c in self.categories:
            for g in c.range_groups:
                if range_id in g.units:
                    return g.units[range_id]
        return None


@dataclass
class LevelMap:
    level_of: dict[str, int] = field(default_factory=dict)

    def __getitem__(self, name: str) -> int:
        return self.level_of[name]

    def __contains__(self, name: str) -> bool:
        return name in self.level_of

    @property
    def levels(self) -> list[int]:
        return sorted(set(self.level_of.values()))

    def categories_at(self, level: int) -> list[str]:
        return [c for c, lv in self.level_of.items() if lv == level]


def assign_levels(defs: DefinitionTree) -> LevelMap:
    """Learning level of every measure-bearing category.

    A category's level is the number of measure-bearing categories on its
    ancestry chain, itself included.
    """
    levels = {}
    for cat in defs.categories:
        chain = defs.measured_chain(cat.name)
        if cat.carries_measure:
            levels[cat.name] = len(chain)
    return LevelMap(levels)


def range_levels(defs: DefinitionTree, levels: Optional[LevelMap] = None) -> dict[str, int]:
    levels = levels or assign_levels(defs)
    return {r: levels[c.name] for c in defs.categories if c.name in levels for r in c.range_ids}


# --- combiners --------------------------------------------------------------


def pand(values: Sequence[float]) -> float:
    """Probabilistic AND of one or more memberships."""
    vals = list(values)
    if not vals:
        raise EmptyInput("pand needs at least one value")
    return reduce(lambda a, b: a * b, vals)


def por(a: float, b: float) -> float:
    """Probabilistic OR of two memberships."""
    return a + b - a * b


# --- proof trees -------------------------------------------------------------


@dataclass(frozen=True)
class RangeLeaf:
    range_id: str
    measurement_key: str
    level: int = 1


@dataclass(frozen=True)
class BinaryLeaf:
    prop_id: str
    level: int = 1


@dataclass(frozen=True)
class PandNode:
    children: tuple
    label: str = ""


@dataclass(frozen=True)
class PorNode:
    parent_branch: "Node"
    subtree_branch: "Node"
    label: str = ""


Node = Union[RangeLeaf, BinaryLeaf, PandNode, PorNode]


@dataclass(frozen=True)
class ProofTree:
    root: Node
    category: str

    @property
    def range_leaves(self) -> list[RangeLeaf]:
        return [n for n in iter_nodes(self.root) if isinstance(n, RangeLeaf)]

    @property
    def binary_leaves(self) -> list[BinaryLeaf]:
        return [n for n in iter_nodes(self.root) if isinstance(n, BinaryLeaf)]

    @property
    def range_ids(self) -> list[str]:
        return [leaf.range_id for leaf in self.range_leaves]


def iter_nodes(node: Node):
    yield node
    if isinstance(node, PandNode):
        for ch in node.children:
            yield from iter_nodes(ch)
    elif isinstance(node, PorNode):
        yield from iter_nodes(node.parent_branch)
        yield from iter_nodes(node.subtree_branch)


@lru_cache(maxsize=None)
def range_levels_under(node: Node) -> frozenset:
    """Learning levels of the range leaves below ``node``."""
    if isinstance(node, RangeLeaf):
        return frozenset([node.level])
    if isinstance(node, BinaryLeaf):
        return frozenset()
    if isinstance(node, PandNode):
        return frozenset().union(*(range_levels_under(c) for c in node.children))
    return range_levels_under(node.parent_branch) | range_levels_under(node.subtree_branch)


def is_fixed(node: Node, frozen_levels) -> bool:
    """True if no learnable range sits below ``node``."""
    return range_levels_under(node) <= frozenset(frozen_levels)


def _own_pand(cat: CategoryDef, level: int) -> PandNode:
    children = [BinaryLeaf(b, level) for b in cat.binary_props]
    for grp in cat.range_groups:
        leaves = tuple(RangeLeaf(r, r, level) for r in grp.ranges)
        children.append(PandNode(leaves, grp.name))
    return PandNode(tuple(children), cat.name)


def build_proof_tree(defs: DefinitionTree, category: str) -> ProofTree:
    """Executable AND/OR tree for examples of ``category``."""
    chain = defs.measured_chain(category)
    if not chain:
        raise UnknownCategory(f"category {category!r} carries no functional properties")
    root: Node = _own_pand(chain[0], 1)
    for level, cat in enumerate(chain[1:], start=2):
        root = PorNode(root, _own_pand(cat, level), cat.name)
    return ProofTree(root, category)


# --- evaluation --------------------------------------------------------------


def leaf_memberships(tree: ProofTree, model, measurements: Mapping) -> dict:
    out = {}
    for leaf in tree.range_leaves:
        if leaf.measurement_key not in measurements:
            raise MissingMeasurement(leaf.range_id)
        try:
            t = model.trapezoids[leaf.range_id] if hasattr(model, "trapezoids") else model[leaf.range_id]
        except KeyError:
            raise PartialModel(f"range {leaf.range_id!r} has no trained membership function") from None
        out[leaf.range_id] = evaluate_trapezoid(t, np.asarray(measurements[leaf.measurement_key], dtype=float))
    return out


def combine(node: Node, leaf_mu: Mapping, binaries: Mapping, gate_T: float = 0.0,
            cache: Optional[Mapping] = None, out: Optional[dict] = None):
    """Value of ``node`` from precomputed leaf values.

    ``cache`` maps ``id(node)`` to already-known values (frozen subtrees);
    ``out``, when given, receives the value of every node visited.
    """
    if cache is not None and id(node) in cache:
        val = cache[id(node)]
    elif isinstance(node, RangeLeaf):
        val = leaf_mu[node.range_id]
    elif isinstance(node, BinaryLeaf):
        if node.prop_id not in binaries:
            raise MissingMeasurement(node.prop_id, f"missing binary property {node.prop_id!r}")
        val = np.asarray(binaries[node.prop_id], dtype=float)
    elif isinstance(node, PandNode):
        val = None
        for ch in node.children:
            v = combine(ch, leaf_mu, binaries, gate_T, cache, out)
            val = v if val is None else val * v
        if val is None:
            val = np.float64(1.0)
    else:
        b = combine(node.parent_branch, leaf_mu, binaries, gate_T, cache, out)
        a = combine(node.subtree_branch, leaf_mu, binaries, gate_T, cache, out)
        val = np.where(a > gate_T, a + b - a * b, 0.0)
    if out is not None:
        out[id(node)] = val
    return val


def binaries_pass(tree: ProofTree, binaries: Mapping):
    ok = None
    for leaf in tree.binary_leaves:
        if leaf.prop_id not in binaries:
            raise MissingMeasurement(leaf.prop_id, f"missing binary property {leaf.prop_id!r}")
        v = np.asarray(binaries[leaf.prop_id], dtype=bool)
        ok = v if ok is None else (ok & v)
    return True if ok is None else ok


def evaluate_batch(tree: ProofTree, model, measurements: Mapping, binaries: Mapping,
                   gate_T: float = 0.0) -> np.ndarray:
    """Overall measures for a batch of examples given column arrays."""
    mu = leaf_memberships(tree, model, measurements)
    val = combine(tree.root, mu, binaries, gate_T)
    return np.where(binaries_pass(tree, binaries), val, 0.0)


@dataclass
class Example:
    id: str
    category: str
    desired: float
    measurements: dict[str, float] = field(default_factory=dict)
    binaries: dict[str, bool] = field(default_factory=dict)


def evaluate(tree: ProofTree, model, ex: Example, gate_T: float = 0.0) -> float:
    """Overall measure of one example."""
    return float(evaluate_batch(tree, model, ex.measurements, ex.binaries, gate_T))
