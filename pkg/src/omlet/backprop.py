"""Propagating desired measures from the root of a proof tree to its leaves.

At a PAND node the desired inputs keep equal offsets from the actual
inputs while their product meets the desired output.  At a POR node one
input is known (the frozen parent category) and the other is solved for
exactly.  Every function here accepts scalars or equally-shaped numpy
arrays, one element per example.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import MissingMeasurement, SaturatedParent
from .membership import DesiredPoint, evaluate_trapezoid
from .tree import (
    BinaryLeaf,
    Example,
    PandNode,
    PorNode,
    ProofTree,
    RangeLeaf,
    binaries_pass,
    combine,
    is_fixed,
    leaf_memberships,
)

_NEWTON_MAX_ITER = 100


def _equal_offset(actuals: list, D, fixed=None):
    """Common offset t with prod(a_i + t) = D, on the branch a_i + t >= 0.

    Inputs flagged in ``fixed`` contribute a factor of 1 and no offset.
    Two free inputs have a closed form.  Otherwise Newton's method is
    started right of the root; the product is increasing and convex
    there, so the iterates decrease monotonically onto it.
    """
    if fixed is None and len(actuals) == 2:
        a1, a2 = actuals
        return (np.sqrt((a1 - a2) ** 2 + 4.0 * D) - (a1 + a2)) / 2.0
    if fixed is None and len(actuals) == 3:
        return _cubic_offset(*actuals, D)
    if fixed is None:
        fixed = [np.zeros(np.shape(a), dtype=bool) for a in actuals]
    elif len(actuals) <= 3:
        closed = _offset_two_free(actuals, D, fixed)
        all_free = np.all([~f for f in fixed], axis=0)
        if not np.any(all_free):
            return closed
        return np.where(all_free, _equal_offset(actuals, D), closed)
    free_min = reduce_min([np.where(f, np.inf, a) for a, f in zip(actuals, fixed)])
    free_min = np.where(np.isfinite(free_min), free_min, 0.0)
    n_free = np.sum([~f for f in fixed], axis=0)
    # prod(a_i + t) >= (min a + t)^k, so this start lies right of the root
    t = np.power(np.maximum(D, 0.0), 1.0 / np.maximum(n_free, 1)) - free_min
    for _ in range(_NEWTON_MAX_ITER):
        factors = [np.where(f, 1.0, a + t) for a, f in zip(actuals, fixed)]
        prod = np.prod(factors, axis=0)
        deriv = np.zeros_like(prod)
        for j in range(len(factors)):
            others = [g for i, g in enumerate(factors) if i != j]
            term = np.prod(others, axis=0) if others else np.ones_like(prod)
            deriv = deriv + np.where(fixed[j], 0.0, term)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(deriv > 0, (prod - D) / deriv, 0.0)
        step = np.maximum(step, 0.0)
        t_next = np.maximum(t - step, -free_min)
        if np.all(np.abs(t_next - t) <= 1e-15 * np.maximum(1.0, np.abs(t))):
            t = t_next
            break
        t = t_next
    return t


def _cubic_offset(a1, a2, a3, D):
    # prod(a_i + t) - D as a cubic in t; same right-side Newton start
    s1 = a1 + a2 + a3
    s2 = a1 * a2 + a1 * a3 + a2 * a3
    c0 = a1 * a2 * a3 - D
    a_min = np.minimum(np.minimum(a1, a2), a3)
    t = np.cbrt(np.maximum(D, 0.0)) - a_min
    for _ in range(_NEWTON_MAX_ITER):
        f = ((t + s1) * t + s2) * t + c0
        df = (3.0 * t + 2.0 * s1) * t + s2
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(df > 0, f / df, 0.0)
        t_next = np.maximum(t - np.maximum(step, 0.0), -a_min)
        if np.all(np.abs(t_next - t) <= 1e-15 * np.maximum(1.0, np.abs(t))):
            return t_next
        t = t_next
    return t


def _offset_two_free(actuals: list, D, fixed):
    # at most two free inputs once any is fixed: linear or quadratic
    first = np.full(np.shape(D), np.nan)
    second = np.full(np.shape(D), np.nan)
    for a, f in zip(actuals, fixed):
        free = ~f
        second = np.where(free & ~np.isnan(first) & np.isnan(second), a, second)
        first = np.where(free & np.isnan(first), a, first)
    n_free = (~np.isnan(first)).astype(int) + (~np.isnan(second)).astype(int)
    a1 = np.nan_to_num(first)
    a2 = np.nan_to_num(second)
    quad = (np.sqrt((a1 - a2) ** 2 + 4.0 * np.maximum(D, 0.0)) - (a1 + a2)) / 2.0
    return np.where(n_free == 2, quad, np.where(n_free == 1, D - a1, 0.0))


def _capped_split(actuals: list, D) -> list:
    # equal offsets, except inputs that would pass 1 are held at 1 and the
    # rest re-solved; the product still meets D whenever D <= 1
    t = _equal_offset(actuals, D)
    out = [a + t for a in actuals]
    fixed = [np.zeros(np.shape(a), dtype=bool) for a in actuals]
    for _ in range(len(actuals)):
        over = [f | (d > 1.0) for f, d in zip(fixed, out)]
        if all(np.array_equal(o, f) for o, f in zip(over, fixed)):
            break
        fixed = over
        t = _equal_offset(actuals, D, fixed)
        out = [np.where(f, 1.0, a + t) for a, f in zip(actuals, fixed)]
    return out


def reduce_min(arrays):
    out = arrays[0]
    for a in arrays[1:]:
        out = np.minimum(out, a)
    return out


def _pand_split(actuals: list, D, cap: bool) -> list:
    k = len(actuals)
    if k == 1:
        return [D + 0.0 * actuals[0]]
    if k <= 3:
        if cap:
            return _capped_split(actuals, D)
        t = _equal_offset(actuals, D)
        return [a + t for a in actuals]
    half = (k + 1) // 2
    left, right = actuals[:half], actuals[half:]
    pseudo = [np.prod(left, axis=0), np.prod(right, axis=0)]
    # rounding can leave a tiny negative group target when D is near 0
    d_left, d_right = (np.maximum(d, 0.0) for d in _pand_split(pseudo, D, cap))
    return _pand_split(left, d_left, cap) + _pand_split(right, d_right, cap)


def pand_desired(actuals: Sequence, D, clamp: bool = True) -> list:
    """Desired inputs of a PAND node whose desired output is ``D``.

    Two or three inputs receive equal additive corrections; wider nodes are
    split into two halves whose products act as pseudo-inputs, recursively.
    With ``clamp`` an input whose correction would carry it past 1 is held
    at 1 and the others absorb the remainder.
    A desired output of 0 drives only the smallest input to 0.
    """
    scalar = all(np.ndim(a) == 0 for a in actuals) and np.ndim(D) == 0
    acts = [np.asarray(a, dtype=float) for a in actuals]
    if not acts:
        return []
    Dv = np.asarray(D, dtype=float)
    shape = np.broadcast_shapes(Dv.shape, *(a.shape for a in acts))
    acts = [np.broadcast_to(a, shape).astype(float) for a in acts]
    Dv = np.broadcast_to(Dv, shape).astype(float)

    out = _pand_split(acts, Dv, clamp)

    zero = Dv <= 0.0
    if np.any(zero):
        stacked = np.stack(acts)
        argmin = np.argmin(stacked, axis=0)
        for i in range(len(acts)):
            out[i] = np.where(zero, np.where(argmin == i, 0.0, acts[i]), out[i])
    if clamp:
        out = [np.clip(d, 0.0, 1.0) for d in out]
    if scalar:
        return [float(d) for d in out]
    return out


def por_desired(known: float, D: float) -> float:
    """Input ``d`` with ``S(known, d) == D`` for a POR node."""
    if known >= 1.0:
        raise SaturatedParent("parent measure is 1; any subcategory evidence satisfies the POR")
    return float(np.clip((D - known) / (1.0 - known), 0.0, 1.0))


def _por_desired_array(known, D, fallback):
    known = np.asarray(known, dtype=float)
    saturated = known >= 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        d = (D - known) / np.where(saturated, 1.0, 1.0 - known)
    return np.where(saturated, fallback, np.clip(d, 0.0, 1.0))


def propagate(node, desired, actuals: Mapping, frozen_levels, emit) -> None:
    """Push ``desired`` down from ``node``; ``emit(leaf, y)`` at learnable leaves.

    ``actuals`` maps ``id(node)`` to its actual value.
    """
    if is_fixed(node, frozen_levels):
        return
    if isinstance(node, RangeLeaf):
        emit(node, np.clip(desired, 0.0, 1.0))
    elif isinstance(node, BinaryLeaf):
        return
    elif isinstance(node, PandNode):
        learn = []
        fixed = np.float64(1.0)
        for ch in node.children:
            if isinstance(ch, BinaryLeaf) or is_fixed(ch, frozen_levels):
                if not isinstance(ch, BinaryLeaf):
                    fixed = fixed * actuals[id(ch)]
                continue
            learn.append(ch)
        fixed = np.asarray(fixed, dtype=float)
        own = [actuals[id(ch)] for ch in learn]
        with np.errstate(divide="ignore", invalid="ignore"):
            target = np.where(fixed > 0, desired / np.where(fixed > 0, fixed, 1.0),
                              np.prod(own, axis=0))
        target = np.clip(target, 0.0, 1.0)
        if len(learn) == 1:
            parts = [target]
        else:
            parts = pand_desired(own, target)
        for ch, d in zip(learn, parts):
            propagate(ch, d, actuals, frozen_levels, emit)
    elif isinstance(node, PorNode):
        parent_fixed = is_fixed(node.parent_branch, frozen_levels)
        sub_fixed = is_fixed(node.subtree_branch, frozen_levels)
        if parent_fixed:
            d = _por_desired_array(actuals[id(node.parent_branch)], desired,
                                   actuals[id(node.subtree_branch)])
            propagate(node.subtree_branch, d, actuals, frozen_levels, emit)
        elif sub_fixed:
            d = _por_desired_array(actuals[id(node.subtree_branch)], desired,
                                   actuals[id(node.parent_branch)])
            propagate(node.parent_branch, d, actuals, frozen_levels, emit)
        else:
            raise ValueError("cannot propagate through a POR node with both branches learnable")


@dataclass(frozen=True)
class PropagationRecord:
    range_id: str
    point: DesiredPoint


def collect_batch(tree: ProofTree, model, measurements: Mapping, binaries: Mapping, desired,
                  lr: float, frozen_levels, gate_T: float = 0.0, init_mode: bool = False,
                  cache: Optional[Mapping] = None, leaf_mu: Optional[Mapping] = None):
    """Desired points for a batch of examples of one category.

    Returns ``(root_actual, {range_id: (xs, ys)})``.  In ``init_mode`` the
    learnable leaves are taken to have actual value 0 and the full desired
    measure is propagated.
    """
    frozen_levels = frozenset(frozen_levels)
    desired = np.asarray(desired, dtype=float)
    if leaf_mu is None:
        if init_mode:
            leaf_mu = {}
            for leaf in tree.range_leaves:
                if leaf.measurement_key not in measurements:
                    raise MissingMeasurement(leaf.range_id)
                x = np.asarray(measurements[leaf.measurement_key], dtype=float)
                if leaf.level in frozen_levels:
                    leaf_mu[leaf.range_id] = evaluate_trapezoid(model.trapezoids[leaf.range_id], x)
                else:
                    leaf_mu[leaf.range_id] = np.zeros(x.shape)
        else:
            leaf_mu = leaf_memberships(tree, model, measurements)
    actuals: dict = {}
    root = combine(tree.root, leaf_mu, binaries, gate_T, cache, actuals)
    root = np.where(binaries_pass(tree, binaries), root, 0.0)

    d_eff = desired if init_mode else root + lr * (desired - root)
    points: dict = {}

    def emit(leaf, y):
        x = np.asarray(measurements[leaf.measurement_key], dtype=float)
        y = np.broadcast_to(y, x.shape)
        points[leaf.range_id] = (x, np.asarray(y, dtype=float))

    propagate(tree.root, d_eff, actuals, frozen_levels, emit)
    return root, points


def collect_points(tree: ProofTree, model, ex: Example, lr: float, frozen_levels=(),
                   gate_T: float = 0.0, init_mode: bool = False) -> list[PropagationRecord]:
    """Desired points deposited at the learnable range leaves by one example."""
    _, pts = collect_batch(tree, model, ex.measurements, ex.binaries, ex.desired, lr,
                           frozen_levels, gate_T, init_mode)
    records = []
    for leaf in tree.range_leaves:
        if leaf.range_id not in pts:
            continue
        x, y = (float(v) for v in pts[leaf.range_id])
        leg = None
        if not init_mode and leaf.range_id in model.trapezoids:
            leg = model.trapezoids[leaf.range_id].leg_of(x)
        records.append(PropagationRecord(leaf.range_id, DesiredPoint(x, y, leg)))
    return records
