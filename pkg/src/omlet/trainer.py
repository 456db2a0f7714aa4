"""Level-by-level training of the membership functions in a definition tree.

Each learning level is one lesson: the ranges of every category at that
level are initialized from the examples, refined for a fixed number of
epochs with all lower levels frozen, and finally restored to the
lowest-error parameters seen and frozen themselves.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .backprop import collect_batch
from .errors import NoExamplesForLevel, PartialModel
from .membership import Leg, Trapezoid, evaluate_trapezoid, init_from_arrays, update_leg
from .model import Model
from .tree import (
    DefinitionTree,
    Example,
    assign_levels,
    binaries_pass,
    build_proof_tree,
    combine,
    is_fixed,
    iter_nodes,
    range_levels,
)

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs_per_level: int = 1000
    lr: float = 0.15
    escape_threshold: float = 1e-4
    slope_tol: float = 0.05
    grid_steps: int = 50
    gate_T: float = 0.0
    rng_seed: int = 0
    skip_empty_levels: bool = True

    def __post_init__(self):
        if not (0.0 <= self.lr <= 1.0):
            raise ValueError(f"learning rate must lie in [0, 1], got {self.lr}")
        if self.epochs_per_level < 1:
            raise ValueError("epochs_per_level must be at least 1")


@dataclass
class EpochRecord:
    epoch: int
    total_error: float
    allow_worsening: bool


@dataclass
class TrainState:
    defs: DefinitionTree
    model: Model
    best_model: Optional[Model] = None
    best_error: float = float("inf")
    allow_worsening_next: bool = False
    frozen_levels: set = field(default_factory=set)
    traces: dict = field(default_factory=dict)
    best_errors: dict = field(default_factory=dict)
    example_counts: dict = field(default_factory=dict)

    @classmethod
    def fresh(cls, defs: DefinitionTree) -> "TrainState":
        return cls(defs=defs, model=Model(levels=range_levels(defs)))


class _Group:
    """Column-wise view of the examples of one category at one level."""

    def __init__(self, defs, category, examples, state, gate_T):
        self.tree = build_proof_tree(defs, category)
        self.ids = [e.id for e in examples]
        self.desired = np.array([e.desired for e in examples], dtype=float)
        self.x = {
            r: np.array([e.measurements[r] for e in examples], dtype=float)
            for r in self.tree.range_ids
        }
        self.binaries = {
            b.prop_id: np.array([bool(e.binaries[b.prop_id]) for e in examples])
            for b in self.tree.binary_leaves
        }
        self.ok = np.broadcast_to(binaries_pass(self.tree, self.binaries), self.desired.shape)
        if not np.all(self.ok):
            bad = [i for i, ok in zip(self.ids, self.ok) if not ok]
            raise ValueError(f"training examples fail a binary property: {bad[:5]}")
        self.gate_T = gate_T
        self.frozen = frozenset(state.frozen_levels)
        # values of frozen subtrees never change during the lesson
        self.mu = {}
        for leaf in self.tree.range_leaves:
            if leaf.level in self.frozen:
                self.mu[leaf.range_id] = evaluate_trapezoid(state.model.trapezoids[leaf.range_id], self.x[leaf.range_id])
        self.cache = {}
        self.learn_ranges = [leaf.range_id for leaf in self.tree.range_leaves if leaf.level not in self.frozen]
        if not self.learn_ranges:
            return
        if all(r in state.model.trapezoids for r in self.learn_ranges):
            self.refresh(state.model)
        full = dict(self.mu)
        for r in self.learn_ranges:
            full[r] = np.zeros_like(self.desired)
        vals = {}
        combine(self.tree.root, full, self.binaries, gate_T, None, vals)
        for node in iter_nodes(self.tree.root):
            if is_fixed(node, self.frozen) and id(node) in vals:
                self.cache[id(node)] = vals[id(node)]

    def refresh(self, model: Model):
        for r in self.learn_ranges:
            self.mu[r] = evaluate_trapezoid(model.trapezoids[r], self.x[r])

    def root(self, mu=None):
        return combine(self.tree.root, mu or self.mu, self.binaries, self.gate_T, self.cache)

    def error(self, mu=None) -> float:
        return float(np.abs(self.desired - self.root(mu)).sum())


class _LevelBatch:
    def __init__(self, level, examples, state, cfg):
        defs = state.defs
        levels = assign_levels(defs)
        by_cat: dict = {}
        for e in examples:
            if levels.level_of.get(e.category) != level:
                continue
            by_cat.setdefault(e.category, []).append(e)
        if not by_cat:
            raise NoExamplesForLevel(level)
        for cat in by_cat:
            for anc in defs.measured_chain(cat)[:-1]:
                missing = [r for r in anc.range_ids if r not in state.model.trapezoids]
                if missing:
                    raise PartialModel(f"parent category {anc.name!r} of {cat!r} is untrained: {missing}")
        self.level = level
        self.groups = [_Group(defs, cat, exs, state, cfg.gate_T) for cat, exs in by_cat.items()]
        self.owner = {}
        for g in self.groups:
            for r in g.learn_ranges:
                self.owner[r] = g
        # deterministic range order: definition order
        self.ranges = [r for r in defs.all_ranges() if r in self.owner]
        self.n_examples = sum(len(g.ids) for g in self.groups)


def _level_ranges(state: TrainState, level: int) -> list[str]:
    return [r for r in state.defs.all_ranges() if state.model.levels.get(r) == level]


def initialize_level(level: int, examples: Sequence[Example], defs: DefinitionTree, state: TrainState,
                     cfg: Optional[TrainConfig] = None, batch: Optional[_LevelBatch] = None) -> TrainState:
    """Initial trapezoids and limit points for every range at ``level``."""
    cfg = cfg or TrainConfig()
    state.defs = defs
    batch = batch or _LevelBatch(level, examples, state, cfg)
    collected: dict = {}
    for g in batch.groups:
        _, pts = collect_batch(g.tree, state.model, g.x, g.binaries, g.desired, 1.0,
                               g.frozen, cfg.gate_T, init_mode=True, cache=g.cache)
        for r, (xs, ys) in pts.items():
            collected.setdefault(r, []).append((xs, ys))
    for r in batch.ranges:
        xs = np.concatenate([p[0] for p in collected[r]])
        ys = np.concatenate([p[1] for p in collected[r]])
        t, lim = init_from_arrays(xs, ys, cfg.grid_steps)
        state.model.trapezoids[r] = t
        state.model.limits[r] = lim
    for g in batch.groups:
        g.refresh(state.model)
    return state


def _run_epoch(batch: _LevelBatch, state: TrainState, cfg: TrainConfig, allow_worsening: bool):
    model = state.model
    errors = {}
    points: dict = {}
    for g in batch.groups:
        root, pts = collect_batch(g.tree, model, g.x, g.binaries, g.desired, cfg.lr,
                                  g.frozen, cfg.gate_T, cache=g.cache, leaf_mu=g.mu)
        errors[id(g)] = float(np.abs(g.desired - root).sum())
        points.update(pts)
    start = sum(errors.values())
    if cfg.lr == 0.0:
        # no corrective signal; refitting would only reproduce the legs
        return start, start

    for r in batch.ranges:
        g = batch.owner[r]
        xs, ys = points[r]
        t0 = model.trapezoids[r]
        left = xs < t0.n1
        right = xs > t0.n2
        for side, mask in ((Leg.LEFT, left), (Leg.RIGHT, right)):
            if not mask.any():
                continue
            t = model.trapezoids[r]
            cand = update_leg(t, model.limits_for(r), side, xs[mask], ys[mask], cfg.slope_tol)
            if cand == t:
                continue
            mu = dict(g.mu)
            mu[r] = evaluate_trapezoid(cand, g.x[r])
            err = g.error(mu)
            if allow_worsening or err <= errors[id(g)]:
                model.trapezoids[r] = cand
                g.mu = mu
                errors[id(g)] = err
    return start, sum(errors.values())


def run_epoch(level: int, examples: Sequence[Example], state: TrainState, cfg: TrainConfig,
              allow_worsening: bool = False, batch: Optional[_LevelBatch] = None):
    """One pass of point collection followed by per-leg accept/reject updates.

    Returns ``(state, total_error)`` where the error is that of the model at
    the start of the epoch.
    """
    batch = batch or _LevelBatch(level, examples, state, cfg)
    start, _ = _run_epoch(batch, state, cfg, allow_worsening)
    return state, start


def train_level(level: int, examples: Sequence[Example], state: TrainState,
                cfg: Optional[TrainConfig] = None) -> TrainState:
    """Initialize, refine and freeze the ranges of one learning level."""
    cfg = cfg or TrainConfig()
    batch = _LevelBatch(level, examples, state, cfg)
    initialize_level(level, examples, state.defs, state, cfg, batch)
    ranges = batch.ranges
    model = state.model

    state.best_error = float("inf")
    state.best_model = None
    state.allow_worsening_next = False
    trace = []
    best_snap = None
    for epoch in range(1, cfg.epochs_per_level + 1):
        snap = {r: model.trapezoids[r] for r in ranges}
        allow = state.allow_worsening_next
        start, end = _run_epoch(batch, state, cfg, allow)
        trace.append(EpochRecord(epoch, start, allow))
        if start < state.best_error:
            state.best_error = start
            best_snap = snap
        if allow:
            state.allow_worsening_next = False
        else:
            state.allow_worsening_next = (start - end) < cfg.escape_threshold
    final = sum(g.error() for g in batch.groups)
    if final < state.best_error:
        state.best_error = final
        best_snap = {r: model.trapezoids[r] for r in ranges}

    for r in ranges:
        model.trapezoids[r] = best_snap[r].freeze()
    state.best_model = model.copy()
    state.frozen_levels.add(level)
    state.traces[level] = trace
    state.best_errors[level] = state.best_error
    state.example_counts[level] = batch.n_examples
    log.info("level %d: best total error %.6g over %d examples", level, state.best_error, batch.n_examples)
    return state


def train_all(defs: DefinitionTree, examples: Sequence[Example], cfg: Optional[TrainConfig] = None,
              state: Optional[TrainState] = None, levels: Optional[Sequence[int]] = None) -> Model:
    """Train every learning level in ascending order and return the model.

    Pass ``state`` to keep the epoch traces and per-level errors.
    """
    cfg = cfg or TrainConfig()
    level_map = assign_levels(defs)
    state = state or TrainState.fresh(defs)
    state.defs = defs
    for level in levels if levels is not None else level_map.levels:
        if level in state.frozen_levels:
            continue
        at_level = [e for e in examples if level_map.level_of.get(e.category) == level]
        if not at_level:
            if cfg.skip_empty_levels:
                log.warning("no examples for learning level %d; its ranges stay untrained", level)
                continue
            raise NoExamplesForLevel(level)
        train_level(level, at_level, state, cfg)
    state.model.provenance = provenance(cfg, state)
    return state.model


def provenance(cfg: TrainConfig, state: TrainState) -> dict:
    prov = {f"config.{k}": str(v) for k, v in asdict(cfg).items()}
    for level in sorted(state.best_errors):
        prov[f"level{level}.best_error"] = repr(state.best_errors[level])
        prov[f"level{level}.examples"] = str(state.example_counts[level])
        prov[f"level{level}.epochs"] = str(len(state.traces.get(level, [])))
    untrained = state.model.untrained
    if untrained:
        prov["untrained"] = ",".join(untrained)
    return prov
