"""Experiment protocols: evaluation reports, leave-one-out and learning curves."""

from __future__ import annotations

import csv
import io
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import NoExamplesForLevel, PartialModel, SizeTooLarge
from .model import Model
from .tree import (
    DefinitionTree,
    Example,
    PorNode,
    assign_levels,
    binaries_pass,
    build_proof_tree,
    combine,
    leaf_memberships,
)
from .trainer import TrainConfig, TrainState, train_all, train_level

BIN_WIDTH = 0.1


@dataclass
class EvalRow:
    id: str
    category: str
    level: int
    desired: float
    actual: float
    abs_error: float
    own_desired: float
    own_actual: float
    own_abs_error: float


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)

    @property
    def average_error(self) -> float:
        if not self.rows:
            raise ValueError("average error is undefined for an empty report")
        return float(np.mean([r.abs_error for r in self.rows]))

    @property
    def per_category(self) -> dict[str, float]:
        out: dict[str, list[float]] = {}
        for r in self.rows:
            out.setdefault(r.category, []).append(r.abs_error)
        return {c: float(np.mean(v)) for c, v in out.items()}

    def histogram(self) -> list[tuple[float, int]]:
        counts = [0] * 10
        for r in self.rows:
            counts[min(int(np.floor(r.desired / BIN_WIDTH + 1e-9)), 9)] += 1
        return [(round(i * BIN_WIDTH, 1), c) for i, c in enumerate(counts)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "category", "level", "desired", "actual", "abs_error",
                    "own_desired", "own_actual", "own_abs_error"])
        for r in self.rows:
            w.writerow([r.id, r.category, r.level, _f(r.desired), _f(r.actual), _f(r.abs_error),
                        _f(r.own_desired), _f(r.own_actual), _f(r.own_abs_error)])
        return buf.getvalue()

    def summary_lines(self) -> list[str]:
        lines = [f"examples={len(self.rows)}", f"average_error={_f(self.average_error)}"]
        for c, v in self.per_category.items():
            lines.append(f"category.{c}.average_error={_f(v)}")
        for lo, c in self.histogram():
            lines.append(f"histogram.{lo:.1f}={c}")
        return lines


def _f(v: float) -> str:
    return repr(float(v))


def evaluate_examples(defs: DefinitionTree, model: Model, examples: Sequence[Example],
                      gate_T: float = 0.0) -> EvalReport:
    """Score ``examples`` with ``model``; untrained ranges raise :class:`PartialModel`."""
    levels = assign_levels(defs)
    by_cat: dict[str, list[int]] = {}
    for i, e in enumerate(examples):
        by_cat.setdefault(e.category, []).append(i)
    rows: list[Optional[EvalRow]] = [None] * len(examples)
    for cat, idx in by_cat.items():
        tree = build_proof_tree(defs, cat)
        untrained = [r for r in tree.range_ids if r not in model.trapezoids]
        if untrained:
            raise PartialModel(f"model has untrained ranges needed by {cat!r}: {', '.join(untrained)}")
        exs = [examples[i] for i in idx]
        meas = {r: np.array([e.measurements[r] for e in exs]) for r in tree.range_ids}
        bins = {b.prop_id: np.array([bool(e.binaries[b.prop_id]) for e in exs]) for b in tree.binary_leaves}
        mu = leaf_memberships(tree, model, meas)
        vals: dict = {}
        root = combine(tree.root, mu, bins, gate_T, None, vals)
        ok = np.broadcast_to(binaries_pass(tree, bins), root.shape)
        root = np.where(ok, root, 0.0)
        desired = np.array([e.desired for e in exs])
        if isinstance(tree.root, PorNode):
            b = vals[id(tree.root.parent_branch)]
            a = np.where(ok, vals[id(tree.root.subtree_branch)], 0.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                own_d = np.where(b < 1.0, np.clip((desired - b) / (1.0 - b), 0.0, 1.0), np.nan)
        else:
            a, own_d = root, desired
        for j, i in enumerate(idx):
            e = examples[i]
            rows[i] = EvalRow(e.id, cat, levels[cat], float(desired[j]), float(root[j]),
                              abs(float(desired[j]) - float(root[j])), float(own_d[j]), float(a[j]),
                              abs(float(own_d[j]) - float(a[j])))
    return EvalReport(rows)


def _workers(n_jobs: int) -> int:
    env = os.environ.get("OMLET_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_jobs))


def _map(fn, jobs: list):
    workers = _workers(len(jobs))
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _fresh_state(defs: DefinitionTree, base: Model, frozen: Iterable[int]) -> TrainState:
    state = TrainState.fresh(defs)
    state.model = base.copy()
    state.frozen_levels = set(frozen)
    return state


def _fit_and_score(job):
    defs, base, frozen, level, train, test, cfg = job
    train_ids = {e.id for e in train}
    leaked = [e.id for e in test if e.id in train_ids]
    assert not leaked, f"held-out examples leaked into training: {leaked}"
    state = _fresh_state(defs, base, frozen)
    train_level(level, train, state, cfg)
    return evaluate_examples(defs, state.model, test, cfg.gate_T).rows


def _examples_by_level(defs: DefinitionTree, examples: Sequence[Example]) -> dict[int, list[Example]]:
    lm = assign_levels(defs)
    out: dict[int, list[Example]] = {}
    for e in examples:
        out.setdefault(lm[e.category], []).append(e)
    return out


@dataclass
class LooResult:
    rows: list[EvalRow]

    @property
    def mean_error(self) -> float:
        return float(np.mean([r.abs_error for r in self.rows]))

    def level_means(self) -> dict[int, float]:
        out: dict[int, list[float]] = {}
        for r in self.rows:
            out.setdefault(r.level, []).append(r.abs_error)
        return {lv: float(np.mean(v)) for lv, v in sorted(out.items())}


def leave_one_out(defs: DefinitionTree, examples: Sequence[Example], cfg: Optional[TrainConfig] = None,
                  levels: Optional[Sequence[int]] = None) -> LooResult:
    """Hold out each example of the requested levels in turn.

    Lower levels are trained once on all of their own examples before the
    folds of a higher level run, so a held-out example never reaches the
    training of its own level.
    """
    cfg = cfg or TrainConfig()
    by_level = _examples_by_level(defs, examples)
    wanted = sorted(levels) if levels is not None else sorted(by_level)
    base = TrainState.fresh(defs)
    rows: list[EvalRow] = []
    for level in range(1, max(wanted) + 1):
        at = by_level.get(level, [])
        if level in wanted:
            if len(at) < 2:
                raise NoExamplesForLevel(level, f"leave-one-out needs at least 2 examples at level {level}")
            jobs = [
                (defs, base.model, set(base.frozen_levels), level, at[:i] + at[i + 1:], [held], cfg)
                for i, held in enumerate(at)
            ]
            for fold_rows in _map(_fit_and_score, jobs):
                rows.extend(fold_rows)
        if level < max(wanted):
            if not at:
                raise NoExamplesForLevel(level, f"level {level} has no examples to train parents with")
            train_level(level, at, base, cfg)
    return LooResult(rows)


@dataclass
class CurvePoint:
    train_size: int
    mean_error: float
    std_error: float
    errors: list[float]


def partition_curve(defs: DefinitionTree, examples: Sequence[Example], sizes: Sequence[int],
                    cfg: Optional[TrainConfig] = None, level: int = 1, n_partitions: int = 10,
                    seed: Optional[int] = None) -> list[CurvePoint]:
    """Average test error over random train/test partitions for each size."""
    cfg = cfg or TrainConfig()
    seed = cfg.rng_seed if seed is None else seed
    by_level = _examples_by_level(defs, examples)
    at = by_level.get(level, [])
    n = len(at)
    for s in sizes:
        if s >= n or s < 1:
            raise SizeTooLarge(f"training size {s} must lie in [1, {n - 1}] for {n} examples")
    base = TrainState.fresh(defs)
    for lower in range(1, level):
        if not by_level.get(lower):
            raise NoExamplesForLevel(lower)
        train_level(lower, by_level[lower], base, cfg)

    jobs = []
    for s in sizes:
        rng = np.random.default_rng([seed, s])
        for _ in range(n_partitions):
            perm = rng.permutation(n)
            train = [at[i] for i in perm[:s]]
            test = [at[i] for i in perm[s:]]
            jobs.append((defs, base.model, set(base.frozen_levels), level, train, test, cfg))
    results = _map(_fit_and_score, jobs)
    curve = []
    for k, s in enumerate(sizes):
        errs = [float(np.mean([r.abs_error for r in rows]))
                for rows in results[k * n_partitions:(k + 1) * n_partitions]]
        std = statistics.stdev(errs) if len(errs) > 1 else 0.0
        curve.append(CurvePoint(s, float(np.mean(errs)), std, errs))
    return curve


def train_test_error(defs: DefinitionTree, train: Sequence[Example], test: Sequence[Example],
                     cfg: Optional[TrainConfig] = None) -> float:
    cfg = cfg or TrainConfig()
    model = train_all(defs, train, cfg)
    return evaluate_examples(defs, model, test, cfg.gate_T).average_error


def curve_csv(curve: Sequence[CurvePoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["train_size", "mean_error", "std_error"])
    for p in curve:
        w.writerow([p.train_size, _f(p.mean_error), _f(p.std_error)])
    return buf.getvalue()


def trace_csv(trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "total_error", "allow_worsening"])
    for rec in trace:
        w.writerow([rec.epoch, _f(rec.total_error), int(rec.allow_worsening)])
    return buf.getvalue()


def rows_csv(rows: Sequence[EvalRow]) -> str:
    return EvalReport(list(rows)).to_csv()
