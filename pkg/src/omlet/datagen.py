"""Synthetic labeled examples drawn from a ground-truth model.

For every range a measurement lands in the normal range with probability
``p_normal`` and otherwise on one of the two legs (chosen in proportion to
leg width), strictly inside the support so the desired measure stays
positive.  The desired measure is the truth model's own evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from .errors import HistogramInfeasible, ParseError
from .membership import Trapezoid
from .model import Model
from .rulebase import parse_model, parse_rules
from .tree import DefinitionTree, Example, build_proof_tree, evaluate

BIN_WIDTH = 0.1
QUALITY = {"bad": (0.0, 0.6), "good": (0.6, float("inf"))}


@dataclass
class GenSpec:
    defs: DefinitionTree
    truth: Model
    n: int
    category: Optional[str] = None
    p_normal: float = 0.8
    seed: int = 0
    quality_filter: Optional[tuple[float, float]] = None
    target_histogram: Optional[Sequence[tuple[float, int]]] = None
    max_draws: Optional[int] = None
    id_prefix: str = "ex"
    gate_T: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p_normal <= 1.0:
            raise ValueError("p_normal must lie in [0, 1]")
        if self.n < 0:
            raise ValueError("n must be non-negative")


def draw_measurement(t: Trapezoid, rng: np.random.Generator, p_normal: float) -> float:
    if t.left_open or t.right_open:
        raise ValueError("truth trapezoids must have finite normal ranges")
    w_left = t.n1 - t.z1
    w_right = t.z2 - t.n2
    if rng.random() < p_normal or w_left + w_right <= 0.0:
        return float(rng.uniform(t.n1, t.n2))
    while True:
        if rng.random() * (w_left + w_right) < w_left:
            x = float(rng.uniform(t.z1, t.n1))
        else:
            x = float(rng.uniform(t.n2, t.z2))
        if t.z1 < x < t.z2:
            return x


def _bin_of(d: float) -> int:
    return min(int(np.floor(d / BIN_WIDTH + 1e-9)), int(round(1.0 / BIN_WIDTH)) - 1)


def _default_category(defs: DefinitionTree) -> str:
    measured = [c.name for c in defs.categories if c.carries_measure]
    roots = [c for c in measured if len(defs.measured_chain(c)) == 1]
    if len(roots) != 1:
        raise ValueError(f"ambiguous category; choose one of {measured}")
    return roots[0]


def generate(spec: GenSpec) -> list[Example]:
    """Labeled examples for ``spec.category`` drawn from the truth model."""
    category = spec.category or _default_category(spec.defs)
    tree = build_proof_tree(spec.defs, category)
    ranges = spec.defs.ranges_for(category)
    binaries = spec.defs.binaries_for(category)
    rng = np.random.default_rng(spec.seed)

    quotas = None
    n = spec.n
    if spec.target_histogram is not None:
        quotas = {}
        for lower, count in spec.target_histogram:
            b = _bin_of(lower + BIN_WIDTH / 2)
            quotas[b] = quotas.get(b, 0) + int(count)
        n = sum(quotas.values())
    cap = spec.max_draws or max(1000 * max(n, 1), 10000)

    out: list[Example] = []
    draws = 0
    while len(out) < n:
        if draws >= cap:
            raise HistogramInfeasible(
                f"accepted {len(out)} of {n} examples after {draws} draws; target not reachable"
            )
        draws += 1
        meas = {r: draw_measurement(spec.truth.trapezoids[r], rng, spec.p_normal) for r in ranges}
        ex = Example("", category, 0.0, meas, {b: True for b in binaries})
        d = evaluate(tree, spec.truth, ex, spec.gate_T)
        if d <= 0.0:
            continue
        if spec.quality_filter is not None:
            lo, hi = spec.quality_filter
            if not (lo <= d < hi):
                continue
        if quotas is not None:
            b = _bin_of(d)
            if quotas.get(b, 0) <= 0:
                continue
            quotas[b] -= 1
        ex.desired = d
        ex.id = f"{spec.id_prefix}{len(out) + 1:04d}"
        out.append(ex)
    return out


def parse_histogram(text: str) -> list[tuple[float, int]]:
    """``lower_edge,count`` lines; ``#`` comments allowed."""
    bins = []
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.replace(",", " ").split()]
        if len(parts) != 2:
            raise ParseError(no, "expected '<bin lower edge>,<count>'")
        try:
            lower, count = float(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(no, f"bad histogram line {raw!r}") from None
        if count < 0:
            raise ParseError(no, "negative bin count")
        bins.append((lower, count))
    return bins


def builtin(name: str) -> tuple[DefinitionTree, Model]:
    """Bundled ``(rules, truth model)`` pair: ``"chair"`` or ``"cup"``."""
    pkg = resources.files("omlet") / "data"
    rules = (pkg / f"{name}.rules").read_text(encoding="utf-8")
    truth = (pkg / f"{name}_truth.model").read_text(encoding="utf-8")
    return parse_rules(rules), parse_model(truth)


def builtin_path(filename: str) -> str:
    return str(resources.files("omlet") / "data" / filename)
