"""Trapezoidal membership functions and the rules that reshape them.

A trapezoid is described by its range parameters ``(z1, n1, n2, z2)``:
membership is 0 outside ``[z1, z2]``, 1 on the normal range ``[n1, n2]``
and linear on the two legs in between.  A leg may be *open*, in which case
its parameters sit at ``-OPEN_SENTINEL`` / ``+OPEN_SENTINEL`` and the
membership stays at 1 on that side.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DegenerateFit, EmptyPointSet, FrozenTrapezoid

OPEN_SENTINEL = 10000.0
ONE_TOL = 1e-9
# outward move for a bad-slope leg, as a fraction of the observed data range
OUTWARD_STEP = 0.01


class Leg(enum.Enum):
    LEFT = "left"
    RIGHT = "right"
    NORMAL = "normal"


@dataclass(frozen=True)
class Trapezoid:
    z1: float
    n1: float
    n2: float
    z2: float
    left_open: bool = False
    right_open: bool = False
    frozen: bool = False

    def __post_init__(self):
        if not (self.z1 <= self.n1 <= self.n2 <= self.z2):
            raise ValueError(
                f"range parameters must satisfy z1 <= n1 <= n2 <= z2, got {self.params}"
            )
        if self.left_open and not (self.z1 == self.n1 == -OPEN_SENTINEL):
            raise ValueError("open left leg requires z1 = n1 = -OPEN_SENTINEL")
        if self.right_open and not (self.n2 == self.z2 == OPEN_SENTINEL):
            raise ValueError("open right leg requires n2 = z2 = +OPEN_SENTINEL")

    @property
    def params(self) -> tuple[float, float, float, float]:
        return (self.z1, self.n1, self.n2, self.z2)

    def __call__(self, x):
        return evaluate_trapezoid(self, x)

    def leg_of(self, x: float) -> Leg:
        if x < self.n1:
            return Leg.LEFT
        if x > self.n2:
            return Leg.RIGHT
        return Leg.NORMAL

    def with_params(self, params) -> "Trapezoid":
        z1, n1, n2, z2 = (float(p) for p in params)
        return replace(self, z1=z1, n1=n1, n2=n2, z2=z2)

    def open_left(self) -> "Trapezoid":
        return replace(self, z1=-OPEN_SENTINEL, n1=-OPEN_SENTINEL, left_open=True)

    def open_right(self) -> "Trapezoid":
        return replace(self, n2=OPEN_SENTINEL, z2=OPEN_SENTINEL, right_open=True)

    def freeze(self) -> "Trapezoid":
        return replace(self, frozen=True)


@dataclass(frozen=True)
class Limits:
    """Bounds established at initialization that updates may not cross."""

    n1_max: Optional[float] = None
    n2_min: Optional[float] = None
    z1_max: Optional[float] = None
    z2_min: Optional[float] = None

    def data_span(self) -> Optional[float]:
        if self.z1_max is None or self.z2_min is None:
            return None
        return self.z2_min - self.z1_max


@dataclass(frozen=True)
class DesiredPoint:
    x: float
    y: float
    leg: Optional[Leg] = None


def evaluate_trapezoid(t: Trapezoid, x):
    """Membership of ``x`` (scalar or array) in trapezoid ``t``.

    A vertical leg (``z1 == n1``) jumps from 0 to 1 and yields 1 exactly
    at the shared point; the same holds on the right.
    """
    xa = np.asarray(x, dtype=float)
    if t.left_open:
        left = np.ones_like(xa)
    else:
        width = t.n1 - t.z1
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            ramp = (xa - t.z1) / width if width > 0 else np.zeros_like(xa)
        left = np.where(xa >= t.n1, 1.0, np.where(xa <= t.z1, 0.0, ramp))
    if t.right_open:
        right = np.ones_like(xa)
    else:
        width = t.z2 - t.n2
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            ramp = (t.z2 - xa) / width if width > 0 else np.zeros_like(xa)
        right = np.where(xa <= t.n2, 1.0, np.where(xa >= t.z2, 0.0, ramp))
    mu = np.minimum(left, right)
    if mu.ndim == 0:
        return float(mu)
    return mu


def _fit_xy(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float]:
    if xs.size < 2 or np.ptp(xs) == 0.0:
        raise DegenerateFit("least-squares line needs at least two distinct x values")
    x_mean = xs.mean()
    y_mean = ys.mean()
    dx = xs - x_mean
    slope = float(np.dot(dx, ys - y_mean) / np.dot(dx, dx))
    return slope, float(y_mean - slope * x_mean)


def fit_line(points: Iterable) -> tuple[float, float]:
    """Ordinary least-squares line through ``(x, y)`` pairs.

    Returns ``(slope, intercept)``; raises :class:`DegenerateFit` when all
    points share an x value.
    """
    xs, ys = _xy(points)
    return _fit_xy(xs, ys)


def _xy(points) -> tuple[np.ndarray, np.ndarray]:
    pts = list(points)
    xs = np.array([p.x if isinstance(p, DesiredPoint) else p[0] for p in pts], dtype=float)
    ys = np.array([p.y if isinstance(p, DesiredPoint) else p[1] for p in pts], dtype=float)
    return xs, ys


def enforce_shape(params, lim: Optional[Limits] = None) -> tuple[float, float, float, float]:
    """Clamp range parameters to their limits and restore z1 <= n1 <= n2 <= z2."""
    z1, n1, n2, z2 = (float(p) for p in params)
    if lim is not None:
        if lim.n1_max is not None:
            n1 = min(n1, lim.n1_max)
        if lim.n2_min is not None:
            n2 = max(n2, lim.n2_min)
        if lim.z1_max is not None:
            z1 = min(z1, lim.z1_max)
        if lim.z2_min is not None:
            z2 = max(z2, lim.z2_min)
    if n1 > n2:
        n1 = n2 = (n1 + n2) / 2.0
    z1 = min(z1, n1)
    z2 = max(z2, n2)
    return z1, n1, n2, z2


def _left_zero(n1: float, x: float, y: float) -> float:
    # x-intercept of the line through (n1, 1) and (x, y)
    if x >= n1 or y >= 1.0:
        return n1
    return n1 - (n1 - x) / (1.0 - y)


def _right_zero(n2: float, x: float, y: float) -> float:
    if x <= n2 or y >= 1.0:
        return n2
    return n2 + (x - n2) / (1.0 - y)


def init_from_arrays(xs, ys, grid_steps: int = 50) -> tuple[Trapezoid, Limits]:
    """Initial trapezoid and limit points from desired points ``(xs, ys)``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size == 0:
        raise EmptyPointSet("cannot initialize a trapezoid without desired points")
    i_min = int(np.argmin(xs))
    i_max = int(np.argmax(xs))
    x_lo, y_lo = float(xs[i_min]), float(ys[i_min])
    x_hi, y_hi = float(xs[i_max]), float(ys[i_max])

    ones = np.abs(ys - 1.0) <= ONE_TOL
    if ones.any():
        n1 = float(xs[ones].min())
        n2 = float(xs[ones].max())
        lim = Limits(n1_max=n1, n2_min=n2, z1_max=x_lo, z2_min=x_hi)
        z1 = _left_zero(n1, x_lo, y_lo)
        z2 = _right_zero(n2, x_hi, y_hi)
    else:
        n1, n2, z1, z2 = _best_fit_normal_range(xs, ys, grid_steps)
        lim = Limits(z1_max=x_lo, z2_min=x_hi)

    t = Trapezoid(*enforce_shape((z1, n1, n2, z2), lim))
    if not (xs < t.n1).any():
        t = t.open_left()
    if not (xs > t.n2).any():
        t = t.open_right()
    return t, lim


def init_from_points(points: Sequence, grid_steps: int = 50) -> tuple[Trapezoid, Limits]:
    """Initial trapezoid and limit points from desired points.

    Points with membership 1 pin down a known segment of the normal range,
    which later updates may only widen.  Without such points the normal
    range is searched on a grid between the two highest points.
    """
    xs, ys = _xy(points)
    return init_from_arrays(xs, ys, grid_steps)


def _best_fit_normal_range(xs: np.ndarray, ys: np.ndarray, grid_steps: int):
    order = np.argsort(-ys, kind="stable")
    top = xs[order[:2]]
    lo, hi = float(top.min()), float(top.max())
    i_min = int(np.argmin(xs))
    i_max = int(np.argmax(xs))
    x_lo, y_lo = float(xs[i_min]), float(ys[i_min])
    x_hi, y_hi = float(xs[i_max]), float(ys[i_max])

    steps = max(int(grid_steps), 1)
    grid = np.linspace(lo, hi, steps + 1) if hi > lo else np.array([lo])
    best = None
    for i, n1 in enumerate(grid):
        z1 = _left_zero(n1, x_lo, y_lo)
        for n2 in grid[i:]:
            z2 = _right_zero(n2, x_hi, y_hi)
            mu = evaluate_trapezoid(Trapezoid(z1, n1, n2, z2), xs)
            err = float(np.abs(ys - mu).sum())
            if best is None or err < best[0]:
                best = (err, float(n1), float(n2), z1, z2)
    return best[1], best[2], best[3], best[4]


def _outward(t: Trapezoid, lim: Limits, side: Leg, xs: np.ndarray) -> Trapezoid:
    span = lim.data_span()
    if span is None or span <= 0.0:
        span = max(float(np.ptp(xs)), abs(float(xs.mean())), 1.0)
    step = OUTWARD_STEP * span
    if side is Leg.LEFT:
        n1 = float(xs.min()) - step
        if lim.z1_max is not None and n1 < lim.z1_max:
            return t.open_left()
        return t.with_params(enforce_shape((t.z1, n1, t.n2, t.z2), lim))
    n2 = float(xs.max()) + step
    if lim.z2_min is not None and n2 > lim.z2_min:
        return t.open_right()
    return t.with_params(enforce_shape((t.z1, t.n1, n2, t.z2), lim))


def update_leg(t: Trapezoid, lim: Limits, side: Leg, xs, ys, slope_tol: float = 0.05) -> Trapezoid:
    """Refit one leg of ``t`` to its desired points (arrays ``xs``, ``ys``)."""
    if t.frozen:
        raise FrozenTrapezoid("trapezoid is frozen")
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size == 0:
        return t
    if (side is Leg.LEFT and t.left_open) or (side is Leg.RIGHT and t.right_open):
        return t

    normal = t.n1 if side is Leg.LEFT else t.n2
    try:
        slope, intercept = _fit_xy(xs, ys)
    except DegenerateFit:
        x0, y0 = float(xs[0]), float(ys.mean())
        slope = (1.0 - y0) / (normal - x0)
        intercept = 1.0 - slope * normal

    # slope measured per unit of data span, so the tolerance is unit-free
    span = lim.data_span()
    scaled = slope * span if span is not None and span > 0.0 else slope
    if side is Leg.LEFT:
        bad = scaled < slope_tol
    else:
        bad = scaled > -slope_tol
    if bad:
        return _outward(t, lim, side, xs)

    zero = -intercept / slope
    at_one = (1.0 - intercept) / slope
    new_normal = (normal + at_one) / 2.0
    if side is Leg.LEFT:
        params = (zero, new_normal, t.n2, t.z2)
    else:
        params = (t.z1, t.n1, new_normal, zero)
    return t.with_params(enforce_shape(params, lim))


def update_legs(
    t: Trapezoid,
    lim: Limits,
    left_pts: Sequence,
    right_pts: Sequence,
    slope_tol: float = 0.05,
) -> Trapezoid:
    """Candidate trapezoid after refitting both legs to their desired points."""
    if t.frozen:
        raise FrozenTrapezoid("trapezoid is frozen")
    out = t
    if len(left_pts):
        xs, ys = _xy(left_pts)
        out = update_leg(out, lim, Leg.LEFT, xs, ys, slope_tol)
    if len(right_pts):
        xs, ys = _xy(right_pts)
        out = update_leg(out, lim, Leg.RIGHT, xs, ys, slope_tol)
    return out


def tag_points(t: Trapezoid, points: Iterable) -> list[DesiredPoint]:
    return [DesiredPoint(float(x), float(y), t.leg_of(float(x))) for x, y in points]


def split_legs(t: Trapezoid, points: Iterable[DesiredPoint]):
    left = [p for p in points if p.leg is Leg.LEFT]
    right = [p for p in points if p.leg is Leg.RIGHT]
    return left, right


def isclose_trapezoid(a: Trapezoid, b: Trapezoid, tol: float = 1e-9) -> bool:
    return (
        a.left_open == b.left_open
        and a.right_open == b.right_open
        and all(math.isclose(p, q, abs_tol=tol, rel_tol=0.0) for p, q in zip(a.params, b.params))
    )
