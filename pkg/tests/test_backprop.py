import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from omlet.backprop import collect_points, pand_desired, por_desired
from omlet.errors import SaturatedParent
from omlet.membership import evaluate_trapezoid
from omlet.model import Model
from omlet.rulebase import parse_rules
from omlet.tree import Example, build_proof_tree, pand, por


def bisect_offset(actuals, D, iters=200):
    """Independent oracle: equal offset t with prod(a + t) = D by bisection."""
    lo, hi = -min(actuals), 1.0 + max(1.0, D)
    for _ in range(iters):
        mid = (lo + hi) / 2
        if np.prod([a + mid for a in actuals]) < D:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def test_top_pand_split():
    d1, d2 = pand_desired([0.612, 0.571], 0.6)
    assert d1 == pytest.approx(0.795, abs=1e-3)
    assert d2 == pytest.approx(0.754, abs=1e-3)
    assert d1 * d2 == pytest.approx(0.6, abs=1e-12)


def test_zero_actuals_give_kth_root():
    assert pand_desired([0, 0, 0], 0.512) == pytest.approx([0.8, 0.8, 0.8], abs=1e-12)
    assert pand_desired([0, 0], 0.49) == pytest.approx([0.7, 0.7], abs=1e-12)


def test_four_inputs_against_bisection():
    a = [0.3, 0.5, 0.7, 0.9]
    d = pand_desired(a, 0.2, clamp=False)
    assert np.prod(d) == pytest.approx(0.2, abs=1e-9)
    # first half vs second half: equal offsets within each group
    assert d[0] - a[0] == pytest.approx(d[1] - a[1], abs=1e-9)
    assert d[2] - a[2] == pytest.approx(d[3] - a[3], abs=1e-9)
    # group split from the pseudo-actuals matches the oracle
    p = [a[0] * a[1], a[2] * a[3]]
    t = bisect_offset(p, 0.2)
    assert d[0] * d[1] == pytest.approx(p[0] + t, abs=1e-9)


def test_d_zero_drives_minimum_to_zero():
    assert pand_desired([0.4, 0.2, 0.9], 0.0) == [0.4, 0.0, 0.9]


def test_por_inverse_examples():
    assert por_desired(0.85, 0.9625) == pytest.approx(0.75, abs=1e-12)
    assert por_desired(0.86, 0.9664) == pytest.approx(0.76, abs=1e-12)
    assert por_desired(0.0, 0.37) == pytest.approx(0.37)
    with pytest.raises(SaturatedParent):
        por_desired(1.0, 0.5)


actual = st.floats(0.0, 1.0)


@settings(max_examples=300)
@given(st.lists(actual, min_size=2, max_size=3), st.floats(0.0, 1.0))
def test_equal_share_roundtrip_and_oracle(a, D):
    d = pand_desired(a, D, clamp=False)
    assert np.prod(d) == pytest.approx(D, abs=1e-9)
    offsets = [di - ai for di, ai in zip(d, a)]
    if D > 0:
        assert max(offsets) - min(offsets) <= 1e-9
        assert offsets[0] == pytest.approx(bisect_offset(a, D), abs=1e-9)


@settings(max_examples=300)
@given(st.lists(actual, min_size=4, max_size=9), st.floats(1e-6, 1.0))
def test_wide_pand_roundtrip(a, D):
    d = pand_desired(a, D, clamp=False)
    assert np.prod(d) == pytest.approx(D, abs=1e-9)


@given(st.lists(actual, min_size=2, max_size=7), st.floats(0.0, 1.0))
def test_monotone_direction(a, D):
    A = pand(a)
    assume(abs(D - A) > 1e-9)
    d = pand_desired(a, D)
    if D > A:
        assert all(di >= ai - 1e-12 for di, ai in zip(d, a))
    else:
        assert all(di <= ai + 1e-12 for di, ai in zip(d, a))


@given(st.floats(0.0, 0.999), st.floats(0.0, 1.0))
def test_por_roundtrip(known, D):
    assume(D >= known)
    assert por(known, por_desired(known, D)) == pytest.approx(D, abs=1e-12)


def test_vectorized_matches_scalar():
    rng = np.random.default_rng(0)
    a = [rng.uniform(0, 1, 50) for _ in range(5)]
    D = rng.uniform(0, 1, 50)
    vec = pand_desired(a, D)
    for j in range(50):
        ref = pand_desired([float(x[j]) for x in a], float(D[j]))
        assert [float(v[j]) for v in vec] == pytest.approx(ref, abs=1e-12)


def test_self_consistent_two_level_tree():
    # root PAND over two PANDs of 3 and 2 leaves; desired propagated with lr=1
    defs = parse_rules("""
category t
  group left {
    range a
    range b
    range c
  }
  group right {
    range d
    range e
  }
end
""")
    tree = build_proof_tree(defs, "t")
    leaf_mu = {"a": 0.9, "b": 0.85, "c": 0.8, "d": 0.7, "e": 0.8157142857142857}
    model = Model.from_params({r: (0.0, 1.0, 2.0, 3.0) for r in leaf_mu})
    ex = Example("x", "t", 0.6, dict(leaf_mu), {})
    recs = {r.range_id: r.point for r in collect_points(tree, model, ex, lr=1.0)}
    left = [0.9, 0.85, 0.8]
    right = [0.7, leaf_mu["e"]]
    assert np.prod(left) == pytest.approx(0.612)
    t_top = bisect_offset([np.prod(left), np.prod(right)], 0.6)
    dl, dr = np.prod(left) + t_top, np.prod(right) + t_top
    tl, tr = bisect_offset(left, dl), bisect_offset(right, dr)
    for r, a in zip("abc", left):
        assert recs[r].y == pytest.approx(a + tl, abs=1e-9)
    for r, a in zip("de", right):
        assert recs[r].y == pytest.approx(a + tr, abs=1e-9)
    assert dl == pytest.approx(0.795, abs=1e-3) and dr == pytest.approx(0.754, abs=1e-3)


def test_perfect_example_sends_one_everywhere(tiny_defs, tiny_truth):
    tree = build_proof_tree(tiny_defs, "thing")
    ex = Example("p", "thing", 1.0, {"a": 0.1, "b": 4.0, "c": 0.3}, {"stable": True})
    recs = collect_points(tree, tiny_truth, ex, lr=1.0)
    assert [r.point.y for r in recs] == pytest.approx([1.0, 1.0, 1.0])
    assert [r.point.x for r in recs] == [0.1, 4.0, 0.3]


def test_init_mode_cube_root(tiny_defs, tiny_truth):
    tree = build_proof_tree(tiny_defs, "thing")
    ex = Example("p", "thing", 0.512, {"a": 0.4, "b": 2.5, "c": 0.55}, {"stable": True})
    recs = collect_points(tree, Model(), ex, lr=1.0, init_mode=True)
    assert [r.point.y for r in recs] == pytest.approx([0.8] * 3, abs=1e-12)


def test_zero_learning_rate_reproduces_actuals(tiny_defs, tiny_truth):
    tree = build_proof_tree(tiny_defs, "thing")
    meas = {"a": 0.2, "b": 3.5, "c": 0.8}
    ex = Example("p", "thing", 0.9, meas, {"stable": True})
    for rec in collect_points(tree, tiny_truth, ex, lr=0.0):
        mu = evaluate_trapezoid(tiny_truth.trapezoids[rec.range_id], meas[rec.range_id])
        assert rec.point.y == pytest.approx(mu, abs=1e-12)


def test_binary_leaf_absorbs_no_error(tiny_defs, tiny_truth):
    tree = build_proof_tree(tiny_defs, "thing")
    ex = Example("p", "thing", 0.343, {"a": 0.0, "b": 0.0, "c": 0.0}, {"stable": True})
    recs = collect_points(tree, tiny_truth, ex, lr=1.0, init_mode=True)
    assert [r.point.y for r in recs] == pytest.approx([0.7] * 3, abs=1e-12)


def test_frozen_parent_receives_nothing(chair_defs, chair_truth):
    tree = build_proof_tree(chair_defs, "straightback_chair")
    meas = {r: 0.5 for r in chair_defs.ranges_for("straightback_chair")}
    meas.update({"area": 0.2, "contiguous_surface": 1.0, "height": 0.5})
    bins = {b: True for b in chair_defs.binaries_for("straightback_chair")}
    ex = Example("s", "straightback_chair", 0.9, meas, bins)
    recs = collect_points(tree, chair_truth, ex, lr=1.0, frozen_levels={1})
    ids = [r.range_id for r in recs]
    assert ids == chair_defs.get("straightback_chair").range_ids
    # parent evaluates to 1, so POR is saturated and leaves keep their actuals
    for rec in recs:
        assert rec.point.y == pytest.approx(evaluate_trapezoid(chair_truth.trapezoids[rec.range_id], 0.5))
