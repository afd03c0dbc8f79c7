import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from colombeau.weights import (RSequence, WeightError, associated_function, associated_function_bruteforce,
                               build_weight_sequence, inverse_associated, precedes, r_net, weight_from_spec)

G2 = weight_from_spec("gevrey:2")
G15 = weight_from_spec("gevrey:1.5")

log_t = st.floats(min_value=0.0, max_value=math.log(1e6))


def test_gevrey_orders_and_conditions():
    w, rep = build_weight_sequence("gevrey:3")
    assert rep.m1 and rep.m1_equality is not None
    assert rep.m2_constants == (1.0, 8.0)
    assert rep.m3 and rep.m3_mode == "analytic"
    _, rep1 = build_weight_sequence(1.0)
    assert rep1.m1 and rep1.m2 and not rep1.m3
    assert w.label == "gevrey:3"


@pytest.mark.parametrize("bad", [0.5, "gevrey:x", "nope:2"])
def test_rejects_bad_specs(bad):
    with pytest.raises(WeightError):
        build_weight_sequence(bad)


def test_table_sequence_needs_unit_first_entry():
    with pytest.raises(WeightError):
        build_weight_sequence(np.array([0.5, 1.0, 3.0]))
    w, rep = build_weight_sequence([2 * math.lgamma(p + 1) for p in range(40)])
    assert rep.m1 and rep.m2 and rep.m3_mode == "heuristic"
    assert associated_function(w, 10.0) == pytest.approx(associated_function(G2, 10.0), rel=1e-12)


def test_associated_function_matches_direct_sup():
    for t in (0.5, 1.0, 3.0, 47.0, 1e4):
        assert associated_function(G2, t) == pytest.approx(associated_function_bruteforce(G2, t), abs=1e-10)
    assert associated_function(G2, 0.9) == 0.0


def test_modulated_sequence_has_smaller_associated_function():
    t = np.geomspace(2.0, 1e5, 30)
    plain = associated_function(G2, t)
    mod = associated_function(G2, t, RSequence(0.5))
    assert np.all(mod <= plain + 1e-12)
    assert RSequence(0.5).label == "r_j=(1+j)^0.5"
    with pytest.raises(WeightError):
        RSequence(0.0)


@settings(max_examples=60, deadline=None)
@given(log_t, log_t)
def test_associated_function_nondecreasing(a, b):
    lo, hi = sorted((a, b))
    assert associated_function(G2, math.exp(lo)) <= associated_function(G2, math.exp(hi)) + 1e-12


@settings(max_examples=60, deadline=None)
@given(log_t, log_t, st.floats(min_value=0.0, max_value=1.0))
def test_associated_function_convex_in_log_t(a, b, lam):
    # a supremum of affine functions of log t
    mid = lam * a + (1 - lam) * b
    lhs = associated_function(G2, math.exp(mid))
    rhs = lam * associated_function(G2, math.exp(a)) + (1 - lam) * associated_function(G2, math.exp(b))
    assert lhs <= rhs + 1e-9 * (1 + abs(rhs))


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=1.0, max_value=3.0), st.floats(min_value=0.0, max_value=1e5))
def test_product_condition_in_associated_form(s, t):
    w, rep = build_weight_sequence(s, p_max=600)
    a, h = rep.m2_constants
    assert 2 * associated_function(w, t) <= associated_function(w, h * t) + math.log(a) + 1e-9 * (1 + t)


@settings(max_examples=40, deadline=None)
@given(st.floats(min_value=1.0, max_value=2.5), st.floats(min_value=0.1, max_value=1.0),
       st.floats(min_value=1.0, max_value=1e6))
def test_gevrey_ordering(s, ds, t):
    # a smaller sequence has the larger associated function
    small = weight_from_spec(f"gevrey:{s}")
    big = weight_from_spec(f"gevrey:{s + ds}")
    assert associated_function(small, t) >= associated_function(big, t) - 1e-12


def test_inverse_associated_roundtrip():
    y = np.array([0.5, 3.0, 20.0, 200.0])
    t = inverse_associated(G15, y)
    assert np.allclose(associated_function(G15, t), y, rtol=1e-10)


def test_precedence_direction():
    assert precedes(G15, G2)
    assert not precedes(G2, G15)
    with pytest.raises(WeightError):
        r_net(G15, G2)


def test_r_net_decreases_and_satisfies_the_inequality():
    rn = r_net(G2, G15)
    eps = [2.0 ** -k for k in (2, 4, 6)]
    r = [rn(e) for e in eps]
    assert r[0] >= r[1] >= r[2] > 0
    t = np.geomspace(1.0, 1e6, 50)
    assert all(float(rn.slack(e, t).min()) >= 0 for e in eps)


def test_r_net_reaches_small_values():
    # r_eps < 1e-2 for eps below some grid point of 2^-2 .. 2^-16
    rn = r_net(G2, G15)
    r_min = min(rn(2.0 ** -k) for k in range(2, 17))
    assert r_min < 1e-2, f"smallest r_eps on the grid is {r_min:.4f}"
