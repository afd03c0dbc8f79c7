import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from colombeau.basic_space import (DomainError, ExprError, Multilinear, describe, differential, evaluate,
                                   fd_differential, hat, iota, morph, multilift, parse_expr, pushforward,
                                   sigma)
from colombeau.calculus import (Affine, Multiplier, PartialDerivative, Window, delta, heaviside, smooth)
from colombeau.regularization import LinearCombination, MollifierOperator, MollifierParams

from conftest import SMALL_GRID as G

W = Window.interval(-2.5, 2.5)
EPS = 2.0 ** -6
PHI = MollifierOperator(MollifierParams.distribution(), EPS, G)
PHI2 = MollifierOperator(MollifierParams.distribution(c=0.5), EPS, G)
PSI = LinearCombination([(1.0, PHI), (-1.0, PHI2)])
D = iota(delta(0.0, grid=G), label="delta")
H = iota(heaviside(0.3, grid=G), label="H")
F = sigma(smooth("gaussian", G), label="gaussian")


def _close(a, b, rel=1e-12):
    return (a - b).sup(W) <= rel * max(b.sup(W), a.sup(W), 1e-300)


def test_degrees():
    assert D.degree == 1 and F.degree == 0
    assert (D * H).degree == 2 and (H ** 3).degree == 3
    assert (D + F).degree == 1
    assert hat(PartialDerivative(), H * H).degree == 2


def test_evaluation_follows_the_algebra():
    d, h, f = (evaluate(R, PHI) for R in (D, H, F))
    assert _close(evaluate(D + 2.0 * H - F, PHI), d + 2.0 * h - f)
    assert _close(evaluate(D * H, PHI), d * h)
    assert _close(evaluate(H ** 3, PHI), h * h * h)
    wp = multilift(Multilinear("weighted", 2, smooth("bump", G)), [D, H])
    assert _close(evaluate(wp, PHI), smooth("bump", G) * d * h)
    assert _close(evaluate(morph(smooth("bump", G), D), PHI), smooth("bump", G) * d)


def test_sigma_is_constant_in_phi():
    assert _close(evaluate(F, PHI), evaluate(F, PHI2))
    assert differential(F, PHI, (PSI,)).sup() == 0.0


def test_hat_of_a_smooth_embedding_is_the_classical_operator():
    f = smooth("gaussian", G)
    assert _close(evaluate(hat(PartialDerivative(), F), PHI), f.derivative(), 1e-10)
    sin = smooth("sin", G)
    assert _close(evaluate(hat(Multiplier(sin, "sin"), F), PHI), sin * f, 1e-10)


def test_first_differential_of_a_product():
    dh = differential(D * H, PHI, (PSI,))
    expect = evaluate(D, PSI) * evaluate(H, PHI) + evaluate(D, PHI) * evaluate(H, PSI)
    assert _close(dh, expect, 1e-12)
    assert _close(differential(D, PHI, (PSI,)), evaluate(D, PSI))


def test_finite_differences_agree():
    for R in (D * H, H ** 3, pushforward("sine", H * D)):
        a = differential(R, PHI, (PSI,))
        assert _close(fd_differential(R, PHI, PSI, t=1e-4), a, 1e-6)


@settings(max_examples=20, deadline=None)
@given(st.floats(min_value=-2.0, max_value=2.0), st.floats(min_value=-2.0, max_value=2.0))
def test_second_differential_is_symmetric(a, b):
    dir1 = LinearCombination([(1.0, PHI), (a, PHI2)])
    dir2 = LinearCombination([(b, PHI), (1.0, PSI)])
    R = H * H * D
    x = differential(R, PHI, (dir1, dir2))
    y = differential(R, PHI, (dir2, dir1))
    assert (x - y).sup(W) <= 1e-10 * max(x.sup(W), 1e-300)


def test_differentials_above_the_degree_vanish():
    assert differential(D * H, PHI, (PSI, PSI, PSI)).sup() == 0.0
    with pytest.raises(ExprError):
        differential(D, PHI, (PSI,) * 4)


def test_parse_and_describe():
    obj = {"op": "sub", "args": [
        {"op": "prod", "args": [{"op": "iota", "atom": "delta@0"}, {"op": "iota", "atom": "heaviside@0.5"}]},
        {"op": "hat", "T": "d", "args": [{"op": "sigma", "atom": "bump*cos"}]}]}
    R = parse_expr(json.loads(json.dumps(obj)), G)
    assert describe(R) == "(prod(iota(delta@0), iota(heaviside@0.5)) + -1*hat[d0](sigma(bump*cos)))"
    assert R.degree == 2


@pytest.mark.parametrize("bad", [
    {"op": "iota", "atom": "dleta@0"},
    {"op": "frobnicate"},
    {"op": "prod", "args": [{"op": "iota", "atom": "delta@0"}]},
    {"op": "hat", "T": "curl", "args": [{"op": "iota", "atom": "delta@0"}]},
    {"op": "pushforward", "mu": "swirl", "args": [{"op": "iota", "atom": "delta@0"}]},
    "delta",
])
def test_parse_errors(bad):
    with pytest.raises(ExprError):
        parse_expr(bad, G)


def test_transport_must_stay_in_the_computational_box():
    with pytest.raises(DomainError):
        evaluate(pushforward(Affine(3.0, 0.0), D), PHI)
    assert np.isfinite(evaluate(pushforward("dilation", D), PHI).sup())
