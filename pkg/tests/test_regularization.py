import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from colombeau.calculus import (CalculusError, Identity, PartialDerivative, Window, delta, density, heaviside, pair, smooth)
from colombeau.regularization import (LinearCombination, MollifierOperator, MollifierParams, PowerNet,
                                      RegularizationError, Shape, ZeroOperator, build_mollifier_net,
                                      chi_hat_l1, commutator, difference_net, localization_probe,
                                      params_from_spec, theta_function, theta_hat_frequency_side, transform_net)

from conftest import SMALL_EPS, SMALL_GRID as G

P = MollifierParams.distribution()
W = Window.interval(-2.0, 2.0)
OP = MollifierOperator(P, 2.0 ** -6, G)


def test_parameters():
    assert PowerNet()(1.0) == 0.7
    assert P.radius(2.0 ** -10) == pytest.approx(2 * 0.7 * 2.0 ** -2)
    assert Shape()(np.array([0.0, 1.0, 2.0, 3.0])).tolist() == [1.0, 1.0, 0.0, 0.0]
    assert params_from_spec("distribution").regime == "distribution"
    assert params_from_spec({"regime": "distribution", "r_net": "sqrt"}).r(0.25) == 0.5
    with pytest.raises(RegularizationError):
        params_from_spec("gaussian")
    with pytest.raises(RegularizationError):
        MollifierParams("beurling", s=1.5, s_prime=2.0)


@pytest.mark.parametrize("eps", SMALL_EPS)
def test_theta_is_compactly_supported(eps):
    th = theta_function(P, eps, G)
    outside = np.abs(G.x) > P.radius(eps) + G.dx()
    assert np.all(th.values[outside] == 0.0)


def test_theta_mass_tends_to_one():
    # the cutoff truncates the kernel tail; the defect shrinks as r_eps / eps grows
    defect = [abs(theta_function(P, e, G).integral() - 1.0) for e in SMALL_EPS]
    assert defect[-1] < 1e-4
    assert defect[-1] < defect[-3] / 10 < defect[0] / 10


@pytest.mark.parametrize("eps", SMALL_EPS[2:])
def test_mass_agrees_with_the_frequency_side_value_at_zero(eps):
    spatial = theta_function(P, eps, G).integral()
    freq = theta_hat_frequency_side(P, eps, np.array([0.0]))[0]
    assert freq == pytest.approx(spatial, abs=1e-10)
    assert np.isfinite(chi_hat_l1(P.chi))


def test_dirac_is_mapped_to_a_shifted_kernel():
    out = OP(delta(0.5, grid=G))
    th = theta_function(P, OP.eps, G)
    shift = int(round(0.5 / G.dx()))
    assert np.max(np.abs(out.values - np.roll(th.values, shift))) < 1e-10 * th.scale()
    assert localization_probe(OP, 0.5)["pass"]


def test_smooth_inputs_converge():
    f = smooth("gaussian", G)
    errs = [(MollifierOperator(P, e, G)(density(f)) - f).sup(W) for e in SMALL_EPS]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] < 1e-4


def test_weak_limit_on_a_heaviside():
    phi = smooth("bump", G)
    u = heaviside(0.3, grid=G)
    gaps = [abs((MollifierOperator(P, e, G)(u) * phi).integral() - pair(u, phi)) for e in SMALL_EPS]
    assert gaps[-1] < 1e-3 and gaps[-1] < gaps[0] / 10


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=-3.0, max_value=3.0), st.floats(min_value=-3.0, max_value=3.0),
       st.floats(min_value=-1.5, max_value=1.5))
def test_mollifier_is_linear(a, b, x0):
    u = delta(x0, grid=G)
    v = heaviside(-x0 / 3, grid=G) + density(smooth("sinbump", G))
    lhs = OP(a * u + b * v)
    rhs = OP(u) * a + OP(v) * b
    assert (lhs - rhs).sup() <= 1e-12 * max(1.0, lhs.scale())


def test_operator_combinators():
    lc = LinearCombination([(1.0, OP), (-1.0, OP)])
    assert lc(delta(0.0, grid=G)).sup() == 0.0
    assert isinstance(commutator(Identity(), OP), ZeroOperator)
    # d commutes with convolution away from the exhaustion cutoff
    com = commutator(PartialDerivative(), OP)
    assert com(delta(0.0, grid=G)).sup(W) < 1e-8 * OP(delta(0.0, grid=G)).sup(W)


def test_net_construction_rules():
    net = build_mollifier_net(P, grid=G, eps_grid=SMALL_EPS)
    assert net.localizing_certificate()["pass"]
    assert list(net.eps_grid) == sorted(SMALL_EPS, reverse=True)
    z = difference_net(net, net)
    assert z.provisional == "ZeroTestObject"
    with pytest.raises(RegularizationError):
        transform_net("compose", (PartialDerivative(), net))
    with pytest.raises(RegularizationError):
        transform_net("partition", [(smooth("bump", G), net)])
    with pytest.raises(CalculusError):
        build_mollifier_net(P, grid=G, eps_grid=[2.0 ** -10])
    with pytest.raises(RegularizationError):
        transform_net("twist", ())
