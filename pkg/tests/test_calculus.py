import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from colombeau.calculus import (DIFFEO_CATALOG, CalculusError, FirstOrder, Grid, GridFunction, Multiplier,
                                PartialDerivative, Window, apply_linop, delta, density, diffeo_act,
                                diffeo_from_spec, differentiate, grid_for, heaviside, load_binary, load_csv,
                                pair, roundtrip_residual, save_binary, save_csv, smooth)

from conftest import SMALL_GRID as G

W = Window.interval(-3.0, 3.0)
bump = smooth("bump", G)
gauss = smooth("gaussian", G)


def test_grid_geometry():
    assert G.comp_box() == (-8.0, 8.0)
    assert G.dx() == pytest.approx(16 / 2 ** 12)
    assert grid_for(2.0 ** -10).n == 2 ** 16
    with pytest.raises(CalculusError):
        Grid(((-1.0, 1.0),), 100)
    with pytest.raises(CalculusError):
        Window.interval(-5.0, 1.0)
    with pytest.raises(CalculusError):
        G.require_resolution(2.0 ** -10)


def test_spectral_derivative_of_tapered_sine():
    s, c = smooth("sin", G), smooth("cos", G)
    assert (s.derivative() - c).sup(W) < 1e-11
    assert (s.derivative(2) + s).sup(W) < 1e-9


def test_antiderivative_inverts_the_derivative():
    F = gauss.antiderivative()
    x = G.x
    exact = math.sqrt(math.pi * 0.5) / 2 * (1 + np.array([math.erf(v / math.sqrt(0.5)) for v in x]))
    assert np.max(np.abs(F.values - exact)) < 1e-12
    assert F.values[-1] == pytest.approx(math.sqrt(2 * math.pi) * 0.5, rel=1e-12)


def test_band_limited_point_evaluation():
    x = np.array([-0.3, 0.123, 1.7])
    assert np.allclose(gauss.at(x), np.exp(-x ** 2 / 0.5), atol=1e-12)
    assert np.allclose(gauss.at(x, order=1), -4 * x * np.exp(-x ** 2 / 0.5), atol=1e-10)


def test_pairings():
    assert pair(delta(0.4, grid=G), gauss) == pytest.approx(math.exp(-0.32), abs=1e-12)
    assert pair(delta(0.4, 1, grid=G), gauss) == pytest.approx(-gauss.at([0.4], 1)[0], abs=1e-12)
    half = math.sqrt(2 * math.pi) * 0.5 / 2
    assert pair(heaviside(0.0, grid=G), gauss) == pytest.approx(half, abs=1e-12)
    assert pair(density(bump), gauss) == pytest.approx((bump * gauss).integral(), rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=-2.0, max_value=2.0), st.floats(min_value=-3.0, max_value=3.0),
       st.floats(min_value=-3.0, max_value=3.0))
def test_pairing_is_linear_and_derivative_is_the_transpose(x0, a, b):
    u = a * delta(x0, grid=G) + b * heaviside(x0 / 2, grid=G)
    lhs = pair(differentiate(u), gauss)
    rhs = -pair(u, gauss.derivative())
    assert lhs == pytest.approx(rhs, abs=1e-10)
    assert pair(u, gauss) == pytest.approx(a * pair(delta(x0, grid=G), gauss)
                                           + b * pair(heaviside(x0 / 2, grid=G), gauss), abs=1e-12)


def test_linear_operators_on_distributions():
    sin = smooth("sin", G)
    u = apply_linop(Multiplier(sin, "sin"), delta(1.0, grid=G))
    assert pair(u, gauss) == pytest.approx(math.sin(1.0) * math.exp(-2.0), abs=1e-12)
    T = FirstOrder(smooth("cos", G), sin, 0, "cos*d+sin")
    v = apply_linop(T, heaviside(0.0, grid=G))
    # cos * delta_0 + sin * H
    expect = 1.0 + pair(heaviside(0.0, grid=G), sin * gauss)
    assert pair(v, gauss) == pytest.approx(expect, abs=1e-10)
    f = apply_linop(PartialDerivative(), gauss)
    assert (f - gauss.derivative()).sup(W) == 0.0


def test_diffeomorphism_catalog_roundtrips():
    y = np.linspace(-3.0, 3.0, 41)
    for mu in DIFFEO_CATALOG.values():
        assert roundtrip_residual(mu, y) < 1e-13
        assert np.all(mu.jac(y) > 0)
    with pytest.raises(CalculusError):
        diffeo_from_spec("swirl")


def test_diffeo_act_is_a_density_pushforward():
    mu = diffeo_from_spec("dilation")
    pushed = diffeo_act(mu, delta(0.0, grid=G))
    # <mu u, phi> = <u, phi o mu |mu'|> with mu(x) = 2x
    assert pair(pushed, gauss) == pytest.approx(2.0, abs=1e-12)
    shifted = diffeo_act(DIFFEO_CATALOG["sine"], delta(0.5, grid=G))
    mu = DIFFEO_CATALOG["sine"]
    target, jac = mu.forward(np.array([0.5]))[0], mu.jac(np.array([0.5]))[0]
    assert pair(shifted, gauss) == pytest.approx(gauss.at([target])[0] * jac, abs=1e-10)


def test_grid_function_io_roundtrip(tmp_path):
    f = gauss + 1j * bump
    save_binary(f, tmp_path / "f.bin")
    g = load_binary(tmp_path / "f.bin")
    assert g.grid == G and np.array_equal(g.values, f.values)
    save_csv(gauss, tmp_path / "f.csv")
    h = load_csv(tmp_path / "f.csv", G)
    assert np.array_equal(h.values, gauss.values)
    with pytest.raises(CalculusError):
        (tmp_path / "bad.bin").write_bytes(b"nope")
        load_binary(tmp_path / "bad.bin")


def test_grid_function_guards():
    with pytest.raises(CalculusError):
        GridFunction(G, np.full(G.shape, np.nan))
    with pytest.raises(CalculusError):
        gauss + smooth("gaussian", Grid(((-4.0, 4.0),), 2 ** 10))
    with pytest.raises(CalculusError):
        smooth("zigzag", G)
