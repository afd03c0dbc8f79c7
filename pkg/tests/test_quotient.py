import numpy as np
import pytest

from colombeau.basic_space import iota, sigma
from colombeau.calculus import Window, delta, smooth
from colombeau.quotient import (MODERATE, NEGLIGIBLE, NOT_MODERATE, QuotientError, RegimeConfig, _judge,
                                classify, default_config, equivalent)
from colombeau.regularization import build_mollifier_net, make_regime


def test_config_is_cached_and_certified(dist_cfg):
    again = default_config("distribution")
    assert again.nets[0] is dist_cfg.nets[0]
    assert dist_cfg.nets[0].kind == "TestObject"
    assert {z.kind for z in dist_cfg.zero_nets} == {"ZeroTestObject"}


def test_unverified_nets_are_refused(dist_cfg):
    raw = build_mollifier_net("distribution")
    with pytest.raises(QuotientError):
        RegimeConfig(dist_cfg.regime, [raw], dist_cfg.zero_nets, dist_cfg.eps_grid)
    with pytest.raises(QuotientError):
        RegimeConfig(dist_cfg.regime, [], dist_cfg.zero_nets, dist_cfg.eps_grid)


def test_direction_tuples_are_seeded(dist_cfg):
    assert dist_cfg.tuples(0) == [()]
    assert dist_cfg.tuples(1) == [(0,), (1,)]
    assert dist_cfg.tuples(3) == dist_cfg.tuples(3)
    assert len(dist_cfg.tuples(3)) == dist_cfg.max_tuples


def test_smooth_embedding_is_moderate_and_not_negligible(dist_cfg):
    v = classify(sigma(smooth("gaussian")), dist_cfg)
    assert v.classification == MODERATE
    assert abs(v.slope) < 1e-6
    assert v.witness is not None and v.caps["k_max"] == 8


def test_exact_cancellation_is_negligible(dist_cfg):
    D = iota(delta(0.5))
    ok, v = equivalent(D, D * 1.0, dist_cfg)
    assert ok and v.classification == NEGLIGIBLE


def test_verdict_reports_windows(dist_cfg):
    cfg = dist_cfg.with_windows([Window.interval(-1.0, 1.0), Window.interval(1.0, 2.0)])
    v = classify(iota(delta(0.0)), cfg)
    assert {r.window for r in v.rows} == {"[-1,1]", "[1,2]"}
    assert v.classification == MODERATE
    assert v.as_dict()["classification"] == MODERATE


def test_judge_on_synthetic_nets(dist_cfg):
    eps = dist_cfg.eps_grid
    floors = np.full_like(eps, 1e-300)
    assert _judge(eps, np.exp(8 / np.sqrt(eps)), floors, dist_cfg, 8)[:2] == (False, False)
    assert _judge(eps, eps ** 9, floors, dist_cfg, 8)[:2] == (True, True)
    assert _judge(eps, eps ** 3, floors, dist_cfg, 8)[:2] == (True, False)
    assert NOT_MODERATE == "NotModerate"


def test_regime_mismatch():
    with pytest.raises(QuotientError):
        default_config("beurling", params=build_mollifier_net("distribution").params)
    assert make_regime("beurling").order == 12
