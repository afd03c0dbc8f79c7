"""Moderate / negligible classification of expressions along families of eps-nets."""
from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass, field, replace

import numpy as np

from .basic_space import GFExpr, differential, describe
from .calculus import DEFAULT_GRID, Grid, PartialDerivative, Window
from .regularization import (DEFAULT_EPS, K_MAX, Regime, Shape, MollifierParams,
                             build_mollifier_net, derivative_sups, difference_net, make_regime,
                             transform_net, ultra_log_weights, verify_test_object, weighted_sup)
from .scales import fit_net

NEGLIGIBLE = "Negligible"
MODERATE = "ModerateOnly"
NOT_MODERATE = "NotModerate"


class QuotientError(ValueError):
    pass


@dataclass(eq=False)
class RegimeConfig:
    regime: Regime
    nets: list                      # test objects (Lambda)
    zero_nets: list                 # zero test objects (Lambda^0)
    eps_grid: np.ndarray
    l_max: int = 1
    k_max: int = K_MAX
    max_tuples: int = 3
    seed: int = 0

    def __post_init__(self):
        if not self.nets or not self.zero_nets:
            raise QuotientError("both net families must be nonempty")
        for n in self.nets:
            if n.kind != "TestObject":
                raise QuotientError(f"net {n.label} carries no test-object certificate")
        for n in self.zero_nets:
            if n.kind != "ZeroTestObject":
                raise QuotientError(f"net {n.label} carries no zero-test-object certificate")
        for n in self.nets + self.zero_nets:
            if not np.array_equal(n.eps_grid, self.eps_grid):
                raise QuotientError("all nets must share the eps grid")

    @property
    def windows(self):
        return self.regime.windows

    def with_windows(self, windows) -> "RegimeConfig":
        reg = Regime(self.regime.name, self.regime.pair, tuple(windows), self.regime.order, self.regime.k_max,
                     self.regime.h_values, self.regime.lam_values, self.regime.lam_cap)
        return RegimeConfig(reg, self.nets, self.zero_nets, self.eps_grid, self.l_max, self.k_max,
                            self.max_tuples, self.seed)

    def with_nets(self, nets=None, zero_nets=None) -> "RegimeConfig":
        return RegimeConfig(self.regime, list(nets or self.nets), list(zero_nets or self.zero_nets),
                            self.eps_grid, self.l_max, self.k_max, self.max_tuples, self.seed)

    def tuples(self, l: int) -> list:
        """l-tuples of zero nets up to symmetry, at most max_tuples distinct ones per order."""
        combos = list(itertools.combinations_with_replacement(range(len(self.zero_nets)), l))
        if len(combos) > self.max_tuples:
            combos = sorted(random.Random(self.seed + l).sample(combos, self.max_tuples))
        return combos


_CONFIGS: dict = {}


def default_config(regime: str = "distribution", eps_grid=DEFAULT_EPS, windows=None, l_max: int = 1,
                   order: int | None = None, grid: Grid = DEFAULT_GRID,
                   params: MollifierParams | None = None) -> RegimeConfig:
    """Mollifier net as Lambda; Lambda^0 holds the difference of two mollifier nets whose outer
    cutoffs differ in width and the commutator net [d, Phi]. Nets are verified once and cached."""
    eps_grid = np.array(sorted(np.asarray(eps_grid, dtype=float))[::-1])
    if params is None:
        params = MollifierParams.distribution() if regime == "distribution" else MollifierParams.ultra(regime)
    if params.regime != regime:
        raise QuotientError(f"mollifier built for {params.regime} used in the {regime} regime")
    weight = "gevrey:2" if params.s is None else f"gevrey:{params.s:g}"
    key = (regime, tuple(eps_grid), grid, json.dumps(params.describe(), sort_keys=True))
    if key not in _CONFIGS:
        p2 = replace(params, chi=Shape(params.chi.k, 2 * params.chi.a))
        reg = make_regime(regime, weight=weight)
        n1 = build_mollifier_net(params, grid=grid, eps_grid=eps_grid)
        n2 = build_mollifier_net(p2, grid=grid, eps_grid=eps_grid, label=f"mollifier[{regime},chi']")
        for n in (n1, n2):
            rep = verify_test_object(n, reg)
            if not rep["pass"]:
                raise QuotientError(f"{n.label} failed the test-object checks")
        z1 = difference_net(n1, n2)
        z2 = transform_net("commutator", (PartialDerivative(), n1))
        for z in (z1, z2):
            rep = verify_test_object(z, reg, zero=True, dist_probes=("delta", "heaviside"),
                                     dual_probes=("bump",))
            if not rep["pass"]:
                raise QuotientError(f"{z.label} failed the zero-test-object checks")
        _CONFIGS[key] = ([n1], [z1, z2])
    nets, zeros = _CONFIGS[key]
    reg = make_regime(regime, order=order, windows=windows, weight=weight)
    return RegimeConfig(reg, nets, zeros, eps_grid, l_max)


# ---------------------------------------------------------------------------
# verdicts


@dataclass
class Row:
    net: str
    directions: tuple
    window: str
    l: int
    eps: list
    values: list
    floors: list
    growth: dict
    decay: dict
    moderate: bool
    negligible: bool
    witness: object = None

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("net", "directions", "window", "l", "eps", "values", "floors",
                                               "growth", "decay", "moderate", "negligible", "witness")}


@dataclass
class Verdict:
    classification: str
    expr: str
    regime: str
    caps: dict
    rows: list = field(default_factory=list)
    witness: dict | None = None

    @property
    def moderate(self) -> bool:
        return self.classification != NOT_MODERATE

    @property
    def negligible(self) -> bool:
        return self.classification == NEGLIGIBLE

    @property
    def slope(self) -> float | None:
        """Growth slope of the undifferentiated net (most singular window)."""
        s = [r.growth.get("slope") for r in self.rows if r.l == 0 and r.growth.get("slope") is not None]
        return min(s) if s else None

    @property
    def decay_slope(self) -> float | None:
        s = [r.decay.get("slope") for r in self.rows if r.decay.get("n_resolved", 0) > 0
             and r.decay.get("slope") is not None]
        return min(s) if s else None

    @property
    def growth_parameter(self):
        p = [r.growth.get("parameter") for r in self.rows if r.l == 0]
        p = [x for x in p if x is not None]
        return min(p) if p else None

    def as_dict(self) -> dict:
        return {"classification": self.classification, "expr": self.expr, "regime": self.regime,
                "caps": self.caps, "slope": self.slope, "decay_slope": self.decay_slope,
                "witness": self.witness, "rows": [r.as_dict() for r in self.rows]}


def _seminorm_series(values_fn, eps_grid, window: Window, regime: Regime):
    """Seminorm of each eps-slice and its resolution floor (sup-norm of derivatives up to the
    regime's order; ultra regimes weight derivative a by h^a M_a with h = 1)."""
    vals, floors = [], []
    for e in eps_grid:
        g = values_fn(e)
        sups, fl = derivative_sups(g, window, regime.order)
        if regime.ultra:
            lw = ultra_log_weights(regime.weight, regime.order, 1.0)
            v, f = weighted_sup(sups, fl, lw)
        else:
            v, f = float(sups.max()), float(fl.max())
        vals.append(v)
        floors.append(f)
    return np.array(vals), np.array(floors)


def _judge(eps, vals, floors, cfg: RegimeConfig, k_max: int):
    pair = cfg.regime.pair
    g = fit_net(eps, vals, floors, pair, "growth")
    d = fit_net(eps, vals, floors, pair, "decay")
    moderate = g.parameter is not None
    if d.n_resolved == 0 or d.below_floor:
        negligible = True
    elif pair.mode == "poly":
        # q = O(eps^k) for every k <= k_max on the resolved trailing cells
        negligible = d.parameter is not None and d.parameter >= k_max
    elif pair.mode == "beurling":
        negligible = d.parameter is not None and float(d.parameter) >= cfg.regime.lam_cap
    else:
        strongest = min(r.theta for r in pair.rfamily)
        negligible = d.parameter is not None and d.parameter.theta == strongest
    gd, dd = g.as_dict(), d.as_dict()
    return moderate, negligible, gd, dd


def classify(R: GFExpr, cfg: RegimeConfig, k_max: int | None = None) -> Verdict:
    """Worst case over nets in Lambda, direction tuples from Lambda^0, windows and l <= l_max."""
    k_max = cfg.k_max if k_max is None else k_max
    l_top = min(cfg.l_max, R.degree)
    rows = []
    for net in cfg.nets:
        for l in range(l_top + 1):
            for combo in cfg.tuples(l):
                dnets = [cfg.zero_nets[i] for i in combo]
                slices = {}

                def at(e, net=net, dnets=dnets, slices=slices):
                    if e not in slices:
                        slices[e] = differential(R, net[e], tuple(z[e] for z in dnets), l_max=max(cfg.l_max, l))
                    return slices[e]

                for window in cfg.windows:
                    vals, floors = _seminorm_series(at, cfg.eps_grid, window, cfg.regime)
                    mod, neg, gd, dd = _judge(cfg.eps_grid, vals, floors, cfg, k_max)
                    rows.append(Row(net.label, tuple(z.label for z in dnets), window.label, l,
                                    cfg.eps_grid.tolist(), vals.tolist(), floors.tolist(), gd, dd, mod, neg))
    if not all(r.moderate for r in rows):
        cls = NOT_MODERATE
        bad = next(r for r in rows if not r.moderate)
    elif all(r.negligible for r in rows):
        cls, bad = NEGLIGIBLE, None
    else:
        cls = MODERATE
        bad = next(r for r in rows if not r.negligible)
    witness = None
    if bad is not None:
        bad.witness = {"last_value": bad.values[-1], "last_floor": bad.floors[-1]}
        witness = {"net": bad.net, "directions": bad.directions, "window": bad.window, "l": bad.l,
                   "growth": bad.growth, "decay": bad.decay}
    caps = {"l_max": l_top, "k_max": k_max, "seminorm_order": cfg.regime.order,
            "eps_min": float(cfg.eps_grid.min()), "zero_tuples_per_order": cfg.max_tuples}
    if cfg.regime.pair.mode == "beurling":
        caps["lambda_cap"] = cfg.regime.lam_cap
    return Verdict(cls, describe(R), cfg.regime.name, caps, rows, witness)


def equivalent(R1: GFExpr, R2: GFExpr, cfg: RegimeConfig) -> tuple[bool, Verdict]:
    v = classify(R1 - R2, cfg)
    return v.negligible, v


def ideal_check(cfg: RegimeConfig, moderate_samples, negligible_samples) -> dict:
    """Products of moderate and negligible samples must be negligible; each product's decay
    threshold is lowered by the growth order of its moderate factor."""
    results = []
    ok = True
    for m_expr, m_verdict in moderate_samples:
        if not m_verdict.moderate:
            raise QuotientError("moderate sample carries a failing verdict")
        k = m_verdict.growth_parameter
        consumed = 0 if k is None or cfg.regime.pair.mode != "poly" else max(0, -int(k))
        for n_expr, n_verdict in negligible_samples:
            if not n_verdict.negligible:
                raise QuotientError("negligible sample carries a failing verdict")
            cap = cfg.k_max - consumed
            v = classify(m_expr * n_expr, cfg, k_max=cap)
            results.append({"moderate": describe(m_expr), "negligible": describe(n_expr), "k_max_used": cap,
                             "classification": v.classification, "decay_slope": v.decay_slope})
            ok &= v.negligible
    return {"pass": bool(ok), "products": results}
