"""Asymptotic growth/decay scales, admissible pairs and growth-rate fitting of eps-nets.

Every generator is evaluated in the log domain. O(.) statements on finite data are
checked as "log q - log g stays below a constant fitted at the start of the trailing
half of the eps grid".
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .weights import (CANONICAL_RFAMILY, RSequence, WeightError, WeightSequence,
                      associated_function, weight_from_spec)

LAMBDA_GRID = 2.0 ** (np.arange(-24, 25) / 4.0)   # 2^-6 .. 2^6, ratio 2^(1/4)
POLY_K_RANGE = tuple(range(-12, 13))
DEFAULT_TOL = 0.5                                  # nats of slack on top of the fitted constant


class ScaleError(ValueError):
    pass


# ---------------------------------------------------------------------------
# generators


@dataclass(frozen=True)
class Poly:
    k: int

    def log_value(self, eps):
        return self.k * np.log(np.asarray(eps, dtype=float))

    @property
    def label(self) -> str:
        return f"eps^{self.k}"


@dataclass(frozen=True, eq=False)
class Ultra:
    """e^{sign * M(lam/eps)} (Beurling) or e^{sign * M_r(1/eps)} (Roumieu)."""

    weight: WeightSequence
    sign: int                       # +1 growth, -1 decay
    lam: float | None = None
    rseq: RSequence | None = None

    def log_value(self, eps):
        eps = np.asarray(eps, dtype=float)
        if self.rseq is None:
            return self.sign * associated_function(self.weight, self.lam / eps)
        return self.sign * associated_function(self.weight, 1.0 / eps, self.rseq)

    @property
    def label(self) -> str:
        s = "" if self.sign > 0 else "-"
        if self.rseq is None:
            return f"exp({s}M({self.lam:g}/eps))"
        return f"exp({s}M_[{self.rseq.label}](1/eps))"


def UltraGrowth(weight, lam=None, rseq=None) -> Ultra:
    return Ultra(weight, +1, lam, rseq)


def UltraDecay(weight, lam=None, rseq=None) -> Ultra:
    return Ultra(weight, -1, lam, rseq)


# ---------------------------------------------------------------------------
# O(.) on finite grids


def trailing_start(n: int) -> int:
    return n // 2


def dominated(log_q: np.ndarray, log_g: np.ndarray, tol: float = DEFAULT_TOL) -> tuple[bool, float, float]:
    """q = O(g) on the trailing half: log q - log g <= C, C fitted at the first trailing point.

    Returns (holds, C, worst excess over C).
    """
    h = np.asarray(log_q, dtype=float) - np.asarray(log_g, dtype=float)
    i0 = trailing_start(len(h))
    tail = h[i0:]
    c = float(tail[0]) + tol + 1e-9 * max(1.0, abs(float(tail[0])))
    excess = float(np.max(tail) - c)
    return excess <= 0.0, c, excess


# ---------------------------------------------------------------------------
# pairs


@dataclass
class AxiomEntry:
    axiom: str
    passed: bool
    mode: str                       # "symbolic" | "sampled"
    witnesses: list = field(default_factory=list)
    note: str = ""

    def as_dict(self) -> dict:
        return {"axiom": self.axiom, "pass": self.passed, "mode": self.mode,
                "witnesses": self.witnesses, "note": self.note}


@dataclass
class Certificate:
    entries: dict[str, AxiomEntry]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries.values())

    def as_dict(self) -> dict:
        return {"pass": self.passed, "axioms": [e.as_dict() for e in self.entries.values()]}


AXIOMS = ("i", "ii", "iii", "iv", "v", "vi", "vii", "viii")


@dataclass(eq=False)
class ScalePair:
    """Admissible pair (A, I).

    mode "poly": A = {eps^k : k in growth_k}, I = {eps^k : k in decay_k}; each k-set is an
    integer interval (lo, hi) with None for unbounded ends.
    mode "beurling": A = {e^{M(lam/eps)}}, I = {e^{-M(lam/eps)}}, lam > 0.
    mode "roumieu": A = {e^{M_r(1/eps)}}, I = {e^{-M_r(1/eps)}}, r in the R-family sample.
    """

    name: str
    mode: str
    weight: WeightSequence | None = None
    rfamily: tuple[RSequence, ...] = ()
    growth_k: tuple[int | None, int | None] = (None, None)
    decay_k: tuple[int | None, int | None] = (None, None)
    certificate: Certificate | None = None

    # generator access ------------------------------------------------------
    def growth(self, param):
        if self.mode == "poly":
            return Poly(int(param))
        if self.mode == "beurling":
            return UltraGrowth(self.weight, lam=float(param))
        return UltraGrowth(self.weight, rseq=param)

    def decay(self, param):
        if self.mode == "poly":
            return Poly(int(param))
        if self.mode == "beurling":
            return UltraDecay(self.weight, lam=float(param))
        return UltraDecay(self.weight, rseq=param)

    def _k_samples(self, bounds) -> list[int]:
        lo, hi = bounds
        return [k for k in POLY_K_RANGE if (lo is None or k >= lo) and (hi is None or k <= hi)]

    def growth_params(self) -> list:
        if self.mode == "poly":
            return self._k_samples(self.growth_k)
        if self.mode == "beurling":
            return list(LAMBDA_GRID)
        return list(self.rfamily)

    def decay_params(self) -> list:
        if self.mode == "poly":
            return self._k_samples(self.decay_k)
        if self.mode == "beurling":
            return list(LAMBDA_GRID)
        return list(self.rfamily)

    @property
    def usable(self) -> bool:
        return self.certificate is not None and self.certificate.passed

    def describe(self) -> dict:
        out = {"name": self.name, "mode": self.mode}
        if self.weight is not None:
            out["weight"] = self.weight.label
            out["A_H"] = list(self.weight.m2_constants) if self.weight.m2_constants else None
        if self.rfamily:
            out["rfamily"] = [r.label for r in self.rfamily]
        return out


def _k_in(k: int, bounds) -> bool:
    lo, hi = bounds
    return (lo is None or k >= lo) and (hi is None or k <= hi)


_K_SEARCH = range(-48, 49)


def _poly_certificate(pair: ScalePair) -> Certificate:
    """Exact exponent arithmetic: eps^a = O(eps^b) iff a >= b.

    Universal quantifiers run over the sampled exponents in [-12, 12]; witnesses are searched
    in [-48, 48], trying the canonical choice first.
    """
    ga, da = pair.growth_k, pair.decay_k
    gs, ds = pair.growth_params(), pair.decay_params()
    g_all = [k for k in _K_SEARCH if _k_in(k, ga)]
    d_all = [k for k in _K_SEARCH if _k_in(k, da)]

    def pick(candidates, preferred, ok):
        if preferred in candidates and ok(preferred):
            return preferred
        return next((c for c in candidates if ok(c)), None)

    def forall(axiom, pairs, find, note):
        bad, example = [], None
        for args in pairs:
            wit = find(*args)
            if wit is None:
                bad.append(list(args))
            elif example is None or args == (-2, -3):
                example = {"args": list(args), "witness": wit}
        wits = [example] if example else []
        if bad:
            wits.append({"no_witness_for": bad[:4], "count": len(bad)})
        return AxiomEntry(axiom, not bad, "symbolic", wits, note)

    e: dict[str, AxiomEntry] = {}
    gg = [(a, b) for a in gs for b in gs]
    e["i"] = forall("i", gg, lambda a, b: pick(g_all, min(a, b), lambda c: c <= min(a, b)),
                    "eps^a + eps^b = O(eps^min(a,b))")
    e["ii"] = forall("ii", gg, lambda a, b: pick(g_all, a + b, lambda c: c <= a + b),
                     "eps^a eps^b = eps^(a+b)")
    k3 = pick(g_all, 0, lambda c: c <= 0)
    e["iii"] = AxiomEntry("iii", k3 is not None, "symbolic", [{"lambda": k3}] if k3 is not None else [],
                          "needs a growth member eps^k with k <= 0")
    e["iv"] = forall("iv", [(a,) for a in ds], lambda a: pick(d_all, a, lambda c: c >= a),
                     "eps^mu + eps^nu = O(eps^a) with mu = nu")
    e["v"] = forall("v", [(a,) for a in ds], lambda a: pick(d_all, max(a, -(-a // 2)), lambda c: 2 * c >= a),
                    "eps^mu eps^nu = O(eps^a) with mu = nu")
    k6 = pick(d_all, 1, lambda c: c >= 1)
    e["vi"] = AxiomEntry("vi", k6 is not None, "symbolic", [{"lambda": k6}] if k6 is not None else [],
                         "needs a decay member eps^k with k >= 1")
    e["vii"] = forall("vii", [(a, b) for a in ds for b in gs],
                      lambda a, b: pick(d_all, a - b, lambda c: b + c >= a),
                      "eps^b eps^(a-b) = eps^a")
    k8 = (0, 1) if (0 in g_all and 1 in d_all) else \
        next(((lam, mu) for lam in g_all for mu in d_all if mu >= lam), None)
    e["viii"] = AxiomEntry("viii", k8 is not None, "symbolic",
                           [{"lambda": k8[0], "mu": k8[1]}] if k8 else [], "eps^mu = O(eps^lambda)")
    return Certificate(e)


def make_polynomial_pair() -> ScalePair:
    pair = ScalePair("poly", "poly")
    pair.certificate = _poly_certificate(pair)
    return pair


def make_poly_family_pair(growth_k=(None, None), decay_k=(None, None), name="poly-custom") -> ScalePair:
    """Polynomial-type families restricted to integer intervals (e.g. growth k >= 1)."""
    pair = ScalePair(name, "poly", growth_k=tuple(growth_k), decay_k=tuple(decay_k))
    pair.certificate = _poly_certificate(pair)
    return pair


DEFAULT_EPS_GRID = 2.0 ** -np.arange(2, 13)   # 2^-2 .. 2^-12


def make_ultra_pair(weight: WeightSequence | str, regime: str = "beurling",
                    rfamily: tuple[RSequence, ...] = CANONICAL_RFAMILY,
                    eps_grid: np.ndarray = DEFAULT_EPS_GRID) -> ScalePair:
    if isinstance(weight, str):
        weight = weight_from_spec(weight)
    if weight.m2_constants is None:
        raise ScaleError(f"weight sequence {weight.label} lacks an (M.2) certificate")
    regime = regime.lower()
    if regime not in ("beurling", "roumieu"):
        raise ScaleError(f"unknown ultra regime {regime!r}")
    pair = ScalePair(f"ultra-{regime}:{weight.label}", regime, weight, tuple(rfamily))
    pair.certificate = check_admissible(pair, eps_grid)
    return pair


def pair_from_spec(spec: str) -> ScalePair:
    if spec == "poly":
        return make_polynomial_pair()
    head, _, wspec = spec.partition(":")
    if head in ("ultra-beurling", "ultra-roumieu"):
        try:
            return make_ultra_pair(weight_from_spec(wspec), head.split("-")[1])
        except WeightError as exc:
            raise ScaleError(str(exc)) from None
    raise ScaleError(f"unknown scale pair {spec!r}")


# ---------------------------------------------------------------------------
# admissibility


def halved_sequence(r: RSequence, h: float) -> RSequence:
    """r'_j = r_floor(j/2) / H: the (M.2) product witness for Roumieu generators."""
    return RSequence(r.theta, halvings=r.halvings + 1, divisor=r.divisor * h)


def _weaker(r: RSequence, s: RSequence) -> RSequence:
    """Pointwise min of two members of the sampled power family (larger M_r)."""
    if (r.halvings, r.divisor) != (s.halvings, s.divisor):
        raise ScaleError("pointwise min only materialized within one family shape")
    return r if r.theta <= s.theta else s


def _sampled_entry(axiom, checks) -> AxiomEntry:
    passed = all(c["holds"] for c in checks)
    return AxiomEntry(axiom, passed, "sampled", checks)


def check_admissible(pair: ScalePair, eps_grid=DEFAULT_EPS_GRID, params=None) -> Certificate:
    """Per-axiom verification. Polynomial pairs are certified symbolically; ultra pairs are
    sampled on eps_grid with witnesses derived from the (M.2) constants (A, H)."""
    eps = np.sort(np.asarray(eps_grid, dtype=float))[::-1]
    if np.any(eps <= 0) or np.any(eps > 1):
        raise ScaleError("eps grid must lie in (0, 1]")
    if pair.mode == "poly":
        if not pair.growth_params() or not pair.decay_params():
            raise ScaleError("empty family")
        return _poly_certificate(pair)

    w = pair.weight
    a_const, h_const = w.m2_constants
    log_a = math.log(a_const)
    if pair.mode == "beurling":
        samples = list(params) if params is not None else [0.25, 1.0, 4.0]
        if not samples:
            raise ScaleError("empty family")

        def grow(p):
            return UltraGrowth(w, lam=p)

        def dec(p):
            return UltraDecay(w, lam=p)

        def prod_witness(p, q):
            return h_const * max(p, q)

        def fmt(p):
            return {"lambda": p}
    else:
        samples = list(params) if params is not None else list(pair.rfamily)
        if not samples:
            raise ScaleError("empty family")

        def grow(p):
            return UltraGrowth(w, rseq=p)

        def dec(p):
            return UltraDecay(w, rseq=p)

        def prod_witness(p, q):
            return halved_sequence(_weaker(p, q), h_const)

        def fmt(p):
            return {"r": p.label}

    def lv(g):
        v = g.log_value(eps)
        if not np.all(np.isfinite(v)):
            raise ScaleError(f"non-positive net value for {g.label}")
        return v

    e: dict[str, AxiomEntry] = {}
    checks_i, checks_ii = [], []
    for p in samples:
        for q in samples:
            big = p if (pair.mode == "beurling" and p >= q) else q
            if pair.mode == "roumieu":
                big = _weaker(p, q)
            s = np.logaddexp(lv(grow(p)), lv(grow(q)))
            ok, c, _ = dominated(s, lv(grow(big)))
            checks_i.append({"lambda": fmt(p), "mu": fmt(q), "nu": fmt(big), "holds": ok, "C": c})
            nu = prod_witness(p, q)
            prod = lv(grow(p)) + lv(grow(q))
            ok2, c2, _ = dominated(prod, lv(grow(nu)))
            # exact inequality from 2M(t) <= M(Ht) + log A (Roumieu: shifted sequence)
            exact = bool(np.all(prod <= lv(grow(nu)) + log_a + 1e-10 * np.abs(prod)))
            checks_ii.append({"lambda": fmt(p), "mu": fmt(q), "nu": fmt(nu), "A": a_const,
                              "holds": ok2 and exact, "C": c2, "pointwise_with_A": exact})
    e["i"] = _sampled_entry("i", checks_i)
    e["ii"] = _sampled_entry("ii", checks_ii)

    g0 = grow(samples[0])
    v = lv(g0)
    i0 = trailing_start(len(v))
    ok3 = bool(np.min(v[i0:]) >= v[i0] - 1e-12 and np.min(v) >= -1e-12)
    e["iii"] = AxiomEntry("iii", ok3, "sampled", [{**fmt(samples[0]), "min_log_value": float(np.min(v))}],
                          "M >= 0 so e^{M} >= 1")

    checks_iv, checks_v = [], []
    for p in samples:
        target = lv(dec(p))
        ok, c, _ = dominated(np.logaddexp(target, target), target)
        checks_iv.append({"lambda": fmt(p), "mu": fmt(p), "nu": fmt(p), "holds": ok, "C": c})
        ok, c, _ = dominated(2 * target, target)
        checks_v.append({"lambda": fmt(p), "mu": fmt(p), "nu": fmt(p), "holds": ok, "C": c})
    e["iv"] = _sampled_entry("iv", checks_iv)
    e["v"] = _sampled_entry("v", checks_v)

    v6 = lv(dec(samples[0]))
    tail = v6[i0:]
    ok6 = bool(np.all(np.diff(tail) < 0) and tail[-1] < tail[0] - math.log(2.0))
    e["vi"] = AxiomEntry("vi", ok6, "sampled", [{**fmt(samples[0]), "final_log_value": float(v6[-1])}],
                         "e^{-M} decreasing to 0 on the grid")

    checks_vii = []
    for p in samples:          # target in I
        for q in samples:      # factor in A
            nu = prod_witness(p, q)
            lhs = lv(grow(q)) + lv(dec(nu))
            ok, c, _ = dominated(lhs, lv(dec(p)))
            checks_vii.append({"target": fmt(p), "mu": fmt(q), "nu": fmt(nu), "holds": ok, "C": c})
    e["vii"] = _sampled_entry("vii", checks_vii)

    ok8, c8, _ = dominated(lv(dec(samples[0])), lv(grow(samples[0])))
    e["viii"] = AxiomEntry("viii", ok8, "sampled",
                           [{"lambda": fmt(samples[0]), "mu": fmt(samples[0]), "holds": ok8, "C": c8}],
                           "e^{-M} <= 1 <= e^{M}")
    return Certificate(e)


# ---------------------------------------------------------------------------
# fitting


@dataclass
class GrowthFit:
    mode: str                    # "poly" | "beurling" | "roumieu"
    sense: str                   # "growth" | "decay"
    eps: np.ndarray
    values: np.ndarray
    n_samples: int
    low_confidence: bool
    slope: float | None = None
    residual: float | None = None
    parameter: object = None     # lambda (beurling) or RSequence (roumieu) or k (poly)
    constant: float | None = None
    slack: np.ndarray | None = None

    def as_dict(self) -> dict:
        p = self.parameter
        if isinstance(p, RSequence):
            p = p.label
        elif p is not None:
            p = float(p)
        return {"mode": self.mode, "sense": self.sense, "n": self.n_samples,
                "low_confidence": self.low_confidence, "slope": self.slope,
                "residual": self.residual, "parameter": p, "constant": self.constant}


def loglog_slope(eps: np.ndarray, log_values: np.ndarray) -> tuple[float, float]:
    """Least-squares slope of log q against log eps and its rms residual."""
    x = np.log(np.asarray(eps, dtype=float))
    y = np.asarray(log_values, dtype=float)
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    rms = float(np.sqrt(res[0] / len(x))) if len(res) else 0.0
    return float(coef[0]), rms


def fit_growth(samples, pair: ScalePair, sense: str = "growth", tol: float = DEFAULT_TOL,
               min_samples: int = 5, log_values: bool = False) -> GrowthFit:
    """Fit an eps-net of positive values against the pair's generators.

    samples: sequence of (eps, value) with eps strictly decreasing; with log_values the second
    column holds log(value), which keeps nets like exp(-1/eps) representable.
    poly: least-squares slope of log q against log eps (q = eps^k gives k).
    beurling, growth: smallest lam on the grid with log q - M(lam/eps) <= C;
    beurling, decay: largest lam with log q + M(lam/eps) <= C.
    roumieu: the same search over the sampled R-family.
    """
    if sense not in ("growth", "decay"):
        raise ScaleError(f"unknown sense {sense!r}")
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ScaleError("samples must be (eps, value) pairs")
    eps, q = arr[:, 0], arr[:, 1]
    if len(eps) < 2:
        raise ScaleError("fewer than two samples")
    if log_values:
        if not np.all(np.isfinite(q)):
            raise ScaleError("fit needs finite log values")
        log_q = q
    else:
        if np.any(q <= 0) or not np.all(np.isfinite(q)):
            raise ScaleError("fit needs positive finite values")
        log_q = np.log(q)
    if np.any(np.diff(eps) >= 0):
        raise ScaleError("eps must be strictly decreasing")
    low = len(eps) < min_samples
    fit = GrowthFit(pair.mode, sense, eps, q, len(eps), low)
    if pair.mode == "poly":
        fit.slope, fit.residual = loglog_slope(eps, log_q)
        return fit
    if pair.mode == "beurling":
        grid = LAMBDA_GRID if sense == "growth" else LAMBDA_GRID[::-1]
        gens = [(lam, (UltraGrowth if sense == "growth" else UltraDecay)(pair.weight, lam=lam)) for lam in grid]
    else:
        # weakest generator first: growth prefers the largest theta (smallest M_r)
        fam = sorted(pair.rfamily, key=lambda r: -r.theta if sense == "growth" else r.theta)
        gens = [(r, (UltraGrowth if sense == "growth" else UltraDecay)(pair.weight, rseq=r)) for r in fam]
    for param, g in gens:
        ok, c, _ = dominated(log_q, g.log_value(eps), tol)
        if ok:
            fit.parameter, fit.constant = param, c
            fit.slack = c - (log_q - g.log_value(eps))
            break
    fit.slope, fit.residual = loglog_slope(eps, log_q)
    return fit


# ---------------------------------------------------------------------------
# fitting eps-nets with a resolution floor


@dataclass
class NetFit:
    """Fit of an eps-net q_eps >= 0 whose samples below `floors` are unresolved.

    growth: q = O(g) for the best generator found (poly: largest k; beurling: smallest lam;
    roumieu: weakest r), using values clamped up to the floor (an upper bound).
    decay: the same search in the decay family over resolved trailing cells only.
    """

    sense: str
    mode: str
    eps: np.ndarray
    values: np.ndarray
    floors: np.ndarray
    resolved: np.ndarray
    used: np.ndarray
    slope: float | None
    residual: float | None
    parameter: object
    below_floor: bool
    low_confidence: bool

    @property
    def n_resolved(self) -> int:
        return int(self.resolved.sum())

    def as_dict(self) -> dict:
        p = self.parameter
        if isinstance(p, RSequence):
            p = p.label
        elif p is not None:
            p = float(p)
        return {"sense": self.sense, "mode": self.mode, "slope": self.slope, "residual": self.residual,
                "parameter": p, "below_floor": self.below_floor, "low_confidence": self.low_confidence,
                "n_resolved": self.n_resolved, "n_used": int(self.used.sum())}


def _poly_best(log_q, eps, sense: str, tol: float):
    best = None
    for k in POLY_K_RANGE:
        ok, _, _ = dominated(log_q, k * np.log(eps), tol)
        if ok:
            best = k
    return best


def fit_net(eps, values, floors, pair: ScalePair, sense: str = "growth", tol: float = DEFAULT_TOL,
            min_used: int = 3) -> NetFit:
    eps = np.asarray(eps, dtype=float)
    values = np.abs(np.asarray(values, dtype=float))
    floors = np.broadcast_to(np.asarray(floors, dtype=float), values.shape).copy()
    if eps.size < 2 or np.any(np.diff(eps) >= 0):
        raise ScaleError("eps must be strictly decreasing with at least two samples")
    resolved = values > floors
    i0 = trailing_start(len(eps))
    tiny = 1e-300
    if sense == "growth":
        used = np.ones_like(resolved)
        log_q = np.log(np.maximum(np.maximum(values, floors), tiny))
        e = eps
    elif sense == "decay":
        trailing = np.zeros_like(resolved)
        trailing[i0:] = True
        used = resolved & trailing
        if used.sum() < min_used:
            # fall back to the last resolved cells, flagged low confidence
            idx = np.flatnonzero(resolved)[-min_used:]
            used = np.zeros_like(resolved)
            used[idx] = True
        log_q = np.log(np.maximum(values[used], tiny))
        e = eps[used]
    else:
        raise ScaleError(f"unknown sense {sense!r}")
    below = not resolved[i0:].any()
    low = int(used.sum()) < min_used or (sense == "decay" and int((resolved & (np.arange(len(eps)) >= i0)).sum()) < min_used)
    slope = residual = None
    param = None
    if used.sum() >= 2:
        if sense == "growth":
            tail = slice(i0, None)
            slope, residual = loglog_slope(eps[tail], log_q[tail])
        else:
            slope, residual = loglog_slope(e, log_q)
        if pair.mode == "poly":
            if sense == "growth":
                param = _poly_best(log_q, e, sense, tol)
            else:
                param = _poly_best(log_q, e, sense, tol) if len(e) >= 2 else None
        else:
            samples = np.column_stack([e, log_q])
            try:
                param = fit_growth(samples, pair, sense, tol, min_samples=min_used, log_values=True).parameter
            except ScaleError:
                param = None
    return NetFit(sense, pair.mode, eps, values, floors, resolved, used, slope, residual, param, below, low)
