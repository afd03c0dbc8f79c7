"""Weight sequences M_p, their defining conditions, associated functions and r-nets.

All sequence arithmetic happens in the log domain: (p!)^2 overflows a double near
p = 85 while the oracles need p up to 10^4.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import gammaln

# Hard ceiling for on-demand extension of Gevrey sequences.
P_EXTENSION_LIMIT = 2**24


class WeightError(ValueError):
    pass


@dataclass(frozen=True)
class RSequence:
    """r_j = (1 + floor(j / 2**halvings))**theta / divisor.

    The canonical members (halvings=0, divisor=1) have r_0 = 1 and increase to infinity.
    Shifted members appear as product witnesses and are only required to be nondecreasing.
    """

    theta: float
    halvings: int = 0
    divisor: float = 1.0

    def __post_init__(self):
        if not self.theta > 0:
            raise WeightError(f"r-sequence exponent must be positive, got {self.theta}")
        if self.halvings < 0 or not self.divisor > 0:
            raise WeightError("r-sequence needs halvings >= 0 and a positive divisor")

    def values(self, j_max: int) -> np.ndarray:
        j = np.arange(j_max + 1) // (2 ** self.halvings)
        return (1.0 + j) ** self.theta / self.divisor

    def log_cumprod(self, p_max: int) -> np.ndarray:
        """log prod_{j=0}^{p} r_j for p = 0..p_max."""
        if self.halvings == 0 and self.divisor == 1.0:
            return self.theta * gammaln(np.arange(p_max + 1) + 2.0)
        j = np.arange(p_max + 1) // (2 ** self.halvings)
        return np.cumsum(self.theta * np.log1p(j.astype(float)) - np.log(self.divisor))

    @property
    def label(self) -> str:
        if self.halvings == 0 and self.divisor == 1.0:
            return f"r_j=(1+j)^{self.theta:g}"
        return f"r_j=(1+floor(j/{2 ** self.halvings}))^{self.theta:g}/{self.divisor:g}"


CANONICAL_RFAMILY = (RSequence(0.25), RSequence(0.5), RSequence(1.0))


@dataclass(frozen=True, eq=False)
class WeightSequence:
    kind: str                     # "gevrey" or "table"
    log_m: np.ndarray             # log M_p for p = 0..p_max
    order: float | None = None    # Gevrey order s
    m2_constants: tuple[float, float] | None = None
    label: str = ""

    @property
    def p_max(self) -> int:
        return len(self.log_m) - 1

    def extended(self, p_max: int) -> "WeightSequence":
        if p_max <= self.p_max:
            return self
        if self.kind != "gevrey":
            raise WeightError(f"table sequence {self.label!r} cannot be extended beyond p_max={self.p_max}")
        return WeightSequence("gevrey", gevrey_log_m(self.order, p_max), self.order, self.m2_constants, self.label)

    def log_m_at(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p)
        if self.kind == "gevrey":
            return self.order * gammaln(p + 1.0)
        return np.asarray(self.log_m, dtype=float)[p]


def _log_factorials(p_max: int) -> np.ndarray:
    # extended-precision running sum keeps log p! within an ulp for p <= 10^6
    logs = np.log(np.arange(1, p_max + 1, dtype=np.longdouble))
    return np.concatenate([[np.longdouble(0)], np.cumsum(logs)])


def gevrey_log_m(s: float, p_max: int) -> np.ndarray:
    return np.longdouble(s) * _log_factorials(p_max)


@dataclass
class ConditionReport:
    m1: bool
    m1_equality: bool
    m1_min_defect: float
    m2: bool
    m2_constants: tuple[float, float] | None
    m2_max_defect: float
    m3: bool
    m3_mode: str                     # "analytic" | "heuristic"
    m3_partial_sums: dict[int, float] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "M1": {"pass": self.m1, "equality": self.m1_equality, "min_defect": self.m1_min_defect},
            "M2": {"pass": self.m2, "A": None if self.m2_constants is None else self.m2_constants[0],
                   "H": None if self.m2_constants is None else self.m2_constants[1],
                   "max_defect": self.m2_max_defect},
            "M3'": {"pass": self.m3, "mode": self.m3_mode,
                    "partial_sums": {str(k): v for k, v in self.m3_partial_sums.items()}},
            "notes": list(self.notes),
        }


def _check_m1(log_m: np.ndarray) -> tuple[bool, bool, float]:
    if len(log_m) < 3:
        return True, True, 0.0
    defect = log_m[2:] + log_m[:-2] - 2.0 * log_m[1:-1]
    tol = 1e-12 * np.maximum(1.0, np.abs(log_m[1:-1]))
    ok = bool(np.all(defect >= -tol))
    equality = bool(np.all(np.abs(defect) <= tol))
    return ok, equality, float(defect.min())


def _m2_defect(log_m: np.ndarray, log_a: float, log_h: float, n_check: int) -> float:
    """max over p + q <= n_check of logM(p+q) - logA - (p+q)logH - logM(p) - logM(q)."""
    n = min(n_check, len(log_m) - 1)
    worst = -np.inf
    for total in range(n + 1):
        p = np.arange(total + 1)
        d = log_m[total] - log_a - total * log_h - log_m[p] - log_m[total - p]
        worst = max(worst, float(d.max()))
    return worst


def _fit_m2(log_m: np.ndarray, n_check: int) -> tuple[float, float]:
    """Smallest H (with A = 1) making (M.2) hold on the sampled range."""
    n = min(n_check, len(log_m) - 1)
    best = 0.0
    for total in range(1, n + 1):
        p = np.arange(total + 1)
        d = log_m[total] - log_m[p] - log_m[total - p]
        best = max(best, float(d.max()) / total)
    return 1.0, math.exp(best)


def _partial_sums(log_ratio_fn, p_top: int) -> dict[int, float]:
    p = np.arange(1, p_top + 1)
    cums = np.cumsum(np.exp(log_ratio_fn(p)))
    out = {}
    k = 1
    while k <= p_top:
        out[k] = float(cums[k - 1])
        k *= 10
    out[p_top] = float(cums[-1])
    return out


def build_weight_sequence(kind: str | float | np.ndarray, p_max: int = 2000,
                          m2_check: int = 400, m3_top: int = 10**6) -> tuple[WeightSequence, ConditionReport]:
    """Build a weight sequence and certify (M.1), (M.2), (M.3)'.

    ``kind`` is a Gevrey order s >= 1 (number or "gevrey:s"), a table of log M_p values,
    or "table:<path>" naming a file with one log M_p per line.
    """
    if isinstance(kind, str):
        kind = parse_weight_spec(kind)
    if isinstance(kind, (int, float)) and not isinstance(kind, bool):
        s = float(kind)
        if not s >= 1.0:
            raise WeightError(f"Gevrey order must satisfy s >= 1, got {s}")
        log_m = gevrey_log_m(s, p_max)
        m1, m1_eq, m1_def = _check_m1(log_m)
        a, h = 1.0, 2.0**s  # (p+q)! <= 2^(p+q) p! q!
        m2_def = _m2_defect(log_m, math.log(a), math.log(h), m2_check)
        m2 = m2_def <= 1e-9
        sums = _partial_sums(lambda p: -s * np.log(p), m3_top)
        report = ConditionReport(m1, m1_eq, m1_def, m2, (a, h) if m2 else None, m2_def,
                                 s > 1.0, "analytic", sums)
        report.notes.append(f"M_(p-1)/M_p = p^(-{s:g}); p-series converges iff s > 1")
        w = WeightSequence("gevrey", log_m, s, (a, h) if m2 else None, f"gevrey:{s:g}")
        return w, report

    log_m = np.asarray(kind, dtype=np.longdouble)
    if log_m.ndim != 1 or len(log_m) < 2:
        raise WeightError("weight table needs at least two entries")
    if not np.all(np.isfinite(log_m)):
        raise WeightError("weight table entries must be positive and finite (log values finite)")
    if abs(log_m[0]) > 1e-14:
        raise WeightError(f"weight table must have M_0 = 1, got M_0 = {math.exp(log_m[0])!r}")
    m1, m1_eq, m1_def = _check_m1(log_m)
    a, h = _fit_m2(log_m, m2_check)
    m2_def = _m2_defect(log_m, math.log(a), math.log(h), m2_check)
    m2 = bool(np.isfinite(h)) and m2_def <= 1e-9
    ratios = log_m[:-1] - log_m[1:]
    top = len(ratios)
    sums = _partial_sums(lambda p: ratios[p - 1], top)
    lo = max(1, top // 10)
    growth = float(np.sum(np.exp(ratios[lo:])))
    m3 = growth <= 1e-6
    report = ConditionReport(m1, m1_eq, m1_def, m2, (a, h) if m2 else None, m2_def, m3, "heuristic", sums)
    report.notes.append(f"partial sum grew by {growth:.3e} over the last decade of p")
    w = WeightSequence("table", log_m, None, (a, h) if m2 else None, "table")
    return w, report


def parse_weight_spec(spec: str) -> float | np.ndarray:
    head, _, rest = spec.partition(":")
    if head == "gevrey":
        try:
            return float(rest)
        except ValueError:
            raise WeightError(f"bad Gevrey order in {spec!r}") from None
    if head == "table":
        path = Path(rest)
        if not path.is_file():
            raise WeightError(f"weight table file not found: {rest}")
        vals = [float(line) for line in path.read_text().split() if line.strip()]
        return np.asarray(vals)
    raise WeightError(f"unknown weight sequence spec {spec!r}")


def weight_from_spec(spec: str, p_max: int = 2000) -> WeightSequence:
    return build_weight_sequence(spec, p_max)[0]


_TABLES: dict = {}


def _tables(w: WeightSequence, modulation: RSequence | None, p_max: int):
    """(log M_p, increments, log-convex flag), memoized per sequence and size."""
    key = (w.order if w.kind == "gevrey" else id(w), modulation, p_max)
    hit = _TABLES.get(key)
    if hit is not None and (w.kind == "gevrey" or hit[3] is w):
        return hit[:3]
    log_m = w.extended(p_max).log_m[: p_max + 1]
    if modulation is not None:
        log_m = log_m + modulation.log_cumprod(p_max)
    inc = np.diff(log_m)
    convex = bool(np.all(np.diff(inc) >= -1e-12 * np.maximum(1.0, np.abs(inc[1:]))))
    if len(_TABLES) > 64:
        _TABLES.clear()
    _TABLES[key] = (log_m, inc, convex, w)
    return log_m, inc, convex


def associated_function(w: WeightSequence, t, modulation: RSequence | None = None):
    """M(t) = sup_p (p log t - log M_p), optionally for the sequence M_p prod_{j<=p} r_j.

    Vectorized in t. Log-convex sequences use the increment search; others a direct max.
    Gevrey sequences are extended until the maximizer is interior.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(np.isnan(t_arr)):
        raise WeightError("associated function needs t >= 0")
    scalar = t_arr.ndim == 0
    t_arr = np.atleast_1d(t_arr)
    out = np.zeros_like(t_arr)
    big = t_arr > 1.0
    if np.any(big):
        log_t = np.log(t_arr[big].astype(np.longdouble))
        p_max = w.p_max
        while True:
            log_m, inc, convex = _tables(w, modulation, p_max)
            if convex:
                p_star = np.searchsorted(inc, log_t, side="right")
            else:
                vals = np.arange(p_max + 1)[None, :] * log_t[:, None] - log_m[None, :]
                p_star = np.argmax(vals, axis=1)
            if np.all(p_star < p_max):
                break
            if w.kind != "gevrey" or p_max >= P_EXTENSION_LIMIT:
                raise WeightError(f"maximizing index reached p_max={p_max} for {w.label}; "
                                  f"t={float(t_arr[big].max()):.3e} is out of range")
            p_max = min(4 * p_max, P_EXTENSION_LIMIT)
        out[big] = (p_star * log_t - log_m[p_star]).astype(float)
    return float(out[0]) if scalar else out


def associated_function_bruteforce(w: WeightSequence, t: float, p_top: int = 10**4) -> float:
    """Oracle: direct max over p <= p_top, every term evaluated with 30-digit arithmetic."""
    import mpmath

    if t == 0:
        return 0.0
    with mpmath.workdps(30):
        log_t = mpmath.log(mpmath.mpf(t))
        best = mpmath.mpf(0)
        top = p_top if w.kind == "gevrey" else min(p_top, w.p_max)
        for p in range(1, top + 1):
            lm = w.order * mpmath.loggamma(p + 1) if w.kind == "gevrey" else mpmath.mpf(float(w.log_m[p]))
            best = max(best, p * log_t - lm)
        return float(best)


def precedes(n_seq: WeightSequence, m_seq: WeightSequence, h_values=(1 / 16, 0.25, 1.0, 4.0),
             t_max: float = 1e8) -> bool:
    """Sampled check of N < M: N(h t) - M(t) keeps growing to large values for each h.

    A smaller weight sequence has the larger associated function.
    """
    t = np.geomspace(10.0, t_max, 60)
    m = associated_function(m_seq, t)
    for h in h_values:
        gap = associated_function(n_seq, h * t) - m
        tail = gap[3 * len(gap) // 4:]
        if not (np.all(np.diff(tail) > 0) and gap[-1] >= gap.max() and gap[-1] > 10.0):
            return False
    return True


def inverse_associated(w: WeightSequence, y: np.ndarray) -> np.ndarray:
    """Monotone inverse: smallest t >= 1 with M(t) >= y, by bisection in log t."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    lo = np.zeros_like(y)
    hi = np.full_like(y, 1.0)
    for _ in range(200):
        need = associated_function(w, np.exp(hi)) < y
        if not np.any(need):
            break
        hi[need] *= 2.0
    else:
        raise WeightError("inversion bracket failure")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        below = associated_function(w, np.exp(mid)) < y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return np.exp(hi)


@dataclass(eq=False)
class RNet:
    """eps -> r_eps = sup_{t >= eps^(-1/2)} rho(t)/t with rho = N^{-1} o M (sampled sup)."""

    m_seq: WeightSequence
    n_seq: WeightSequence
    t_max: float = 1e8
    n_grid: int = 400
    _memo: dict = field(default_factory=dict, repr=False)

    def rho(self, t) -> np.ndarray:
        return inverse_associated(self.n_seq, associated_function(self.m_seq, t))

    def t_grid(self, eps: float) -> np.ndarray:
        t0 = eps ** -0.5
        if t0 >= self.t_max:
            raise WeightError(f"eps={eps:g} too small for t_max={self.t_max:g}")
        return np.geomspace(t0, self.t_max, self.n_grid)

    def __call__(self, eps: float) -> float:
        key = float(eps)
        if key not in self._memo:
            t = self.t_grid(key)
            self._memo[key] = float(np.max(self.rho(t) / t))
        return self._memo[key]

    def slack(self, eps: float, t: np.ndarray, lam: float = 1.0) -> np.ndarray:
        """N(r_eps t) + M(lam/eps) - M(t); nonnegative when the defining inequality holds."""
        t = np.asarray(t, dtype=float)
        return (associated_function(self.n_seq, self(eps) * t)
                + associated_function(self.m_seq, lam / eps)
                - associated_function(self.m_seq, t))


def r_net(m_seq: WeightSequence, n_seq: WeightSequence, t_max: float = 1e8, n_grid: int = 400) -> RNet:
    if not precedes(n_seq, m_seq, t_max=t_max):
        raise WeightError(f"{n_seq.label} does not precede {m_seq.label}")
    return RNet(m_seq, n_seq, t_max, n_grid)
