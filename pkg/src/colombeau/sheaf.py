"""Covers, partitions of unity, restriction / gluing / extension of nets and expressions (1D).

Objects on an open set V are stored on the shared global grid; restriction to V keeps the
representative and tags the domain, so all comparisons are made on windows inside V.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basic_space import GFExpr, Glue, MorphApply, Restrict, evaluate, extend_operator, restrict_operator
from .calculus import (DEFAULT_GRID, Grid, GridFunction, Window, class_check, delta, density, heaviside,
                       interval_cutoff, smooth, smoothstep)
from .regularization import Conjugated, LinearCombination, RegNet, RegOperator

AGREE_TOL = 1e-8


class SheafError(ValueError):
    pass


def _probe_family(grid: Grid, points=(0.0,)):
    out = []
    for x0 in points:
        out.append((f"delta@{x0:g}", delta(x0, grid=grid)))
        out.append((f"ddelta@{x0:g}", delta(x0, 1, grid=grid)))
        out.append((f"heaviside@{x0:g}", heaviside(x0, grid=grid)))
    out.append(("density:gaussian", density(smooth("gaussian", grid))))
    out.append(("density:sinbump", density(smooth("sinbump", grid))))
    return out


@dataclass(frozen=True)
class Cover:
    """Open interval U covered by finitely many open sub-intervals."""

    U: tuple[float, float]
    members: tuple[tuple[float, float], ...]
    grid: Grid = DEFAULT_GRID

    def __post_init__(self):
        lo, hi = self.U
        if not self.members or len(self.members) > 4:
            raise SheafError("covers have between one and four members")
        ms = sorted(self.members)
        if ms[0][0] > lo or ms[-1][1] < hi:
            raise SheafError("members do not reach the ends of U")
        for (a, b) in ms:
            if not (lo <= a < b <= hi):
                raise SheafError(f"member ({a}, {b}) is not inside U")
        for (a0, b0), (a1, b1) in zip(ms, ms[1:]):
            if b0 - a1 < 4 * self.grid.dx():
                raise SheafError(f"members ({a0}, {b0}) and ({a1}, {b1}) overlap by less than four cells")

    @property
    def sorted_members(self):
        return tuple(sorted(self.members))

    def overlaps(self):
        ms = self.sorted_members
        return [(a1, b0) for (a0, b0), (a1, b1) in zip(ms, ms[1:])]


@dataclass(frozen=True, eq=False)
class PartitionOfUnity:
    """eta_i with supp eta_i in V_i, V_i compactly inside U_i; cutoffs_i = 1 on V_i, supported in U_i.

    sum eta_i = 1 on the core of U (U minus `margin` at both ends)."""

    cover: Cover
    etas: tuple
    cutoffs: tuple
    supports: tuple                 # closed supports of eta_i
    V: tuple                        # V_i
    core: tuple[float, float]
    gap: float                      # distance from supp eta_i to the complement of V_i
    width: float

    @property
    def grid(self) -> Grid:
        return self.cover.grid

    def check(self, tol: float = 1e-12) -> dict:
        x = self.grid.x
        total = sum(e.values for e in self.etas)
        core = (x >= self.core[0]) & (x <= self.core[1])
        sum_err = float(np.max(np.abs(total[core] - 1.0)))
        supp_ok = all(bool(np.all(e.values[(x < s0) | (x > s1)] == 0.0)) for e, (s0, s1) in zip(self.etas, self.supports))
        plateau_ok = all(bool(np.all(c.values[(x >= v0) & (x <= v1)] == 1.0))
                         for c, (v0, v1) in zip(self.cutoffs, self.V))
        inside = all(u0 < v0 - self.width and v1 + self.width < u1
                     for (v0, v1), (u0, u1) in zip(self.V, self.cover.sorted_members))
        # rho_{V_i,U} o tau_i = rho_{V_i,U_i}: the extension leaves V_i untouched
        ext_err = 0.0
        for name in ("sin", "gaussian"):
            f = smooth(name, self.grid)
            for c, (v0, v1) in zip(self.cutoffs, self.V):
                m = (x >= v0) & (x <= v1)
                ext_err = max(ext_err, float(np.max(np.abs((c * f).values[m] - f.values[m]))))
        classes = all(class_check(e) for e in self.etas)
        ok = sum_err <= tol and supp_ok and plateau_ok and inside and ext_err == 0.0 and classes
        return {"sum_error": sum_err, "supports_ok": supp_ok, "cutoff_plateaus_ok": plateau_ok,
                "V_inside_U": inside, "extension_error": ext_err, "class_ok": classes, "pass": bool(ok)}


def partition_of_unity(cover: Cover, width: float = 0.1, gap: float = 0.5, margin: float | None = None
                       ) -> PartitionOfUnity:
    """Steps of the given width centred in each overlap, cut off outside the core of U."""
    grid = cover.grid
    x = grid.x
    lo, hi = cover.U
    margin = (width + gap + width) * 1.25 if margin is None else margin
    core = (lo + margin, hi - margin)
    if core[0] >= core[1]:
        raise SheafError("U is too short for the requested margin")
    outer = interval_cutoff(x, core[0], core[1], width)
    mids = [(a + b) / 2 for a, b in cover.overlaps()]
    steps = [smoothstep((x - (m - width / 2)) / width) for m in mids]
    etas, supports = [], []
    n = len(cover.members)
    for i in range(n):
        e = outer.copy()
        if i > 0:
            e = e * steps[i - 1]
        if i < n - 1:
            e = e * (1.0 - steps[i])
        s0 = core[0] - width if i == 0 else mids[i - 1] - width / 2
        s1 = core[1] + width if i == n - 1 else mids[i] + width / 2
        etas.append(GridFunction(grid, e))
        supports.append((s0, s1))
    V = tuple((s0 - gap, s1 + gap) for s0, s1 in supports)
    for (v0, v1), (u0, u1) in zip(V, cover.sorted_members):
        if not (u0 < v0 - width and v1 + width < u1):
            raise SheafError(f"gap {gap} and width {width} do not fit V=({v0:g},{v1:g}) inside U_i=({u0:g},{u1:g})")
    cutoffs = tuple(GridFunction(grid, interval_cutoff(x, v0, v1, width)) for v0, v1 in V)
    return PartitionOfUnity(cover, tuple(etas), cutoffs, tuple(supports), V, core, gap, width)


def single_pu(U: tuple[float, float], grid: Grid = DEFAULT_GRID, width: float = 0.1, gap: float = 0.5):
    """One-member partition of unity on U (used to restrict operators to U)."""
    return partition_of_unity(Cover(U, (U,), grid), width, gap)


def eps_threshold(net: RegNet, gap: float) -> float | None:
    """Largest grid eps from which on the localization radius stays below the gap."""
    ok = [e for e in net.eps_grid if net.radius(e) < gap]
    if not ok:
        return None
    # radii are nonincreasing, so the admissible eps form a tail of the grid
    tail = [e for e in net.eps_grid if e <= max(ok)]
    return float(max(tail)) if all(net.radius(e) < gap for e in tail) else None


# ---------------------------------------------------------------------------
# nets


def restrict_net(net: RegNet, V: tuple[float, float], pu: PartitionOfUnity) -> RegNet:
    """rho^RO_{V,U}(Phi) = sum_i eta_i o rho o Phi o tau_i."""
    if tuple(pu.cover.U) != tuple(V):
        raise SheafError("partition of unity does not live on V")
    out = RegNet(net.eps_grid, lambda e: restrict_operator(net[e], pu, ((V[0], V[1]),)),
                 f"rho[{V[0]:g},{V[1]:g}]({net.label})", provisional=net.kind or net.provisional,
                 params=net.params, grid=net.grid)
    return out


def glue_nets(cover: Cover, nets, pu: PartitionOfUnity, check: bool = True) -> RegNet:
    """Phi = sum_i eta_i o tau_i o Phi_i o rho_{U_i,U}; inputs must agree on the overlaps."""
    nets = list(nets)
    if len(nets) != len(cover.members) or pu.cover != cover:
        raise SheafError("one net per cover member and a partition of unity on the same cover")
    if check:
        report = compatibility(cover, nets, (2 * pu.width + pu.gap) * 1.25, pu.gap)
        if not report["pass"]:
            raise SheafError(f"incompatible nets on overlap {report['offending']}")
    order = sorted(range(len(cover.members)), key=lambda i: cover.members[i])
    ordered = [nets[i] for i in order]

    def make(e):
        terms = [(1.0, Conjugated(n[e], post=lambda f, eta=eta, c=c: eta * (c * f), label="glued"))
                 for n, eta, c in zip(ordered, pu.etas, pu.cutoffs)]
        op = LinearCombination(terms, "glue")
        op.domain = ((cover.U[0], cover.U[1]),)
        return op
    kinds = {n.kind or n.provisional for n in nets}
    return RegNet(nets[0].eps_grid, make, "glue(" + ",".join(n.label for n in nets) + ")",
                  provisional=kinds.pop() if len(kinds) == 1 else None, params=nets[0].params,
                  grid=nets[0].grid)


def compatibility(cover: Cover, nets, shrink: float, gap: float) -> dict:
    """Pairwise agreement of member nets on W = overlap shrunk by `shrink` at both ends, for
    every grid eps at which both localization radii are below `gap`."""
    order = sorted(range(len(cover.members)), key=lambda i: cover.members[i])
    rows = []
    ok = True
    offending = None
    grid = nets[0].grid
    for (i, j), (a, b) in zip(zip(order, order[1:]), cover.overlaps()):
        W = (a + shrink, b - shrink)
        if W[0] >= W[1]:
            raise SheafError(f"overlap ({a}, {b}) too narrow for the comparison window")
        e0 = eps_threshold(nets[i], gap)
        e0j = eps_threshold(nets[j], gap)
        e0 = None if e0 is None or e0j is None else min(e0, e0j)
        errs = {}
        if e0 is not None:
            window = Window.interval(W[0], W[1], grid.box[0])
            probes = _probe_family(grid, points=((W[0] + W[1]) / 2,))
            for e in nets[i].eps_grid[nets[i].eps_grid <= e0]:
                err = agreement(nets[i][e], nets[j][e], window, probes)
                errs[float(e)] = err
                if err > AGREE_TOL and offending is None:
                    offending = {"overlap": (a, b), "eps": float(e), "error": err}
                    ok = False
        else:
            ok = False
            offending = offending or {"overlap": (a, b), "eps": None, "error": None}
        rows.append({"overlap": (a, b), "window": W, "eps0": e0, "errors": errs})
    return {"pass": bool(ok), "rows": rows, "offending": offending}


def extend_net(net: RegNet, V: tuple[float, float], W: tuple[float, float], donor: RegNet,
               width: float = 0.1) -> RegNet:
    """Phi' = mu tau Phi rho + (1 - mu) Phi'' with mu = 1 near W, supp mu inside V.

    Zero test objects blend with the zero net instead of the donor."""
    if not (V[0] < W[0] < W[1] < V[1]):
        raise SheafError("W must sit compactly inside V")
    spare = min(W[0] - V[0], V[1] - W[1])
    if spare < 4 * width:
        raise SheafError(f"margin {spare:g} between W and V is too small for the blend cutoffs")
    grid = net.grid
    x = grid.x
    mu = GridFunction(grid, interval_cutoff(x, W[0], W[1], width))
    c = GridFunction(grid, interval_cutoff(x, W[0] - 2 * width, W[1] + 2 * width, width))
    zero = (net.kind or net.provisional) == "ZeroTestObject"

    def make(e):
        inner = extend_operator(net[e], c)
        terms = [(1.0, Conjugated(inner, post=lambda f: mu * f, label="blend-inner"))]
        if not zero:
            terms.append((1.0, Conjugated(donor[e], post=lambda f: (1.0 - mu) * f, label="blend-donor")))
        return LinearCombination(terms, "extension")
    return RegNet(net.eps_grid, make, f"ext({net.label})", provisional=net.kind or net.provisional,
                  params=donor.params, grid=grid)


def apply_morphism(eta: GridFunction, target):
    """eta o Phi for nets, eta R for expressions."""
    if not class_check(eta):
        raise SheafError("multiplier fails the regularity check")
    if isinstance(target, RegNet):
        return target.map(lambda op: Conjugated(op, post=lambda f: eta * f, label="morphism"),
                          f"eta.{target.label}", target.kind or target.provisional)
    if isinstance(target, GFExpr):
        return MorphApply(eta, target)
    raise SheafError(f"cannot apply a morphism to {type(target).__name__}")


def agreement(op1: RegOperator, op2: RegOperator, window: Window, probes=None) -> float:
    """Max relative disagreement of two operators on the probe family over a window."""
    grid = op1.grid
    mask = window.mask(grid)
    err = 0.0
    for _, u in (probes or _probe_family(grid)):
        a, b = op1.apply(u).values[mask], op2.apply(u).values[mask]
        err = max(err, float(np.max(np.abs(a - b))) / max(1.0, float(np.max(np.abs(b)))))
    return err


def restriction_properties(net: RegNet, V: tuple[float, float], pu: PartitionOfUnity,
                           W: tuple[float, float], other: RegNet | None = None) -> dict:
    """Checks of the net restriction on W inside the core of V.

    (iii) rho_{W,V} rho^RO(Phi) rho_{V,U} = rho_{W,U} Phi for eps below eps_0;
    (iv) nets agreeing after restriction to V give restrictions agreeing on W."""
    if not (pu.core[0] <= W[0] < W[1] <= pu.core[1]):
        raise SheafError("W must lie in the core of the partition of unity")
    res = restrict_net(net, V, pu)
    e0 = eps_threshold(net, pu.gap)
    window = Window.interval(W[0], W[1], net.grid.box[0])
    errs3 = {}
    if e0 is not None:
        for e in net.eps_grid[net.eps_grid <= e0]:
            errs3[float(e)] = agreement(res[e], net[e], window)
    out = {"eps0": e0, "iii_errors": errs3,
           "iii_pass": e0 is not None and max(errs3.values()) <= AGREE_TOL}
    if other is not None:
        res2 = restrict_net(other, V, pu)
        errs4 = {float(e): agreement(res[e], res2[e], window) for e in net.eps_grid}
        out["iv_errors"] = errs4
        out["iv_pass"] = max(errs4.values()) <= 1e-10
    return out


def perturb_outside(net: RegNet, V: tuple[float, float], width: float = 0.1, amount: float = 1.0) -> RegNet:
    """Phi + amount * omega Phi with omega = 0 on a neighbourhood of V: agrees with Phi after
    restriction to V."""
    grid = net.grid
    x = grid.x
    omega = GridFunction(grid, 1.0 - interval_cutoff(x, V[0], V[1], width))
    return net.map(lambda op: LinearCombination([(1.0, op), (amount, Conjugated(op, post=lambda f: omega * f))],
                                                "perturbed"), f"perturbed({net.label})", net.kind or net.provisional)


# ---------------------------------------------------------------------------
# expressions


def restrict_expr(R: GFExpr, V: tuple[float, float], pu: PartitionOfUnity) -> Restrict:
    """rho^E_{V,U}(R)(Phi) = sum_i eta_i rho R(tau_i o Phi o rho)."""
    if tuple(pu.cover.U) != tuple(V):
        raise SheafError("partition of unity does not live on V")
    return Restrict(((V[0], V[1]),), R, pu)


def glue_exprs(cover: Cover, exprs, pu: PartitionOfUnity, inner=None, cfg=None) -> Glue:
    """R = sum_i eta_i tau_i R_i(rho^RO_{U_i,U}(Phi)).

    With a quotient config, restrictions of neighbouring pieces to each overlap are checked for
    equivalence first."""
    exprs = list(exprs)
    order = sorted(range(len(cover.members)), key=lambda i: cover.members[i])
    exprs = [exprs[i] for i in order]
    members = cover.sorted_members
    if inner is None:
        inner = [single_pu(m, cover.grid, pu.width, pu.gap) for m in members]
    if cfg is not None:
        from .quotient import equivalent
        for k, (a, b) in enumerate(cover.overlaps()):
            Wc = (a + pu.gap, b - pu.gap)
            if Wc[0] >= Wc[1]:
                continue
            win = Window.interval(Wc[0], Wc[1], cover.grid.box[0])
            ok, v = equivalent(exprs[k], exprs[k + 1], cfg.with_windows([win]))
            if not ok:
                raise SheafError(f"pieces {k} and {k + 1} are not equivalent on the overlap ({a:g}, {b:g})")
    return Glue(((cover.U[0], cover.U[1]),), tuple(exprs), pu, tuple(inner))


def evaluate_on(R: GFExpr, net: RegNet, eps: float) -> GridFunction:
    return evaluate(R, net[eps])


# ---------------------------------------------------------------------------
# verdicts on open subsets


def restricted_config(cfg, V: tuple[float, float], pu: PartitionOfUnity, window: tuple[float, float]):
    """Regime config on V: every net of Lambda and Lambda^0 is restricted and re-verified on a
    window inside the core of V."""
    from .quotient import QuotientError
    from .regularization import verify_test_object
    if not (pu.core[0] <= window[0] < window[1] <= pu.core[1]):
        raise SheafError("verification window must lie in the core of V")
    win = Window.interval(window[0], window[1], pu.grid.box[0])
    sub = cfg.with_windows([win])
    nets, zeros = [], []
    for n in cfg.nets:
        r = restrict_net(n, V, pu)
        if not verify_test_object(r, sub.regime, zero=False, dual_support=window)["pass"]:
            raise QuotientError(f"{r.label} is not a test object on {V}")
        nets.append(r)
    for z in cfg.zero_nets:
        r = restrict_net(z, V, pu)
        if not verify_test_object(r, sub.regime, zero=True, dist_probes=("delta", "heaviside"),
                                  dual_probes=("bump",), dual_support=window)["pass"]:
            raise QuotientError(f"{r.label} is not a zero test object on {V}")
        zeros.append(r)
    return sub.with_nets(nets, zeros)


def verdict_stability(R: GFExpr, cover: Cover, cfg, windows) -> dict:
    """Classify R on U and its restriction to each member on a window inside that member.

    `windows[i]` must sit in the core of the single-member partition of unity on member i."""
    from .quotient import classify
    rows = []
    for member, window in zip(cover.sorted_members, windows):
        pu = single_pu(member, cover.grid)
        sub = restricted_config(cfg, member, pu, window)
        parent = classify(R, cfg.with_windows(sub.windows))
        local = classify(restrict_expr(R, member, pu), sub)
        rows.append({"member": member, "window": tuple(window), "parent": parent.classification,
                     "restricted": local.classification, "parent_slope": parent.slope,
                     "restricted_slope": local.slope})
    stable = all(r["parent"] == r["restricted"] for r in rows)
    return {"pass": bool(stable), "rows": rows}


def fineness(R: GFExpr, pu: PartitionOfUnity, cfg, window: tuple[float, float]) -> dict:
    """sum_i eta_i R - R must be negligible on a window inside the core of the partition."""
    from .quotient import classify
    if not (pu.core[0] <= window[0] < window[1] <= pu.core[1]):
        raise SheafError("window must lie in the core of the partition of unity")
    total = apply_morphism(pu.etas[0], R)
    for eta in pu.etas[1:]:
        total = total + apply_morphism(eta, R)
    win = Window.interval(window[0], window[1], pu.grid.box[0])
    v = classify(total - R, cfg.with_windows([win]))
    return {"pass": v.negligible, "classification": v.classification, "verdict": v}


# ---------------------------------------------------------------------------
# combined suite


def glue_restrict_nets(net: RegNet, cover: Cover, pu: PartitionOfUnity, window: tuple[float, float]) -> dict:
    """Glue of the member restrictions of a net against the net itself, below eps_0."""
    pus = [single_pu(m, cover.grid, pu.width, pu.gap) for m in cover.sorted_members]
    pieces = [restrict_net(net, m, p) for m, p in zip(cover.sorted_members, pus)]
    glued = glue_nets(cover, pieces, pu)
    e0 = eps_threshold(net, pu.gap)
    win = Window.interval(window[0], window[1], cover.grid.box[0])
    errs = {float(e): agreement(glued[e], net[e], win) for e in net.eps_grid[net.eps_grid <= e0]}
    return {"eps0": e0, "errors": errs, "pass": bool(errs) and max(errs.values()) <= AGREE_TOL}


def glue_restrict_expr(R: GFExpr, net: RegNet, cover: Cover, pu: PartitionOfUnity,
                       window: tuple[float, float]) -> dict:
    """glue(restrictions of R) evaluated on a net against R, relative sup error below eps_0."""
    pus = [single_pu(m, cover.grid, pu.width, pu.gap) for m in cover.sorted_members]
    pieces = [restrict_expr(R, m, p) for m, p in zip(cover.sorted_members, pus)]
    G = glue_exprs(cover, pieces, pu, inner=pus)
    e0 = eps_threshold(net, pu.gap)
    win = Window.interval(window[0], window[1], cover.grid.box[0])
    errs = {}
    for e in net.eps_grid[net.eps_grid <= e0]:
        a, b = evaluate(G, net[e]), evaluate(R, net[e])
        errs[float(e)] = (a - b).sup(win) / max(b.sup(win), 1e-300)
    return {"eps0": e0, "errors": errs, "pass": bool(errs) and max(errs.values()) <= AGREE_TOL}


def sheaf_suite(R: GFExpr, cover: Cover, cfg, restrict_window: tuple[float, float],
                stability_windows, glue_window: tuple[float, float] = (-2.0, 2.0), fineness_expr=None) -> dict:
    """Restriction properties, gluing of nets and expressions, verdict stability and fineness."""
    net = cfg.nets[0]
    pu = partition_of_unity(cover)
    out = {"partition": pu.check()}
    V = cover.sorted_members[0]
    pu_v = single_pu(V, cover.grid, pu.width, pu.gap)
    out["restriction"] = restriction_properties(net, V, pu_v, restrict_window, perturb_outside(net, V))
    out["glue_nets"] = glue_restrict_nets(net, cover, pu, glue_window)
    out["glue_exprs"] = glue_restrict_expr(R, net, cover, pu, glue_window)
    out["stability"] = verdict_stability(R, cover, cfg, stability_windows)
    fin = fineness(R if fineness_expr is None else fineness_expr, pu, cfg, glue_window)
    out["fineness"] = {"pass": fin["pass"], "classification": fin["classification"]}
    r = out["restriction"]
    out["pass"] = bool(out["partition"]["pass"] and r["iii_pass"] and r.get("iv_pass", True)
                       and out["glue_nets"]["pass"] and out["glue_exprs"]["pass"]
                       and out["stability"]["pass"] and out["fineness"]["pass"])
    return out
