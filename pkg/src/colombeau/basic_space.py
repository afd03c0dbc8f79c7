"""Expressions R(Phi) built from embeddings, products, derivative lifts and transports,
with evaluation at a regularization operator and exact higher directional differentials."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .calculus import (DEFAULT_GRID, CalculusError, Diffeo, DistributionRep, FirstOrder,
                       Grid, GridFunction, Identity, Multiplier, PartialDerivative, apply_linop,
                       delta, density, diffeo_act, diffeo_from_spec, heaviside, inverse_diffeo,
                       multiply, smooth)
from .regularization import Conjugated, LinearCombination, RegOperator, ZeroOperator, commutator

L_MAX = 3
HAT_BUDGET = 6


class ExprError(ValueError):
    pass


class DomainError(ExprError):
    pass


Box = tuple  # ((lo, hi),) ; None stands for the whole physical box


def _same_domain(a, b) -> bool:
    return a is None or b is None or tuple(map(tuple, a)) == tuple(map(tuple, b))


def _inside(inner, outer) -> bool:
    if inner is None:
        return outer is None
    if outer is None:
        return True
    return all(lo >= olo and hi <= ohi for (lo, hi), (olo, ohi) in zip(inner, outer))


# ---------------------------------------------------------------------------
# nodes


class GFExpr:
    """Base class; nodes are immutable and compose into an acyclic graph."""

    @property
    def degree(self) -> int:
        """Polynomial degree in Phi; differentials above it vanish identically."""
        raise NotImplementedError

    def children(self) -> tuple:
        return ()

    def __add__(self, other):
        return Sum((self, _lift(other, self)))

    def __radd__(self, other):
        return Sum((_lift(other, self), self))

    def __sub__(self, other):
        return Sum((self, ScalarMul(-1.0, _lift(other, self))))

    def __rsub__(self, other):
        return Sum((_lift(other, self), ScalarMul(-1.0, self)))

    def __neg__(self):
        return ScalarMul(-1.0, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return ScalarMul(float(other), self)
        return Prod(self, _lift(other, self))

    def __rmul__(self, other):
        if isinstance(other, (int, float)):
            return ScalarMul(float(other), self)
        return Prod(_lift(other, self), self)

    def __pow__(self, n: int):
        if n < 1:
            raise ExprError("only positive integer powers")
        return self if n == 1 else MultiLift(Multilinear("product", n), (self,) * n)


def _lift(obj, like: GFExpr) -> GFExpr:
    if isinstance(obj, GFExpr):
        return obj
    if isinstance(obj, GridFunction):
        return Sigma(obj, like.domain)
    raise ExprError(f"cannot combine an expression with {type(obj).__name__}")


@dataclass(frozen=True, eq=False)
class Iota(GFExpr):
    """Phi -> Phi(u)."""

    u: DistributionRep
    domain: Box | None = None
    label: str = "u"

    degree = 1


@dataclass(frozen=True, eq=False)
class Sigma(GFExpr):
    """Phi -> f."""

    f: GridFunction
    domain: Box | None = None
    label: str = "f"

    degree = 0


@dataclass(frozen=True, eq=False)
class Sum(GFExpr):
    terms: tuple

    def __post_init__(self):
        if not self.terms:
            raise ExprError("empty sum")
        for t in self.terms[1:]:
            if not _same_domain(t.domain, self.terms[0].domain):
                raise DomainError("summands live on different domains")

    @property
    def domain(self):
        return next((t.domain for t in self.terms if t.domain is not None), None)

    @property
    def degree(self):
        return max(t.degree for t in self.terms)

    def children(self):
        return self.terms


@dataclass(frozen=True, eq=False)
class ScalarMul(GFExpr):
    c: float
    expr: GFExpr

    @property
    def domain(self):
        return self.expr.domain

    @property
    def degree(self):
        return self.expr.degree

    def children(self):
        return (self.expr,)


@dataclass(frozen=True)
class Multilinear:
    """Pointwise n-fold product, optionally weighted by a multiplier omega."""

    kind: str = "product"
    arity: int = 2
    omega: GridFunction | None = None

    def __post_init__(self):
        if self.kind not in ("product", "weighted"):
            raise ExprError(f"unknown multilinear map {self.kind!r}")
        if self.kind == "weighted" and self.omega is None:
            raise ExprError("weighted product needs omega")
        if self.arity < 1:
            raise ExprError("arity must be positive")

    def __call__(self, args: list[GridFunction]) -> GridFunction:
        if len(args) != self.arity:
            raise ExprError(f"expected {self.arity} arguments, got {len(args)}")
        out = args[0]
        for a in args[1:]:
            out = out * a
        return self.omega * out if self.kind == "weighted" else out


@dataclass(frozen=True, eq=False)
class MultiLift(GFExpr):
    """Phi -> T(R_1(Phi), ..., R_n(Phi))."""

    T: Multilinear
    exprs: tuple

    def __post_init__(self):
        if len(self.exprs) != self.T.arity:
            raise ExprError(f"arity mismatch: {self.T.arity} slots, {len(self.exprs)} arguments")
        for t in self.exprs[1:]:
            if not _same_domain(t.domain, self.exprs[0].domain):
                raise DomainError("factors live on different domains")

    @property
    def domain(self):
        return next((t.domain for t in self.exprs if t.domain is not None), None)

    @property
    def degree(self):
        return sum(t.degree for t in self.exprs)

    def children(self):
        return self.exprs


def Prod(a: GFExpr, b: GFExpr) -> MultiLift:
    return MultiLift(Multilinear("product", 2), (a, b))


@dataclass(frozen=True, eq=False)
class Hat(GFExpr):
    """Phi -> T(S(Phi)) - dS(Phi)(T o Phi - Phi o T)."""

    T: object
    expr: GFExpr

    @property
    def domain(self):
        return self.expr.domain

    @property
    def degree(self):
        return self.expr.degree

    def children(self):
        return (self.expr,)


@dataclass(frozen=True, eq=False)
class Pushforward(GFExpr):
    """Phi -> mu(R(mu^{-1} o Phi o mu)), mu acting by transport."""

    mu: Diffeo
    expr: GFExpr
    domain: Box | None = None

    @property
    def degree(self):
        return self.expr.degree

    def children(self):
        return (self.expr,)


@dataclass(frozen=True, eq=False)
class Restrict(GFExpr):
    """Phi on V -> sum_i eta_i R(tau_i o Phi o rho), R an expression on a larger set."""

    domain: Box
    expr: GFExpr
    pu: object                      # .etas, .cutoffs: lists of GridFunctions

    def __post_init__(self):
        if not _inside(self.domain, self.expr.domain):
            raise DomainError("restriction must shrink the domain")

    @property
    def degree(self):
        return self.expr.degree

    def children(self):
        return (self.expr,)


@dataclass(frozen=True, eq=False)
class Glue(GFExpr):
    """Phi on U -> sum_i eta_i tau_i R_i(rho^RO_i(Phi)), rho^RO_i built from inner[i]."""

    domain: Box | None
    exprs: tuple
    pu: object
    inner: tuple                    # per piece, partition data restricting Phi to U_i

    def __post_init__(self):
        if not (len(self.exprs) == len(self.pu.etas) == len(self.inner)):
            raise ExprError("glue needs one expression and one inner partition per cover member")

    @property
    def degree(self):
        return max(t.degree for t in self.exprs)

    def children(self):
        return self.exprs


@dataclass(frozen=True, eq=False)
class MorphApply(GFExpr):
    """Phi -> eta R(Phi) for a multiplier eta."""

    eta: GridFunction
    expr: GFExpr

    @property
    def domain(self):
        return self.expr.domain

    @property
    def degree(self):
        return self.expr.degree

    def children(self):
        return (self.expr,)


# ---------------------------------------------------------------------------
# operator transforms shared with the sheaf layer


def restrict_operator(op: RegOperator, pu, domain=None) -> RegOperator:
    """sum_i eta_i o op o tau_i with tau_i the multiplier extension by cutoff_i."""
    terms = []
    for eta, cut in zip(pu.etas, pu.cutoffs):
        terms.append((1.0, Conjugated(op, pre=lambda u, c=cut: multiply(u, c), post=lambda f, e=eta: e * f,
                                      label="restricted")))
    out = LinearCombination(terms, "restriction")
    out.domain = domain
    return out


def extend_operator(op: RegOperator, cutoff: GridFunction, domain=None) -> RegOperator:
    """tau o op o rho: run op, then extend by the cutoff multiplier."""
    out = Conjugated(op, post=lambda f: cutoff * f, label="extended")
    out.domain = domain
    return out


def transport_operator(op: RegOperator, mu: Diffeo) -> RegOperator:
    """mu^{-1} o op o mu."""
    inv = inverse_diffeo(mu)
    out = Conjugated(op, pre=lambda u: diffeo_act(mu, u), post=lambda f: diffeo_act(inv, f),
                     label=f"conj[{mu.label}]")
    return out


def transport_margin(mu: Diffeo, grid: Grid) -> float:
    """Distance from the transported physical box to the edge of the computational box."""
    margins = []
    for lo, hi in grid.box:
        clo, chi = grid.comp_box()
        for f in (mu.forward, mu.inverse):
            a, b = float(f(lo)), float(f(hi))
            margins.append(min(a - clo, chi - b))
    return min(margins)


# ---------------------------------------------------------------------------
# evaluation and differentials


class _Engine:
    """One evaluation request: memoizes subresults and derived operators by identity."""

    def __init__(self, grid: Grid, hat_budget: int):
        self.grid = grid
        self.hat_budget = hat_budget
        self.memo: dict = {}
        self.ops: dict = {}
        self.keep: list = []       # keeps keyed objects alive so ids stay unique

    def derived(self, key, make):
        hit = self.ops.get(key)
        if hit is None:
            hit = make()
            self.ops[key] = hit
            self.keep.append(hit)
        return hit

    def zero(self) -> GridFunction:
        return GridFunction(self.grid, np.zeros(self.grid.shape))

    def d(self, node: GFExpr, phi: RegOperator, dirs: tuple) -> GridFunction:
        l = len(dirs)
        if l > node.degree:
            return self.zero()
        if l > self.hat_budget:
            raise ExprError(f"differential order {l} exceeds the budget {self.hat_budget}")
        key = (id(node), id(phi), tuple(id(p) for p in dirs))
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        self.keep.append(node)
        out = self._d(node, phi, dirs)
        self.memo[key] = out
        return out

    def _d(self, node, phi, dirs):
        l = len(dirs)
        if isinstance(node, Iota):
            return (phi if l == 0 else dirs[0]).apply(node.u)
        if isinstance(node, Sigma):
            return node.f
        if isinstance(node, Sum):
            out = self.d(node.terms[0], phi, dirs)
            for t in node.terms[1:]:
                out = out + self.d(t, phi, dirs)
            return out
        if isinstance(node, ScalarMul):
            return self.d(node.expr, phi, dirs) * node.c
        if isinstance(node, MultiLift):
            return self._multi_leibniz(node, phi, dirs)
        if isinstance(node, Hat):
            return self._hat(node, phi, dirs)
        if isinstance(node, Pushforward):
            mu = node.mu
            conj = lambda op: self.derived(("conj", id(mu), id(op)), lambda: transport_operator(op, mu))
            inner = self.d(node.expr, conj(phi), tuple(conj(p) for p in dirs))
            return diffeo_act(mu, inner)
        if isinstance(node, Restrict):
            out = None
            for i, (eta, cut) in enumerate(zip(node.pu.etas, node.pu.cutoffs)):
                ext = lambda op, i=i, cut=cut: self.derived(
                    ("ext", id(node), i, id(op)), lambda: extend_operator(op, cut, node.expr.domain))
                term = eta * self.d(node.expr, ext(phi), tuple(ext(p) for p in dirs))
                out = term if out is None else out + term
            return out
        if isinstance(node, Glue):
            out = None
            for i, (expr, eta, cut) in enumerate(zip(node.exprs, node.pu.etas, node.pu.cutoffs)):
                res = lambda op, i=i, expr=expr: self.derived(
                    ("res", id(node), i, id(op)), lambda: restrict_operator(op, node.inner[i], expr.domain))
                term = eta * (cut * self.d(expr, res(phi), tuple(res(p) for p in dirs)))
                out = term if out is None else out + term
            return out
        if isinstance(node, MorphApply):
            return node.eta * self.d(node.expr, phi, dirs)
        raise ExprError(f"unknown node {type(node).__name__}")

    def _multi_leibniz(self, node: MultiLift, phi, dirs):
        n = len(node.exprs)
        l = len(dirs)
        degs = [e.degree for e in node.exprs]
        out = None
        for assign in itertools.product(range(n), repeat=l):
            counts = [assign.count(j) for j in range(n)]
            if any(c > g for c, g in zip(counts, degs)):
                continue
            args = [self.d(e, phi, tuple(dirs[i] for i in range(l) if assign[i] == j))
                    for j, e in enumerate(node.exprs)]
            term = node.T(args)
            out = term if out is None else out + term
        return out if out is not None else self.zero()

    def _tro(self, T, op):
        if isinstance(op, ZeroOperator):
            return op
        return self.derived(("tro", id(T), id(op)), lambda: commutator(T, op))

    def _hat(self, node: Hat, phi, dirs):
        T, S = node.T, node.expr
        if isinstance(T, Identity):
            return self.d(S, phi, dirs)
        out = apply_linop(T, self.d(S, phi, dirs))
        out = out - self.d(S, phi, (self._tro(T, phi),) + dirs)
        for i in range(len(dirs)):
            swapped = dirs[:i] + (self._tro(T, dirs[i]),) + dirs[i + 1:]
            out = out - self.d(S, phi, swapped)
        return out


def _check_domain(R: GFExpr, phi: RegOperator):
    dom = getattr(phi, "domain", None)
    if not _same_domain(R.domain, dom):
        raise DomainError(f"operator on {dom} applied to an expression on {R.domain}")


def _check_transports(R: GFExpr, grid: Grid):
    seen = set()
    stack = [R]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if isinstance(node, Pushforward):
            m = transport_margin(node.mu, grid)
            # reaching the edge of the periodic box is fine: the padding is never read back
            if m < 0:
                raise DomainError(f"transport by {node.mu.label} leaves the computational box (margin {m:.3g})")
        stack.extend(node.children())


def evaluate(R: GFExpr, phi: RegOperator, hat_budget: int = HAT_BUDGET) -> GridFunction:
    """R(Phi) on the grid."""
    return differential(R, phi, (), l_max=0, hat_budget=hat_budget)


def differential(R: GFExpr, phi: RegOperator, dirs=(), l_max: int = L_MAX,
                 hat_budget: int = HAT_BUDGET) -> GridFunction:
    """d^l R(Phi)(Psi_1, ..., Psi_l) with l = len(dirs), by structural recursion."""
    dirs = tuple(dirs)
    if len(dirs) > max(l_max, 0):
        raise ExprError(f"order {len(dirs)} exceeds l_max = {l_max}")
    for p in dirs:
        if p.grid != phi.grid or p.eps != phi.eps:
            raise ExprError("directions must share the grid and eps of the base operator")
    _check_domain(R, phi)
    _check_transports(R, phi.grid)
    return _Engine(phi.grid, hat_budget).d(R, phi, dirs)


# ---------------------------------------------------------------------------
# constructors


def iota(u, domain=None, label: str | None = None) -> Iota:
    if isinstance(u, GridFunction):
        u = density(u)
    return Iota(u, domain, label or "u")


def sigma(f: GridFunction, domain=None, label: str | None = None) -> Sigma:
    return Sigma(f, domain, label or "f")


def hat(T, R: GFExpr) -> Hat:
    """Derivative lift of a linear operator of the admissible class."""
    if not isinstance(T, (PartialDerivative, Multiplier, FirstOrder, Identity)):
        raise ExprError(f"{type(T).__name__} is not an admissible linear operator")
    try:
        apply_linop(T, GridFunction(R_grid(R), np.zeros(R_grid(R).shape)))
    except CalculusError as exc:
        raise ExprError(str(exc)) from exc
    return Hat(T, R)


def pushforward(mu, R: GFExpr, domain=None) -> Pushforward:
    mu = diffeo_from_spec(mu)
    return Pushforward(mu, R, domain if domain is not None else R.domain)


def multilift(T: Multilinear, Rs) -> MultiLift:
    return MultiLift(T, tuple(Rs))


def morph(eta: GridFunction, R: GFExpr) -> MorphApply:
    return MorphApply(eta, R)


def R_grid(R: GFExpr) -> Grid:
    """Grid of the first leaf of R."""
    stack = [R]
    while stack:
        node = stack.pop()
        if isinstance(node, Iota):
            return node.u.grid
        if isinstance(node, Sigma):
            return node.f.grid
        stack.extend(node.children())
    return DEFAULT_GRID


def fd_differential(R: GFExpr, phi: RegOperator, psi: RegOperator, t: float = 1e-4,
                    order: int = 1, psi2: RegOperator | None = None) -> GridFunction:
    """Central finite differences of t -> R(Phi + t Psi), used as an independent check.

    order 2 with psi2 uses the mixed four-point stencil in (Psi, Psi2).
    """
    def at(*coefs):
        terms = [(1.0, phi)] + [(c, p) for c, p in coefs if c != 0]
        return evaluate(R, LinearCombination(terms, "shifted"))
    if order == 1:
        return (at((t, psi)) - at((-t, psi))) / (2 * t)
    if order == 2:
        q = psi if psi2 is None else psi2
        return (at((t, psi), (t, q)) - at((t, psi), (-t, q)) - at((-t, psi), (t, q))
                + at((-t, psi), (-t, q))) / (4 * t * t)
    raise ExprError("finite differences are provided for orders 1 and 2")


# ---------------------------------------------------------------------------
# serialized expressions


def _smooth_product(names: str, grid: Grid) -> GridFunction:
    parts = names.split("*")
    out = smooth(parts[0], grid)
    for p in parts[1:]:
        out = out * smooth(p, grid)
    return out


def parse_atom(text: str, grid: Grid = DEFAULT_GRID):
    """"delta@x0", "ddelta@x0:m", "heaviside@x0", "density:<name>", "smooth:<name>";
    smooth names may be products such as "bump*sin"."""
    try:
        if text.startswith("delta@"):
            return delta(float(text[6:]), grid=grid)
        if text.startswith("ddelta@"):
            x0, _, m = text[7:].partition(":")
            return delta(float(x0), int(m or 1), grid=grid)
        if text.startswith("heaviside@"):
            return heaviside(float(text[10:]), grid=grid)
        if text.startswith("density:"):
            return density(_smooth_product(text[8:], grid))
        if text.startswith("smooth:"):
            return _smooth_product(text[7:], grid)
    except (ValueError, CalculusError) as exc:
        raise ExprError(f"unknown atom {text!r}: {exc}") from exc
    raise ExprError(f"unknown atom {text!r}")


def parse_linop(spec, grid: Grid = DEFAULT_GRID):
    """"d", "id", "mul:<smooth>", "first:<smooth a>,<smooth b>"."""
    if spec in ("d", "dx", "partial"):
        return PartialDerivative(0)
    if spec in ("id", "identity"):
        return Identity()
    head, _, rest = str(spec).partition(":")
    try:
        if head == "mul":
            return Multiplier(smooth(rest, grid), rest)
        if head == "first":
            a, b = rest.split(",")
            return FirstOrder(smooth(a, grid), smooth(b, grid), 0, f"{a}*d+{b}")
    except (ValueError, CalculusError) as exc:
        raise ExprError(f"unknown linear operator {spec!r}: {exc}") from exc
    raise ExprError(f"unknown linear operator {spec!r}")


def parse_expr(obj, grid: Grid = DEFAULT_GRID) -> GFExpr:
    """Nested tagged objects: {"op": "prod", "args": [{"op": "iota", "atom": "delta@0"}, ...]}."""
    if not isinstance(obj, dict) or "op" not in obj:
        raise ExprError(f"expression nodes are objects with an 'op' field, got {obj!r}")
    op = obj["op"]
    args = [parse_expr(a, grid) for a in obj.get("args", [])]
    if op == "iota":
        atom = parse_atom(obj["atom"], grid)
        return iota(atom, label=obj["atom"])
    if op == "sigma":
        name = obj.get("atom", obj.get("f"))
        f = parse_atom(name if str(name).startswith("smooth:") else f"smooth:{name}", grid)
        return sigma(f, label=name)
    if op == "sum":
        return Sum(tuple(args))
    if op == "sub":
        if len(args) != 2:
            raise ExprError("sub takes two arguments")
        return args[0] - args[1]
    if op == "scale":
        return ScalarMul(float(obj["c"]), args[0])
    if op == "prod":
        if len(args) < 2:
            raise ExprError("prod takes at least two arguments")
        return MultiLift(Multilinear("product", len(args)), tuple(args))
    if op == "wprod":
        omega = parse_atom(f"smooth:{obj['omega']}", grid)
        return MultiLift(Multilinear("weighted", len(args), omega), tuple(args))
    if op == "pow":
        return args[0] ** int(obj["n"])
    if op == "hat":
        return hat(parse_linop(obj["T"], grid), args[0])
    if op == "pushforward":
        try:
            mu = diffeo_from_spec(obj["mu"])
        except CalculusError as exc:
            raise ExprError(str(exc)) from exc
        return pushforward(mu, args[0])
    if op == "morph":
        return morph(parse_atom(f"smooth:{obj['eta']}", grid), args[0])
    raise ExprError(f"unknown expression op {op!r}")


def describe(R: GFExpr) -> str:
    if isinstance(R, Iota):
        return f"iota({R.label})"
    if isinstance(R, Sigma):
        return f"sigma({R.label})"
    if isinstance(R, Sum):
        return "(" + " + ".join(describe(t) for t in R.terms) + ")"
    if isinstance(R, ScalarMul):
        return f"{R.c:g}*{describe(R.expr)}"
    if isinstance(R, MultiLift):
        head = "prod" if R.T.kind == "product" else "wprod"
        return f"{head}(" + ", ".join(describe(t) for t in R.exprs) + ")"
    if isinstance(R, Hat):
        return f"hat[{R.T.label}]({describe(R.expr)})"
    if isinstance(R, Pushforward):
        return f"push[{R.mu.label}]({describe(R.expr)})"
    if isinstance(R, Restrict):
        return f"restrict[{R.domain}]({describe(R.expr)})"
    if isinstance(R, Glue):
        return "glue(" + ", ".join(describe(t) for t in R.exprs) + ")"
    if isinstance(R, MorphApply):
        return f"morph({describe(R.expr)})"
    return type(R).__name__
