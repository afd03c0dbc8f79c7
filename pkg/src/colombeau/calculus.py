"""Periodic spectral grids, grid functions, a finite distribution catalog, linear operators,
seminorms and a real-analytic diffeomorphism catalog.

Grids are periodic on an enlarged computational box; the physical box sits in the middle
and probe windows stay inside it. Distributions pair with functions through the Lebesgue
trivialization.
"""
from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .weights import RSequence, WeightSequence

MACHINE_EPS = np.finfo(float).eps


class CalculusError(ValueError):
    pass


class SupportError(CalculusError):
    pass


# ---------------------------------------------------------------------------
# smooth building blocks


def smoothstep(t, k: float = 2.0, a: float = 0.25):
    """0 for t <= 0, 1 for t >= 1, built from f(u) = exp(-a u^-k)."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)

    def f(u):
        out = np.zeros_like(u)
        m = u > 0
        out[m] = np.exp(-a * u[m] ** (-k))
        return out

    fa, fb = f(t), f(1.0 - t)
    return fa / (fa + fb)


def plateau(x, inner: float = 1.0, outer: float = 2.0, k: float = 2.0, a: float = 0.25):
    """Even bump: 1 on |x| <= inner, 0 on |x| >= outer."""
    return smoothstep((outer - np.abs(np.asarray(x, dtype=float))) / (outer - inner), k, a)


def interval_cutoff(x, lo: float, hi: float, width: float, k: float = 2.0, a: float = 0.25):
    """1 on [lo, hi], 0 outside [lo - width, hi + width]."""
    x = np.asarray(x, dtype=float)
    return smoothstep((x - (lo - width)) / width, k, a) * smoothstep(((hi + width) - x) / width, k, a)


def gevrey_exponent(s: float) -> float:
    """exp(-u^{-k}) pieces with k = 1/(s-1) give Gevrey class s."""
    if not s > 1:
        raise CalculusError("Gevrey order of a cutoff must exceed 1")
    return 1.0 / (s - 1.0)


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on the physical box enlarged by `pad` box lengths on each side."""

    box: tuple[tuple[float, float], ...] = ((-4.0, 4.0),)
    n: int = 2 ** 16
    pad: float = 0.5

    def __post_init__(self):
        if len(self.box) not in (1, 2):
            raise CalculusError("only d = 1 and d = 2 are supported")
        if self.n & (self.n - 1) or self.n < 16:
            raise CalculusError("grid size must be a power of two")
        if self.pad < 0.25:
            raise CalculusError("periodic margin must be at least 25% of the box length")
        for lo, hi in self.box:
            if not hi > lo:
                raise CalculusError("empty box")

    @property
    def dim(self) -> int:
        return len(self.box)

    def comp_box(self, axis: int = 0) -> tuple[float, float]:
        lo, hi = self.box[axis]
        m = self.pad * (hi - lo)
        return lo - m, hi + m

    def length(self, axis: int = 0) -> float:
        lo, hi = self.comp_box(axis)
        return hi - lo

    def dx(self, axis: int = 0) -> float:
        return self.length(axis) / self.n

    def axis(self, axis: int = 0) -> np.ndarray:
        lo, _ = self.comp_box(axis)
        return lo + self.dx(axis) * np.arange(self.n)

    def wavenumbers(self, axis: int = 0) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.dx(axis))

    @property
    def x(self) -> np.ndarray:
        return self.axis(0)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    def mesh(self) -> tuple[np.ndarray, ...]:
        if self.dim == 1:
            return (self.x,)
        return tuple(np.meshgrid(self.axis(0), self.axis(1), indexing="ij"))

    def kmesh(self) -> tuple[np.ndarray, ...]:
        if self.dim == 1:
            return (self.wavenumbers(0),)
        return tuple(np.meshgrid(self.wavenumbers(0), self.wavenumbers(1), indexing="ij"))

    @property
    def cell(self) -> float:
        return float(np.prod([self.dx(i) for i in range(self.dim)]))

    def resolves(self, eps_min: float) -> bool:
        return all(self.dx(i) <= eps_min / 4 * (1 + 1e-12) for i in range(self.dim))

    def require_resolution(self, eps_min: float):
        if not self.resolves(eps_min):
            raise CalculusError(f"grid spacing {self.dx():.3e} exceeds eps_min/4 = {eps_min / 4:.3e}")


DEFAULT_GRID = Grid()


def grid_for(eps_min: float, box=((-4.0, 4.0),)) -> Grid:
    """Smallest power-of-two grid with dx <= eps_min / 4 on the padded box."""
    n = 16
    while Grid(box, n).dx() > eps_min / 4 * (1 + 1e-12):
        n *= 2
    return Grid(box, n)


@dataclass(frozen=True)
class Window:
    """Compact probe box K inside the open box omega, with a strictly positive margin."""

    K: tuple[tuple[float, float], ...]
    omega: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.K) != len(self.omega):
            raise CalculusError("window and domain dimensions differ")
        for (klo, khi), (olo, ohi) in zip(self.K, self.omega):
            if not khi > klo:
                raise CalculusError("empty window")
            if not (klo > olo and khi < ohi):
                raise CalculusError(f"window {self.K} not compactly inside {self.omega}")

    @classmethod
    def interval(cls, lo, hi, omega=(-4.0, 4.0)) -> "Window":
        return cls(((float(lo), float(hi)),), ((float(omega[0]), float(omega[1])),))

    @property
    def margin(self) -> float:
        return min(min(klo - olo, ohi - khi) for (klo, khi), (olo, ohi) in zip(self.K, self.omega))

    def mask(self, grid: Grid) -> np.ndarray:
        m = np.ones(grid.shape, dtype=bool)
        for i, (lo, hi) in enumerate(self.K):
            c = grid.mesh()[i]
            m &= (c >= lo) & (c <= hi)
        if not m.any():
            raise CalculusError("window contains no grid points")
        return m

    @property
    def label(self) -> str:
        return "x".join(f"[{lo:g},{hi:g}]" for lo, hi in self.K)


# ---------------------------------------------------------------------------
# grid functions


def _fftn(v):
    return np.fft.fftn(v) if v.ndim > 1 else np.fft.fft(v)


def _ifftn(v):
    return np.fft.ifftn(v) if v.ndim > 1 else np.fft.ifft(v)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Samples on a Grid; `noise` is an absolute pointwise error estimate."""

    grid: Grid
    values: np.ndarray
    noise: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != self.grid.shape:
            raise CalculusError(f"samples of shape {v.shape} do not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise CalculusError("non-finite samples")
        object.__setattr__(self, "values", v)

    # algebra -------------------------------------------------------------
    def _lift(self, other):
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise CalculusError("grid mismatch")
            return other.values, other.noise
        return other, 0.0

    def __add__(self, other):
        v, nz = self._lift(other)
        return GridFunction(self.grid, self.values + v, self.noise + nz)

    __radd__ = __add__

    def __sub__(self, other):
        v, nz = self._lift(other)
        return GridFunction(self.grid, self.values - v, self.noise + nz)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return GridFunction(self.grid, -self.values, self.noise)

    def __mul__(self, other):
        v, nz = self._lift(other)
        a = float(np.max(np.abs(self.values))) if self.values.size else 0.0
        b = float(np.max(np.abs(v))) if np.ndim(v) else abs(v)
        return GridFunction(self.grid, self.values * v, self.noise * b + nz * a + self.noise * nz)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return self * (1.0 / c)

    def __pow__(self, p: int):
        out = self
        for _ in range(int(p) - 1):
            out = out * self
        return out

    @property
    def real(self) -> "GridFunction":
        return GridFunction(self.grid, np.real(self.values), self.noise)

    def is_real(self, tol: float = 0.0) -> bool:
        return not np.iscomplexobj(self.values) or float(np.max(np.abs(self.values.imag))) <= tol

    def sup(self, window: Window | None = None) -> float:
        v = np.abs(self.values)
        if window is not None:
            v = v[window.mask(self.grid)]
        return float(np.max(v)) if v.size else 0.0

    def scale(self) -> float:
        return float(np.max(np.abs(self.values)))

    def floor(self) -> float:
        """Absolute resolution floor: tracked noise plus rounding of the largest sample."""
        return self.noise + 64 * MACHINE_EPS * self.scale()

    def with_noise(self, extra: float) -> "GridFunction":
        return replace(self, noise=self.noise + extra)

    # spectral ops --------------------------------------------------------
    def derivative(self, order=1, axis: int = 0) -> "GridFunction":
        alpha = [0] * self.grid.dim
        if isinstance(order, (tuple, list)):
            alpha = list(order)
        else:
            alpha[axis] = int(order)
        return spectral_derivative(self, tuple(alpha))

    def antiderivative(self) -> "GridFunction":
        """1D: F' = f, F = 0 at the left edge of the computational box.

        The mean of f contributes a linear ramp; f should vanish near the box edges.
        """
        if self.grid.dim != 1:
            raise CalculusError("antiderivative is 1D only")
        g = self.grid
        v = self.values
        fh, mean = _periodic_antiderivative(v, g)
        f = _ifftn(fh)
        x = g.x - g.x[0]
        f = f + mean * x
        f = f - f[0]
        if not np.iscomplexobj(v):
            f = f.real
        return GridFunction(g, f, self.noise * g.length())

    def at(self, pts, order: int = 0) -> np.ndarray:
        """Band-limited (trigonometric) evaluation of the order-th derivative at points (1D)."""
        return band_limited_eval(self, pts, order)

    def integral(self) -> complex | float:
        return self.values.sum() * self.grid.cell


def _noise_level(f: GridFunction) -> float:
    """Pointwise noise used to discard spectral modes before differentiation."""
    return max(f.noise, 256 * MACHINE_EPS * f.scale())


def spectral_derivative(f: GridFunction, alpha: tuple[int, ...], filter_noise: bool = True) -> GridFunction:
    if all(a == 0 for a in alpha):
        return f
    g = f.grid
    vh = _fftn(f.values)
    mult = np.ones(g.shape, dtype=complex)
    for a, kk in zip(alpha, g.kmesh()):
        if a:
            mult = mult * (1j * kk) ** a
    band = float(max(np.max(np.abs(kk)) for kk in g.kmesh()))
    if filter_noise:
        level = _noise_level(f) * math.sqrt(vh.size)
        keep = np.abs(vh) > level
        vh = np.where(keep, vh, 0.0)
        if keep.any():
            band = float(max(np.max(np.abs(kk[keep])) for kk in g.kmesh()))
    out = _ifftn(vh * mult)
    if not np.iscomplexobj(f.values):
        out = out.real
    order = sum(alpha)
    nz = max(f.noise, 16 * MACHINE_EPS * f.scale()) * band ** order
    return GridFunction(g, out, nz)


def _drop_noise(vh_normalized: np.ndarray, f: GridFunction) -> np.ndarray:
    level = _noise_level(f) / math.sqrt(vh_normalized.size)
    return np.where(np.abs(vh_normalized) > level, vh_normalized, 0.0)


def band_limited_eval(f: GridFunction, pts, order: int = 0) -> np.ndarray:
    g = f.grid
    pts = np.atleast_1d(np.asarray(pts, dtype=float))
    if g.dim == 1:
        lo, hi = g.comp_box()
        if np.any(pts < lo) or np.any(pts > hi):
            raise CalculusError("interpolation point outside the computational box")
        k = g.wavenumbers()
        vh = np.fft.fft(f.values) / g.n
        if order:
            vh = _drop_noise(vh, f)
        ph = np.exp(1j * np.outer(pts - g.x[0], k))
        out = ph @ (vh * (1j * k) ** order)
    else:
        pts = np.atleast_2d(pts)
        kx, ky = g.wavenumbers(0), g.wavenumbers(1)
        vh = np.fft.fft2(f.values) / g.n ** 2
        if order:
            vh = _drop_noise(vh, f)
        ox, oy = (order if isinstance(order, tuple) else (order, 0))
        vh = vh * ((1j * kx) ** ox)[:, None] * ((1j * ky) ** oy)[None, :]
        ex = np.exp(1j * np.outer(pts[:, 0] - g.axis(0)[0], kx))
        ey = np.exp(1j * np.outer(pts[:, 1] - g.axis(1)[0], ky))
        out = np.einsum("pi,ij,pj->p", ex, vh, ey)
    if not np.iscomplexobj(f.values):
        out = out.real
    return out


def from_callable(fn, grid: Grid = DEFAULT_GRID, taper: bool = True) -> GridFunction:
    """Sample fn on the grid; with taper the samples are multiplied by a cutoff that is 1
    on the central 75% of the computational box, making them smoothly periodic."""
    v = np.asarray(fn(*grid.mesh()))
    v = np.broadcast_to(v, grid.shape).astype(complex if np.iscomplexobj(v) else float)
    if taper:
        v = v * taper_function(grid)
    return GridFunction(grid, v, 4 * MACHINE_EPS * float(np.max(np.abs(v)) if v.size else 0.0))


def taper_function(grid: Grid) -> np.ndarray:
    t = np.ones(grid.shape)
    for i, c in enumerate(grid.mesh()):
        lo, hi = grid.comp_box(i)
        half = (hi - lo) / 2
        mid = (hi + lo) / 2
        t = t * plateau(c - mid, 0.75 * half, 0.9375 * half)
    return t


# ---------------------------------------------------------------------------
# smooth catalog


def _bump(x):
    return plateau(x, 1.5, 3.0)


SMOOTH_CATALOG_1D = {
    "one": lambda x: np.ones_like(x),
    "x": lambda x: x,
    "sin": np.sin,
    "cos": np.cos,
    "gaussian": lambda x: np.exp(-x ** 2 / (2 * 0.5 ** 2)),
    "bump": _bump,
    "sinbump": lambda x: np.sin(x) * _bump(x),
    "cosbump": lambda x: np.cos(x) * _bump(x),
}

SMOOTH_CATALOG_2D = {
    "one": lambda x, y: np.ones_like(x),
    "gaussian": lambda x, y: np.exp(-(x ** 2 + y ** 2) / (2 * 0.5 ** 2)),
    "bump": lambda x, y: _bump(x) * _bump(y),
    "sinbump": lambda x, y: np.sin(x) * _bump(x) * _bump(y),
}

COMPACT_CATALOG = {"bump", "sinbump", "cosbump", "gaussian"}


def smooth(name: str, grid: Grid = DEFAULT_GRID) -> GridFunction:
    cat = SMOOTH_CATALOG_1D if grid.dim == 1 else SMOOTH_CATALOG_2D
    if name not in cat:
        raise CalculusError(f"unknown smooth function {name!r}")
    return from_callable(cat[name], grid, taper=name not in ("bump", "sinbump", "cosbump"))


# ---------------------------------------------------------------------------
# distributions


@dataclass(frozen=True, eq=False)
class Dirac:
    """c * d^m delta_{x0}; in 2D m is a multi-index."""

    x0: tuple[float, ...]
    m: tuple[int, ...]
    c: complex = 1.0

    def scaled(self, a):
        return replace(self, c=self.c * a)


@dataclass(frozen=True, eq=False)
class Heaviside:
    """c * w(x) * H(x - x0) in 1D; weight None means w = 1."""

    x0: float
    c: complex = 1.0
    weight: GridFunction | None = None

    def scaled(self, a):
        return replace(self, c=self.c * a)


@dataclass(frozen=True, eq=False)
class Density:
    """The distribution rho(x) dx for a smooth rho."""

    rho: GridFunction

    def scaled(self, a):
        return Density(self.rho * a)


@dataclass(frozen=True, eq=False)
class DistributionRep:
    grid: Grid
    atoms: tuple = ()

    def __post_init__(self):
        for a in self.atoms:
            pts = None
            if isinstance(a, Dirac):
                pts = a.x0
                if len(a.x0) != self.grid.dim or len(a.m) != self.grid.dim:
                    raise CalculusError("Dirac atom dimension mismatch")
            elif isinstance(a, Heaviside):
                if self.grid.dim != 1:
                    raise CalculusError("Heaviside atoms are 1D only")
                pts = (a.x0,)
            elif isinstance(a, Density):
                if a.rho.grid != self.grid:
                    raise CalculusError("density grid mismatch")
            else:
                raise CalculusError(f"unknown atom {a!r}")
            if pts is not None:
                for (lo, hi), p in zip(self.grid.box, pts):
                    if not lo < p < hi:
                        raise SupportError(f"atom point {pts} outside the domain {self.grid.box}")

    def __add__(self, other: "DistributionRep") -> "DistributionRep":
        if other.grid != self.grid:
            raise CalculusError("grid mismatch")
        return DistributionRep(self.grid, self.atoms + other.atoms)

    def __mul__(self, c) -> "DistributionRep":
        return DistributionRep(self.grid, tuple(a.scaled(c) for a in self.atoms))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def support_bound(self) -> tuple[float, float] | None:
        """Closed 1D interval containing the support (None if unbounded on the grid)."""
        lo, hi = math.inf, -math.inf
        g = self.grid
        for a in self.atoms:
            if isinstance(a, Dirac):
                lo, hi = min(lo, a.x0[0]), max(hi, a.x0[0])
            elif isinstance(a, Heaviside):
                return None
            else:
                nz = np.abs(a.rho.values) > a.rho.floor()
                if nz.any():
                    xs = g.mesh()[0][nz]
                    lo, hi = min(lo, float(xs.min())), max(hi, float(xs.max()))
        return (lo, hi)


def delta(x0=0.0, m=0, c=1.0, grid: Grid = DEFAULT_GRID) -> DistributionRep:
    x0 = tuple(np.atleast_1d(np.asarray(x0, dtype=float)).tolist())
    if len(x0) == 1 and grid.dim == 2:
        x0 = (x0[0], 0.0)
    m = tuple(np.atleast_1d(m).tolist())
    if len(m) == 1 and grid.dim == 2:
        m = (m[0], 0)
    return DistributionRep(grid, (Dirac(x0, m, c),))


def heaviside(x0=0.0, c=1.0, weight=None, grid: Grid = DEFAULT_GRID) -> DistributionRep:
    return DistributionRep(grid, (Heaviside(float(x0), c, weight),))


def density(rho: GridFunction) -> DistributionRep:
    return DistributionRep(rho.grid, (Density(rho),))


def as_distribution(u) -> DistributionRep:
    if isinstance(u, DistributionRep):
        return u
    if isinstance(u, GridFunction):
        return density(u)
    raise CalculusError(f"cannot interpret {type(u).__name__} as a distribution")


# ---------------------------------------------------------------------------
# pairing


def _check_test_support(phi: GridFunction):
    g = phi.grid
    inside = np.ones(g.shape, dtype=bool)
    for i, (lo, hi) in enumerate(g.box):
        c = g.mesh()[i]
        inside &= (c > lo + g.dx(i)) & (c < hi - g.dx(i))
    outside = np.abs(phi.values[~inside])
    if outside.size and float(outside.max()) > 1e-12 * max(phi.scale(), 1e-300):
        raise SupportError("test function is not supported inside the domain")


def _periodic_antiderivative(v: np.ndarray, grid: Grid) -> tuple[np.ndarray, complex | float]:
    """Spectral coefficients (fft normalization) of the periodic antiderivative of v - mean(v)."""
    mean = v.mean()
    k = grid.wavenumbers()
    vh = np.fft.fft(v - mean)
    ik = 1j * k
    ik[0] = 1.0
    fh = vh / ik
    fh[0] = 0.0
    return fh, mean


def _heaviside_integral(g: GridFunction, x0: float) -> complex | float:
    """int_{x0}^inf g for a smooth g vanishing near the box edges."""
    grid = g.grid
    fh, mean = _periodic_antiderivative(g.values, grid)
    k = grid.wavenumbers()
    x_left = grid.x[0]
    p = lambda t: (fh * np.exp(1j * k * (t - x_left))).sum() / grid.n  # noqa: E731
    left = p(x0) - p(x_left) + mean * (x0 - x_left)
    out = g.integral() - left
    return out.real if not np.iscomplexobj(g.values) else out


def pair(u, phi: GridFunction):
    """<u, phi> through the Lebesgue trivialization."""
    u = as_distribution(u)
    if phi.grid != u.grid:
        raise CalculusError("grid mismatch")
    _check_test_support(phi)
    total = 0.0
    for a in u.atoms:
        if isinstance(a, Dirac):
            val = band_limited_eval(phi, [a.x0], a.m if u.grid.dim == 2 else a.m[0])[0]
            total = total + a.c * (-1) ** sum(a.m) * val
        elif isinstance(a, Heaviside):
            w = phi if a.weight is None else phi * a.weight
            total = total + a.c * _heaviside_integral(w, a.x0)
        else:
            total = total + (a.rho * phi).integral()
    return total


# ---------------------------------------------------------------------------
# linear operators


@dataclass(frozen=True, eq=False)
class PartialDerivative:
    axis: int = 0

    @property
    def label(self):
        return f"d{self.axis}"


@dataclass(frozen=True, eq=False)
class Multiplier:
    omega: GridFunction
    name: str = "omega"

    @property
    def label(self):
        return f"mul[{self.name}]"


@dataclass(frozen=True, eq=False)
class FirstOrder:
    """a(x) d_axis + b(x)."""

    a: GridFunction
    b: GridFunction
    axis: int = 0
    name: str = "a*d+b"

    @property
    def label(self):
        return f"first-order[{self.name}]"


@dataclass(frozen=True, eq=False)
class Identity:
    label: str = "id"


LinOpSpec = PartialDerivative | Multiplier | FirstOrder | Identity


def class_check(omega: GridFunction, n_der: int = 12, rel_tail: float = 1e-10) -> bool:
    """A coefficient is admissible if it is resolved and its derivatives up to n_der are finite."""
    if not np.all(np.isfinite(omega.values)):
        return False
    return spectrum_resolved(omega, rel_tail)


def spectrum_resolved(f: GridFunction, rel_tail: float = 1e-10) -> bool:
    vh = np.abs(_fftn(f.values))
    peak = float(vh.max())
    if peak == 0:
        return True
    kk = np.sqrt(sum(k ** 2 for k in f.grid.kmesh()))
    tail = kk >= 0.875 * float(kk.max())
    return float(vh[tail].max()) <= max(rel_tail * peak, 1e3 * f.noise * math.sqrt(vh.size))


def _check_linop(T):
    for coef in ([T.omega] if isinstance(T, Multiplier) else [T.a, T.b] if isinstance(T, FirstOrder) else []):
        if not class_check(coef):
            raise CalculusError(f"coefficient of {T.label} fails the regularity check")


def _multiply_atom(a, w: GridFunction, grid: Grid) -> list:
    if isinstance(a, Density):
        return [Density(a.rho * w)]
    if isinstance(a, Heaviside):
        return [Heaviside(a.x0, a.c, w if a.weight is None else a.weight * w)]
    # w * d^m delta = sum_j C(m,j) (-1)^j w^{(j)}(x0) d^{m-j} delta  (1D, per axis in 2D)
    out = []
    if grid.dim == 1:
        m = a.m[0]
        for j in range(m + 1):
            wj = band_limited_eval(w, [a.x0[0]], j)[0]
            coef = math.comb(m, j) * (-1) ** j * wj
            if coef != 0:
                out.append(Dirac(a.x0, (m - j,), a.c * coef))
    else:
        mx, my = a.m
        for jx in range(mx + 1):
            for jy in range(my + 1):
                wj = band_limited_eval(w, [a.x0], (jx, jy))[0]
                coef = math.comb(mx, jx) * math.comb(my, jy) * (-1) ** (jx + jy) * wj
                if coef != 0:
                    out.append(Dirac(a.x0, (mx - jx, my - jy), a.c * coef))
    return out


def multiply(u: DistributionRep, w: GridFunction) -> DistributionRep:
    atoms = []
    for a in u.atoms:
        atoms.extend(_multiply_atom(a, w, u.grid))
    return DistributionRep(u.grid, tuple(atoms))


def differentiate(u: DistributionRep, axis: int = 0) -> DistributionRep:
    atoms = []
    for a in u.atoms:
        if isinstance(a, Dirac):
            m = list(a.m)
            m[axis] += 1
            atoms.append(Dirac(a.x0, tuple(m), a.c))
        elif isinstance(a, Heaviside):
            w0 = 1.0 if a.weight is None else band_limited_eval(a.weight, [a.x0])[0]
            atoms.append(Dirac((a.x0,), (0,), a.c * w0))
            if a.weight is not None:
                atoms.append(Heaviside(a.x0, a.c, a.weight.derivative(1)))
        else:
            atoms.append(Density(a.rho.derivative(1, axis)))
    return DistributionRep(u.grid, tuple(atoms))


def apply_linop(T, target):
    """Apply T to a GridFunction (spectral) or a DistributionRep (formal rules)."""
    _check_linop(T)
    if isinstance(T, Identity):
        return target
    if isinstance(target, GridFunction):
        if isinstance(T, PartialDerivative):
            return target.derivative(1, T.axis)
        if isinstance(T, Multiplier):
            return T.omega * target
        return T.a * target.derivative(1, T.axis) + T.b * target
    u = as_distribution(target)
    if isinstance(T, PartialDerivative):
        return differentiate(u, T.axis)
    if isinstance(T, Multiplier):
        return multiply(u, T.omega)
    return multiply(differentiate(u, T.axis), T.a) + multiply(u, T.b)


# ---------------------------------------------------------------------------
# diffeomorphisms (1D, orientation preserving, global on R)


class Diffeo:
    """Real-analytic increasing diffeomorphism of R."""

    label = "diffeo"

    def forward(self, x):
        raise NotImplementedError

    def jac(self, x):
        raise NotImplementedError

    def mp_forward(self, x):
        raise NotImplementedError

    def seed(self, y):
        return np.asarray(y, dtype=float)

    def inverse(self, y, tol: float = 1e-15, max_iter: int = 60):
        y = np.asarray(y, dtype=float)
        x = self.seed(y).copy()
        for _ in range(max_iter):
            step = (self.forward(x) - y) / self.jac(x)
            x = x - step
            if np.all(np.abs(step) <= tol * np.maximum(1.0, np.abs(x))):
                break
        return x

    def jet(self, x0: float, order: int) -> np.ndarray:
        """Taylor coefficients mu_n = mu^{(n)}(x0)/n!, n = 0..order."""
        import mpmath

        with mpmath.workdps(40):
            c = mpmath.taylor(self.mp_forward, mpmath.mpf(x0), order)
        return np.array([float(v) for v in c])


@dataclass(frozen=True)
class Affine(Diffeo):
    a: float = 1.0
    b: float = 0.0

    def __post_init__(self):
        if not self.a > 0:
            raise CalculusError("catalog diffeomorphisms preserve orientation (a > 0)")

    def forward(self, x):
        return self.a * np.asarray(x, dtype=float) + self.b

    def jac(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.a)

    def mp_forward(self, x):
        return self.a * x + self.b

    def inverse(self, y, tol=0, max_iter=0):
        return (np.asarray(y, dtype=float) - self.b) / self.a

    @property
    def label(self):
        return f"affine({self.a:g},{self.b:g})"


@dataclass(frozen=True)
class Perturbed(Diffeo):
    """x + a sin x with |a| < 1."""

    a: float = 0.3

    def __post_init__(self):
        if not abs(self.a) < 1:
            raise CalculusError("x + a sin x is a diffeomorphism only for |a| < 1")

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        return x + self.a * np.sin(x)

    def jac(self, x):
        return 1.0 + self.a * np.cos(np.asarray(x, dtype=float))

    def mp_forward(self, x):
        import mpmath

        return x + self.a * mpmath.sin(x)

    def seed(self, y):
        y = np.asarray(y, dtype=float)
        return y - self.a * np.sin(y) / (1.0 + self.a * np.cos(y))

    @property
    def label(self):
        return f"x+{self.a:g}sin(x)"


@dataclass(frozen=True)
class TanhStretch(Diffeo):
    """x + b tanh(x / c) with b / c > -1."""

    b: float = 0.5
    c: float = 1.0

    def __post_init__(self):
        if not (self.c > 0 and self.b / self.c > -1):
            raise CalculusError("tanh stretch needs c > 0 and b/c > -1")

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        return x + self.b * np.tanh(x / self.c)

    def jac(self, x):
        x = np.asarray(x, dtype=float)
        return 1.0 + self.b / self.c / np.cosh(x / self.c) ** 2

    def mp_forward(self, x):
        import mpmath

        return x + self.b * mpmath.tanh(x / self.c)

    def seed(self, y):
        y = np.asarray(y, dtype=float)
        return np.where(np.abs(y) < 2 * self.c, y / (1 + self.b / self.c), y - np.sign(y) * self.b)

    @property
    def label(self):
        return f"x+{self.b:g}tanh(x/{self.c:g})"


DIFFEO_CATALOG = {
    "identity": Affine(1.0, 0.0),
    "dilation": Affine(2.0, 0.0),
    "shift": Affine(1.0, 0.25),
    "sine": Perturbed(0.3),
    "tanh": TanhStretch(0.5, 1.0),
}


def diffeo_from_spec(spec) -> Diffeo:
    if isinstance(spec, Diffeo):
        return spec
    if spec in DIFFEO_CATALOG:
        return DIFFEO_CATALOG[spec]
    head, _, args = str(spec).partition(":")
    vals = [float(v) for v in args.split(",")] if args else []
    try:
        if head == "affine":
            return Affine(*vals)
        if head == "perturbed":
            return Perturbed(*vals)
        if head == "tanh":
            return TanhStretch(*vals)
    except TypeError:
        pass
    raise CalculusError(f"unknown diffeomorphism {spec!r}")


def roundtrip_residual(mu: Diffeo, y) -> float:
    y = np.asarray(y, dtype=float)
    return float(np.max(np.abs(mu.forward(mu.inverse(y)) - y) / np.maximum(1.0, np.abs(y))))


# interpolation: spectral 4x refinement, then local 8-point barycentric Lagrange

_UPSAMPLE = 4
_STENCIL = 8


def _refine(f: GridFunction) -> tuple[np.ndarray, float, float]:
    g = f.grid
    n = g.n
    half = n // 2
    vh = np.fft.fft(f.values)
    big = np.zeros(n * _UPSAMPLE, dtype=complex)
    big[:half] = vh[:half]
    big[-half + 1:] = vh[-half + 1:]
    big[half] = big[-half] = 0.5 * vh[half]
    fine = np.fft.ifft(big) * _UPSAMPLE
    if not np.iscomplexobj(f.values):
        fine = fine.real
    return fine, g.comp_box()[0], g.dx() / _UPSAMPLE


def _lagrange(fine: np.ndarray, x0: float, h: float, pts: np.ndarray, m: int) -> np.ndarray:
    n = fine.size
    s = (pts - x0) / h
    base = np.floor(s).astype(int) - (m // 2 - 1)
    idx = base[:, None] + np.arange(m)[None, :]
    nodes = idx.astype(float)
    vals = fine[np.mod(idx, n)]
    w = np.array([(-1) ** j * math.comb(m - 1, j) for j in range(m)], dtype=float)
    d = s[:, None] - nodes
    exact = d == 0
    d = np.where(exact, 1.0, d)
    t = w[None, :] / d
    out = (t * vals).sum(axis=1) / t.sum(axis=1)
    hit = exact.any(axis=1)
    if hit.any():
        out[hit] = vals[hit][exact[hit]]
    return out


def interpolate(f: GridFunction, pts) -> tuple[np.ndarray, float]:
    """Values of f at arbitrary points (periodic wrap) and an a posteriori error estimate."""
    if f.grid.dim != 1:
        raise CalculusError("interpolation is 1D only")
    pts = np.asarray(pts, dtype=float)
    fine, x0, h = _refine(f)
    v8 = _lagrange(fine, x0, h, pts.ravel(), _STENCIL)
    v10 = _lagrange(fine, x0, h, pts.ravel(), _STENCIL + 2)
    err = float(np.max(np.abs(v8 - v10))) if v8.size else 0.0
    return v8.reshape(pts.shape), err


def compose_inverse(mu: Diffeo, f: GridFunction) -> GridFunction:
    """(mu f)(y) = f(mu^{-1}(y))."""
    if isinstance(mu, Affine) and mu.a == 1.0 and mu.b == 0.0:
        return f
    vals, err = interpolate(f, mu.inverse(f.grid.x))
    return GridFunction(f.grid, vals, f.noise + err + 4 * MACHINE_EPS * f.scale())


def _dirac_pushforward(a: Dirac, mu: Diffeo) -> list:
    """mu(c d^m delta_{x0}) = sum_j d_j d^j delta_{mu(x0)} with
    <mu u, phi> = <u, (phi o mu) mu'>."""
    m = a.m[0]
    x0 = a.x0[0]
    jet = mu.jet(x0, m + 1)
    y0 = float(jet[0])
    P = np.zeros(m + 2)
    P[1:] = jet[1:]                                  # mu(x0+h) - y0
    Q = np.array([(n + 1) * jet[n + 1] for n in range(m + 1)])  # mu'(x0+h)
    out = []
    Pj = np.zeros(m + 2)
    Pj[0] = 1.0
    for j in range(m + 1):
        prod = np.convolve(Pj, Q)[: m + 1]
        b_j = math.factorial(m) / math.factorial(j) * prod[m] if len(prod) > m else 0.0
        d_j = (-1) ** (m + j) * b_j
        if d_j != 0:
            out.append(Dirac((y0,), (j,), a.c * d_j))
        Pj = np.convolve(Pj, P)[: m + 2]
    return out


def diffeo_act(mu: Diffeo, target):
    """Transport by mu: functions f -> f o mu^{-1}; distributions u -> u o mu^{-1},
    i.e. <mu u, phi> = <u, (phi o mu) |mu'|>."""
    mu = diffeo_from_spec(mu)
    if isinstance(target, GridFunction):
        return compose_inverse(mu, target)
    u = as_distribution(target)
    if u.grid.dim != 1:
        raise CalculusError("diffeomorphisms act in 1D only")
    atoms = []
    for a in u.atoms:
        if isinstance(a, Dirac):
            atoms.extend(_dirac_pushforward(a, mu))
        elif isinstance(a, Heaviside):
            w = None if a.weight is None else compose_inverse(mu, a.weight)
            atoms.append(Heaviside(float(mu.forward(a.x0)), a.c, w))
        else:
            atoms.append(Density(compose_inverse(mu, a.rho)))
    return DistributionRep(u.grid, tuple(atoms))


def inverse_diffeo(mu: Diffeo) -> "InverseDiffeo":
    return InverseDiffeo(mu)


@dataclass(frozen=True)
class InverseDiffeo(Diffeo):
    base: Diffeo

    def forward(self, x):
        return self.base.inverse(x)

    def jac(self, x):
        return 1.0 / self.base.jac(self.base.inverse(x))

    def inverse(self, y, tol=0, max_iter=0):
        return self.base.forward(y)

    def mp_forward(self, y):
        import mpmath

        x0 = float(self.base.inverse(float(y)))
        return mpmath.findroot(lambda x: self.base.mp_forward(x) - y, mpmath.mpf(x0))

    @property
    def label(self):
        return f"inv({self.base.label})"


# ---------------------------------------------------------------------------
# seminorms


@dataclass(frozen=True)
class SeminormSpec:
    """regime: "distribution" (max of sup|d^a g| over |a| <= order), "beurling"
    (sup |d^a g| / (h^|a| M_|a|)), "roumieu" (sup |d^a g| / (M_|a| prod_{j<=|a|} r_j))."""

    regime: str = "distribution"
    order: int = 0
    h: float = 1.0
    weight: WeightSequence | None = None
    rseq: RSequence | None = None

    def __post_init__(self):
        if self.regime not in ("distribution", "beurling", "roumieu"):
            raise CalculusError(f"unknown seminorm regime {self.regime!r}")
        if self.regime != "distribution" and self.weight is None:
            raise CalculusError("ultra seminorms need a weight sequence")
        if self.regime == "roumieu" and self.rseq is None:
            raise CalculusError("Roumieu seminorms need an r-sequence")

    @property
    def label(self) -> str:
        if self.regime == "distribution":
            return f"C^{self.order}"
        if self.regime == "beurling":
            return f"K,h={self.h:g},N<={self.order}"
        return f"K,{self.rseq.label},N<={self.order}"


@dataclass
class SeminormValue:
    value: float
    per_order: list
    floors: list
    resolved: bool
    cap: int

    @property
    def floor(self) -> float:
        return max(self.floors) if self.floors else 0.0

    def above_floor(self) -> bool:
        return any(v > f for v, f in zip(self.per_order, self.floors))


def _multi_indices(dim: int, n: int):
    if dim == 1:
        return [(n,)]
    return [(i, n - i) for i in range(n + 1)]


def seminorm(g: GridFunction, window: Window, spec: SeminormSpec = SeminormSpec(),
             strict: bool = False) -> SeminormValue:
    """Weighted derivative sup on the window, valid up to derivative order spec.order."""
    resolved = spectrum_resolved(g)
    if strict and not resolved:
        raise CalculusError("unresolved spectrum")
    mask = window.mask(g.grid)
    per, floors = [], []
    for n in range(spec.order + 1):
        if spec.regime == "distribution":
            denom = 1.0
        elif spec.regime == "beurling":
            denom = spec.h ** n * math.exp(float(spec.weight.extended(max(n, 1)).log_m_at(n)))
        else:
            lm = float(spec.weight.extended(max(n, 1)).log_m_at(n)) + float(spec.rseq.log_cumprod(n)[n])
            denom = math.exp(lm)
        best, fl = 0.0, 0.0
        for alpha in _multi_indices(g.grid.dim, n):
            d = spectral_derivative(g, alpha)
            best = max(best, float(np.max(np.abs(d.values[mask]))))
            fl = max(fl, d.floor())
        per.append(best / denom)
        floors.append(fl / denom)
    return SeminormValue(max(per), per, floors, resolved, spec.order)


# ---------------------------------------------------------------------------
# IO

_MAGIC = b"GFN1"


def save_csv(f: GridFunction, path) -> None:
    g = f.grid
    vals = np.asarray(f.values, dtype=complex).ravel()
    cols = [m.ravel() for m in g.mesh()] + [vals.real, vals.imag]
    head = ("x," if g.dim == 1 else "x,y,") + "re,im"
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=head, comments="", fmt="%.17g")


def load_csv(path, grid: Grid | None = None) -> GridFunction:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    dim = data.shape[1] - 2
    n = int(round(data.shape[0] ** (1 / dim)))
    if grid is None:
        xs = data[:, 0]
        dx = xs[1] - xs[0] if dim == 1 else data[n, 0] - data[0, 0]
        lo = data[0, 0]
        length = dx * n
        box = ((lo + length * 0.25, lo + length * 0.75),) * dim
        grid = Grid(box, n)
    vals = (data[:, -2] + 1j * data[:, -1]).reshape(grid.shape)
    if not np.any(vals.imag):
        vals = vals.real
    return GridFunction(grid, vals)


def save_binary(f: GridFunction, path) -> None:
    """Header: magic, dims (int32), N (int32), pad (float64), box (2*dims float64);
    payload: little-endian float64 (re, im) pairs in row-major order."""
    g = f.grid
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<iid", g.dim, g.n, g.pad))
    for lo, hi in g.box:
        buf.write(struct.pack("<dd", lo, hi))
    v = np.asarray(f.values, dtype=complex)
    payload = np.stack([v.real, v.imag], axis=-1).astype("<f8")
    buf.write(payload.tobytes(order="C"))
    Path(path).write_bytes(buf.getvalue())


def load_binary(path) -> GridFunction:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise CalculusError("not a grid-function file")
    dim, n, pad = struct.unpack_from("<iid", raw, 4)
    off = 4 + 16
    box = []
    for _ in range(dim):
        box.append(struct.unpack_from("<dd", raw, off))
        off += 16
    grid = Grid(tuple(box), n, pad)
    data = np.frombuffer(raw, dtype="<f8", offset=off).reshape(grid.shape + (2,))
    vals = data[..., 0] + 1j * data[..., 1]
    if not np.any(data[..., 1]):
        vals = data[..., 0].copy()
    return GridFunction(grid, vals)
