"""Increasing interval maps used as fibre maps, and checks of their structure.

Three closed forms are supported: a power polynomial, a cubic pinch
``x - c (x - p)**3`` whose derivative touches 1 at ``p``, and a localized
perturbation of either that makes the pinch point repelling.  Values and
the first two derivatives are exact formulas; nothing here differentiates
numerically.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

GRID = 10_000


class DomainError(ValueError):
    """Raised when a fibre coordinate lies outside a map's domain."""


@dataclass(frozen=True)
class FiberMap:
    domain: tuple[float, float] = field(default=(0.0, 1.0), kw_only=True)

    def _f(self, x):
        raise NotImplementedError

    def _df(self, x):
        raise NotImplementedError

    def _d2f(self, x):
        raise NotImplementedError

    def check_domain(self, x, slack=1e-12):
        lo, hi = self.domain
        xa = np.asarray(x, dtype=float)
        if np.any(xa < lo - slack) or np.any(xa > hi + slack) or np.any(np.isnan(xa)):
            raise DomainError(f"fibre coordinate outside domain [{lo}, {hi}]")
        return xa

    def __call__(self, x):
        return self._f(self.check_domain(x))

    def deriv(self, x):
        return self._df(self.check_domain(x))

    def deriv2(self, x):
        return self._d2f(self.check_domain(x))

    def grid(self, n=GRID):
        return np.linspace(self.domain[0], self.domain[1], n)

    def inverse(self, y, tol=1e-13):
        """Solve ``f(x) = y`` by bisection on the domain (vectorized)."""
        y = np.asarray(y, dtype=float)
        lo = np.full(y.shape, self.domain[0])
        hi = np.full(y.shape, self.domain[1])
        if np.any(y < self._f(lo) - tol) or np.any(y > self._f(hi) + tol):
            raise DomainError("value outside the image of the map")
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            below = self._f(mid) < y
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo < tol):
                break
        return 0.5 * (lo + hi)

    def inverse_derivs(self, y):
        """Return ``(g, Dg, D2g)`` for ``g = f^{-1}`` at ``y``."""
        x = self.inverse(y)
        d1 = self._df(x)
        d2 = self._d2f(x)
        return x, 1.0 / d1, -d2 / d1**3


@dataclass(frozen=True)
class PaperPoly(FiberMap):
    """``f(x) = a x**p - b x**q + c``."""

    a: float = 3.098
    b: float = 2.5
    p: float = 1.83
    q: float = 2.4
    c: float = 0.1
    domain: tuple[float, float] = field(default=(0.1, 0.7), kw_only=True)

    def _f(self, x):
        return self.a * x**self.p - self.b * x**self.q + self.c

    def _df(self, x):
        return self.a * self.p * x ** (self.p - 1) - self.b * self.q * x ** (self.q - 1)

    def _d2f(self, x):
        return (self.a * self.p * (self.p - 1) * x ** (self.p - 2)
                - self.b * self.q * (self.q - 1) * x ** (self.q - 2))


@dataclass(frozen=True)
class CubicPinch(FiberMap):
    """``f(x) = x - c (x - p)**3``; fixed point ``p`` with ``Df(p) = 1``."""

    p: float = 0.18
    c: float = 2.0
    domain: tuple[float, float] = field(default=(0.08, 0.42), kw_only=True)

    @property
    def center(self):
        return self.p

    def _f(self, x):
        return x - self.c * (x - self.p) ** 3

    def _df(self, x):
        return 1.0 - 3.0 * self.c * (x - self.p) ** 2

    def _d2f(self, x):
        return -6.0 * self.c * (x - self.p)


@dataclass(frozen=True)
class Perturbed(FiberMap):
    """``g(x) = f(x) + eta (x - p) exp(-((x - p)/w)**2)`` around ``p``.

    ``p`` defaults to the pinch point of ``base``; ``Dg(p) = Df(p) + eta``.
    """

    base: FiberMap = field(default_factory=CubicPinch)
    eta: float = 0.0
    w: float = 0.04
    center_point: Optional[float] = None
    domain: tuple[float, float] = field(default=None, kw_only=True)  # type: ignore[assignment]

    def __post_init__(self):
        if self.domain is None:
            object.__setattr__(self, "domain", self.base.domain)
        if self.center_point is None:
            c = getattr(self.base, "center", None)
            if c is None:
                roots = find_fixed_points(self.base)
                if len(roots) != 1:
                    raise ValueError("perturbation centre is ambiguous; pass center_point")
                c = roots[0][0]
            object.__setattr__(self, "center_point", float(c))

    @property
    def center(self):
        return self.center_point

    def _bump(self, x):
        u = (x - self.center_point) / self.w
        return u, np.exp(-u * u)

    def _f(self, x):
        u, e = self._bump(x)
        return self.base._f(x) + self.eta * self.w * u * e

    def _df(self, x):
        u, e = self._bump(x)
        return self.base._df(x) + self.eta * e * (1.0 - 2.0 * u * u)

    def _d2f(self, x):
        u, e = self._bump(x)
        return self.base._d2f(x) + self.eta * e * (4.0 * u**3 - 6.0 * u) / self.w


def eval_map(fmap: FiberMap, x, order: int = 0):
    if order == 0:
        return fmap(x)
    if order == 1:
        return fmap.deriv(x)
    if order == 2:
        return fmap.deriv2(x)
    raise ValueError("order must be 0, 1 or 2")


def _bisect_edge(g, lo, hi, lo_sign):
    # last point still carrying lo_sign; zeros count as the other side
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if np.sign(g(mid)) == lo_sign:
            lo = mid
        else:
            hi = mid
    return lo, hi


def _bisect_root(g, lo, hi):
    """Bisect a sign change of ``g`` on ``[lo, hi]``.

    Near a degenerate root ``f(x) - x`` rounds to exactly 0 on a small
    plateau, so both plateau edges are located and the midpoint returned.
    """
    s_lo, s_hi = np.sign(g(lo)), np.sign(g(hi))
    left = _bisect_edge(g, lo, hi, s_lo)[1]
    right = _bisect_edge(lambda x: g(-x), -hi, -lo, s_hi)[1]
    return 0.5 * (left - right)


def find_fixed_points(fmap: FiberMap, tol: float = 1e-12, grid: int = GRID):
    """Roots of ``f(x) - x`` located by sign changes on a grid, then bisected.

    Bisection runs to floating-point resolution, so a pinched root (where
    ``f(x) - x`` is cubic) is still located to ~1e-15 rather than to
    ``tol**(1/3)``.  Returns ``[(x, Df(x)), ...]`` in increasing order.
    """
    xs = fmap.grid(grid)
    g = lambda x: float(fmap._f(x) - x)
    gs = fmap._f(xs) - xs
    roots = []
    for k in range(len(xs)):
        if gs[k] == 0.0:
            roots.append(float(xs[k]))
        elif (k + 1 < len(xs) and gs[k + 1] != 0.0
              and np.sign(gs[k]) != np.sign(gs[k + 1])):
            r = _bisect_root(g, float(xs[k]), float(xs[k + 1]))
            if abs(g(r)) <= tol:
                roots.append(r)
    return [(r, float(fmap._df(r))) for r in roots]


@dataclass
class SWeakReport:
    fixed_points: list
    conditions: dict
    witnesses: dict

    @property
    def passed(self):
        return all(self.conditions.values())


def validate_s_weak_contractive(fmap: FiberMap, tol: float = 1e-3, tol_d: float = 1e-9,
                                pair_grid: int = 200) -> SWeakReport:
    """Check the pinched weak-contraction conditions on grids.

    (a) ``|Df(p) - 1| <= tol_d`` at the unique fixed point, (b) ``Df < 1``
    away from ``p``, (c) ``|f(x) - f(y)| < |x - y|`` on grid pairs.  The
    exceptional point is the fixed point ``p`` itself.
    """
    fps = find_fixed_points(fmap)
    cond, wit = {}, {}
    cond["unique_fixed_point"] = len(fps) == 1
    wit["fixed_points"] = fps
    if not fps:
        cond["derivative_one_at_fixed_point"] = False
        cond["derivative_below_one_elsewhere"] = False
        cond["weakly_contractive"] = False
        return SWeakReport(fps, cond, wit)
    # with several roots, judge (a) at the root whose derivative is furthest from 1
    p, dp = max(fps, key=lambda r: abs(r[1] - 1.0))
    cond["derivative_one_at_fixed_point"] = abs(dp - 1.0) <= tol_d
    wit["Df(p)"] = dp
    xs = fmap.grid()
    away = np.abs(xs - p) > tol
    d = fmap._df(xs[away])
    cond["derivative_below_one_elsewhere"] = bool(np.all(d < 1.0))
    wit["max_Df_away"] = float(d.max())
    g = fmap.grid(pair_grid)
    fx = fmap._f(g)
    dx = np.abs(g[:, None] - g[None, :])
    df = np.abs(fx[:, None] - fx[None, :])
    off = ~np.eye(pair_grid, dtype=bool)
    cond["weakly_contractive"] = bool(np.all(df[off] < dx[off]))
    wit["max_pair_ratio"] = float(np.max(df[off] / dx[off]))
    return SWeakReport(fps, cond, wit)


@dataclass
class WeakPairReport:
    fixed_points: list  # per map: [(x, Df), ...]
    caverage_min_margin: float
    covering_interval: Optional[tuple[float, float]]
    passed: dict
    witnesses: dict = field(default_factory=dict)

    @property
    def ok(self):
        return all(self.passed.values())


def certify_covering(f0: FiberMap, f1: FiberMap, interval, grid: int = 2000):
    """Endpoint certificate that ``Cl(B) ⊂ f0(B) ∪ f1(B)`` for ``B = (x0, x1)``.

    Monotone maps send ``B`` onto ``(f(x0), f(x1))``; the union covers
    ``[x0, x1]`` when ``f0(x0) < x0``, ``f1(x1) > x1`` and the two images
    overlap (``f0(x1) > f1(x0)``).  Also requires ``Df_i < 1`` on ``[x0, x1]``.
    """
    x0, x1 = map(float, interval)
    xs = np.linspace(x0, x1, grid)
    contracting = bool(np.all(f0._df(xs) < 1.0) and np.all(f1._df(xs) < 1.0))
    left = float(f0._f(x0)) < x0
    right = float(f1._f(x1)) > x1
    overlap = float(f0._f(x1)) > float(f1._f(x0))
    return contracting and left and right and overlap


def validate_weak_pair(f0: FiberMap, f1: FiberMap, band=None, covering=None) -> WeakPairReport:
    band = tuple(band) if band is not None else f0.domain
    a, b = band
    fp0, fp1 = find_fixed_points(f0), find_fixed_points(f1)
    r0 = validate_s_weak_contractive(f0)
    r1 = validate_s_weak_contractive(f1)
    passed = {"s_weak_f0": r0.passed, "s_weak_f1": r1.passed}

    xs = np.linspace(a, b, GRID)
    d0, d1 = f0._df(xs), f1._df(xs)
    with np.errstate(divide="ignore", invalid="ignore"):
        margins = -(np.log(d0) + np.log(d1))
    margins = np.where((d0 > 0) & (d1 > 0), margins, -np.inf)
    margin = float(margins.min())
    passed["contraction_on_average"] = margin > 0.0

    wit = {"argmin_margin": float(xs[int(np.argmin(margins))])}
    cover = None
    if len(fp0) == 1 and len(fp1) == 1:
        p0, p1 = fp0[0][0], fp1[0][0]
        distinct = abs(p0 - p1) > 1e-9
        interior = min(p0, p1) > a and max(p0, p1) < b
        cross = abs(float(f0._f(p1)) - p0) > 1e-12 and abs(float(f1._f(p0)) - p1) > 1e-12
        passed["distinct_fixed_points"] = distinct and interior and cross
        passed["ordering"] = p0 < p1
        if p0 < p1:
            if covering is not None:
                if p0 < covering[0] < covering[1] < p1 and certify_covering(f0, f1, covering):
                    cover = tuple(map(float, covering))
            else:
                span = p1 - p0
                for k in range(1, 7):
                    cand = (p0 + k * span / 14, p1 - k * span / 14)
                    if certify_covering(f0, f1, cand):
                        cover = cand
                        break
    else:
        passed["distinct_fixed_points"] = False
        passed["ordering"] = False
    passed["covering"] = cover is not None
    return WeakPairReport([fp0, fp1], margin, cover, passed, wit)


def _smoothstep(u):
    return u**3 * (10.0 + u * (-15.0 + 6.0 * u))


def _dsmoothstep(u):
    return 30.0 * u**2 * (1.0 - u) ** 2


def _d2smoothstep(u):
    return 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)


@dataclass(frozen=True)
class BumpProfile:
    """Circle profile equal to 0 on ``L0``, 1 on ``L1``, quintic ramps between."""

    L0: tuple[float, float] = (0.0, 0.25)
    L1: tuple[float, float] = (0.5, 0.75)
    delta: float = 0.02

    def __post_init__(self):
        a0, b0 = self.L0
        a1, b1 = self.L1
        if not (0.0 <= a0 < b0 < a1 < b1 <= a0 + 1.0):
            raise ValueError("arcs must be disjoint and ordered L0 < L1 on [0, 1)")
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    def _parts(self, t):
        a0, b0 = self.L0
        a1, b1 = self.L1
        # shift so L0 starts at 0
        s = np.mod(np.asarray(t, dtype=float) - a0, 1.0)
        b0, a1, b1 = b0 - a0, a1 - a0, b1 - a0
        rise = (s > b0) & (s < a1)
        fall = s > b1
        up = np.where(rise, (s - b0) / (a1 - b0), 0.0)
        down = np.where(fall, (s - b1) / (1.0 - b1), 0.0)
        return s, rise, fall, up, down, a1 - b0, 1.0 - b1

    def __call__(self, t, order: int = 0):
        s, rise, fall, up, down, wr, wf = self._parts(t)
        b0, a1, b1 = self.L0[1] - self.L0[0], self.L1[0] - self.L0[0], self.L1[1] - self.L0[0]
        on1 = (s >= a1) & (s <= b1)
        if order == 0:
            out = np.where(on1, 1.0, 0.0)
            out = np.where(rise, _smoothstep(up), out)
            out = np.where(fall, 1.0 - _smoothstep(down), out)
        elif order == 1:
            out = np.where(rise, _dsmoothstep(up) / wr, 0.0)
            out = np.where(fall, -_dsmoothstep(down) / wf, out)
        elif order == 2:
            out = np.where(rise, _d2smoothstep(up) / wr**2, 0.0)
            out = np.where(fall, -_d2smoothstep(down) / wf**2, out)
        else:
            raise ValueError("order must be 0, 1 or 2")
        return out if np.ndim(out) else float(out)

    def plateau_distance(self, t):
        """Circle distance from ``t`` to ``L0 ∪ L1``."""
        t = np.asarray(t, dtype=float)
        out = np.full(t.shape, np.inf)
        for a, b in (self.L0, self.L1):
            inside = np.mod(t - a, 1.0) <= (b - a)
            da = np.abs(np.mod(t - a + 0.5, 1.0) - 0.5)
            db = np.abs(np.mod(t - b + 0.5, 1.0) - 0.5)
            out = np.minimum(out, np.where(inside, 0.0, np.minimum(da, db)))
        return out


def bump_eval(profile: BumpProfile, t, order: int = 0):
    return profile(t, order)


def isotopy_eval(f0: FiberMap, f1: FiberMap, profile: BumpProfile, t, x, order: int = 0):
    """``f_t(x) = (1 - l(t)**2) f0(x) + l(t)**2 f1(x)`` or its x-derivatives."""
    x = f0.check_domain(x)
    f1.check_domain(x)
    w = np.asarray(profile(t)) ** 2
    if order == 0:
        return (1.0 - w) * f0._f(x) + w * f1._f(x)
    if order == 1:
        return (1.0 - w) * f0._df(x) + w * f1._df(x)
    if order == 2:
        return (1.0 - w) * f0._d2f(x) + w * f1._d2f(x)
    raise ValueError("order must be 0, 1 or 2")
