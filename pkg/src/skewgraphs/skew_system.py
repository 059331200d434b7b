"""Skew products ``F(theta, x) = (S theta, f_{t0}(x))`` built from fibre-map pairs."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .base_dynamics import Baker, Circle, ForwardStream, Solenoid
from .fiber_maps import (BumpProfile, CubicPinch, FiberMap, Perturbed,
                         validate_weak_pair)

BASES = ("circle", "baker", "solenoid")

DEFAULT_BANDS = ((0.08, 0.42), (0.58, 0.92))
DEFAULT_PINCHES = ((0.18, 0.32), (0.68, 0.82))


class FiberEscapeError(RuntimeError):
    """A fibre coordinate left its trapping band."""


class PerturbationRejected(ValueError):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class Band:
    interval: tuple[float, float]
    f0: FiberMap
    f1: FiberMap

    @property
    def lo(self):
        return self.interval[0]

    @property
    def hi(self):
        return self.interval[1]


@dataclass(frozen=True)
class SkewSystem:
    base: str = "baker"
    bands: tuple = ()
    profile: BumpProfile = field(default_factory=BumpProfile)
    perturbation: Optional[tuple] = None  # (eta, w, band index)

    def __post_init__(self):
        if self.base not in BASES:
            raise ValueError(f"unknown base {self.base!r}")

    def band_of(self, x: float) -> int:
        for i, b in enumerate(self.bands):
            if b.lo <= x <= b.hi:
                return i
        raise FiberEscapeError(f"x={x} lies in no band")

    def fiber(self, i, t, x, order: int = 0):
        """Isotopy fibre map of band ``i`` (no domain check; hot path)."""
        b = self.bands[i]
        w = np.asarray(self.profile(t)) ** 2
        if order == 0:
            return (1.0 - w) * b.f0._f(x) + w * b.f1._f(x)
        if order == 1:
            return (1.0 - w) * b.f0._df(x) + w * b.f1._df(x)
        return (1.0 - w) * b.f0._d2f(x) + w * b.f1._d2f(x)

    def fiber_and_deriv(self, i, t, x):
        b = self.bands[i]
        w = np.asarray(self.profile(t)) ** 2
        return ((1.0 - w) * b.f0._f(x) + w * b.f1._f(x),
                (1.0 - w) * b.f0._df(x) + w * b.f1._df(x))

    @property
    def eta(self):
        return 0.0 if self.perturbation is None else self.perturbation[0]


def default_system(base: str = "baker", c: float = 2.0, bands=DEFAULT_BANDS,
                   pinches=DEFAULT_PINCHES, profile: Optional[BumpProfile] = None,
                   eta: float = 0.0, w: float = 0.04, eta_band: int = 0) -> SkewSystem:
    """Reference construction: cubic-pinch weak-pairs on two bands."""
    bs = []
    for (lo, hi), (p0, p1) in zip(bands, pinches):
        dom = (float(lo), float(hi))
        bs.append(Band(dom, CubicPinch(p0, c, domain=dom), CubicPinch(p1, c, domain=dom)))
    sys = SkewSystem(base, tuple(bs), profile or BumpProfile())
    if eta:
        sys = perturb(sys, eta, w=w, band=eta_band)
    return sys


@dataclass
class SystemReport:
    """Check table; rows are ``(name, band, passed, witness, required)``.

    Weak-pair conditions of a perturbed band are informational: the
    perturbation is meant to break them.  ``admissible`` gates computation.
    """

    checks: list = field(default_factory=list)

    def add(self, name, band, passed, witness="", required=True):
        self.checks.append((name, band, bool(passed), witness, required))

    @property
    def passed(self):
        return all(c[2] for c in self.checks)

    @property
    def admissible(self):
        return all(c[2] for c in self.checks if c[4])

    def failures(self, required_only=False):
        return [c for c in self.checks if not c[2] and (c[4] or not required_only)]

    def get(self, name, band):
        for c in self.checks:
            if c[0] == name and c[1] == band:
                return c[2]
        raise KeyError((name, band))


def validate_system(sys: SkewSystem, t_grid: int = 1000, x_grid: int = 400) -> SystemReport:
    rep = SystemReport()
    ts = (np.arange(t_grid) + 0.5) / t_grid
    for i, b in enumerate(sys.bands):
        perturbed = isinstance(b.f0, Perturbed)
        wp = validate_weak_pair(b.f0, b.f1, b.interval)
        for cond, ok in wp.passed.items():
            rep.add(f"weak_pair.{cond}", i, ok, f"margin={wp.caverage_min_margin:.6g}",
                    required=not perturbed)
        if perturbed:
            ref = validate_weak_pair(b.f0.base, b.f1, b.interval)
            rep.add("weak_pair_before_perturbation", i, ref.ok,
                    f"margin={ref.caverage_min_margin:.6g}")

        tt = np.concatenate([ts, [0.0, 0.25, 0.5, 0.75]])
        lo_img = sys.fiber(i, tt, np.full(tt.shape, b.lo))
        hi_img = sys.fiber(i, tt, np.full(tt.shape, b.hi))
        ok = bool(np.all(lo_img > b.lo) and np.all(hi_img < b.hi))
        rep.add("trapping", i, ok,
                f"min_lo_gap={float((lo_img - b.lo).min()):.3e} "
                f"min_hi_gap={float((b.hi - hi_img).min()):.3e}")

        xs = np.linspace(b.lo, b.hi, x_grid)
        T, X = np.meshgrid(ts, xs, indexing="ij")
        d = sys.fiber(i, T, X, order=1)
        rep.add("monotone", i, bool(np.all(d > 0)), f"min_Df={float(d.min()):.4g}")

        # modulus of continuity in t: adjacent grid values must differ by a vanishing amount
        fv = sys.fiber(i, T, X)
        jump = np.abs(np.diff(np.vstack([fv, fv[:1]]), axis=0)).max()
        rep.add("continuous_in_t", i, bool(jump < 50.0 / t_grid * (b.hi - b.lo)),
                f"max_adjacent_jump={float(jump):.3e}")
    return rep


def perturb(sys: SkewSystem, eta: float, w: float = 0.04, band: int = 0) -> SkewSystem:
    """Replace ``f0`` on one band by its localized perturbation of size ``eta``."""
    if eta < 0:
        raise ValueError("eta must be >= 0")
    b = sys.bands[band]
    base_f0 = b.f0.base if isinstance(b.f0, Perturbed) else b.f0
    if eta == 0:
        newf0 = base_f0
        pert = None
    else:
        newf0 = Perturbed(base_f0, float(eta), float(w))
        pert = (float(eta), float(w), band)
    bands = list(sys.bands)
    bands[band] = Band(b.interval, newf0, b.f1)
    out = replace(sys, bands=tuple(bands), perturbation=pert)
    rep = validate_system(out)
    bad = [c for c in rep.checks if c[0] in ("trapping", "monotone") and not c[2]]
    if bad:
        raise PerturbationRejected(f"perturbation eta={eta} breaks trapping/monotonicity", rep)
    return out


@dataclass
class OrbitRecord:
    points: list  # [(BasePoint, x), ...], n + 1 entries
    log_derivs: np.ndarray  # n entries, log Df at each step

    @property
    def xs(self):
        return np.array([x for _, x in self.points])


def forward_orbit(sys: SkewSystem, start, n: int, rng=None) -> OrbitRecord:
    """n-step orbit of a single point with its log-derivative ledger.

    Baker and circle coordinates advance in double precision; ``rng`` fills
    base digits past that resolution (see ``ForwardStream``).
    """
    p, x = start
    i = sys.band_of(x)
    b = sys.bands[i]
    pts = [(p, float(x))]
    logs = np.empty(n)
    stream = ForwardStream(p.t, None if isinstance(p, Circle) else p.s, rng)
    digits = tuple(p.digits) if isinstance(p, Solenoid) else None
    for k in range(n):
        fx, dx = sys.fiber_and_deriv(i, stream.t[0], x)
        logs[k] = np.log(dx)
        x = float(fx)
        lead = int(stream.lead_digit()[0])
        stream.advance()
        t = float(stream.t[0])
        if isinstance(p, Circle):
            q = Circle(t)
        elif isinstance(p, Baker):
            q = Baker(t, float(stream.s[0]))
        else:
            digits = (lead,) + digits[:-1]  # fixed depth: the oldest digit drops off
            q = Solenoid(digits, t)
        pts.append((q, x))
    xs = np.array([q for _, q in pts])
    if np.any(xs < b.lo) or np.any(xs > b.hi):
        raise FiberEscapeError("orbit left its band; trapping validation is inconsistent")
    return OrbitRecord(pts, logs)


def evolve(sys: SkewSystem, i: int, stream: ForwardStream, x0, n: int, with_logs=False):
    """Advance a batch of fibre coordinates ``n`` steps along ``stream``.

    Returns the final coordinates and, optionally, the summed log-derivatives.
    """
    x = np.array(x0, dtype=float)
    acc = np.zeros_like(x)
    for _ in range(n):
        if with_logs:
            fx, dx = sys.fiber_and_deriv(i, stream.t, x)
            acc += np.log(dx)
            x = fx
        else:
            x = sys.fiber(i, stream.t, x)
        stream.advance()
    return (x, acc) if with_logs else x


def c2_distance(sysA: SkewSystem, sysB: SkewSystem, n_t: int = 512, n_x: int = 512) -> float:
    """Grid supremum of the C^2 distance between fibre maps and their inverses."""
    if len(sysA.bands) != len(sysB.bands):
        raise ValueError("systems must share bands")
    ts = (np.arange(n_t) + 0.5) / n_t
    best = 0.0
    for i, (ba, bb) in enumerate(zip(sysA.bands, sysB.bands)):
        if ba.interval != bb.interval:
            raise ValueError("systems must share bands")
        xs = np.linspace(ba.lo, ba.hi, n_x)
        T, X = np.meshgrid(ts, xs, indexing="ij")
        for k in range(3):
            d = np.abs(sysA.fiber(i, T, X, k) - sysB.fiber(i, T, X, k)).max()
            best = max(best, float(d))
        # inverses on the common image of the two fibre maps, per t
        ylo = np.maximum(sysA.fiber(i, ts, np.full(n_t, ba.lo)), sysB.fiber(i, ts, np.full(n_t, ba.lo)))
        yhi = np.minimum(sysA.fiber(i, ts, np.full(n_t, ba.hi)), sysB.fiber(i, ts, np.full(n_t, ba.hi)))
        u = np.linspace(0.0, 1.0, n_x)
        Y = ylo[:, None] + (yhi - ylo)[:, None] * u[None, :]
        ia = _inverse_derivs(sysA, i, T, Y)
        ib = _inverse_derivs(sysB, i, T, Y)
        for qa, qb in zip(ia, ib):
            best = max(best, float(np.abs(qa - qb).max()))
    return best


def _inverse_derivs(sys: SkewSystem, i, T, Y, tol=1e-13):
    b = sys.bands[i]
    lo = np.full(Y.shape, b.lo)
    hi = np.full(Y.shape, b.hi)
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        below = sys.fiber(i, T, mid) < Y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo < tol):
            break
    x = 0.5 * (lo + hi)
    d1 = sys.fiber(i, T, x, 1)
    d2 = sys.fiber(i, T, x, 2)
    return x, 1.0 / d1, -d2 / d1**3
