"""Fibre attractors of a skew product by backward pullback.

Over a base point with pre-orbit ``t_{-1}, t_{-2}, ...`` the attractor in
band ``I = [a, b]`` is the nested limit of

    f_{t_{-1}} o f_{t_{-2}} o ... o f_{t_{-depth}} (I),

and since fibre maps are increasing the image of ``I`` is the interval
spanned by the images of ``a`` and ``b``.  The graph value is the pullback
of ``a``.  With this indexing ``f_{t0}(gamma(p)) = gamma(S p)`` holds in the
limit, which is what the invariance residual measures.

Fibres collapse at a rate set by the fibre Lyapunov exponent, which is
small for pinched maps (about -0.03 per step for the reference system), so
depth and bone tolerance have to be chosen together; each attractor keeps
the width it had at half depth so the collapse rate can be read off.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .base_dynamics import (B, RESOLVED_DIGITS, BasePoint, Circle, UnsupportedVariant,
                            circle_step, point_digits, preorbit_arrays)
from .skew_system import SkewSystem

BONE_TOL = 1e-4
CHUNK = 250


@dataclass
class FiberAttractor:
    band: int
    point: Optional[BasePoint]
    depth: int
    lo: float
    hi: float
    is_bone: bool
    half_width: float = float("nan")

    @property
    def width(self):
        return self.hi - self.lo

    @property
    def rate(self):
        """Per-step log collapse rate of the width between half and full depth."""
        steps = self.depth - self.depth // 2
        if self.width <= 0 or not self.half_width > 0 or steps == 0:
            return float("-inf")
        return math.log(self.width / self.half_width) / steps


def pullback_arrays(sys: SkewSystem, i: int, t0, digits, depth: Optional[int] = None):
    """Vectorized pullback; returns ``(lo, hi)`` arrays."""
    digits = np.atleast_2d(digits)
    depth = digits.shape[1] if depth is None else depth
    if digits.shape[1] < depth:
        raise ValueError("pre-orbit shorter than requested depth")
    ts = preorbit_arrays(t0, digits[:, :depth])
    b = sys.bands[i]
    lo = np.full(ts.shape[0], b.lo)
    hi = np.full(ts.shape[0], b.hi)
    for k in range(depth, 0, -1):
        lo = sys.fiber(i, ts[:, k], lo)
        hi = sys.fiber(i, ts[:, k], hi)
    return lo, hi


def _require_preorbit(p):
    if isinstance(p, Circle):
        raise UnsupportedVariant("pullback needs a baker or solenoid base point")


def pullback_fiber(sys: SkewSystem, i: int, p: BasePoint, depth: int,
                   bone_tol: float = BONE_TOL, rng=None) -> FiberAttractor:
    _require_preorbit(p)
    d = point_digits(p, depth, rng)[None, :]
    lo, hi = pullback_arrays(sys, i, [p.t], d, depth)
    hlo, hhi = pullback_arrays(sys, i, [p.t], d, depth // 2)
    lo, hi = float(lo[0]), float(hi[0])
    return FiberAttractor(i, p, depth, lo, hi, hi - lo > bone_tol, float(hhi[0] - hlo[0]))


def graph_value(sys: SkewSystem, i: int, p: BasePoint, depth: int, rng=None) -> float:
    _require_preorbit(p)
    d = point_digits(p, depth, rng)[None, :]
    return float(pullback_arrays(sys, i, [p.t], d, depth)[0][0])


def shifted(t0, digits):
    """Base step on ``(t0, digits)`` arrays, keeping the digit depth fixed."""
    t0 = np.asarray(t0, dtype=float)
    lead = np.floor(B * t0).astype(np.uint8)
    d = np.concatenate([lead[:, None], np.asarray(digits)[:, :-1]], axis=1)
    return circle_step(t0) * np.ones_like(t0), d


def residual_arrays(sys: SkewSystem, i: int, t0, digits, depth: int):
    """``|f_{t0}(gamma(p)) - gamma(S p)|`` with both graphs at the same depth."""
    t0 = np.atleast_1d(np.asarray(t0, dtype=float))
    digits = np.atleast_2d(digits)[:, :depth]
    g = pullback_arrays(sys, i, t0, digits, depth)[0]
    img = sys.fiber(i, t0, g)
    t1, d1 = shifted(t0, digits)
    g1 = pullback_arrays(sys, i, t1, d1, depth)[0]
    return np.abs(img - g1)


def invariance_residual(sys: SkewSystem, samples, depth: int, bands=None) -> float:
    """Max invariance residual over base points and bands.

    ``samples`` is a list of base points or a ``(t0, digits)`` pair.
    """
    if isinstance(samples, tuple):
        t0, digits = samples
    else:
        for p in samples:
            _require_preorbit(p)
        t0 = np.array([p.t for p in samples])
        digits = np.stack([point_digits(p, depth) for p in samples])
    bands = range(len(sys.bands)) if bands is None else bands
    return max(float(residual_arrays(sys, i, t0, digits, depth).max()) for i in bands)


def _digits_to_s(digits):
    s = np.zeros(digits.shape[0])
    for k in range(min(digits.shape[1], RESOLVED_DIGITS + 2) - 1, -1, -1):
        s = (s + digits[:, k]) / B
    return s


@dataclass
class MultiGraphSample:
    t0: np.ndarray
    digits: np.ndarray
    lo: np.ndarray  # (N, bands)
    hi: np.ndarray
    half_width: np.ndarray
    residual: np.ndarray
    depth: int
    bone_tol: float
    mode: str = "random"
    _s: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def s(self):
        if self._s is None:
            self._s = _digits_to_s(self.digits)
        return self._s

    @property
    def width(self):
        return self.hi - self.lo

    @property
    def is_bone(self):
        return self.width > self.bone_tol

    @property
    def cardinality(self):
        """Number of bands whose fibre is a point, per base point."""
        return (~self.is_bone).sum(axis=1)

    def cardinality_histogram(self):
        vals, counts = np.unique(self.cardinality, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}

    def bone_fraction(self, band=None):
        bones = self.is_bone if band is None else self.is_bone[:, band]
        return float(bones.mean())

    @property
    def max_residual(self):
        return float(self.residual.max())

    def attractors(self, k):
        return [FiberAttractor(i, None, self.depth, float(self.lo[k, i]), float(self.hi[k, i]),
                               bool(self.is_bone[k, i]), float(self.half_width[k, i]))
                for i in range(self.lo.shape[1])]

    def summary(self):
        return {
            "count": int(self.lo.shape[0]),
            "depth": self.depth,
            "bone_tol": self.bone_tol,
            "mode": self.mode,
            "cardinality_histogram": self.cardinality_histogram(),
            "bone_fraction": self.bone_fraction(),
            "bone_fraction_by_band": [self.bone_fraction(i) for i in range(self.lo.shape[1])],
            "max_width": float(self.width.max()),
            "max_residual": self.max_residual,
        }

    def records(self):
        """Per-(point, band) rows: t, s, band, lo, hi, depth, is_bone, residual."""
        rows = []
        s = self.s
        for k in range(self.lo.shape[0]):
            for i in range(self.lo.shape[1]):
                rows.append((float(self.t0[k]), float(s[k]), i, float(self.lo[k, i]),
                             float(self.hi[k, i]), self.depth, bool(self.is_bone[k, i]),
                             float(self.residual[k, i])))
        return rows


def _chunk_sizes(count, chunk=CHUNK):
    return [min(chunk, count - j) for j in range(0, count, chunk)]


def sample_multigraph(sys: SkewSystem, sampler, count: int, depth: int,
                      bone_tol: float = BONE_TOL, mode: str = "random",
                      workers: int = 1) -> MultiGraphSample:
    """Fibre attractors of every band over sampled base points.

    ``mode="random"`` draws Lebesgue-typical solenoid points; ``"special"``
    forces all pre-orbit digits to 0, so every pre-image lies in the arc
    where the fibre map is ``f0``.  Work is split into fixed-size chunks
    with their own sampler streams, so results do not depend on ``workers``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    nb = len(sys.bands)

    def run(job):
        j, n = job
        sub = sampler.child(j)
        t0, dig = sub.special(n, depth) if mode == "special" else sub.solenoid(n, depth)
        out = np.empty((5, n, nb))
        for i in range(nb):
            lo, hi = pullback_arrays(sys, i, t0, dig, depth)
            hlo, hhi = pullback_arrays(sys, i, t0, dig, depth // 2)
            out[0, :, i], out[1, :, i], out[2, :, i] = lo, hi, hhi - hlo
            out[3, :, i] = residual_arrays(sys, i, t0, dig, depth)
        return t0, dig, out

    jobs = list(enumerate(_chunk_sizes(count)))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, jobs))
    else:
        parts = [run(jb) for jb in jobs]
    t0 = np.concatenate([p[0] for p in parts])
    dig = np.concatenate([p[1] for p in parts])
    out = np.concatenate([p[2] for p in parts], axis=1)
    return MultiGraphSample(t0, dig, out[0], out[1], out[2], out[3], depth, bone_tol, mode)


@dataclass
class USCReport:
    center: FiberAttractor
    radius: float
    shared_digits: int
    neighbor_lo: np.ndarray
    neighbor_hi: np.ndarray

    @property
    def excess(self):
        """Hausdorff excess of neighbour fibres over the centre fibre."""
        e = np.maximum(self.center.lo - self.neighbor_lo, self.neighbor_hi - self.center.hi)
        return float(max(e.max(), 0.0))

    @property
    def neighbor_widths(self):
        return self.neighbor_hi - self.neighbor_lo

    @property
    def diameter_bound_holds(self):
        return bool(np.all(self.neighbor_widths <= self.center.width + 2 * self.excess + 1e-15))


def usc_probe(sys: SkewSystem, i: int, p: BasePoint, radius: float, count: int, depth: int,
              rng: Optional[np.random.Generator] = None, bone_tol: float = BONE_TOL) -> USCReport:
    """Compare the fibre at ``p`` with fibres at random points within ``radius``.

    A neighbour shares the first ``floor(log4(1/radius))`` pre-orbit digits
    of ``p`` (so its ``s`` is within ``radius``), has ``t`` within
    ``radius``, and continues with Lebesgue-random digits.
    """
    _require_preorbit(p)
    rng = rng if rng is not None else np.random.default_rng(0)
    center = pullback_fiber(sys, i, p, depth, bone_tol)
    own = point_digits(p, depth)
    if radius <= 0:
        m = depth
    else:
        m = min(depth, max(0, int(math.floor(-math.log(radius) / math.log(B)))))
    digits = rng.integers(0, B, size=(count, depth), dtype=np.uint8)
    digits[:, :m] = own[:m]
    t = np.mod(p.t + radius * rng.uniform(-1.0, 1.0, count), 1.0) if radius > 0 \
        else np.full(count, p.t)
    lo, hi = pullback_arrays(sys, i, t, digits, depth)
    return USCReport(center, radius, m, lo, hi)


def collapse_envelope(sys: SkewSystem, i: int, depth: int) -> float:
    """Width of the slowest-collapsing unperturbed fibre family at ``depth``.

    Pure ``f0`` and pure ``f1`` compositions (pre-orbits parked in one arc)
    shrink only polynomially because ``Df = 1`` at the pinch points.
    """
    b = sys.bands[i]
    widths = []
    for f in (b.f0, b.f1):
        f = getattr(f, "base", f)
        lo, hi = b.lo, b.hi
        for _ in range(depth):
            lo, hi = float(f._f(lo)), float(f._f(hi))
        widths.append(hi - lo)
    return max(widths)
