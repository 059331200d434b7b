"""Ergodic estimators: Birkhoff averages, Kingman sup-rates, graph Lyapunov
exponents, SRB histograms and graph measures.

Every Monte-Carlo estimator splits its samples into independent groups and
reports a standard error from the spread of group means, so autocorrelation
along orbits is accounted for.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .fiber_maps import _smoothstep
from .base_dynamics import B, BaseMeasureSampler, Baker, ForwardStream, Solenoid, point_digits
from .invariant_graph import CHUNK, _chunk_sizes, pullback_arrays
from .skew_system import SkewSystem

GROUPS = 20
FLUSH = 256  # histogram index buffer, in steps

Observable = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _smooth_bin(lo, hi, ramp=1.0 / 64):
    """Indicator of ``[lo, hi]`` with quintic ramps of width ``ramp`` centred on the edges."""
    def phi(t, x):
        x = np.asarray(x, dtype=float)
        up = _smoothstep(np.clip((x - lo) / ramp + 0.5, 0.0, 1.0))
        down = _smoothstep(np.clip((x - hi) / ramp + 0.5, 0.0, 1.0))
        return up - down
    return phi


def default_observables(n_bins: int = 16):
    """``[(name, phi(t, x)), ...]``: x, x^2, cos 2 pi t, x sin 2 pi t and smoothed x-bins."""
    obs = [
        ("x", lambda t, x: np.asarray(x, dtype=float)),
        ("x2", lambda t, x: np.asarray(x, dtype=float) ** 2),
        ("cos2pit", lambda t, x: np.cos(2 * np.pi * np.asarray(t)) + 0 * np.asarray(x)),
        ("xsin2pit", lambda t, x: np.sin(2 * np.pi * np.asarray(t)) * np.asarray(x)),
    ]
    for k in range(n_bins):
        obs.append((f"bin{k:02d}", _smooth_bin(k / n_bins, (k + 1) / n_bins)))
    return obs


@dataclass
class EmpiricalMeasure:
    """Weighted atoms on base x fibre.

    ``mass`` has shape ``(groups, atoms)``: row ``g`` is the mass that group
    ``g`` of independent samples put on each atom.  Histogram measures use
    bin centres as atoms.
    """

    t: np.ndarray
    x: np.ndarray
    mass: np.ndarray
    band: int = 0
    shape: Optional[tuple] = None  # (nt, nx) for histograms
    x_range: Optional[tuple] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.mass = np.atleast_2d(np.asarray(self.mass, dtype=float))
        if np.any(self.mass < 0):
            raise ValueError("negative mass")
        total = self.mass.sum()
        if not total > 0:
            raise ValueError("measure has no mass")
        self.mass = self.mass / total

    @property
    def weights(self):
        return self.mass.sum(axis=0)

    @property
    def total(self):
        return float(self.weights.sum())

    def _group_means(self, vals):
        gm = self.mass.sum(axis=1)
        keep = gm > 0
        return (self.mass[keep] @ vals) / gm[keep]

    def integrate(self, phi: Observable) -> float:
        return float(self.weights @ phi(self.t, self.x))

    def stderr(self, phi: Observable) -> float:
        g = self._group_means(phi(self.t, self.x))
        if g.size < 2:
            return float("nan")
        return float(g.std(ddof=1) / np.sqrt(g.size))

    def is_histogram(self):
        return self.shape is not None


def measure_discrepancy(muA: EmpiricalMeasure, muB: EmpiricalMeasure,
                        observables: Optional[Sequence] = None) -> float:
    """Max over observables of ``|int phi dmuA - int phi dmuB|``."""
    if muA.band != muB.band:
        raise ValueError("measures live on different bands")
    return max(r[1] for r in observable_table(muA, muB, observables))


def measure_discrepancy_any(muA, muB, observables=None) -> float:
    """As ``measure_discrepancy`` without the same-band precondition."""
    return max(r[1] for r in observable_table(muA, muB, observables))


def observable_table(muA, muB, observables=None):
    """Rows ``(name, |difference|, combined standard error)``."""
    observables = default_observables() if observables is None else observables
    rows = []
    for name, phi in observables:
        d = abs(muA.integrate(phi) - muB.integrate(phi))
        s = float(np.hypot(muA.stderr(phi), muB.stderr(phi)))
        rows.append((name, d, s))
    return rows


# -- Birkhoff averages ---------------------------------------------------------------

def birkhoff_series(sys: SkewSystem, observable: Observable, start, n: int, burn_in: int = 0,
                    rng=None) -> np.ndarray:
    """Values of ``observable`` along ``F^k(start)`` for ``k = burn_in .. burn_in+n-1``."""
    p, x = start
    i = sys.band_of(x)
    s0 = None if not isinstance(p, (Baker, Solenoid)) else p.s
    stream = ForwardStream(p.t, s0, rng)
    x = np.array([float(x)])
    out = np.empty(n)
    for k in range(burn_in + n):
        if k >= burn_in:
            out[k - burn_in] = observable(stream.t, x)[0]
        x = sys.fiber(i, stream.t, x)
        stream.advance()
    return out


def birkhoff_average(sys: SkewSystem, observable: Observable, start, n: int, burn_in: int = 0,
                     rng=None) -> float:
    return float(birkhoff_series(sys, observable, start, n, burn_in, rng).mean())


def batch_stderr(series: np.ndarray, batches: int = GROUPS) -> float:
    m = np.array([b.mean() for b in np.array_split(series, batches)])
    return float(m.std(ddof=1) / np.sqrt(batches))


# -- Kingman sup-rates ---------------------------------------------------------------

def _sup_jobs(sys: SkewSystem, i: int, ts, rows, starts, lengths, grid: int = 512,
              candidates: int = 2, xtol: float = 1e-13):
    """``log sup_x D f^L(x)`` over band ``i`` for many base-time windows at once.

    Job ``j`` composes the fibre maps at ``ts[rows[j], starts[j] : starts[j] + lengths[j]]``.
    A grid pass locates the best local maxima; each is refined by bisection
    on the analytic derivative of ``log D f^L``.  For monotone C^1
    compositions this derivative supremum is the Lipschitz constant.
    """
    b = sys.bands[i]
    ts = np.atleast_2d(np.asarray(ts, dtype=float))
    rows, starts, lengths = (np.asarray(a, dtype=np.int64) for a in (rows, starts, lengths))
    nj = rows.size
    out = np.zeros(nj)
    if nj == 0:
        return out
    key = rows * (ts.shape[1] + 1) + starts
    ukey, inv = np.unique(key, return_inverse=True)
    ur, ua = ukey // (ts.shape[1] + 1), ukey % (ts.shape[1] + 1)
    xs = np.linspace(b.lo, b.hi, grid)
    h = xs[1] - xs[0]
    lmax = int(lengths.max())
    want = set(int(v) for v in lengths)

    # grid pass, one trajectory bundle per distinct window start
    x = np.broadcast_to(xs, (ukey.size, grid)).copy()
    acc = np.zeros_like(x)
    rec = {}
    for k in range(lmax):
        t = ts[ur, np.minimum(ua + k, ts.shape[1] - 1)][:, None]
        fx, dx = sys.fiber_and_deriv(i, t, x)
        acc += np.log(dx)
        x = fx
        if k + 1 in want:
            rec[k + 1] = acc.copy()
    vals = np.stack([rec[int(L)][u] for L, u in zip(lengths, inv)])  # (nj, grid)
    out[:] = vals.max(axis=1)

    pad = np.pad(vals, ((0, 0), (1, 1)), constant_values=-np.inf)
    is_loc = (pad[:, 1:-1] >= pad[:, :-2]) & (pad[:, 1:-1] >= pad[:, 2:])
    score = np.where(is_loc, vals, -np.inf)
    cand = np.argsort(-score, axis=1)[:, :candidates]
    ok = np.take_along_axis(score, cand, axis=1) > -np.inf
    cj = np.repeat(np.arange(nj), candidates)[ok.ravel()]
    cx = xs[cand.ravel()[ok.ravel()]]
    lo = np.maximum(cx - h, b.lo)
    hi = np.minimum(cx + h, b.hi)
    cr, ca, cl = rows[cj], starts[cj], lengths[cj]
    cmax = int(cl.max())
    while np.any(hi - lo > xtol):
        mid = 0.5 * (lo + hi)
        x = mid.copy()
        g = np.zeros_like(x)
        dg = np.zeros_like(x)
        prod = np.ones_like(x)
        gL = np.zeros_like(x)
        dgL = np.zeros_like(x)
        for k in range(cmax):
            t = ts[cr, np.minimum(ca + k, ts.shape[1] - 1)]
            d1 = sys.fiber(i, t, x, 1)
            d2 = sys.fiber(i, t, x, 2)
            dg += d2 / d1 * prod
            prod *= d1
            g += np.log(d1)
            x = sys.fiber(i, t, x)
            hit = cl == k + 1
            gL[hit], dgL[hit] = g[hit], dg[hit]
        np.maximum.at(out, cj, gL)
        up = dgL > 0
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    return out


def sup_log_derivative(sys: SkewSystem, i: int, ts, grid: int = 512) -> float:
    """``log sup_x D f^m(x)`` over band ``i`` along base times ``ts``."""
    ts = np.asarray(ts, dtype=float)
    if ts.size == 0:
        return 0.0
    return float(_sup_jobs(sys, i, ts[None, :], [0], [0], [ts.size], grid)[0])


DEFAULT_LADDER = (1, 2, 4, 8, 16, 32, 40, 64, 128, 256)


@dataclass
class KingmanEstimate:
    band: int
    ladder: tuple
    log_sigma: np.ndarray  # log sigma_m for m in ladder
    triples: list = field(default_factory=list)  # (m, k, log s_{m+k}, log s_m + log s_k o S^m)

    @property
    def rates(self):
        return self.log_sigma / np.asarray(self.ladder, dtype=float)

    @property
    def running_inf(self):
        return np.minimum.accumulate(self.rates)

    @property
    def estimate(self):
        return float(self.running_inf[-1])

    def submultiplicative(self, tol: float = 1e-9) -> bool:
        return all(lhs <= rhs + tol for _, _, lhs, rhs in self.triples)

    @property
    def worst_gap(self):
        """Largest ``log s_{m+k} - (log s_m + log s_k o S^m)``; non-positive when consistent."""
        return max((lhs - rhs for _, _, lhs, rhs in self.triples), default=float("-inf"))


def base_times(t0, n: int, rng=None) -> np.ndarray:
    """``t_0 .. t_{n-1}`` of forward base orbits, shape ``(len(t0), n)``."""
    stream = ForwardStream(t0, None, rng)
    out = np.empty((stream.t.size, n))
    for k in range(n):
        out[:, k] = stream.t
        stream.advance()
    return out


def _ladder(m_ladder):
    ladder = tuple(sorted(set(int(m) for m in m_ladder)))
    if not ladder or ladder[0] < 1:
        raise ValueError("ladder entries must be >= 1")
    return ladder


def kingman_rate(sys: SkewSystem, i: int, p, m_ladder=DEFAULT_LADDER, rng=None,
                 grid: int = 512, check_pairs: bool = True) -> KingmanEstimate:
    """``(1/m) log sigma_{m,i}(p)`` along the ladder, with a submultiplicativity table.

    ``rng`` continues base digits past double resolution; without it the
    orbit of a double collapses to ``t = 0`` after about 27 steps.
    """
    ladder = _ladder(m_ladder)
    mmax = ladder[-1]
    ts = base_times([p.t], 2 * mmax, rng)
    pairs = [(m, k) for m in ladder for k in ladder if m + k <= mmax] if check_pairs else []
    direct = sorted(set(ladder) | {m + k for m, k in pairs})
    jobs = [(0, L) for L in direct] + [(m, k) for m, k in pairs]
    vals = _sup_jobs(sys, i, ts, [0] * len(jobs), [a for a, _ in jobs], [L for _, L in jobs], grid)
    table = dict(zip(jobs, vals))
    logs = np.array([table[(0, m)] for m in ladder])
    triples = [(m, k, float(table[(0, m + k)]), float(table[(0, m)] + table[(m, k)]))
               for m, k in pairs]
    return KingmanEstimate(i, ladder, logs, triples)


@dataclass
class MonteCarloEstimate:
    values: np.ndarray

    @property
    def mean(self):
        return float(self.values.mean())

    @property
    def stderr(self):
        return float(self.values.std(ddof=1) / np.sqrt(self.values.size)) if self.values.size > 1 \
            else float("nan")

    def excludes_zero(self, k: float = 3.0):
        return abs(self.mean) > k * self.stderr

    def summary(self):
        return {"mean": self.mean, "stderr": self.stderr, "count": int(self.values.size)}


def _map_chunks(run, count, workers, chunk=CHUNK):
    jobs = list(enumerate(_chunk_sizes(count, chunk)))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(run, jobs))
    return [run(jb) for jb in jobs]


def kingman_ensemble(sys: SkewSystem, i: int, sampler: BaseMeasureSampler, count: int,
                     m_ladder=(1, 2, 4, 8, 16, 32, 64, 128, 256), grid: int = 256,
                     workers: int = 1) -> MonteCarloEstimate:
    """Running-infimum Kingman rate at the top of the ladder over Lebesgue-random points."""
    ladder = _ladder(m_ladder)

    def run(job):
        j, n = job
        sub = sampler.child(j)
        ts = base_times(sub.circle(n), ladder[-1], sub.rng)
        L = len(ladder)
        rows = np.repeat(np.arange(n), L)
        vals = _sup_jobs(sys, i, ts, rows, np.zeros_like(rows), np.tile(ladder, n), grid)
        rates = vals.reshape(n, L) / np.asarray(ladder, dtype=float)
        return rates.min(axis=1)

    return MonteCarloEstimate(np.concatenate(_map_chunks(run, count, workers, chunk=50)))


# -- graph exponents -----------------------------------------------------------------

def graph_lyapunov(sys: SkewSystem, i: int, sampler: BaseMeasureSampler, count: int, n: int,
                   depth: int = 400, workers: int = 1) -> MonteCarloEstimate:
    """``(1/n) sum log Df`` along forward orbits started on the pullback graph."""
    def run(job):
        j, c = job
        sub = sampler.child(j)
        t0, dig = sub.solenoid(c, depth)
        y = pullback_arrays(sys, i, t0, dig, depth)[0]
        stream = ForwardStream(t0, None, sub.rng)
        acc = np.zeros(c)
        for _ in range(n):
            fy, dy = sys.fiber_and_deriv(i, stream.t, y)
            acc += np.log(dy)
            y = fy
            stream.advance()
        return acc / n

    return MonteCarloEstimate(np.concatenate(_map_chunks(run, count, workers)))


def graph_lyapunov_point(sys: SkewSystem, i: int, p, n: int, depth: int = 400, rng=None) -> float:
    """Single-orbit graph exponent (``rng`` continues base digits past double resolution)."""
    d = point_digits(p, depth, rng)[None, :]
    y = pullback_arrays(sys, i, [p.t], d, depth)[0]
    stream = ForwardStream(p.t, None, rng)
    acc = 0.0
    for _ in range(n):
        fy, dy = sys.fiber_and_deriv(i, stream.t, y)
        acc += float(np.log(dy[0]))
        y = fy
        stream.advance()
    return acc / n


def graph_lyapunov_space(sys: SkewSystem, i: int, sampler: BaseMeasureSampler, count: int,
                         depth: int = 400) -> MonteCarloEstimate:
    """Space average of ``log Df_{t0}(gamma(p))`` over the base measure."""
    t0, dig = sampler.solenoid(count, depth)
    y = pullback_arrays(sys, i, t0, dig, depth)[0]
    return MonteCarloEstimate(np.log(sys.fiber(i, t0, y, order=1)))


# -- measures ------------------------------------------------------------------------

def graph_measure(sys: SkewSystem, i: int, sampler: BaseMeasureSampler, count: int,
                  depth: int = 400, groups: int = GROUPS) -> EmpiricalMeasure:
    """Equal-weight atoms at ``(t0, gamma_i(p))`` for Lebesgue-random ``p``."""
    t0, dig = sampler.solenoid(count, depth)
    x = pullback_arrays(sys, i, t0, dig, depth)[0]
    return _atoms(t0, x, i, groups, {"kind": "graph", "depth": depth, "digits": dig})


def _atoms(t, x, band, groups, meta=None):
    n = t.size
    g = min(groups, n)
    mass = np.zeros((g, n))
    mass[np.arange(n) % g, np.arange(n)] = 1.0
    return EmpiricalMeasure(t, x, mass, band, meta=meta or {})


def advance_measure(sys: SkewSystem, mu: EmpiricalMeasure) -> EmpiricalMeasure:
    """Push atoms one step forward under the skew product."""
    if mu.is_histogram():
        raise ValueError("advance_measure needs an atom measure")
    x = sys.fiber(mu.band, mu.t, mu.x)
    t = np.mod(B * mu.t, 1.0)
    return EmpiricalMeasure(t, x, mu.mass.copy(), mu.band, meta=dict(mu.meta))


def invariance_defect(sys: SkewSystem, mu: EmpiricalMeasure, phi: Observable):
    """``(int phi o F dmu - int phi dmu, standard error)`` from paired atom differences."""
    nu = advance_measure(sys, mu)
    diff = lambda t, x: phi(nu.t, nu.x) - phi(mu.t, mu.x)  # noqa: E731
    return mu.integrate(diff), mu.stderr(diff)


@dataclass
class SRBResult:
    measure: EmpiricalMeasure
    support_distance: float  # max |x_n - gamma(S^n p)| after burn-in
    t_ks: float  # KS distance of the t-marginal from uniform


def srb_estimate(sys: SkewSystem, i: int, sampler: BaseMeasureSampler, n_points: int,
                 n_iter: int, burn_in: int, bins=(128, 256), depth: int = 400,
                 groups: int = GROUPS, workers: int = 1) -> SRBResult:
    """Time-averaged histogram of Lebesgue-random starts in band ``i``.

    Each start also carries the graph point over the same base point, so the
    distance between the orbit and the invariant graph is measured directly.
    Start ``k`` feeds group ``k mod groups``.
    """
    if min(n_points, n_iter) < 1 or burn_in < 0:
        raise ValueError("budgets must be positive")
    nt, nx = bins
    b = sys.bands[i]
    g = min(groups, n_points)

    def run(job):
        j, c = job
        sub = sampler.child(j)
        t0, dig = sub.solenoid(c, depth)
        x = b.lo + (b.hi - b.lo) * sub.rng.random(c)
        y = pullback_arrays(sys, i, t0, dig, depth)[0]
        grp = (j * CHUNK + np.arange(c)) % g
        stream = ForwardStream(t0, None, sub.rng)
        hist = np.zeros(g * nt * nx)
        tsum = np.zeros(nt * nx)
        xsum = np.zeros(nt * nx)
        buf = np.empty((FLUSH, c), dtype=np.int64)
        filled = 0
        dist = 0.0
        for k in range(burn_in + n_iter):
            if k >= burn_in:
                it = np.minimum((stream.t * nt).astype(np.int64), nt - 1)
                ix = np.clip(((x - b.lo) / (b.hi - b.lo) * nx).astype(np.int64), 0, nx - 1)
                buf[filled] = (grp * nt + it) * nx + ix
                cell = it * nx + ix
                tsum += np.bincount(cell, stream.t, minlength=tsum.size)
                xsum += np.bincount(cell, x, minlength=xsum.size)
                filled += 1
                if filled == FLUSH:
                    hist += np.bincount(buf.ravel(), minlength=hist.size)
                    filled = 0
                dist = max(dist, float(np.abs(x - y).max()))
            x = sys.fiber(i, stream.t, x)
            y = sys.fiber(i, stream.t, y)
            stream.advance()
        hist += np.bincount(buf[:filled].ravel(), minlength=hist.size)
        return hist, dist, tsum, xsum

    parts = _map_chunks(run, n_points, workers)
    hist = sum(p[0] for p in parts).reshape(g, nt * nx)
    dist = max(p[1] for p in parts)
    count = hist.sum(axis=0)
    tc = (np.arange(nt) + 0.5) / nt
    xc = b.lo + (np.arange(nx) + 0.5) / nx * (b.hi - b.lo)
    T, X = (a.ravel() for a in np.meshgrid(tc, xc, indexing="ij"))
    # atoms at the per-cell centroid of the visits; empty cells keep their centre
    occ = count > 0
    T[occ] = sum(p[2] for p in parts)[occ] / count[occ]
    X[occ] = sum(p[3] for p in parts)[occ] / count[occ]
    mu = EmpiricalMeasure(T, X, hist, i, (nt, nx), (b.lo, b.hi),
                          {"kind": "srb", "n_points": n_points, "n_iter": n_iter,
                           "burn_in": burn_in})
    tm = mu.weights.reshape(nt, nx).sum(axis=1)
    ks = float(np.abs(np.cumsum(tm) - (np.arange(nt) + 1) / nt).max())
    return SRBResult(mu, dist, ks)


def fiber_concentration(mu: EmpiricalMeasure, t_bins: Optional[int] = None) -> float:
    """Mass-weighted mean over t-bins of the conditional standard deviation of x.

    ``t_bins`` must divide the histogram's t resolution; coarser t-bins merge
    columns, so the value grows with bin width when mass sits on a graph.
    """
    if not mu.is_histogram():
        raise ValueError("fiber_concentration needs a histogram measure")
    nt, nx = mu.shape
    t_bins = nt if t_bins is None else t_bins
    if nt % t_bins:
        raise ValueError("t_bins must divide the histogram resolution")
    w = mu.weights.reshape(t_bins, -1)
    xs = mu.x.reshape(t_bins, -1)
    m = w.sum(axis=1)
    keep = m > 0
    mean = (w * xs).sum(axis=1)[keep] / m[keep]
    var = (w * xs**2).sum(axis=1)[keep] / m[keep] - mean**2
    return float(m[keep] @ np.sqrt(np.maximum(var, 0.0)))


def support_distance(mu: EmpiricalMeasure, sample, band: Optional[int] = None,
                     block: int = 2048) -> float:
    """One-sided Hausdorff distance from the atoms carrying mass to a sampled attractor.

    ``sample`` is a ``MultiGraphSample``; the attractor is the union of
    vertical segments ``{t_k} x [lo_k, hi_k]``, and distances use the
    periodic sup-metric in ``t``.
    """
    band = mu.band if band is None else band
    keep = mu.weights > 0
    t, x = mu.t[keep], mu.x[keep]
    st, lo, hi = sample.t0, sample.lo[:, band], sample.hi[:, band]
    worst = 0.0
    for a in range(0, t.size, block):
        dt = np.abs(t[a:a + block, None] - st[None, :])
        dt = np.minimum(dt, 1.0 - dt)
        xa = x[a:a + block, None]
        dx = np.maximum(np.maximum(lo[None, :] - xa, xa - hi[None, :]), 0.0)
        worst = max(worst, float(np.maximum(dt, dx).min(axis=1).max()))
    return worst
