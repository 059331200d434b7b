"""Topological pressure, equilibrium states and lifted potentials.

Two independent pressure estimators for the expanding circle map
``omega(t) = 4t mod 1``:

* an Ulam discretization of the transfer operator
  ``(L g)(t) = sum_k exp(phi(y_k)) g(y_k)``, ``y_k = (t + k) / 4``, whose
  leading eigenvalue gives ``P = log lambda_1``;
* weighted sums over greedy ``(eps, n)``-separated sets, for the circle
  and for the baker map.

Separated-set sums grow like ``C(eps) exp(n P)``, so ``(1/n) log Z_n``
carries a ``log C / n`` bias that dies slowly; the headline estimate is the
growth rate ``log Z_n - log Z_{n-1}``, which cancels the prefactor.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .base_dynamics import B
from .ergodic import EmpiricalMeasure, GROUPS
from .invariant_graph import pullback_arrays
from .skew_system import SkewSystem

LOG4 = math.log(B)


class ConfigurationError(ValueError):
    """Estimator parameters cannot produce a meaningful result."""


class NumericalError(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


@dataclass(frozen=True)
class Potential:
    """Potential on the base (or on base x fibre for ``kind="fiber"``).

    kinds: ``constant`` (value), ``cosine`` (value * cos 2 pi t),
    ``neglogderiv`` (``-log 4``) and ``fiber`` (``func(t, x)``).
    """

    kind: str
    value: float = 0.0
    func: Optional[Callable] = field(default=None, compare=False)
    holder: bool = True
    name: str = ""

    def __post_init__(self):
        if self.kind not in ("constant", "cosine", "neglogderiv", "fiber"):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "fiber" and self.func is None:
            raise ValueError("fiber potential needs func(t, x)")

    @property
    def fiber_independent(self):
        return self.kind != "fiber"

    def __call__(self, t, x=None):
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.full(t.shape, float(self.value))
        if self.kind == "cosine":
            return self.value * np.cos(2 * np.pi * t)
        if self.kind == "neglogderiv":
            return np.full(t.shape, -LOG4)
        if x is None:
            raise ValueError("fiber potential needs a fibre coordinate")
        return np.asarray(self.func(t, x), dtype=float)

    def bounds(self):
        if self.kind == "constant":
            return (self.value, self.value)
        if self.kind == "cosine":
            return (-abs(self.value), abs(self.value))
        if self.kind == "neglogderiv":
            return (-LOG4, -LOG4)
        raise ValueError("bounds unknown for a fibre potential")

    @property
    def label(self):
        if self.name:
            return self.name
        return {"constant": f"const({self.value:g})", "cosine": f"cos({self.value:g})",
                "neglogderiv": "neglog4"}.get(self.kind, "fiber")


def constant(c: float) -> Potential:
    return Potential("constant", float(c))


def cosine(amplitude: float) -> Potential:
    return Potential("cosine", float(amplitude))


def neg_log_deriv() -> Potential:
    return Potential("neglogderiv")


def fiber_potential(func, name="fiber", holder=False) -> Potential:
    return Potential("fiber", func=func, holder=holder, name=name)


def shipped_potentials():
    """Potentials exercised by the acceptance suite."""
    return {"zero": constant(0.0), "neglog4": neg_log_deriv(), "cos05": cosine(0.5),
            "cos1": cosine(1.0)}


def parse_potential(spec: str) -> Potential:
    """``zero``, ``neglog4``, ``const:<c>`` or ``cos:<amplitude>``."""
    spec = spec.strip()
    if spec == "zero":
        return constant(0.0)
    if spec == "neglog4":
        return neg_log_deriv()
    kind, _, val = spec.partition(":")
    if kind == "const":
        return constant(float(val))
    if kind == "cos":
        return cosine(float(val))
    raise ValueError(f"unknown potential {spec!r}")


@dataclass
class PressureResult:
    method: str  # "separated" or "transfer"
    value: float
    diagnostics: list = field(default_factory=list)
    potential: str = ""

    def rows(self):
        """CSV rows ``(method, epsilon, n_or_resolution, value)``."""
        return [(self.method,) + tuple(r[:3]) for r in self.diagnostics]


# -- transfer operator ---------------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


def transfer_matrix(potential: Potential, resolution: int) -> sparse.csr_matrix:
    """Ulam matrix on cell averages: ``(L g)_j = sum_k w_{jk} g_{m(j,k)}``.

    ``m(j, k) = floor((j + k N) / 4)`` is the cell holding the ``k``-th
    preimage of cell ``j`` and ``w_{jk}`` averages ``exp(phi)`` over that
    preimage (4-point Gauss rule).
    """
    if not potential.fiber_independent:
        raise ConfigurationError("transfer operator needs a fibre-independent potential")
    N = int(resolution)
    if N < 4:
        raise ConfigurationError("resolution must be >= 4")
    j = np.arange(N)
    rows, cols, vals = [], [], []
    h = 1.0 / (B * N)
    for k in range(B):
        left = (j + k * N) * h
        w = np.zeros(N)
        for node, wt in zip(_GL_NODES, _GL_WEIGHTS):
            w += 0.5 * wt * np.exp(potential(left + 0.5 * h * (node + 1.0)))
        rows.append(j)
        cols.append((j + k * N) // B)
        vals.append(w)
    return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(N, N))


def _power(apply, n, tol, max_iter, v0=None, project=None):
    v = np.ones(n) / n if v0 is None else v0 / np.abs(v0).sum()
    lam = 0.0
    trace = []
    for it in range(1, max_iter + 1):
        w = apply(v)
        if project is not None:
            w = project(w)
        norm = np.abs(w).sum()
        if norm == 0:
            return 0.0, w, trace, True
        new_lam = norm
        w = w / norm
        dv = np.abs(w - v).max()
        trace.append((it, new_lam, dv))
        v = w
        if abs(new_lam - lam) <= tol * max(1.0, new_lam) and dv <= tol:
            return new_lam, v, trace, True
        lam = new_lam
    return lam, v, trace, False


@dataclass
class TransferSolution:
    resolution: int
    eigenvalue: float
    right: np.ndarray  # cell averages of the eigenfunction h
    left: np.ndarray  # cell masses of the eigenmeasure
    second: float  # modulus estimate of the second eigenvalue
    iterations: int

    @property
    def pressure(self):
        return math.log(self.eigenvalue)

    @property
    def gap(self):
        return self.eigenvalue - self.second

    @property
    def density(self):
        """Equilibrium cell masses ``left * right``, normalized."""
        m = self.left * self.right
        return m / m.sum()


def transfer_solve(potential: Potential, resolution: int, tol: float = 1e-12,
                   max_iter: int = 100_000) -> TransferSolution:
    L = transfer_matrix(potential, resolution)
    LT = L.T.tocsr()
    N = L.shape[0]
    lam, r, tr, ok = _power(L.dot, N, tol, max_iter)
    if not ok:
        raise NumericalError(f"power iteration did not converge in {max_iter} steps", tr[-10:])
    lam_l, l, tr2, ok = _power(LT.dot, N, tol, max_iter)
    if not ok:
        raise NumericalError("left power iteration did not converge", tr2[-10:])
    r = r / r.mean()
    l = l / l.sum()
    # second eigenvalue modulus by power iteration on the complement of the leading pair
    norm = float(l @ r)
    project = lambda w: w - r * (l @ w) / norm  # noqa: E731
    v0 = np.cos(2 * np.pi * (np.arange(N) + 0.5) / N) + 0.1 * np.sin(np.arange(N))
    lam2, _, _, _ = _power(L.dot, N, 1e-9, 2000, v0=project(v0), project=project)
    return TransferSolution(N, lam, r, l, lam2, len(tr))


def transfer_pressure(potential: Potential, resolutions: Sequence[int] = (256, 512, 1024),
                      tol: float = 1e-12) -> tuple[PressureResult, TransferSolution]:
    """Pressure across a resolution ladder; the finest level is the headline.

    Diagnostics rows: ``(epsilon=nan, resolution, log lambda, cauchy diff, gap)``.
    """
    sols = [transfer_solve(potential, N, tol) for N in sorted(resolutions)]
    diag = []
    prev = None
    for s in sols:
        cauchy = float("nan") if prev is None else abs(s.pressure - prev)
        diag.append((float("nan"), s.resolution, s.pressure, cauchy, s.gap))
        prev = s.pressure
    return PressureResult("transfer", sols[-1].pressure, diag, potential.label), sols[-1]


# -- separated sets ------------------------------------------------------------------

MAX_POINTS = 400_000


def _orbit_table(base, t, s, n):
    """Columns ``t_0..t_{n-1}`` (and ``s_0..s_{n-1}`` for the baker map)."""
    cols_t, cols_s = [], []
    t = t.copy()
    s = None if s is None else s.copy()
    for _ in range(n):
        cols_t.append(t)
        if s is not None:
            cols_s.append(s)
            d = np.floor(B * t)
            s = (s + d) / B
        t = np.mod(B * t, 1.0)
    return np.column_stack(cols_t), (np.column_stack(cols_s) if s is not None else None)


def _greedy_independent(n_points, pairs):
    """Greedy maximal independent set in index order of the conflict graph."""
    if len(pairs) == 0:
        return np.ones(n_points, dtype=bool)
    a, b = pairs[:, 0], pairs[:, 1]
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    starts = np.searchsorted(lo, np.arange(n_points + 1))
    keep = np.ones(n_points, dtype=bool)
    for i in range(n_points):
        if keep[i]:
            keep[hi[starts[i]:starts[i + 1]]] = False
    return keep


def _conflicts(coords, tt, ss, eps, n):
    """Pairs at ``d_n``-distance below ``eps``.

    For ``eps <= 1/8`` periodic distances below ``eps`` scale exactly by 4
    under ``omega``, so a conflict forces ``d(t_0, t_0') < eps / 4^(n-1)``;
    a low-dimensional search on ``(4^(n-1) t_0, s_0)`` finds candidates and
    the full orbit table filters them.
    """
    r = np.nextafter(eps, 0.0)
    if eps > 1.0 / 8:
        return cKDTree(coords, boxsize=1.0).query_pairs(r, p=np.inf, output_type="ndarray")
    scale = float(B ** (n - 1))
    low = [tt[:, 0] * scale] + ([ss[:, 0]] if ss is not None else [])
    box = [scale] + ([1.0] if ss is not None else [])
    low = np.mod(np.column_stack(low), box)
    cand = cKDTree(low, boxsize=box).query_pairs(r, p=np.inf, output_type="ndarray")
    if cand.size == 0:
        return cand
    d = np.abs(coords[cand[:, 0]] - coords[cand[:, 1]])
    d = np.minimum(d, 1.0 - d).max(axis=1)
    return cand[d < eps]


def separated_sum(potential: Potential, eps: float, n: int, base: str = "circle",
                  oversample: float = 2.5, max_points: int = MAX_POINTS):
    """``(log Z, |E|)`` for a greedy ``(eps, n)``-separated set ``E``.

    Candidates lie on a grid of spacing ``eps / (oversample * 4^(n-1))`` in
    ``t`` (and ``eps / oversample`` in ``s`` for the baker map), fine enough
    that greedy selection saturates.  ``d_n`` is the max over the orbit
    table of the periodic sup-distance.
    """
    if not potential.fiber_independent:
        raise ConfigurationError("separated sets need a fibre-independent potential")
    nt = int(math.ceil(oversample * B ** (n - 1) / eps))
    ns = int(math.ceil(oversample / eps)) if base == "baker" else 1
    if oversample < 1 or nt < 1.0 / eps:
        raise ConfigurationError(f"grid of {nt} points too coarse for eps={eps}")
    if nt * ns > max_points:
        raise ConfigurationError(f"grid of {nt * ns} points exceeds max_points={max_points}")
    t = (np.arange(nt) + 0.5) / nt
    if base == "baker":
        T, S = np.meshgrid(t, (np.arange(ns) + 0.5) / ns, indexing="ij")
        tt, ss = _orbit_table(base, T.ravel(), S.ravel(), n)
        coords = np.hstack([tt, ss])
    elif base == "circle":
        tt, _ = _orbit_table(base, t, None, n)
        coords = tt
    else:
        raise ConfigurationError(f"unknown base {base!r}")
    pairs = _conflicts(np.mod(coords, 1.0), tt, ss if base == "baker" else None, eps, n)
    keep = _greedy_independent(coords.shape[0], pairs)
    sums = potential(tt[keep]).sum(axis=1)
    top = sums.max()
    return float(top + np.log(np.exp(sums - top).sum())), int(keep.sum())


def pressure_separated(potential: Potential, epsilons: Sequence[float] = (1 / 16, 1 / 32, 1 / 64),
                       n_max: int = 6, base: str = "circle", oversample: float = 2.5,
                       workers: int = 1) -> PressureResult:
    """Separated-set pressure; headline is ``log Z_n - log Z_{n-1}`` at ``n_max``, smallest eps.

    Diagnostics rows: ``(eps, n, (1/n) log Z_n, growth rate, |E|)``.
    """
    eps_list = sorted(set(float(e) for e in epsilons), reverse=True)
    if n_max < 2:
        raise ConfigurationError("n_max must be >= 2")
    jobs = [(e, n) for e in eps_list for n in range(1, n_max + 1)]
    run = lambda job: separated_sum(potential, job[0], job[1], base, oversample)  # noqa: E731
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            res = list(ex.map(run, jobs))
    else:
        res = [run(j) for j in jobs]
    table = dict(zip(jobs, res))
    diag = []
    for e in eps_list:
        for n in range(1, n_max + 1):
            logz, size = table[(e, n)]
            growth = logz - table[(e, n - 1)][0] if n > 1 else float("nan")
            diag.append((e, n, logz / n, growth, size))
    e0 = eps_list[-1]
    value = table[(e0, n_max)][0] - table[(e0, n_max - 1)][0]
    return PressureResult(f"separated-{base}", value, diag, potential.label)


# -- variational checks --------------------------------------------------------------

def periodic_orbit_averages(potential: Potential, max_period: int = 6):
    """Birkhoff averages of ``phi`` over every periodic orbit of period ``<= max_period``.

    Period-``p`` points are ``t = k / (4^p - 1)``; orbits are computed in exact
    integer arithmetic.  Returns rows ``(p, k_min, average)``, one per orbit
    of minimal period ``p``.
    """
    rows = []
    for p in range(1, max_period + 1):
        q = B**p - 1
        seen = np.zeros(q, dtype=bool)
        for k in range(q):
            if seen[k]:
                continue
            orbit = [k]
            j = (k * B) % q
            while j != k:
                orbit.append(j)
                j = (j * B) % q
            seen[orbit] = True
            if len(orbit) != p:
                continue  # lower minimal period, already counted
            ts = np.array(orbit, dtype=float) / q
            rows.append((p, k, float(potential(ts).mean())))
    return rows


@dataclass
class VariationalReport:
    pressure: float
    max_orbit_average: float
    worst_orbit: tuple
    zero_pressure: float
    min_potential: float
    orbits: int

    @property
    def orbit_bound_holds(self):
        return self.pressure >= self.max_orbit_average - 1e-12

    @property
    def entropy_bound_holds(self):
        return self.pressure >= self.zero_pressure + self.min_potential - 1e-9

    @property
    def passed(self):
        return self.orbit_bound_holds and self.entropy_bound_holds


def variational_check(potential: Potential, pressure: PressureResult, max_period: int = 6,
                      zero_pressure: Optional[float] = None) -> VariationalReport:
    rows = periodic_orbit_averages(potential, max_period)
    worst = max(rows, key=lambda r: r[2])
    if zero_pressure is None:
        zero_pressure = transfer_pressure(constant(0.0), (1024,))[0].value
    return VariationalReport(pressure.value, worst[2], worst, zero_pressure,
                             potential.bounds()[0], len(rows))


# -- lifted potentials and equilibrium pushforward ------------------------------------

def lift_potential(sys: SkewSystem, i: int, potential: Potential, depth: int = 400):
    """``psi_i(p) = phi(t0(p), gamma_i(p))``.

    The returned callable accepts either ``(t0, digits)`` arrays or a list of
    baker/solenoid points.
    """
    from .base_dynamics import points_to_arrays

    def psi(t0, digits=None):
        if digits is None:
            t0, digits = points_to_arrays(t0, depth)
        t0 = np.atleast_1d(np.asarray(t0, dtype=float))
        if potential.fiber_independent:
            return potential(t0)
        x = pullback_arrays(sys, i, t0, digits, depth)[0]
        return potential(t0, x)

    return psi


@dataclass
class LiftReport:
    potential: str
    circle_transfer: float
    baker_separated: float
    tol: float

    @property
    def difference(self):
        return abs(self.circle_transfer - self.baker_separated)

    @property
    def passed(self):
        return self.difference < self.tol


def lifted_pressure_check(potential: Potential, resolution: int = 1024, n_max: int = 5,
                          epsilons=(1 / 8,), tol: float = 0.15, workers: int = 1) -> LiftReport:
    """Circle transfer pressure against baker separated-set pressure of ``phi o t``."""
    if not potential.fiber_independent:
        raise ConfigurationError("lifting check needs a fibre-independent potential")
    pc = transfer_pressure(potential, (resolution,))[0].value
    pb = pressure_separated(potential, epsilons, n_max, base="baker", workers=workers).value
    return LiftReport(potential.label, pc, pb, tol)


def sample_equilibrium(sol: TransferSolution, potential: Potential, rng, count: int,
                       depth: int):
    """Draw base points from the discretized equilibrium state and its natural extension.

    ``t0`` is drawn by inverse CDF from the cell masses (uniform inside a
    cell).  Past digits follow the backward chain of the equilibrium:
    ``t_{-1} = y_k`` with probability proportional to ``exp(phi(y_k)) h(y_k)``.
    For ``phi = -log 4`` this is Lebesgue in ``t`` with uniform ``s``.
    """
    N = sol.resolution
    cdf = np.cumsum(sol.density)
    cdf /= cdf[-1]
    cell = np.minimum(np.searchsorted(cdf, rng.random(count), side="right"), N - 1)
    t0 = (cell + rng.random(count)) / N
    digits = np.empty((count, depth), dtype=np.uint8)
    t = t0.copy()
    h = sol.right
    for k in range(depth):
        y = (t[:, None] + np.arange(B)[None, :]) / B
        w = np.exp(potential(y)) * h[np.minimum((y * N).astype(np.int64), N - 1)]
        c = np.cumsum(w, axis=1)
        u = rng.random(count)[:, None] * c[:, -1:]
        d = np.minimum((u >= c).sum(axis=1), B - 1)
        digits[:, k] = d
        t = y[np.arange(count), d]
    return t0, digits


def pushforward_equilibrium(sys: SkewSystem, i: int, sol: TransferSolution, potential: Potential,
                            sampler, count: int, depth: int = 400,
                            groups: int = GROUPS) -> EmpiricalMeasure:
    """Atoms ``(t0, gamma_i(p))`` over equilibrium-distributed base points, equal weights."""
    t0, digits = sample_equilibrium(sol, potential, sampler.rng, count, depth)
    x = pullback_arrays(sys, i, t0, digits, depth)[0]
    n = t0.size
    g = min(groups, n)
    mass = np.zeros((g, n))
    mass[np.arange(n) % g, np.arange(n)] = 1.0
    return EmpiricalMeasure(t0, x, mass, i, meta={"kind": "equilibrium", "potential": potential.label,
                                                  "depth": depth, "digits": digits})
