"""Acceptance criteria, one test each.

Every test prints a ``[PASS]``/``[FAIL]`` line (collected again in the
terminal summary) with the measured numbers, the tolerance and the runtime.
Run with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest

from skewgraphs.base_dynamics import BaseMeasureSampler, Circle, s_digits
from skewgraphs.cli import main as cli_main
from skewgraphs.ergodic import (advance_measure, default_observables, graph_measure,
                                invariance_defect, kingman_ensemble, kingman_rate,
                                measure_discrepancy, observable_table, srb_estimate,
                                support_distance)
from skewgraphs.fiber_maps import (CubicPinch, PaperPoly, certify_covering, find_fixed_points,
                                   validate_weak_pair)
from skewgraphs.invariant_graph import residual_arrays, sample_multigraph
from skewgraphs.skew_system import default_system, perturb
from skewgraphs.thermodynamics import (lifted_pressure_check, neg_log_deriv, pressure_separated,
                                       pushforward_equilibrium, shipped_potentials,
                                       transfer_pressure, variational_check)

RESULTS = []
LOG4 = math.log(4)


@contextmanager
def criterion(number, title, limit_s=None):
    """Time a criterion body; the body fills ``rec`` with ``ok`` and ``detail``."""
    rec = {"ok": False, "detail": "did not finish"}
    t0 = time.perf_counter()
    try:
        yield rec
    finally:
        dt = time.perf_counter() - t0
        ok = bool(rec["ok"])
        timing = f"{dt:.1f}s"
        if limit_s is not None:
            timing += f" (limit {limit_s:g}s)"
            ok = ok and dt < limit_s
        line = f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {rec['detail']}; {timing}"
        RESULTS.append(line)
        print(line)
        rec["passed"] = ok
    assert rec["passed"], line


def zscore(d, se):
    """``|d| / se``; an observable with zero spread on both sides must match exactly."""
    d = abs(d)
    if se > 0:
        return d / se
    return 0.0 if d == 0 else math.inf


@pytest.fixture(scope="module")
def ref():
    return default_system()


@pytest.fixture(scope="module")
def bony(ref):
    return perturb(ref, 0.3)


def test_01_example_map():
    with criterion(1, "example map fixed point", 1.0) as rec:
        fps = find_fixed_points(PaperPoly())
        x, d = fps[0] if fps else (float("nan"), float("nan"))
        rec["ok"] = len(fps) == 1 and abs(x - 0.466) <= 0.005 and 0.90 <= d <= 1.02
        rec["detail"] = (f"{len(fps)} fixed point(s), x*={x:.6f} (0.466+-0.005), "
                         f"Df={d:.4f} in [0.90,1.02]")


def test_02_weak_pair():
    with criterion(2, "weak-pair certification", 1.0) as rec:
        f0 = CubicPinch(0.18, 2.0, domain=(0.08, 0.42))
        f1 = CubicPinch(0.32, 2.0, domain=(0.08, 0.42))
        rep = validate_weak_pair(f0, f1, (0.08, 0.42), covering=(0.20, 0.30))
        cov = certify_covering(f0, f1, (0.20, 0.30))
        rec["ok"] = rep.ok and rep.caverage_min_margin > 0.05 and cov
        failed = [k for k, v in rep.passed.items() if not v]
        rec["detail"] = (f"conditions failed={failed}, margin={rep.caverage_min_margin:.4f} (>0.05), "
                         f"B=(0.20,0.30) covered={cov}")


def test_03_invariance(ref):
    with criterion(3, "invariance residual at depth 120", 10.0) as rec:
        smp = BaseMeasureSampler(2024, 3)
        t, s = smp.baker(1000)
        digits = s_digits(s, 120, smp.rng)  # digits past double precision are nu-random
        res = max(float(residual_arrays(ref, i, t, digits, 120).max()) for i in range(2))
        rec["ok"] = res < 1e-6
        rec["detail"] = f"max residual={res:.3e} (<1e-6) over 1000 baker points, both bands"


def test_04_cardinality(ref):
    with criterion(4, "multi-graph cardinality", 30.0) as rec:
        ms = sample_multigraph(ref, BaseMeasureSampler(2024, 4), 1000, 400, workers=4)
        # a fibre is a point when its width is below the bound and still shrinking with depth
        point = (ms.width < ms.bone_tol) & (ms.width <= ms.half_width)
        frac = float((point.sum(axis=1) == 2).mean())
        rec["ok"] = frac >= 0.99
        rec["detail"] = (f"fraction with 2 point-attractors={frac:.4f} (>=0.99), depth 400, "
                         f"max width={ms.width.max():.2e}, max half-depth width="
                         f"{ms.half_width.max():.2e}")


def test_05_bones(bony):
    with criterion(5, "bone dichotomy at eta=0.3", 30.0) as rec:
        g0 = bony.bands[0].f0
        roots = [x for x, _ in find_fixed_points(g0)]
        oracle = max(roots) - min(roots)
        spc = sample_multigraph(bony, BaseMeasureSampler(2024, 51), 200, 400, mode="special")
        rnd = sample_multigraph(bony, BaseMeasureSampler(2024, 52), 1000, 400, workers=4)
        err = float(np.abs(spc.width[:, 0] - oracle).max())
        bones = rnd.bone_fraction()
        rec["ok"] = err < 1e-4 and bones < 0.01
        rec["detail"] = (f"special width error={err:.2e} (<1e-4, oracle {oracle:.7f}), "
                         f"random bone fraction={bones:.4f} (<0.01), depth 400")


def test_06_kingman(ref, bony):
    with criterion(6, "Kingman rates and submultiplicativity", 120.0) as rec:
        gaps, parts, ok = [], [], True
        for eta, sysm in ((0.0, ref), (0.3, bony)):
            for i in range(2):
                for k, t in enumerate((0.1234, 0.6789)):
                    est = kingman_rate(sysm, i, Circle(t), rng=np.random.default_rng(k))
                    gaps.append(est.worst_gap)
                    ok &= est.submultiplicative(1e-9)
                mc = kingman_ensemble(sysm, i, BaseMeasureSampler(2024, (6, i, int(eta * 10))),
                                      100, workers=4)
                ok &= mc.mean < -0.01 and mc.excludes_zero(3.0)
                parts.append(f"eta={eta} band {i}: {mc.mean:.4f}+-{mc.stderr:.1e}")
        rec["ok"] = ok
        rec["detail"] = (f"worst submultiplicativity gap={max(gaps):.2e} (<=1e-9); "
                         + "; ".join(parts) + " (<-0.01, 3 sigma excludes 0)")


def test_07_srb(ref):
    with criterion(7, "SRB ensembles vs graph measure", 120.0) as rec:
        A = srb_estimate(ref, 0, BaseMeasureSampler(2024, 71), 500, 10_000, 1000, workers=4)
        B = srb_estimate(ref, 0, BaseMeasureSampler(2024, 72), 500, 10_000, 1000, workers=4)
        g = graph_measure(ref, 0, BaseMeasureSampler(2024, 73), 20_000)
        disc = measure_discrepancy(A.measure, B.measure)
        worst = 0.0
        for mu in (A.measure, B.measure):
            for _, d, se in observable_table(mu, g):
                worst = max(worst, zscore(d, se))
        rec["ok"] = disc < 0.05 and worst <= 3.0
        rec["detail"] = (f"A-B discrepancy={disc:.2e} (<0.05), worst |diff|/sigma vs graph "
                         f"measure={worst:.2f} (<=3), {len(default_observables())} observables")


def test_08_pressure():
    with criterion(8, "pressure exactness", 30.0) as rec:
        p0, _ = transfer_pressure(shipped_potentials()["zero"])
        pn, soln = transfer_pressure(neg_log_deriv())
        dens = float(np.abs(soln.density * soln.resolution - 1.0).max())
        seps = {}
        for name, pot in shipped_potentials().items():
            tr = p0 if name == "zero" else (pn if name == "neglog4" else transfer_pressure(pot)[0])
            sep = pressure_separated(pot, workers=4)
            seps[name] = abs(sep.value - tr.value)
        rec["ok"] = (abs(p0.value - LOG4) < 1e-6 and abs(pn.value) < 1e-9 and dens < 1e-6
                     and max(seps.values()) < 0.1)
        rec["detail"] = (f"|P(0)-log4|={abs(p0.value - LOG4):.1e} (<1e-6), |P(-log4)|="
                         f"{abs(pn.value):.1e} (<1e-9), density dev={dens:.1e} (<1e-6), "
                         "separated vs transfer: "
                         + ", ".join(f"{k}={v:.1e}" for k, v in seps.items()) + " (<0.1)")


def test_09_variational():
    with criterion(9, "variational inequality on periodic orbits", 10.0) as rec:
        parts, ok = [], True
        for name, pot in shipped_potentials().items():
            res, _ = transfer_pressure(pot)
            rep = variational_check(pot, res, 6, zero_pressure=LOG4)
            ok &= rep.orbit_bound_holds
            parts.append(f"{name}: P={rep.pressure:.4f} >= {rep.max_orbit_average:.4f}")
        rec["ok"] = ok
        rec["detail"] = f"{rep.orbits} orbits of period <=6; " + "; ".join(parts)


def test_10_lifting():
    with criterion(10, "pressure lifting circle vs baker", 60.0) as rec:
        reps = [lifted_pressure_check(pot, workers=4) for pot in shipped_potentials().values()]
        rec["ok"] = all(r.passed for r in reps)
        rec["detail"] = ", ".join(f"{r.potential}: |{r.circle_transfer:.4f}-{r.baker_separated:.4f}|"
                                  f"={r.difference:.1e}" for r in reps) + " (<0.15)"


def test_11_equilibrium(ref):
    with criterion(11, "equilibrium pushforward for -log 4", 60.0) as rec:
        pot = neg_log_deriv()
        _, sol = transfer_pressure(pot)
        eq = pushforward_equilibrium(ref, 0, sol, pot, BaseMeasureSampler(2024, 111), 10_000)
        g = graph_measure(ref, 0, BaseMeasureSampler(2024, 112), 10_000)
        z_graph = max(zscore(d, se) for _, d, se in observable_table(eq, g))
        z_inv = max(zscore(d, se) for d, se in
                    (invariance_defect(ref, eq, phi) for _, phi in default_observables()))
        ms = sample_multigraph(ref, BaseMeasureSampler(2024, 113), 3000, 400, workers=4)
        hd = support_distance(eq, ms)
        nu = advance_measure(ref, eq)
        rec["ok"] = z_graph <= 3 and z_inv <= 3 and hd < 1e-2 and abs(nu.total - 1) < 1e-12
        rec["detail"] = (f"max |diff|/sigma vs graph={z_graph:.2f} (<=3), one-step invariance "
                         f"max |defect|/sigma={z_inv:.2f} (<=3), support distance={hd:.4f} (<1e-2)")


CLI_CONFIG = """\
[run]
seed = 7
[budgets]
depth = 200
count = 600
n = 500
burn_in = 100
bins = 32x64
srb_points = 300
kingman_count = 120
kingman_m = 64
resolution = 128, 256
epsilons = 0.0625, 0.03125
n_max = 4
baker_epsilons = 0.125
baker_n_max = 3
[sweep]
command = graph
etas = 0.0, 0.3
"""


def test_12_determinism(tmp_path):
    with criterion(12, "CLI determinism with 1 and 4 workers") as rec:
        cfg = tmp_path / "run.ini"
        cfg.write_text(CLI_CONFIG)
        commands = ["validate", "graph", "bones", "lyapunov", "srb", "pressure", "equilibrium",
                    "sweep"]
        same, status = [], []
        for cmd in commands:
            outs = []
            for w in (1, 4, 4):
                d = tmp_path / f"{cmd}_{w}_{len(outs)}"
                status.append(cli_main([cmd, "--config", str(cfg), "--out", str(d),
                                        "--workers", str(w)]))
                outs.append({p.relative_to(d).as_posix(): p.read_bytes()
                             for p in sorted(d.rglob("*.csv"))})
            same.append(outs[0] == outs[1] == outs[2] and len(outs[0]) > 0)
        rec["ok"] = all(same) and not any(status)
        rec["detail"] = ("byte-identical CSVs: "
                         + ", ".join(f"{c}={'yes' if s else 'NO'}" for c, s in zip(commands, same))
                         + f"; exit codes {sorted(set(status))}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
