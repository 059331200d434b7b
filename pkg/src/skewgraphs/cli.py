"""Command-line runner.

    skewgraphs <command> --config <path> [--set section.key=value]... [--seed N]
               [--out DIR] [--workers N]

Exit status: 0 success, 2 configuration parse error, 3 validation failure,
4 numerical failure.  Every run writes ``manifest.json`` and
``summary.json``; tabular output is CSV whose first line is a
``# config_hash=...`` comment and whose second line documents units.
"""
from __future__ import annotations

import argparse
import json
import math
import sys as _sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .base_dynamics import BaseMeasureSampler, UnsupportedVariant
from .config import ConfigParseError, RunConfig, load_config
from .ergodic import (default_observables, graph_lyapunov, graph_lyapunov_space, graph_measure,
                      kingman_ensemble, kingman_rate, observable_table, srb_estimate,
                      support_distance)
from .fiber_maps import find_fixed_points
from .invariant_graph import sample_multigraph
from .skew_system import FiberEscapeError, PerturbationRejected, perturb, validate_system
from .thermodynamics import (ConfigurationError, NumericalError, parse_potential,
                             pressure_separated, pushforward_equilibrium, transfer_pressure,
                             variational_check)

COMMANDS = ("validate", "graph", "bones", "lyapunov", "srb", "pressure", "equilibrium", "sweep")
EXIT_OK, EXIT_PARSE, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3, 4

# stream ids keep every random consumer on its own sampler
STREAM = {"graph": 1, "bones_random": 2, "bones_special": 3, "kingman": 4, "lyap": 5,
          "lyap_space": 6, "srb_a": 7, "srb_b": 8, "srb_graph": 9, "equilibrium": 10,
          "eq_graph": 11, "kingman_point": 12}


class ValidationFailure(RuntimeError):
    pass


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


class Output:
    """Collects CSV tables and the summary; files are written once at the end."""

    def __init__(self, out_dir: Path, cfg_hash: str, command: str):
        self.dir = Path(out_dir)
        self.hash = cfg_hash
        self.command = command
        self.tables = {}
        self.summary = {}

    def table(self, name, header, rows, units):
        self.tables[name] = (header, rows, units)

    def write(self):
        self.dir.mkdir(parents=True, exist_ok=True)
        written = []
        for name, (header, rows, units) in self.tables.items():
            path = self.dir / name
            with open(path, "w", newline="") as fh:
                fh.write(f"# config_hash={self.hash} command={self.command}\n")
                fh.write(f"# units: {units}\n")
                fh.write(",".join(header) + "\n")
                for r in rows:
                    fh.write(",".join(_cell(v) for v in r) + "\n")
            written.append(name)
        with open(self.dir / "summary.json", "w") as fh:
            json.dump(_jsonable(self.summary), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return written + ["summary.json"]


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if math.isfinite(f) else str(f)
    return o


# -- commands ------------------------------------------------------------------------

def _validate_rows(rep):
    return [(name, band, ok, req, wit) for name, band, ok, wit, req in rep.checks]


def cmd_validate(cfg: RunConfig, out: Output, workers: int):
    rep = validate_system(cfg.system())
    out.table("validate.csv", ["check", "band", "passed", "required", "witness"],
              _validate_rows(rep), "passed/required are 0/1 flags; witness is free text")
    out.summary.update(passed=rep.passed, admissible=rep.admissible,
                       failures=[f"{c[0]}[band {c[1]}]" for c in rep.failures()])
    return EXIT_OK if rep.admissible else EXIT_INVALID


def _system_checked(cfg, out):
    sysm = cfg.system()
    rep = validate_system(sysm)
    if not rep.admissible:
        out.table("validate.csv", ["check", "band", "passed", "required", "witness"],
                  _validate_rows(rep), "passed/required are 0/1 flags; witness is free text")
        out.summary["failures"] = [f"{c[0]}[band {c[1]}]" for c in rep.failures(True)]
        raise ValidationFailure("system failed validation: " + ", ".join(out.summary["failures"]))
    return sysm


def cmd_graph(cfg, out, workers):
    sysm = _system_checked(cfg, out)
    b = cfg.values["budgets"]
    if sysm.base == "circle":
        raise ValidationFailure("graph needs a base with pre-orbits (baker or solenoid)")
    ms = sample_multigraph(sysm, BaseMeasureSampler(cfg.seed, STREAM["graph"]), b["count"],
                           b["depth"], b["bone_tol"], workers=workers)
    out.table("graph.csv", ["t", "s", "band", "lo", "hi", "depth", "is_bone", "residual"],
              ms.records(), "t,s base coordinates in [0,1); lo,hi,residual fibre coordinates; "
                            "depth in pullback steps")
    out.summary.update(ms.summary())
    return EXIT_OK


def _oracle_bone_width(sysm, band):
    f0 = sysm.bands[band].f0
    attract = [x for x, d in find_fixed_points(f0) if d < 1.0]
    return max(attract) - min(attract) if len(attract) >= 2 else 0.0


def cmd_bones(cfg, out, workers):
    base_sys = _system_checked(cfg, out)
    b = cfg.values["budgets"]
    band = cfg["system.eta_band"]
    rows = []
    for eta in cfg["sweep.etas"]:
        try:
            sysm = perturb(base_sys, eta, cfg["system.w"], band)
        except PerturbationRejected:
            rows.append((eta, band, "rejected", "", "", "", "", b["depth"], b["bone_tol"]))
            continue
        rnd = sample_multigraph(sysm, BaseMeasureSampler(cfg.seed, STREAM["bones_random"]),
                                b["count"], b["depth"], b["bone_tol"], workers=workers)
        spc = sample_multigraph(sysm, BaseMeasureSampler(cfg.seed, STREAM["bones_special"]),
                                max(1, b["count"] // 10), b["depth"], b["bone_tol"],
                                mode="special", workers=workers)
        rows.append((eta, band, "ok", rnd.bone_fraction(band), spc.bone_fraction(band),
                     float(spc.width[:, band].mean()), _oracle_bone_width(sysm, band),
                     b["depth"], b["bone_tol"]))
    out.table("bones.csv", ["eta", "band", "status", "random_bone_fraction",
                            "special_bone_fraction", "special_mean_width", "oracle_width",
                            "depth", "bone_tol"], rows,
              "fractions in [0,1]; widths in fibre units; depth in pullback steps")
    out.summary["rows"] = len(rows)
    return EXIT_OK


def cmd_lyapunov(cfg, out, workers):
    sysm = _system_checked(cfg, out)
    b = cfg.values["budgets"]
    m = b["kingman_m"]
    ladder = tuple(sorted({2**k for k in range(int(math.log2(m)) + 1)} | {m}))
    rows, triples = [], []
    for i in range(len(sysm.bands)):
        ke = kingman_ensemble(sysm, i, BaseMeasureSampler(cfg.seed, (STREAM["kingman"], i)),
                              b["kingman_count"], ladder, workers=workers)
        gl = graph_lyapunov(sysm, i, BaseMeasureSampler(cfg.seed, (STREAM["lyap"], i)),
                            b["count"], b["n"], b["depth"], workers=workers)
        gs = graph_lyapunov_space(sysm, i, BaseMeasureSampler(cfg.seed, (STREAM["lyap_space"], i)),
                                  b["count"], b["depth"])
        for name, est in (("kingman_running_inf", ke), ("graph_birkhoff", gl),
                          ("graph_space", gs)):
            rows.append((i, name, est.mean, est.stderr, est.values.size))
        pt = BaseMeasureSampler(cfg.seed, (STREAM["kingman_point"], i))
        kr = kingman_rate(sysm, i, _point(pt), ladder, rng=pt.rng)
        triples += [(i, mm, k, lhs, rhs) for mm, k, lhs, rhs in kr.triples]
        out.summary[f"band{i}"] = {"kingman": ke.summary(), "graph": gl.summary(),
                                   "space": gs.summary(),
                                   "submultiplicative": kr.submultiplicative()}
    out.table("lyapunov.csv", ["band", "estimator", "mean", "stderr", "count"], rows,
              "exponents in nats per step")
    out.table("kingman_pairs.csv", ["band", "m", "k", "log_sigma_m_plus_k", "log_sigma_m_plus_log_sigma_k_shifted"],
              triples, "log Lipschitz constants in nats")
    return EXIT_OK


def _point(sampler):
    from .base_dynamics import Baker
    t, s = sampler.baker(1)
    return Baker(float(t[0]), float(s[0]))


def cmd_srb(cfg, out, workers):
    sysm = _system_checked(cfg, out)
    b = cfg.values["budgets"]
    hist_rows, obs_rows = [], []
    obs = default_observables()
    for i in range(len(sysm.bands)):
        res = {}
        for tag in ("a", "b"):
            res[tag] = srb_estimate(sysm, i, BaseMeasureSampler(cfg.seed, (STREAM["srb_" + tag], i)),
                                    b["srb_points"], b["n"], b["burn_in"], b["bins"], b["depth"],
                                    workers=workers)
        g = graph_measure(sysm, i, BaseMeasureSampler(cfg.seed, (STREAM["srb_graph"], i)),
                          b["count"], b["depth"])
        A, Bm = res["a"].measure, res["b"].measure
        nt, nx = A.shape
        lo, hi = A.x_range
        for tag, r in res.items():
            w = r.measure.weights
            for cell in np.nonzero(w)[0]:
                jt, jx = divmod(int(cell), nx)
                hist_rows.append((tag, i, jt / nt, (jt + 1) / nt, lo + (hi - lo) * jx / nx,
                                  lo + (hi - lo) * (jx + 1) / nx, w[cell]))
        ab = {n: (d, s) for n, d, s in observable_table(A, Bm, obs)}
        ag = {n: (d, s) for n, d, s in observable_table(A, g, obs)}
        bg = {n: (d, s) for n, d, s in observable_table(Bm, g, obs)}
        for name, phi in obs:
            obs_rows.append((i, name, A.integrate(phi), Bm.integrate(phi), g.integrate(phi),
                             ab[name][0], ag[name][0], ag[name][1], bg[name][0], bg[name][1]))
        ms = sample_multigraph(sysm, BaseMeasureSampler(cfg.seed, (STREAM["srb_graph"], 100 + i)),
                               b["count"], b["depth"], b["bone_tol"], workers=workers)
        out.summary[f"band{i}"] = {
            "discrepancy_ab": max(v[0] for v in ab.values()),
            "max_z_a_graph": max(d / s if s > 0 else (0.0 if d == 0 else math.inf)
                                 for d, s in ag.values()),
            "max_z_b_graph": max(d / s if s > 0 else (0.0 if d == 0 else math.inf)
                                 for d, s in bg.values()),
            "t_marginal_ks": [res["a"].t_ks, res["b"].t_ks],
            "orbit_to_graph_distance": [res["a"].support_distance, res["b"].support_distance],
            "support_distance_to_sample": [support_distance(A, ms), support_distance(Bm, ms)],
        }
    out.table("srb_hist.csv", ["ensemble", "band", "t_lo", "t_hi", "x_lo", "x_hi", "mass"],
              hist_rows, "t in circle units; x in fibre units; mass is a probability (nonzero cells)")
    out.table("srb_observables.csv", ["band", "observable", "srb_a", "srb_b", "graph",
                                      "diff_ab", "diff_a_graph", "sigma_a_graph",
                                      "diff_b_graph", "sigma_b_graph"], obs_rows,
              "integrals of dimensionless observables; sigma is the combined standard error")
    return EXIT_OK


def _potentials(cfg):
    try:
        return [(p, parse_potential(p)) for p in cfg["pressure.potentials"]]
    except ValueError as e:
        raise ConfigParseError(str(e), 0, 0, "pressure.potentials")


def cmd_pressure(cfg, out, workers):
    b = cfg.values["budgets"]
    rows, var_rows = [], []
    zero = None
    for name, pot in _potentials(cfg):
        tp, sol = transfer_pressure(pot, b["resolution"])
        for _, res, val, cauchy, gap in tp.diagnostics:
            rows.append((name, "transfer", "", res, val, cauchy, gap))
        sc = pressure_separated(pot, b["epsilons"], b["n_max"], "circle", workers=workers)
        for eps, n, avg, growth, size in sc.diagnostics:
            rows.append((name, "separated-circle", eps, n, avg, growth, size))
        sb = pressure_separated(pot, b["baker_epsilons"], b["baker_n_max"], "baker",
                                workers=workers)
        for eps, n, avg, growth, size in sb.diagnostics:
            rows.append((name, "separated-baker", eps, n, avg, growth, size))
        if zero is None:
            zero = transfer_pressure(parse_potential("zero"), (max(b["resolution"]),))[0].value
        vc = variational_check(pot, tp, 6, zero)
        var_rows.append((name, vc.pressure, vc.max_orbit_average, vc.orbits, vc.passed))
        out.summary[name] = {"transfer": tp.value, "separated_circle": sc.value,
                             "separated_baker": sb.value, "spectral_gap": sol.gap,
                             "variational_ok": vc.passed}
    out.table("pressure.csv", ["potential", "method", "epsilon", "n_or_resolution", "value",
                               "cauchy_or_growth", "gap_or_set_size"], rows,
              "value in nats: log eigenvalue (transfer) or (1/n) log Z_n (separated); "
              "growth = log Z_n - log Z_{n-1}")
    out.table("variational.csv", ["potential", "pressure", "max_periodic_average", "orbits",
                                  "passed"], var_rows, "nats; periodic orbits up to period 6")
    return EXIT_OK


def cmd_equilibrium(cfg, out, workers):
    sysm = _system_checked(cfg, out)
    b = cfg.values["budgets"]
    dens_rows, atom_rows = [], []
    for k, (name, pot) in enumerate(_potentials(cfg)):
        tp, sol = transfer_pressure(pot, (max(b["resolution"]),))
        N = sol.resolution
        for j, m in enumerate(sol.density):
            dens_rows.append((name, j, j / N, (j + 1) / N, m))
        summ = {"pressure": tp.value}
        for i in range(len(sysm.bands)):
            mu = pushforward_equilibrium(sysm, i, sol, pot,
                                         BaseMeasureSampler(cfg.seed, (STREAM["equilibrium"], k, i)),
                                         b["count"], b["depth"])
            w = mu.weights
            for a in range(mu.t.size):
                atom_rows.append((name, i, mu.t[a], mu.x[a], w[a]))
            g = graph_measure(sysm, i, BaseMeasureSampler(cfg.seed, (STREAM["eq_graph"], i)),
                              b["count"], b["depth"])
            tab = observable_table(mu, g)
            summ[f"band{i}"] = {"discrepancy_vs_graph": max(d for _, d, _ in tab),
                                "max_z_vs_graph": max(d / s if s > 0 else (0.0 if d == 0 else math.inf)
                                                      for _, d, s in tab)}
        out.summary[name] = summ
    out.table("density.csv", ["potential", "cell", "t_lo", "t_hi", "mass"], dens_rows,
              "t in circle units; mass is the equilibrium probability of the cell")
    out.table("equilibrium_atoms.csv", ["potential", "band", "t", "x", "weight"], atom_rows,
              "t base coordinate; x fibre coordinate on the invariant graph; weight sums to 1")
    return EXIT_OK


HANDLERS = {"validate": cmd_validate, "graph": cmd_graph, "bones": cmd_bones,
            "lyapunov": cmd_lyapunov, "srb": cmd_srb, "pressure": cmd_pressure,
            "equilibrium": cmd_equilibrium}


def run_command(command, cfg: RunConfig, out_dir, workers=1, stderr=None):
    """Run one command and write its files; returns the exit status."""
    stderr = stderr or _sys.stderr
    t0 = time.perf_counter()
    out = Output(out_dir, cfg.hash(), command)
    outputs = []
    try:
        if command == "sweep":
            status = _sweep(cfg, out, workers, stderr)
            outputs += [f"eta_{eta!r}/" for eta in cfg["sweep.etas"]]
        else:
            status = HANDLERS[command](cfg, out, workers)
    except ConfigParseError as e:
        print(f"parse error: {e}", file=stderr)
        status = EXIT_PARSE
    except (ValidationFailure, UnsupportedVariant, PerturbationRejected, ConfigurationError) as e:
        print(f"validation failure: {e}", file=stderr)
        out.summary["error"] = str(e)
        status = EXIT_INVALID
    except (NumericalError, FiberEscapeError, FloatingPointError, ArithmeticError) as e:
        trace = traceback.format_exc()
        print(f"numerical failure: {e}\n{trace}", file=stderr)
        out.summary["error"] = str(e)
        out.summary["trace"] = getattr(e, "trace", None) or trace.splitlines()[-5:]
        status = EXIT_NUMERIC
    outputs = out.write() + outputs
    manifest = {"config_hash": cfg.hash(), "version": __version__, "command": command,
                "seed": cfg.seed, "workers": workers, "status": status,
                "wall_time_s": round(time.perf_counter() - t0, 3),
                "outputs": outputs + ["manifest.json"]}
    with open(Path(out_dir) / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return status


def _sweep(cfg, out, workers, stderr):
    rows = []
    worst = EXIT_OK
    for eta in cfg["sweep.etas"]:
        sub = cfg.with_value("system", "eta", repr(float(eta)))
        st = run_command(cfg["sweep.command"], sub, out.dir / f"eta_{eta!r}", workers, stderr)
        rows.append((eta, cfg["sweep.command"], st, f"eta_{eta!r}"))
        worst = max(worst, st)
    out.table("sweep.csv", ["eta", "command", "status", "directory"], rows,
              "eta is the perturbation size; status is the sub-run exit code")
    return worst


def build_parser():
    p = argparse.ArgumentParser(prog="skewgraphs", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="run configuration file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="SECTION.KEY=VALUE", help="override a configuration value")
    p.add_argument("--seed", type=int, default=None, help="seed (overrides SEED and the config)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--workers", type=int, default=1, help="worker threads (results do not depend on it)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides, args.seed)
    except ConfigParseError as e:
        print(f"parse error: {e}", file=_sys.stderr)
        return EXIT_PARSE
    except OSError as e:
        print(f"parse error: cannot read config: {e}", file=_sys.stderr)
        return EXIT_PARSE
    if args.workers < 1:
        print("parse error: --workers must be >= 1", file=_sys.stderr)
        return EXIT_PARSE
    return run_command(args.command, cfg, Path(args.out), args.workers)


if __name__ == "__main__":  # pragma: no cover
    _sys.exit(main())
