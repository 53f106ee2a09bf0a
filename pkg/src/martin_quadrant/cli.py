"""``mq`` command-line front end.

Every subcommand writes its CSV output(s) and a ``manifest.json`` into the
output directory.  The exit status is 0 iff every verdict passed and no
error was raised.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
from pathlib import Path
import sys
import time
import traceback

import numpy as np

from . import __version__, acceptance, geometry
from ._lattice import Box
from .boundary_functionals import (boundary_expectation, exit_distribution, h_function,
                                   harmonicity_residual)
from .config import RunConfig, load_config, parse_config
from .green_solver import green_column
from .lattice_measure import validate
from .martin_limits import (RaySpec, log_asymptotics, ney_spitzer_check, ratio_limit_check,
                            theorem1_convergence, uniform_bound_scan, xi_report)
from .processes import exit_probability_mc, twisted_kernel

log = logging.getLogger("martin_quadrant")

LIMIT_EXPERIMENTS = ("theorem1", "neyspitzer", "lograte", "ratiolimit", "xi", "bounds")
VERIFY_BUDGET = 600.0


def fmt(v) -> str:
    """CSV cell text; reals use the shortest round-trip representation."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue().encode("utf-8")


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if np.isfinite(f) else repr(f)
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    return v


class Run:
    """Collects outputs, verdicts and timings for one invocation."""

    def __init__(self, out: Path, cfg: RunConfig, subcommand: str, seed: int, threads: int):
        self.out = out
        self.cfg = cfg
        self.subcommand = subcommand
        self.seed = seed
        self.threads = threads
        self.verdicts = {}
        self.details = {}
        self.times = {}
        self.files = []
        self.error = None

    def write_csv(self, name, header, rows):
        data = csv_bytes(header, rows)
        (self.out / name).write_bytes(data)
        self.files.append(name)
        return data

    def write_json(self, name, payload):
        (self.out / name).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
        self.files.append(name)

    def manifest(self) -> dict:
        return {"tool": "mq", "version": __version__, "subcommand": self.subcommand,
                "config": self.cfg.echo(), "seed": self.seed, "threads": self.threads,
                "verdicts": self.verdicts, "details": self.details, "times": self.times,
                "outputs": self.files, "error": self.error,
                "passed": self.error is None and all(self.verdicts.values())}


def _twist(cfg: RunConfig):
    if cfg.twist == "auto":
        return geometry.a_of_q(cfg.measure, cfg.q).vec
    if cfg.twist == "zero":
        return np.zeros(2)
    parts = cfg.twist.replace(",", " ").split()
    if len(parts) != 2:
        raise ValueError("twist must be 'auto', 'zero' or two numbers")
    return np.array([float(s) for s in parts])


def cmd_validate(run: Run, args):
    rep = validate(run.cfg.measure)
    rows = [["h1_irreducible", rep.h1_irreducible], ["mean_x", rep.mean[0]],
            ["mean_y", rep.mean[1]], ["h2_killed_irreducible", rep.h2_killed_irreducible],
            ["h3_finite_phi", rep.h3_finite_phi],
            ["h4_coordinates_aperiodic", rep.h4_coordinates_aperiodic],
            ["period_2d", rep.period_2d]]
    run.write_csv("validate.csv", ["quantity", "value"], rows)
    run.verdicts["hypotheses"] = bool(rep.all_ok)
    run.details["notes"] = list(rep.notes)


def cmd_geometry(run: Run, args):
    n = args.sweep if args.sweep is not None else run.cfg.sweep
    if n < 1:
        raise ValueError("--sweep must be positive")
    m = run.cfg.measure
    rows = []
    worst_phi = worst_ang = 0.0
    for k in range(n):
        th = 0.5 * np.pi * k / (n - 1) if n > 1 else 0.0
        q = (float(np.cos(th)), float(np.sin(th)))
        sp = geometry.a_of_q(m, q)
        e_phi = abs(geometry.phi(m, sp.a) - 1.0)
        e_ang = geometry.spectral_angle_error(m, sp)
        worst_phi, worst_ang = max(worst_phi, e_phi), max(worst_ang, e_ang)
        rows.append([k, th, q[0], q[1], sp.a[0], sp.a[1], sp.rate, e_phi, e_ang])
    run.write_csv("geometry.csv", ["k", "theta", "q1", "q2", "a1", "a2", "rate",
                                   "phi_deviation", "angle_deviation"], rows)
    run.verdicts["on_boundary"] = worst_phi <= 1e-10
    run.verdicts["normal_matches_q"] = worst_ang <= 1e-8


def cmd_mc(run: Run, args):
    cfg = run.cfg
    a = _twist(cfg)
    z0 = tuple(cfg.mc_start)
    est = exit_probability_mc(twisted_kernel(cfg.measure, a), z0, cfg.mc_horizon, cfg.mc_samples,
                              seed=run.seed, threads=run.threads)
    ex = exit_distribution(cfg.measure, "Quadrant", a, z0, Box.around([z0], 100))
    dp = boundary_expectation(ex, "one", "tau_lt_inf") * float(np.exp(-a @ np.array(z0)))
    run.write_csv("mc.csv", ["a1", "a2", "x0", "y0", "n", "horizon", "seed", "estimate", "stderr",
                             "exits_tau1", "exits_tau2", "killed", "dp_value"],
                  [[a[0], a[1], z0[0], z0[1], est.n, est.horizon, est.seed, est.estimate,
                    est.stderr, est.exits_tau1, est.exits_tau2, est.killed, dp]])
    # at critical twists the horizon cut biases the estimate low
    run.verdicts["mc_matches_dp"] = abs(est.estimate - dp) <= 3 * est.stderr + 1e-3
    run.details["phi"] = geometry.phi(cfg.measure, a)


def cmd_green(run: Run, args):
    cfg = run.cfg
    a = _twist(cfg)
    tgt = tuple(cfg.target)
    margin = cfg.margin or 40
    half = cfg.box
    box = Box((tgt[0] - half - margin, tgt[0] + half + margin),
              (tgt[1] - half - margin, tgt[1] + half + margin), margin)
    col = green_column(cfg.measure, cfg.kind, a, tgt, box)
    ib = box.inner()
    x0, x1, y0, y1 = ib.region(cfg.kind)
    rows = []
    for x in range(x0, x1 + 1):
        for y in range(y0, y1 + 1):
            v = col.value((x, y))
            rows.append([x, y, v, col.log_untwisted((x, y)) if v > 0 else None])
    run.write_csv("green.csv", ["x", "y", "twisted_value", "log_green"], rows)
    run.details.update(truncation_error=col.truncation_error, residual=col.residual,
                       twist=list(col.twist))
    run.verdicts["linear_residual"] = col.residual <= 1e-11
    run.verdicts["truncation_finite"] = bool(np.isfinite(col.truncation_error))


def cmd_harmonic(run: Run, args):
    cfg = run.cfg
    m = cfg.measure
    n = cfg.box
    margin = cfg.margin or 100
    box = Box((1 - margin, n + margin), (1 - margin, n + margin), margin)
    h = h_function(m, cfg.q, box, tol=cfg.tol_bracket)
    rows = []
    worst, vmin = 0.0, np.inf
    for x in range(1, n + 1):
        for y in range(1, n + 1):
            r = harmonicity_residual(h, m, (x, y)) if h.trusted((x, y)) else None
            v = h((x, y))
            worst = max(worst, r or 0.0)
            vmin = min(vmin, v)
            rows.append([x, y, v, r])
    run.write_csv("harmonic.csv", ["x", "y", "h", "residual"], rows)
    run.details.update(branch=h.branch, bracket_width=h.bracket_width, a=list(h.a.a))
    run.verdicts["harmonic"] = worst <= cfg.tol_bracket
    run.verdicts["positive"] = bool(vmin > 0)
    run.verdicts["bracket"] = h.bracket_width <= cfg.tol_bracket


def _flatten(rows):
    header = []
    for key, v in rows[0].items():
        if isinstance(v, tuple):
            header += [f"{key}_x", f"{key}_y"]
        else:
            header.append(key)
    out = []
    for row in rows:
        line = []
        for v in row.values():
            line += list(v) if isinstance(v, tuple) else [v]
        out.append(line)
    return header, out


def cmd_limits(run: Run, args):
    cfg = run.cfg
    m = cfg.measure
    exp = args.experiment
    ray = RaySpec(cfg.q, cfg.radii)
    margin = cfg.margin or None
    tol = cfg.tol_gap
    if exp == "bounds":
        scan = uniform_bound_scan(m, cfg.kind if cfg.kind != "Quadrant" else "Free", ray,
                                  cfg.sigma, z0=tuple(cfg.z0), margin=margin)
        rows = [[r, u, (scan.c_lower[i] if scan.c_lower else None)]
                for i, (r, u) in enumerate(zip(scan.radii, scan.c_upper))]
        run.write_csv("limits_bounds.csv", ["radius", "c_upper", "c_lower"], rows)
        run.write_json("limits_bounds.json", {"finite": scan.finite, "stable": scan.stable,
                                              "passed": scan.passed})
        run.verdicts["bounds"] = scan.passed
        return
    if exp == "theorem1":
        rep = theorem1_convergence(m, ray, cfg.points, tuple(cfg.z0), margin, tol)
    elif exp == "neyspitzer":
        rep = ney_spitzer_check(m, ray, cfg.points, margin=margin, tolerance=tol)
    elif exp == "lograte":
        rep = log_asymptotics(m, cfg.kind, ray, tuple(cfg.z0), margin, tol)
    elif exp == "ratiolimit":
        rep = ratio_limit_check(m, cfg.kind, ray, tuple(cfg.z0), tuple(cfg.w), margin=margin,
                                tolerance=tol)
    elif exp == "xi":
        rep = xi_report(m, cfg.q, cfg.delta, tuple(cfg.z0), cfg.radii, tol, margin)
    else:
        raise ValueError(f"unknown experiment {exp!r}")
    header, rows = _flatten(rep.rows)
    run.write_csv(f"limits_{exp}.csv", header, rows)
    run.write_json(f"limits_{exp}.json", {**rep.verdict, "extra": rep.extra})
    run.verdicts[exp] = rep.passed


def _criterion_files(res, prefix):
    files = {f"{prefix}_checks.csv": (["check", "value", "threshold", "comparison", "passed"],
                                      [[c.name, c.value, c.threshold, c.op, c.passed]
                                       for c in res.checks if c.name != "runtime_within_budget"])}
    for name, (header, rows) in res.tables.items():
        files[f"{prefix}_{name}.csv"] = (header, rows)
    return files


def cmd_verify(run: Run, args):
    t_start = time.perf_counter()
    outputs = {}
    for fn in acceptance.CRITERIA:
        kwargs = {"threads": run.threads} if fn is acceptance.criterion_mc_bridge else {}
        log.info("running %s", fn.__name__)
        res = fn(run.seed, **kwargs)
        key = f"criterion_{res.number:02d}"
        print(res.summary_line(), flush=True)
        run.verdicts[key] = res.passed
        run.times[key] = res.elapsed
        run.details[key] = {"title": res.title,
                            "failed_checks": [c.name for c in res.checks if not c.passed]}
        for name, (header, rows) in _criterion_files(res, key).items():
            outputs[name] = run.write_csv(name, header, rows)
    # determinism: the only thread-dependent step is re-run on another worker count
    alt = 1 if run.threads != 1 else 2
    t0 = time.perf_counter()
    res = acceptance.criterion_mc_bridge(run.seed, threads=alt)
    again = _criterion_files(res, "criterion_03")
    same = all(csv_bytes(*again[name]) == outputs[name] for name in again)
    total = time.perf_counter() - t_start
    ok = same and total <= VERIFY_BUDGET
    run.verdicts["criterion_10"] = ok
    run.times["criterion_10"] = time.perf_counter() - t0
    run.details["criterion_10"] = {"title": "determinism and runtime",
                                   "rerun_threads": alt, "identical": same,
                                   "total_seconds": total}
    print(f"[{'PASS' if ok else 'FAIL'}] criterion 10: determinism and runtime", flush=True)


COMMANDS = {"validate": cmd_validate, "geometry": cmd_geometry, "mc": cmd_mc,
            "green": cmd_green, "harmonic": cmd_harmonic, "limits": cmd_limits,
            "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="config file (key = value lines + measure)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
    common.add_argument("--threads", type=int, help="worker threads, 0 = all cores")
    p = argparse.ArgumentParser(prog="mq", description=__doc__.splitlines()[0],
                                parents=[common])
    p.add_argument("--version", action="version", version=f"mq {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("validate", "mc", "green", "harmonic", "verify"):
        sub.add_parser(name, parents=[common])
    g = sub.add_parser("geometry", parents=[common])
    g.add_argument("--sweep", type=int, help="number of directions in the quarter circle")
    lim = sub.add_parser("limits", parents=[common])
    lim.add_argument("experiment", choices=LIMIT_EXPERIMENTS)
    return p


def _setup_logging():
    level = os.environ.get("MQ_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else parse_config("")
    except (OSError, ValueError) as exc:
        print(f"mq: config error: {exc}", file=sys.stderr)
        out = args.out if args.out is not None else Path("out")
        out.mkdir(parents=True, exist_ok=True)
        run = Run(out, parse_config(""), args.command, args.seed, args.threads)
        run.error = {"type": type(exc).__name__, "message": str(exc)}
        run.write_json("manifest.json", run.manifest())
        return 2
    seed = args.seed if args.seed is not None else cfg.seed
    if seed < 0 or seed >= 2 ** 64:
        print("mq: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    threads = args.threads if args.threads is not None else cfg.threads
    if threads < 0:
        print("mq: --threads must be >= 0", file=sys.stderr)
        return 2
    out = args.out if args.out is not None else Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    run = Run(out, cfg, args.command, seed, threads)
    t0 = time.perf_counter()
    try:
        COMMANDS[args.command](run, args)
    except Exception as exc:  # serialized into the manifest, reflected in the exit status
        log.debug("failure", exc_info=True)
        run.error = {"type": type(exc).__name__, "message": str(exc),
                     "traceback": traceback.format_exc()}
        print(f"mq {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
    run.times["total"] = time.perf_counter() - t0
    man = run.manifest()
    run.write_json("manifest.json", man)
    return 0 if man["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
