"""Acceptance criteria run by ``mq verify`` and by the test-suite.

Each criterion returns a :class:`CriterionResult` whose ``checks`` are
(name, value, threshold, comparison) records; the criterion passes when
every check passes.  All randomness derives from the seed passed in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import time

import numpy as np

from . import geometry
from ._lattice import Box
from .boundary_functionals import (boundary_expectation, exit_distribution, h_function,
                                   harmonicity_residual, level_hit_profile, martingale_residual)
from .green_solver import check_renewal, check_twist_identity
from .lattice_measure import M1, M2, mean, period2d
from .martin_limits import (RaySpec, lambda0_grid, log_asymptotics, ney_spitzer_check,
                            ratio_limit_check, theorem1_convergence, xi_decomposition)
from .processes import exit_probability_mc, twisted_kernel

SQ2 = 1.0 / np.sqrt(2.0)


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    op: str = "<="

    @property
    def passed(self) -> bool:
        v, t = self.value, self.threshold
        if isinstance(v, float) and not np.isfinite(v):
            return False
        return {"<=": v <= t, ">=": v >= t, ">": v > t, "==": v == t}[self.op]


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)
    elapsed: float = 0.0
    budget: float = float("inf")

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary_line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        failed = [c.name for c in self.checks if not c.passed]
        tail = f" (failed: {', '.join(failed)})" if failed else ""
        return f"[{status}] criterion {self.number}: {self.title}{tail}"


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.elapsed = time.perf_counter() - t0
        res.checks.append(Check("runtime_within_budget", 1.0 if res.elapsed <= res.budget else 0.0,
                                1.0, ">="))
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def directions(n: int):
    th = 2.0 * np.pi * np.arange(n) / n
    return np.stack([np.cos(th), np.sin(th)], axis=1)


@_timed
def criterion_geometry(seed: int = 0) -> CriterionResult:
    res = CriterionResult(1, "geometry of D", budget=5.0)
    rng = np.random.default_rng([seed, 1])
    rows = []
    for m in (M1, M2):
        phi_err = ang_err = 0.0
        for k, q in enumerate(directions(64)):
            sp = geometry.a_of_q(m, q)
            e_phi = abs(geometry.phi(m, sp.a) - 1.0)
            e_ang = geometry.spectral_angle_error(m, sp)
            phi_err, ang_err = max(phi_err, e_phi), max(ang_err, e_ang)
            rows.append([m.name, k, q[0], q[1], sp.a[0], sp.a[1], sp.rate, e_phi, e_ang])
        mu = mean(m)
        a_drift = geometry.a_of_q(m, mu / np.hypot(*mu)).vec
        g_err = h_err = 0.0
        h = 1e-6
        for a in rng.uniform(-1.0, 1.0, size=(20, 2)):
            fd = np.array([(geometry.phi(m, a + h * e) - geometry.phi(m, a - h * e)) / (2 * h)
                           for e in np.eye(2)])
            g_err = max(g_err, float(np.max(np.abs(fd - geometry.grad_phi(m, a)))))
            fdh = np.array([(geometry.grad_phi(m, a + h * e) - geometry.grad_phi(m, a - h * e))
                            / (2 * h) for e in np.eye(2)])
            h_err = max(h_err, float(np.max(np.abs(fdh - geometry.hessian_phi(m, a)))))
        res.checks += [Check(f"{m.name}_phi_deviation", phi_err, 1e-10),
                       Check(f"{m.name}_angle_deviation", ang_err, 1e-8),
                       Check(f"{m.name}_a_drift_norm", float(np.max(np.abs(a_drift))), 1e-10),
                       Check(f"{m.name}_gradient_fd", g_err, 1e-8),
                       Check(f"{m.name}_hessian_fd", h_err, 1e-5)]
    res.tables["directions"] = (["measure", "k", "q1", "q2", "a1", "a2", "rate",
                                 "phi_deviation", "angle_deviation"], rows)
    return res


RENEWAL_CASES = [
    ("M1", "quadrant_vs_free", (2, 2), (10, 10)),
    ("M1", "quadrant_vs_free", (1, 1), (10, 10)),
    ("M1", "quadrant_vs_halfplane1", (2, 3), (25, 2)),
    ("M1", "quadrant_vs_free", (3, 1), (15, 4)),
    ("M1", "quadrant_vs_halfplane1", (1, 1), (12, 3)),
    ("M2", "quadrant_vs_free", (2, 2), (10, 10)),
    ("M2", "quadrant_vs_free", (1, 1), (5, 12)),
    ("M2", "quadrant_vs_halfplane1", (2, 3), (25, 2)),
    ("M2", "quadrant_vs_halfplane1", (4, 2), (20, 1)),
    ("M2", "quadrant_vs_free", (5, 5), (3, 3)),
]
MEASURES = {"M1": M1, "M2": M2}


@_timed
def criterion_identities(seed: int = 0) -> CriterionResult:
    res = CriterionResult(2, "exact identities", budget=120.0)
    rng = np.random.default_rng([seed, 2])
    rows = []
    for m, kind, ylo in ((M1, "Free", -20), (M2, "HalfPlane1", 1)):
        a = geometry.a_of_q(m, (1.0, 0.0)).vec
        box = Box((-20, 20), (ylo, ylo + 40), 0)
        pairs = [((int(rng.integers(-20, 21)), int(rng.integers(ylo, ylo + 41))),
                  (int(rng.integers(-20, 21)), int(rng.integers(ylo, ylo + 41)))) for _ in range(50)]
        r = check_twist_identity(m, kind, a, box, pairs)
        rows.append([f"twist_{m.name}_{kind}", r])
        res.checks.append(Check(f"twist_{m.name}_{kind}", r, 1e-9))
    worst = 0.0
    box = Box((-60, 60), (-60, 60), 0)
    for name, variant, z, tgt in RENEWAL_CASES:
        rc = check_renewal(MEASURES[name], variant, z, tgt, box)
        rows.append([f"renewal_{name}_{variant}_{z[0]}_{z[1]}_{tgt[0]}_{tgt[1]}", rc.residual])
        worst = max(worst, rc.residual)
    res.checks.append(Check("renewal_max_residual", worst, 1e-7))
    mart = max(martingale_residual(m, z) for m in (M1, M2)
               for z in [(1, 1), (3, 7), (10, 2), (-4, 5), (25, 25)])
    rows.append(["martingale_max_residual", mart])
    res.checks.append(Check("martingale_residual", mart, 1e-12))
    for m in (M1, M2):
        k_free = period2d(m, 12)
        k_half = period2d(m, 12, domain="halfplane1")
        rows.append([f"period_{m.name}_free", k_free])
        rows.append([f"period_{m.name}_halfplane1", k_half])
        res.checks.append(Check(f"halfplane_period_{m.name}", float(k_half), float(k_free), "=="))
    res.tables["identities"] = (["quantity", "value"], rows)
    return res


def _mc_cases(seed: int, n_cases: int = 10):
    rng = np.random.default_rng([seed, 3])
    cases = []
    while len(cases) < n_cases:
        m = (M1, M2)[len(cases) % 2]
        theta = rng.uniform(0.0, np.pi / 2)
        q = (np.cos(theta), np.sin(theta))
        amin = geometry.min_point(m)
        s = rng.uniform(0.0, 1.0)
        a = amin + s * (geometry.a_of_q(m, q).vec - amin)
        if geometry.phi(m, a) > 0.99:
            continue
        z0 = (int(rng.integers(1, 9)), int(rng.integers(1, 9)))
        cases.append((m, a, z0))
    return cases


@_timed
def criterion_mc_bridge(seed: int = 0, threads: int = 1, n: int = 100_000,
                        horizon: int = 10_000) -> CriterionResult:
    res = CriterionResult(3, "Monte Carlo vs DP exit weight", budget=180.0)
    rows = []
    worst = -np.inf
    for i, (m, a, z0) in enumerate(_mc_cases(seed)):
        ex = exit_distribution(m, "Quadrant", a, z0, Box.around([z0], 100))
        dp = boundary_expectation(ex, "one", "tau_lt_inf", detailed=True)
        dp_val = dp.value * float(np.exp(-a @ np.array(z0)))
        est = exit_probability_mc(twisted_kernel(m, a), z0, horizon, n,
                                  seed=int(np.random.SeedSequence([seed, 3, i]).generate_state(1)[0]),
                                  threads=threads)
        excess = abs(est.estimate - dp_val) - (3 * est.stderr + 1e-3)
        worst = max(worst, excess)
        rows.append([m.name, i, float(a[0]), float(a[1]), z0[0], z0[1], geometry.phi(m, a),
                     dp_val, est.estimate, est.stderr, excess <= 0])
    res.checks.append(Check("max_excess_over_3sigma_plus_bias", float(worst), 0.0))
    res.tables["mc"] = (["measure", "case", "a1", "a2", "x0", "y0", "phi", "dp", "mc", "stderr",
                         "agree"], rows)
    return res


H_DIRECTIONS = [(1.0, 0.0), (0.0, 1.0), (SQ2, SQ2), (2 / np.sqrt(5), 1 / np.sqrt(5))]


@_timed
def criterion_harmonic(seed: int = 0, window: int = 50, margin: int = 100) -> CriterionResult:
    res = CriterionResult(4, "harmonicity and positivity of h", budget=180.0)
    rows = []
    box = Box((1 - margin, window + margin), (1 - margin, window + margin), margin)
    outside = [(0, 1), (1, 0), (0, 0), (-3, 5), (5, -2), (-1, -1)]
    for m in (M1, M2):
        for q in H_DIRECTIONS:
            h = h_function(m, q, box)
            resid = vmin = 0.0
            vmin = np.inf
            for x in range(1, window + 1):
                for y in range(1, window + 1):
                    if h.trusted((x, y)):
                        resid = max(resid, harmonicity_residual(h, m, (x, y)))
                    vmin = min(vmin, h((x, y)))
            zero_out = max(abs(h(z)) for z in outside)
            tag = f"{m.name}_q({q[0]:.4f},{q[1]:.4f})"
            rows.append([m.name, q[0], q[1], h.branch, resid, vmin, zero_out, h.bracket_width])
            res.checks += [Check(f"{tag}_residual", resid, 1e-7),
                           Check(f"{tag}_min_value", float(vmin), 0.0, ">"),
                           Check(f"{tag}_outside", zero_out, 0.0, "=="),
                           Check(f"{tag}_bracket", h.bracket_width, 1e-7)]
    res.tables["harmonic"] = (["measure", "q1", "q2", "branch", "max_residual", "min_value",
                               "max_outside", "bracket_width"], rows)
    return res


@_timed
def criterion_dichotomy(seed: int = 0, size: int = 400) -> CriterionResult:
    res = CriterionResult(5, "exit dichotomy for critical and interior twists", budget=60.0)
    rows = []
    box = Box((1, size), (1, size), 0)
    for q in [(1.0, 0.0), (0.0, 1.0)]:
        a = geometry.a_of_q(M1, q).vec
        z = (3, 3)
        ex = exit_distribution(M1, "Quadrant", a, z, box)
        e = boundary_expectation(ex, "one", "tau_lt_inf", detailed=True)
        scale = float(np.exp(-a @ np.array(z)))
        mass_lo = e.lo * scale
        rows.append(["critical", q[0], q[1], z[0], z[1], ex.total_mass, ex.truncation_leak,
                     mass_lo, 1.0 - mass_lo])
        res.checks.append(Check(f"critical_q({q[0]:.0f},{q[1]:.0f})_mass", mass_lo, 1 - 1e-5, ">="))
    for k in range(1, 6):
        th = np.pi / 2 * k / 6
        q = (np.cos(th), np.sin(th))
        a = geometry.a_of_q(M1, q).vec
        z = (30, 30)
        ex = exit_distribution(M1, "Quadrant", a, z, box)
        e = boundary_expectation(ex, "one", "tau_lt_inf", detailed=True)
        scale = float(np.exp(-a @ np.array(z)))
        surv = 1.0 - e.hi * scale
        rows.append(["interior", q[0], q[1], z[0], z[1], ex.total_mass, ex.truncation_leak,
                     e.hi * scale, surv])
        res.checks.append(Check(f"interior_theta_{k}pi/12_survival", surv, 0.01, ">="))
    res.tables["dichotomy"] = (["type", "q1", "q2", "x", "y", "in_box_mass", "leak",
                                "closed_mass", "survival"], rows)
    return res


KERNEL_POINTS = [(2, 3), (4, 1), (3, 3)]


def _report_rows(rep, label):
    out = []
    for r in rep.rows:
        p = r.get("point")
        zn = r.get("z_n")
        out.append([label, r["radius"], p[0], p[1], zn[0], zn[1], r["observed"], r["target"],
                    r["relative_gap"]])
    return out


REPORT_HEADER = ["series", "radius", "x", "y", "xn", "yn", "observed", "target", "relative_gap"]


@_timed
def criterion_martin_kernel(seed: int = 0) -> CriterionResult:
    res = CriterionResult(6, "Martin kernel convergence", budget=300.0)
    rows = []
    for q, tol, tag in [((SQ2, SQ2), 0.05, "interior"), ((1.0, 0.0), 0.08, "critical")]:
        rep = theorem1_convergence(M1, RaySpec(q, (20, 30, 40, 60)), KERNEL_POINTS,
                                   tolerance=tol)
        rows += _report_rows(rep, tag)
        res.checks += [Check(f"{tag}_trend", 1.0 if rep.trend_ok else 0.0, 1.0, ">="),
                       Check(f"{tag}_final_gap", rep.final_gap, tol)]
    res.tables["theorem1"] = (REPORT_HEADER, rows)
    return res


@_timed
def criterion_asymptotics(seed: int = 0) -> CriterionResult:
    res = CriterionResult(7, "Ney-Spitzer limit and logarithmic rate", budget=300.0)
    rows = []
    radii = (20, 30, 40, 60)
    for m, q, pts, tag in [(M1, (1.0, 0.0), [(0, 3), (2, 1)], "M1_q(1,0)"),
                           (M1, (SQ2, SQ2), [(2, 1), (0, 3)], "M1_drift"),
                           (M2, (1.0, 0.0), [(2, 0)], "M2_q(1,0)")]:
        rep = ney_spitzer_check(m, RaySpec(q, radii), pts, tolerance=0.05)
        rows += _report_rows(rep, f"neyspitzer_{tag}")
        res.checks.append(Check(f"neyspitzer_{tag}_gap_r60", rep.final_gap, 0.05))
    fits = []
    for kind in ("Free", "Quadrant", "HalfPlane1"):
        rep = log_asymptotics(M1, kind, RaySpec((1.0, 0.0), (40, 60, 80)), tolerance=0.10)
        rows += _report_rows(rep, f"lograte_{kind}")
        fits.append([kind, rep.rows[-1]["observed"], rep.rows[-1]["target"],
                     rep.extra["newton_rate"], rep.rows[-1]["slope"], rep.extra["fit_rate"],
                     rep.extra["fit_log_coefficient"]])
        res.checks.append(Check(f"lograte_{kind}_gap_r80", rep.final_gap, 0.10))
        res.checks.append(Check(f"lograte_{kind}_target_vs_newton",
                                abs(rep.rows[-1]["target"] - rep.extra["newton_rate"]), 1e-9))
    res.tables["limits"] = (REPORT_HEADER, rows)
    res.tables["lograte_diagnostics"] = (["kind", "observed_r80", "target_polar", "target_newton",
                                          "slope_60_80", "fit_rate", "fit_log_coefficient"], fits)
    return res


@_timed
def criterion_ratio_xi(seed: int = 0) -> CriterionResult:
    res = CriterionResult(8, "ratio limits, principal part and lambda_0", budget=300.0)
    rows = []
    for m, kind, w in [(M1, "Free", (2, 0)), (M2, "HalfPlane1", (1, 0))]:
        rep = ratio_limit_check(m, kind, RaySpec((1.0, 0.0), (20, 30, 40, 60)), (1, 1), w,
                                tolerance=0.03)
        rows += _report_rows(rep, f"ratio_{m.name}_{kind}")
        res.checks.append(Check(f"ratio_{m.name}_{kind}_gap_r60", rep.final_gap, 0.03))
        res.checks.append(Check(f"halfplane_period_matches_{m.name}", float(rep.extra["halfplane_period"]),
                                float(rep.extra["period"]), "=="))
    for q, tol, tag in [((SQ2, SQ2), 0.02, "interior"), ((1.0, 0.0), 0.05, "critical")]:
        rec = xi_decomposition(M1, q, 0.3, (2, 2), 60)
        rows.append([f"xi_{tag}", 60.0, 2, 2, rec.z_n[0], rec.z_n[1], rec.ratio, 1.0,
                     abs(rec.ratio - 1.0)])
        res.checks.append(Check(f"xi_{tag}_gap_r60", abs(rec.ratio - 1.0), tol))
    for q, tag in [((SQ2, SQ2), "drift"), ((1.0, 0.0), "axis")]:
        mn, count = lambda0_grid(M1, q)
        rows.append([f"lambda0_{tag}", float(count), 0, 0, 0, 0, mn, 0.0, mn])
        res.checks.append(Check(f"lambda0_{tag}_grid_min", mn, 0.0, ">"))
    res.tables["ratio_xi"] = (REPORT_HEADER, rows)
    return res


@_timed
def criterion_profile(seed: int = 0) -> CriterionResult:
    res = CriterionResult(9, "level-hitting profile", budget=30.0)
    ks = [1, 2, 4, 8, 16, 32, 64]
    prof = level_hit_profile(M1, ks)
    mono = all(b >= a - 1e-15 for a, b in zip(prof, prof[1:]))
    res.checks += [Check("nondecreasing", 1.0 if mono else 0.0, 1.0, ">="),
                   Check("value_k64", prof[-1], 0.98, ">=")]
    res.tables["profile"] = (["k", "value"], [[k, v] for k, v in zip(ks, prof)])
    return res


CRITERIA = [criterion_geometry, criterion_identities, criterion_mc_bridge, criterion_harmonic,
            criterion_dichotomy, criterion_martin_kernel, criterion_asymptotics, criterion_ratio_xi,
            criterion_profile]
