"""Experiment drivers comparing Green-function ratios with their limits.

Every driver works along a straight ray: for each radius r the target
point is r*q rounded componentwise and clamped to be >= 1.  Green columns
are always solved for the kernel twisted by a(q) and ratios are
reassembled in log space, which keeps values of order one at every radius.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry
from ._lattice import Box, in_domain
from .boundary_functionals import exit_distribution, h_function
from .green_solver import green_column, martin_kernel
from .lattice_measure import JumpMeasure, period2d

DEFAULT_RADII = (20, 30, 40, 60)
BASE_POINT = (1, 1)


@dataclass(frozen=True)
class RaySpec:
    q: tuple
    radii: tuple = DEFAULT_RADII
    projection: str = "round_clamp"

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        q = q / np.hypot(*q)
        object.__setattr__(self, "q", (float(q[0]), float(q[1])))
        r = tuple(float(v) for v in self.radii)
        if any(b <= a for a, b in zip(r, r[1:])) or not r or r[0] <= 0:
            raise ValueError("radii must be positive and strictly increasing")
        object.__setattr__(self, "radii", r)
        if self.projection != "round_clamp":
            raise ValueError(f"unknown projection {self.projection!r}")

    def point(self, r: float) -> tuple:
        x = max(1, int(np.floor(r * self.q[0] + 0.5)))
        y = max(1, int(np.floor(r * self.q[1] + 0.5)))
        return (x, y)

    def points(self):
        return [self.point(r) for r in self.radii]


@dataclass
class ConvergenceReport:
    experiment: str
    rows: list
    tolerance: float | None = None
    extra: dict = field(default_factory=dict)

    def gaps_by_point(self) -> dict:
        out = {}
        for row in self.rows:
            out.setdefault(row.get("point"), []).append(row["relative_gap"])
        return out

    @property
    def final_gap(self) -> float:
        last = max(r["radius"] for r in self.rows)
        return float(max(r["relative_gap"] for r in self.rows if r["radius"] == last))

    @property
    def trend_ok(self) -> bool:
        return all(smoothed_nonincreasing(g) for g in self.gaps_by_point().values())

    @property
    def passed(self) -> bool:
        ok = self.trend_ok
        if self.tolerance is not None:
            ok = ok and self.final_gap <= self.tolerance
        return bool(ok and self.extra.get("checks_ok", True))

    @property
    def verdict(self) -> dict:
        return {"experiment": self.experiment, "trend_ok": self.trend_ok,
                "final_gap": self.final_gap, "tolerance": self.tolerance, "passed": self.passed}


def smoothed_nonincreasing(gaps, slack: float = 1e-12) -> bool:
    """Two-point moving average of the gaps is non-increasing over its last three values."""
    g = np.asarray(gaps, dtype=float)
    if len(g) < 2:
        return True
    s = 0.5 * (g[1:] + g[:-1])
    s = s[-3:]
    return bool(np.all(np.diff(s) <= slack))


def _gap(observed, target):
    if abs(target) > 1e-9:
        return abs(observed / target - 1.0)
    return abs(observed - target)


def _column(measure, kind, a, zn, sources, margin):
    pts = list(sources) + [zn]
    box = Box.around(pts, margin)
    return green_column(measure, kind, a, zn, box, query=pts)


def _margin(r, margin):
    return int(margin if margin is not None else max(40, r))


def theorem1_convergence(measure: JumpMeasure, ray: RaySpec, test_points, z0=BASE_POINT,
                         margin: int | None = None, tolerance: float | None = None,
                         h=None) -> ConvergenceReport:
    """Martin kernel G_+(z, z_n)/G_+(z0, z_n) against h(z)/h(z0)."""
    sp = geometry.a_of_q(measure, ray.q)
    pts = [tuple(int(c) for c in z) for z in test_points]
    if h is None:
        h = h_function(measure, ray.q, Box.around(pts + [tuple(z0)], 120))
    targets = {z: h(z) / h(z0) for z in pts}
    rows = []
    for r in ray.radii:
        zn = ray.point(r)
        col = _column(measure, "Quadrant", sp.vec, zn, pts + [tuple(z0)], _margin(r, margin))
        for z in pts:
            obs = martin_kernel(col, z, z0)
            rows.append({"radius": r, "point": z, "z_n": zn, "observed": obs,
                         "target": targets[z], "relative_gap": _gap(obs, targets[z]),
                         "truncation": col.truncation_error / max(col.value(z0), 1e-300)})
    return ConvergenceReport("theorem1", rows, tolerance,
                             {"a": sp.a, "branch": h.branch, "bracket_width": h.bracket_width})


def ney_spitzer_check(measure: JumpMeasure, ray: RaySpec, test_points, z0=(0, 0),
                      margin: int | None = None, tolerance: float | None = None) -> ConvergenceReport:
    """Free-walk ratio G(z, z_n)/G(z0, z_n) against exp(a(q).(z - z0))."""
    sp = geometry.a_of_q(measure, ray.q)
    pts = [tuple(int(c) for c in z) for z in test_points]
    rows = []
    for r in ray.radii:
        zn = ray.point(r)
        col = _column(measure, "Free", sp.vec, zn, pts + [tuple(z0)], _margin(r, margin))
        for z in pts:
            obs = martin_kernel(col, z, z0)
            tgt = float(np.exp(sp.vec @ np.subtract(z, z0)))
            rows.append({"radius": r, "point": z, "z_n": zn, "observed": obs, "target": tgt,
                         "relative_gap": _gap(obs, tgt)})
    return ConvergenceReport("neyspitzer", rows, tolerance, {"a": sp.a})


def log_asymptotics(measure: JumpMeasure, kind: str, ray: RaySpec, z_fixed=BASE_POINT,
                    margin: int | None = None, tolerance: float | None = None) -> ConvergenceReport:
    """-log G(z_fixed, z_n)/|z_n| against the support value a(q).q.

    The target is evaluated by a polar-chart maximisation independent of
    the Newton solver.  Each row also carries the slope of -log G between
    consecutive radii, and the report carries a three-point fit of
    -log G = c|z_n| + k log|z_n| + b over the last three radii.
    """
    sp = geometry.a_of_q(measure, ray.q)
    target = geometry.support_value_polar(measure, ray.q)
    z_fixed = tuple(int(c) for c in z_fixed)
    rows = []
    prev = None
    data = []
    for r in ray.radii:
        zn = ray.point(r)
        col = _column(measure, kind, sp.vec, zn, [z_fixed], _margin(r, margin))
        lg = col.log_untwisted(z_fixed)
        norm = float(np.hypot(*zn))
        obs = -lg / norm
        slope = float("nan") if prev is None else (prev[1] - lg) / (norm - prev[0])
        prev = (norm, lg)
        data.append((norm, -lg))
        rows.append({"radius": r, "point": z_fixed, "z_n": zn, "observed": obs, "target": target,
                     "relative_gap": _gap(obs, target), "slope": slope})
    extra = {"a": sp.a, "newton_rate": sp.rate, "kind": kind}
    if len(data) >= 3:
        n = np.array([d[0] for d in data[-3:]])
        v = np.array([d[1] for d in data[-3:]])
        c, k, b = np.linalg.solve(np.stack([n, np.log(n), np.ones(3)], axis=1), v)
        extra["fit_rate"] = float(c)
        extra["fit_log_coefficient"] = float(k)
    return ConvergenceReport("lograte", rows, tolerance, extra)


def ratio_limit_check(measure: JumpMeasure, kind: str, ray: RaySpec, z, w, k_max: int = 12,
                      margin: int | None = None, tolerance: float | None = None) -> ConvergenceReport:
    """e^{-a(q).w} G(z + w, z_n)/G(z, z_n) against 1, for w on the period lattice."""
    if kind not in ("Free", "HalfPlane1"):
        raise ValueError("ratio limits are defined for Free and HalfPlane1")
    k_hat = period2d(measure, k_max)
    w = (int(w[0]), int(w[1]))
    if kind == "HalfPlane1" and w[1] != 0:
        raise ValueError("displacement must be horizontal for HalfPlane1")
    if w[0] % k_hat or w[1] % k_hat:
        raise ValueError(f"displacement {w} is not a multiple of the period {k_hat}")
    z = (int(z[0]), int(z[1]))
    zw = (z[0] + w[0], z[1] + w[1])
    if not (in_domain(kind, *z) and in_domain(kind, *zw)):
        raise ValueError("z and z + w must lie in the domain")
    sp = geometry.a_of_q(measure, ray.q)
    k_half = period2d(measure, k_max, domain="halfplane1")
    rows = []
    for r in ray.radii:
        zn = ray.point(r)
        col = _column(measure, kind, sp.vec, zn, [z, zw], _margin(r, margin))
        obs = martin_kernel(col, zw, z) * float(np.exp(-sp.vec @ np.array(w, dtype=float)))
        back = martin_kernel(col, z, zw) * float(np.exp(sp.vec @ np.array(w, dtype=float)))
        rows.append({"radius": r, "point": z, "z_n": zn, "observed": obs, "target": 1.0,
                     "relative_gap": abs(obs - 1.0), "reciprocal_defect": abs(obs * back - 1.0)})
    extra = {"a": sp.a, "period": k_hat, "halfplane_period": k_half,
             "checks_ok": k_half == k_hat}
    return ConvergenceReport("ratiolimit", rows, tolerance, extra)


@dataclass(frozen=True)
class XiRecord:
    radius: float
    z_n: tuple
    xi: float
    g_plus: float
    ratio: float
    branch: str


def xi_decomposition(measure: JumpMeasure, q, delta: float, z, radius: float,
                     margin: int | None = None) -> XiRecord:
    """Principal part of the renewal equation and the ratio G_+/Xi."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    branch = geometry.direction_class(q)
    outer, keep = {"interior": ("Free", None), "critical_10": ("HalfPlane1", "tau1"),
                   "critical_01": ("HalfPlane2", "tau2")}[branch]
    ray = RaySpec(q, (radius,))
    zn = ray.point(radius)
    z = (int(z[0]), int(z[1]))
    sp = geometry.a_of_q(measure, q)
    a = sp.vec
    m = _margin(radius, margin)
    box = Box.around([z, zn, (0, 0)], m)
    g_outer = green_column(measure, outer, a, zn, box, estimate_truncation=False)
    g_plus = green_column(measure, "Quadrant", a, zn, box, estimate_truncation=False)
    ex = exit_distribution(measure, "Quadrant", (0.0, 0.0), z, box)
    limit = delta * float(np.hypot(*zn))
    # twisted scale: G(w, z_n) e^{a.z_n} = G^a(w, z_n) e^{a.w}
    corr = 0.0
    for w, c, mass in zip(ex.points, ex.classes, ex.masses):
        if keep is not None and c != keep:
            continue
        if np.hypot(*w) < limit:
            corr += mass * g_outer.value(w) * np.exp(a @ w)
    xi_t = g_outer.value(z) * np.exp(a @ z) - corr
    gp_t = g_plus.value(z) * np.exp(a @ z)
    scale = float(np.exp(-a @ np.array(zn, dtype=float)))
    return XiRecord(float(radius), zn, float(xi_t * scale), float(gp_t * scale),
                    float(gp_t / xi_t), branch)


def xi_report(measure, q, delta, z, radii, tolerance=None, margin=None) -> ConvergenceReport:
    rows = []
    for r in radii:
        rec = xi_decomposition(measure, q, delta, z, r, margin)
        rows.append({"radius": float(r), "point": tuple(z), "z_n": rec.z_n, "observed": rec.ratio,
                     "target": 1.0, "relative_gap": abs(rec.ratio - 1.0), "xi": rec.xi,
                     "g_plus": rec.g_plus})
    return ConvergenceReport("xi", rows, tolerance, {"delta": delta})


@dataclass(frozen=True)
class BoundScan:
    radii: tuple
    c_upper: tuple
    c_lower: tuple | None
    finite: bool
    stable: bool

    @property
    def passed(self) -> bool:
        return self.finite and self.stable


def uniform_bound_scan(measure: JumpMeasure, kind: str, ray: RaySpec, sigma: float,
                       delta: float = 0.2, z0=BASE_POINT, margin: int | None = None) -> BoundScan:
    """Smallest C with G(z,z_n)/G(z0,z_n) <= C exp(a(q).(z-z0) + sigma|z|) over |z| < delta|z_n|.

    For the free walk the matching lower constant C' (ratio >= C' exp(a.(z-z0) - sigma|z|))
    is reported too.  Evaluated at the two largest radii.
    """
    if kind not in ("Free", "HalfPlane1"):
        raise ValueError("bound scan is defined for Free and HalfPlane1")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    sp = geometry.a_of_q(measure, ray.q)
    a = sp.vec
    radii = ray.radii[-2:]
    ups, lows = [], []
    for r in radii:
        zn = ray.point(r)
        lim = delta * float(np.hypot(*zn))
        R = int(np.ceil(lim))
        xs, ys = np.meshgrid(np.arange(-R, R + 1), np.arange(-R, R + 1), indexing="ij")
        pts = np.stack([xs.ravel(), ys.ravel()], axis=1)
        pts = pts[(np.hypot(pts[:, 0], pts[:, 1]) < lim) & in_domain(kind, pts[:, 0], pts[:, 1])]
        pts = np.vstack([pts, np.array([z0])])
        col = _column(measure, kind, a, zn, [tuple(p) for p in pts], _margin(r, margin))
        den = col.value(z0)
        vals = np.array([col.value(p) for p in pts])
        # K(z) e^{-a.(z-z0)} in twisted form is G^a(z)/G^a(z0)
        base = vals / den
        norm = np.hypot(pts[:, 0], pts[:, 1])
        ups.append(float(np.max(base * np.exp(-sigma * norm))))
        if kind == "Free":
            lows.append(float(np.min(base * np.exp(sigma * norm))))
    finite = all(np.isfinite(v) for v in ups) and all(np.isfinite(v) and v > 0 for v in lows)
    stable = (max(ups) <= 2 * min(ups)) and (not lows or max(lows) <= 2 * min(lows))
    return BoundScan(tuple(radii), tuple(ups), tuple(lows) if lows else None, bool(finite),
                     bool(stable))


def lambda0_grid(measure: JumpMeasure, q, n: int = 100, min_dist: float = 0.3):
    """min over a grid of off-ray w of lambda_0(q, w) - a(q).q."""
    q = np.asarray(q, dtype=float)
    q = q / np.hypot(*q)
    rate = geometry.a_of_q(measure, q).rate
    g = np.linspace(-1.0, 2.0, 16)
    cand = []
    for x in g:
        for y in g:
            w = np.array([x, y])
            t = max(w @ q, 0.0)
            if np.hypot(*(w - t * q)) >= min_dist and np.hypot(*w) > 0 and np.hypot(*(q - w)) > 0:
                cand.append(w)
    idx = np.linspace(0, len(cand) - 1, min(n, len(cand))).round().astype(int)
    margins = [geometry.lambda_eps(measure, q, cand[i], 0.0) - rate for i in idx]
    return float(min(margins)), len(idx)
