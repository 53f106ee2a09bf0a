"""Exit distributions, exponentially weighted boundary functionals and h_a.

All solves are done for the twisted kernel mu(z) exp(a.z) on a finite box.
Mass that reaches the artificial sides of the box ("leak") is closed with
a certified bracket built from the coordinate walks:

* the event {tau < inf} from a far point w has probability between
  max(u1(w1), u2(w2)) and min(1, u1(w1) + u2(w2)), where u_j is the exact
  exit probability of the j-th coordinate walk;
* weights f(S_j(tau)) at exits through the j-th side are sandwiched
  around the one-dimensional functional of the j-th coordinate walk;
* weights at exits through the other side are bounded by the
  supermartingale exp((b-a).S) with b on the boundary of D.

Reported values are bracket midpoints; brackets are returned alongside.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
import warnings

import numpy as np

from . import geometry
from ._lattice import Box, check_kind, in_domain, region_system
from ._marginal import Marginal1D
from .lattice_measure import JumpMeasure

EVENTS = ("tau_lt_inf", "tau1_before_tau2", "tau2_before_tau1")
DELTA_GRID = np.geomspace(1e-3, 2.0, 40)


class TruncationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class WeightFn:
    """f(S(tau)) depending on one coordinate of the exit point."""

    name: str
    axis: int
    delta: float = 0.0

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.name == "one":
            return np.ones_like(s)
        if self.name == "S":
            return s
        if self.name == "absS":
            return np.abs(s)
        if self.name == "exp":
            return np.exp(self.delta * s)
        raise ValueError(self.name)

    @property
    def label(self) -> str:
        if self.name == "one":
            return "one"
        if self.name == "exp":
            return f"exp_extra({self.delta!r})"
        return {"S": "S", "absS": "abs_S"}[self.name] + str(self.axis + 1)


def weight_fn(spec) -> WeightFn:
    """Parse ``one``, ``S1``, ``S2``, ``abs_S2`` or ``("exp_extra", delta)``."""
    if isinstance(spec, WeightFn):
        return spec
    if isinstance(spec, tuple) and spec and spec[0] == "exp_extra":
        return WeightFn("exp", 1, float(spec[1]))
    table = {"one": WeightFn("one", 1), "S1": WeightFn("S", 0), "S2": WeightFn("S", 1),
             "abs_S2": WeightFn("absS", 1)}
    if spec not in table:
        raise ValueError(f"unknown weight function {spec!r}")
    return table[spec]


class FarField:
    """Closure brackets for exit functionals started from points beyond the box."""

    def __init__(self, measure: JumpMeasure, a, kind: str):
        self.measure = measure
        self.a = np.asarray(a, dtype=float)
        self.kind = check_kind(kind)
        self.marg = (Marginal1D.from_measure(measure, self.a, 0),
                     Marginal1D.from_measure(measure, self.a, 1))

    def _table(self, axis, f: WeightFn, coords, what):
        coords = np.asarray(coords, dtype=np.int64)
        n = int(coords.max()) if coords.size else 0
        m = self.marg[axis]
        if what == "u":
            tab = m.exit_probability(max(n, 1))
        else:
            tab = m.exit_functional(f, max(n, 1), key=(f.name, f.delta))
        return tab[np.maximum(coords, 0)]

    def u(self, axis, coords):
        return self._table(axis, None, coords, "u")

    def cap_exp(self, axis_exit: int, axis_f: int, delta: float, W) -> np.ndarray:
        """Bound on E(exp(delta S_f(tau)) e^{a.(S(tau)-w)}; exit through side axis_exit)."""
        level = self.a[axis_f] + delta
        b_i = geometry.boundary_abscissa(self.measure, axis_exit, level, "low")
        if b_i is None or b_i > self.a[axis_exit] + 1e-15:
            return np.full(len(W), np.inf)
        diff = np.empty(2)
        diff[axis_exit] = b_i - self.a[axis_exit]
        diff[axis_f] = delta
        return np.exp(np.asarray(W, dtype=float) @ diff)

    def cap_linear(self, axis_exit: int, axis_f: int, W) -> np.ndarray:
        """Bound on E(S_f(tau)^+ e^{a.(S(tau)-w)}; exit through side axis_exit),
        using s <= exp(delta s)/(e delta) and minimising over a grid of delta."""
        best = np.full(len(W), np.inf)
        for d in DELTA_GRID:
            c = self.cap_exp(axis_exit, axis_f, d, W) / (np.e * d)
            best = np.minimum(best, c)
        return best

    def bracket(self, f: WeightFn, event: str, W) -> tuple:
        """(lo, hi) for E_w(f(S(tau)) e^{a.(S(tau)-w)}; event) at far points W."""
        W = np.asarray(W, dtype=np.int64).reshape(-1, 2)
        n = len(W)
        if n == 0:
            return np.zeros(0), np.zeros(0)
        if self.kind == "Free":
            return np.zeros(n), np.zeros(n)
        if self.kind in ("HalfPlane1", "HalfPlane2"):
            j = 1 if self.kind == "HalfPlane1" else 0
            cls = "tau2_before_tau1" if j == 1 else "tau1_before_tau2"
            if event not in ("tau_lt_inf", cls):
                return np.zeros(n), np.zeros(n)
            if f.name != "one" and f.axis != j:
                raise ValueError(f"{f.label} is not a function of the exit coordinate for {self.kind}")
            v = self._table(j, f, W[:, j], "f") if f.name != "one" else self.u(j, W[:, j])
            return v, v.copy()
        # quadrant
        u = (self.u(0, W[:, 0]), self.u(1, W[:, 1]))
        if f.name == "one" and event == "tau_lt_inf":
            return np.maximum(u[0], u[1]), np.minimum(1.0, u[0] + u[1])
        j = f.axis
        i = 1 - j
        m = self.marg[j]
        spread = np.arange(-m.d_down + 1, 1) if m.d_down > 0 else np.array([0])
        F = float(np.max(np.abs(f(spread))))
        B = u[j] if f.name == "one" else self._table(j, f, W[:, j], "f")
        tj = (B - F * u[i], B + F * u[i])
        # exits through side i; S_j is positive there except at ties when j = 0
        if f.name == "one":
            cap = u[i]
        elif f.name == "exp":
            cap = self.cap_exp(i, j, f.delta, W)
        else:
            cap = self.cap_linear(i, j, W)
        cap = np.minimum(cap, np.inf)
        ti_lo = -F * u[i] if j == 0 else np.zeros(n)
        ti = (ti_lo, cap)
        class_j = "tau1_before_tau2" if j == 0 else "tau2_before_tau1"
        if event == "tau_lt_inf":
            return tj[0] + ti[0], tj[1] + ti[1]
        if event == class_j:
            return tj
        return ti


@dataclass
class ExitDistribution:
    """Twisted exit weights E_z(e^{a.(w-z)}; S(tau) = w) from one source.

    ``points``/``classes``/``masses`` describe exits through the domain
    boundary inside the stencil of the box; ``leak_points``/``leak_masses``
    the mass reaching points of the domain beyond the box.
    """

    source: tuple
    kind: str
    a: tuple
    box: Box
    points: np.ndarray
    classes: np.ndarray
    masses: np.ndarray
    leak_points: np.ndarray
    leak_masses: np.ndarray
    survival_mass: float
    measure: JumpMeasure = field(repr=False)
    warning: bool = False

    @property
    def weights(self) -> dict:
        return {((int(p[0]), int(p[1])), str(c)): float(m)
                for p, c, m in zip(self.points, self.classes, self.masses)}

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    @property
    def truncation_leak(self) -> float:
        return float(self.leak_masses.sum())

    @property
    def conservation_error(self) -> float:
        return abs(self.total_mass + self.truncation_leak + self.survival_mass - 1.0)

    @cached_property
    def far_field(self) -> FarField:
        return FarField(self.measure, self.a, self.kind)


def _event_mask(classes, event):
    if event == "tau_lt_inf":
        return np.ones(len(classes), dtype=bool)
    if event == "tau1_before_tau2":
        return classes == "tau1"
    if event == "tau2_before_tau1":
        return classes == "tau2"
    raise ValueError(f"unknown event {event!r}")


def _classes(kind, pts):
    if len(pts) == 0:
        return np.zeros(0, dtype="<U4")
    if kind == "HalfPlane1":
        return np.full(len(pts), "tau2")
    if kind == "HalfPlane2":
        return np.full(len(pts), "tau1")
    return np.where(pts[:, 1] <= 0, "tau2", "tau1")


def exit_distribution(measure: JumpMeasure, kind: str, a, z, box: Box,
                      leak_tol: float | None = None) -> ExitDistribution:
    """Exit weights of the killed twisted walk from z, by one adjoint solve."""
    check_kind(kind)
    a = np.asarray(a, dtype=float)
    if geometry.phi(measure, a) > 1.0 + 1e-12:
        raise ValueError("phi(a) must be <= 1")
    z = (int(z[0]), int(z[1]))
    if not in_domain(kind, *z):
        raise ValueError(f"source {z} is outside the domain of {kind}")
    system = region_system(measure, a, box.region(kind))
    if not system.contains(z):
        raise ValueError(f"source {z} is outside the box")
    rhs = np.zeros(system.size)
    rhs[system.index(z)] = 1.0
    visits = system.solve_adjoint(rhs)
    pts, mass = system.exit_mass(visits)
    dom = in_domain(kind, pts[:, 0], pts[:, 1]) if len(pts) else np.zeros(0, dtype=bool)
    killed = max(0.0, 1.0 - float(system.weights.sum())) * float(visits.sum())
    exits = pts[~dom]
    out = ExitDistribution(
        source=z, kind=kind, a=(float(a[0]), float(a[1])), box=box,
        points=exits, classes=_classes(kind, exits), masses=mass[~dom],
        leak_points=pts[dom], leak_masses=mass[dom], survival_mass=killed, measure=measure)
    if leak_tol is not None and out.truncation_leak > leak_tol:
        out.warning = True
        warnings.warn(f"truncation leak {out.truncation_leak:.3e} exceeds {leak_tol:.1e}",
                      TruncationWarning, stacklevel=2)
    return out


@dataclass(frozen=True)
class Expectation:
    value: float
    lo: float
    hi: float
    in_box: float

    @property
    def width(self) -> float:
        return self.hi - self.lo


def boundary_expectation(exit: ExitDistribution, weight="one", event: str = "tau_lt_inf",
                         detailed: bool = False):
    """E_z(f(S(tau)) exp(a.S(tau)); event) for the exit distribution's source z.

    The far-field closure is added to the in-box sum; ``detailed=True``
    returns an :class:`Expectation` with the bracket, scaled like the value.
    """
    f = weight_fn(weight)
    if event not in EVENTS:
        raise ValueError(f"unknown event {event!r}")
    mask = _event_mask(exit.classes, event)
    coord = exit.points[mask, f.axis] if len(exit.points) else np.zeros(0)
    in_box = float(np.sum(f(coord) * exit.masses[mask]))
    lo_f, hi_f = exit.far_field.bracket(f, event, exit.leak_points)
    lo = in_box + float(np.sum(exit.leak_masses * lo_f))
    hi = in_box + float(np.sum(exit.leak_masses * hi_f))
    scale = float(np.exp(np.dot(exit.a, exit.source)))
    res = Expectation(scale * 0.5 * (lo + hi), scale * lo, scale * hi, scale * in_box)
    return res if detailed else res.value


# ---------------------------------------------------------------------------
# forward solves over a whole box


def functional_field(measure: JumpMeasure, kind: str, a, box: Box, weight="one",
                     event: str = "tau_lt_inf"):
    """Twisted functional E_z(f(S(tau)) e^{a.(S(tau)-z)}; event) for every z in box.

    Returns (lo, hi, system) where lo/hi are grids over box.region(kind)
    obtained from the two far-field closures.
    """
    f = weight_fn(weight)
    a = np.asarray(a, dtype=float)
    system = region_system(measure, a, box.region(kind))
    far = FarField(measure, a, kind)

    def data(which):
        def value(X, Y):
            pts = np.stack([X, Y], axis=1)
            dom = in_domain(kind, X, Y)
            out = np.zeros(len(X))
            ex = ~dom
            if ex.any():
                cls = _classes(kind, pts[ex])
                m = _event_mask(cls, event)
                vals = np.zeros(int(ex.sum()))
                vals[m] = f(pts[ex][m, f.axis])
                out[ex] = vals
            if dom.any():
                lo, hi = far.bracket(f, event, pts[dom])
                out[dom] = lo if which == 0 else hi
            return out
        return value

    lo = system.grid(system.solve(system.boundary_rhs(data(0))))
    hi = system.grid(system.solve(system.boundary_rhs(data(1))))
    return lo, hi, system


@dataclass
class HarmonicFunction:
    """h on a box, stored in twisted form: h(z) = exp(a.z) * twisted(z)."""

    a: geometry.SpectralPoint
    branch: str
    kind: str
    region: tuple
    twisted_values: np.ndarray
    twisted_bracket: np.ndarray
    bracket_width: float
    window: Box
    measure: JumpMeasure = field(repr=False)
    warning: bool = False

    def _idx(self, z):
        x0, x1, y0, y1 = self.region
        if not (x0 <= z[0] <= x1 and y0 <= z[1] <= y1):
            raise KeyError(f"{tuple(z)} outside the computed box")
        return int(z[0]) - x0, int(z[1]) - y0

    def twisted(self, z) -> float:
        if not in_domain(self.kind, z[0], z[1]):
            return 0.0
        return float(self.twisted_values[self._idx(z)])

    def __call__(self, z) -> float:
        t = self.twisted(z)
        return float(t * np.exp(np.dot(self.a.a, z))) if t != 0.0 else 0.0

    def log_value(self, z) -> float:
        return float(np.log(self.twisted(z)) + np.dot(self.a.a, z))

    @property
    def values(self) -> np.ndarray:
        """Untwisted values over the computed box."""
        x0, x1, y0, y1 = self.region
        X, Y = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1), indexing="ij")
        return self.twisted_values * np.exp(self.a.a[0] * X + self.a.a[1] * Y)

    def trusted(self, z) -> bool:
        """Every stencil neighbour of z is inside the box or outside the domain."""
        x0, x1, y0, y1 = self.region
        for dx, dy in self.measure.offsets:
            w = (z[0] + dx, z[1] + dy)
            if in_domain(self.kind, *w) and not (x0 <= w[0] <= x1 and y0 <= w[1] <= y1):
                return False
        return True


def _window_points(box: Box, kind: str):
    inner = box.inner()
    x0, x1, y0, y1 = inner.region(kind)
    return x0, x1, y0, y1


def h_function(measure: JumpMeasure, q, box: Box, tol: float = 1e-7) -> HarmonicFunction:
    """Harmonic function h_{a(q)} of the quadrant-killed walk on ``box``.

    The bracket width is the largest far-field uncertainty of h over the
    queried window ``box.inner()``.
    """
    branch = geometry.direction_class(q)
    sp = geometry.a_of_q(measure, q)
    a = sp.vec
    if branch == "interior":
        lo, hi, system = functional_field(measure, "Quadrant", a, box, "one")
        tw = 1.0 - 0.5 * (lo + hi)
    elif branch == "critical_10":
        lo, hi, system = functional_field(measure, "Quadrant", a, box, "S2")
        tw = system.Y - 0.5 * (lo + hi)
    else:
        lo, hi, system = functional_field(measure, "Quadrant", a, box, "S1")
        tw = system.X - 0.5 * (lo + hi)
    return _assemble(measure, sp, branch, "Quadrant", system.region, tw, hi - lo, box, tol)


def _assemble(measure, sp, branch, kind, region, tw, width, box, tol):
    x0, x1, y0, y1 = region
    wx0, wx1, wy0, wy1 = _window_points(box, kind)
    X, Y = np.meshgrid(np.arange(wx0, wx1 + 1), np.arange(wy0, wy1 + 1), indexing="ij")
    sl = (slice(wx0 - x0, wx1 - x0 + 1), slice(wy0 - y0, wy1 - y0 + 1))
    scale = np.exp(sp.a[0] * X + sp.a[1] * Y)
    bw = float(np.max(np.abs(width[sl]) * scale))
    h = HarmonicFunction(a=sp, branch=branch, kind=kind, region=region,
                         twisted_values=tw, twisted_bracket=width, bracket_width=bw,
                         window=box.inner(), measure=measure)
    if bw > tol:
        h.warning = True
        warnings.warn(f"bracket width {bw:.3e} exceeds {tol:.1e}", TruncationWarning, stacklevel=3)
    return h


def h1_function(measure: JumpMeasure, box: Box) -> HarmonicFunction:
    """h^1(z) = x2 e^{a.z} - E_z(S2(tau2) e^{a.S(tau2)}; tau2 < inf), a = a(1,0).

    The walk killed below the horizontal axis is translation invariant in
    the first coordinate, so the expectation reduces to the exit functional
    of the second-coordinate walk, which is computed exactly.
    """
    sp = geometry.a_of_q(measure, (1.0, 0.0))
    region = box.region("HalfPlane1")
    x0, x1, y0, y1 = region
    marg = Marginal1D.from_measure(measure, sp.vec, 1)
    v = marg.exit_functional(lambda s: s.astype(float), y1)
    ys = np.arange(y0, y1 + 1)
    g = ys - v[ys]
    tw = np.broadcast_to(g, (x1 - x0 + 1, len(ys))).copy()
    return _assemble(measure, sp, "critical_10", "HalfPlane1", region, tw, np.zeros_like(tw),
                     box, np.inf)


def harmonicity_residual(h: HarmonicFunction, measure: JumpMeasure, z) -> float:
    """|sum_w mu(w) h(z+w) - h(z)| for the walk killed outside h's domain."""
    z = (int(z[0]), int(z[1]))
    if not h.trusted(z):
        raise ValueError(f"stencil of {z} leaves the trusted region")
    a = np.asarray(h.a.a)
    acc = 0.0
    for (dx, dy), p in zip(measure.offsets, measure.probs):
        w = (z[0] + dx, z[1] + dy)
        acc += p * np.exp(a[0] * dx + a[1] * dy) * h.twisted(w)
    return float(abs(acc - h.twisted(z)) * np.exp(a @ z))


def martingale_residual(measure: JumpMeasure, z) -> float:
    """One-step defect of x2 exp(a.z), a = a(1,0), for the free walk."""
    a = geometry.a_of_q(measure, (1.0, 0.0)).vec
    z = np.asarray(z, dtype=float)
    lhs = 0.0
    for (dx, dy), p in zip(measure.offsets, measure.probs):
        lhs += p * (z[1] + dy) * np.exp(a @ (z + (dx, dy)))
    rhs = z[1] * np.exp(a @ z)
    return float(abs(lhs - rhs) / max(abs(rhs), 1e-300))


def level_hit_profile(measure: JumpMeasure, k_list, delta: int = 60, tol: float = 1e-9):
    """E_{(0,k)}(e^{a.(S(T)-(0,k))}; T < tau2), T the first hitting of level k+1, a = a(1,0)."""
    a = geometry.a_of_q(measure, (1.0, 0.0)).vec
    marg = Marginal1D.from_measure(measure, a, 1)
    out = []
    for k in k_list:
        if k < 1:
            raise ValueError("k must be >= 1")
        v1 = marg.exact_level_hit(int(k), delta)
        v2 = marg.exact_level_hit(int(k), 2 * delta)
        if abs(v1 - v2) > tol:
            warnings.warn(f"strip truncation unstable at k={k}: {v1} vs {v2}", TruncationWarning,
                          stacklevel=2)
        out.append(v2)
    return out
