"""Convex geometry of D = {a : phi(a) <= 1}.

phi(a) = sum_z mu(z) exp(a.z) is the jump generating function.  For a
unit vector q, ``a_of_q`` returns the point of the boundary of D whose
outward normal is q, i.e. the maximiser of a.q over D.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.spatial import ConvexHull

from .lattice_measure import JumpMeasure


@dataclass(frozen=True)
class Tolerances:
    newton_tol: float = 1e-12
    angle_tol: float = 1e-8
    critical_angle: float = 1e-9
    max_iter: int = 100


TOL = Tolerances()


class GeometryError(RuntimeError):
    pass


@dataclass(frozen=True)
class SpectralPoint:
    """Boundary point a of D with outward unit normal q."""

    a: tuple
    q: tuple
    gradient_norm: float

    @property
    def vec(self) -> np.ndarray:
        return np.array(self.a, dtype=float)

    @property
    def rate(self) -> float:
        """Support value a(q).q."""
        return float(self.a[0] * self.q[0] + self.a[1] * self.q[1])


@dataclass(frozen=True)
class RateValue:
    value: float
    argmax_a: tuple | None

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.value))


def _weights(measure, a):
    a = np.asarray(a, dtype=float)
    return measure.probs * np.exp(measure.offsets @ a)


def phi(measure: JumpMeasure, a) -> float:
    return float(np.sum(_weights(measure, a)))


def grad_phi(measure: JumpMeasure, a) -> np.ndarray:
    return _weights(measure, a) @ measure.offsets.astype(float)


def hessian_phi(measure: JumpMeasure, a) -> np.ndarray:
    z = measure.offsets.astype(float)
    w = _weights(measure, a)
    return (z * w[:, None]).T @ z


def min_point(measure: JumpMeasure, tol: Tolerances = TOL) -> np.ndarray:
    """Global minimiser of phi by damped Newton."""
    a = np.zeros(2)
    f = phi(measure, a)
    for _ in range(tol.max_iter):
        g = grad_phi(measure, a)
        if np.max(np.abs(g)) <= tol.newton_tol:
            return a
        H = hessian_phi(measure, a)
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError as exc:
            raise GeometryError("singular Hessian in min_point") from exc
        t = 1.0
        while True:
            cand = a + t * step
            fc = phi(measure, cand)
            if fc <= f + 1e-4 * t * (g @ step) or t < 1e-12:
                break
            t *= 0.5
        if t < 1e-12 and fc > f:
            # roundoff floor reached
            return a
        a, f = cand, fc
    g = grad_phi(measure, a)
    if np.max(np.abs(g)) <= 1e3 * tol.newton_tol:
        return a
    raise GeometryError(f"min_point did not converge, |grad|={np.max(np.abs(g)):.3e}")


def _unit(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.hypot(q[0], q[1])
    if not n > 0:
        raise ValueError("direction must be non-zero")
    return q / n


def _ray_root(measure, origin, direction):
    """Smallest s > 0 with phi(origin + s*direction) = 1, origin inside D."""
    hi = 1.0
    while phi(measure, origin + hi * direction) < 1.0:
        hi *= 2.0
        if hi > 1e6:
            raise GeometryError("D appears unbounded along the ray")
    return optimize.brentq(lambda s: phi(measure, origin + s * direction) - 1.0,
                           0.0, hi, xtol=1e-15, rtol=1e-15, maxiter=200)


def a_of_q(measure: JumpMeasure, q, tol: Tolerances = TOL) -> SpectralPoint:
    """Point of the boundary of D with outward normal q.

    Initialised by root finding along the ray a_min + s q, then refined by
    Newton on grad phi(a) = lambda q, phi(a) = 1.
    """
    q = _unit(q)
    amin = min_point(measure, tol)
    a = amin + _ray_root(measure, amin, q) * q
    lam = float(grad_phi(measure, a) @ q)
    perp = np.array([-q[1], q[0]])
    for it in range(tol.max_iter):
        g = grad_phi(measure, a)
        F = np.array([g[0] - lam * q[0], g[1] - lam * q[1], phi(measure, a) - 1.0])
        if np.max(np.abs(F)) <= tol.newton_tol and abs(g @ perp) <= tol.newton_tol * np.hypot(*g):
            break
        J = np.zeros((3, 3))
        J[:2, :2] = hessian_phi(measure, a)
        J[:2, 2] = -q
        J[2, :2] = g
        try:
            d = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise GeometryError("singular KKT system") from exc
        # keep the iterate inside a trust region so the step stays near D
        scale = min(1.0, 0.5 / max(np.max(np.abs(d[:2])), 1e-300))
        a = a + scale * d[:2]
        lam = lam + scale * d[2]
    else:
        g = grad_phi(measure, a)
        raise GeometryError(
            f"a_of_q: no convergence after {tol.max_iter} iterations, "
            f"phi-1={phi(measure, a) - 1.0:.3e}, grad={g}")
    g = grad_phi(measure, a)
    if lam <= 0:
        a = _a_of_q_angular(measure, q, amin)
        g = grad_phi(measure, a)
    return SpectralPoint(a=(float(a[0]), float(a[1])), q=(float(q[0]), float(q[1])),
                         gradient_norm=float(np.hypot(g[0], g[1])))


def _boundary_polar(measure, amin, theta):
    u = np.array([np.cos(theta), np.sin(theta)])
    return amin + _ray_root(measure, amin, u) * u


def _a_of_q_angular(measure, q, amin):
    # fallback: maximise a.q over the polar parametrisation of the boundary
    t0 = np.arctan2(q[1], q[0])
    res = optimize.minimize_scalar(lambda t: -(_boundary_polar(measure, amin, t) @ q),
                                   bounds=(t0 - np.pi / 2, t0 + np.pi / 2), method="bounded",
                                   options={"xatol": 1e-13})
    return _boundary_polar(measure, amin, res.x)


def support_value_polar(measure: JumpMeasure, q) -> float:
    """max_{a in D} a.q by scalar optimisation over a polar chart of the boundary.

    Independent of the Newton solver in :func:`a_of_q`; used as a cross-check.
    """
    q = _unit(q)
    amin = min_point(measure)
    t0 = np.arctan2(q[1], q[0])
    f = lambda t: -(_boundary_polar(measure, amin, t) @ q)
    # golden refinement on a shrinking bracket
    res = optimize.minimize_scalar(f, bounds=(t0 - 1.2, t0 + 1.2), method="bounded",
                                   options={"xatol": 1e-12})
    return float(-res.fun)


def spectral_angle_error(measure: JumpMeasure, point: SpectralPoint) -> float:
    g = grad_phi(measure, point.a)
    q = np.asarray(point.q)
    return float(abs(np.arctan2(g[0] * q[1] - g[1] * q[0], g @ q)))


def direction_class(q, tol: Tolerances = TOL) -> str:
    """``critical_10``, ``critical_01`` or ``interior`` for q in the closed quarter circle."""
    q = _unit(q)
    if q[0] < -1e-15 or q[1] < -1e-15:
        raise ValueError(f"direction {tuple(q)} is outside the positive quarter circle")
    ang = np.arctan2(q[1], q[0])
    if abs(ang) < tol.critical_angle:
        return "critical_10"
    if abs(ang - np.pi / 2) < tol.critical_angle:
        return "critical_01"
    return "interior"


def boundary_abscissa(measure: JumpMeasure, axis: int, level: float, side: str):
    """Root t of phi = 1 along the line a[1-axis] = level, varying a[axis].

    ``side`` is ``"low"`` or ``"high"``.  Returns None when the line misses D.
    """
    other = 1 - axis

    def point(t):
        a = np.empty(2)
        a[axis] = t
        a[other] = level
        return a

    f = lambda t: phi(measure, point(t)) - 1.0
    res = optimize.minimize_scalar(f, bracket=(-1.0, 1.0))
    t0 = float(res.x)
    if f(t0) > 0:
        return None
    sgn = -1.0 if side == "low" else 1.0
    step = 1.0
    while f(t0 + sgn * step) < 0:
        step *= 2.0
        if step > 1e6:
            return None
    a, b = sorted((t0, t0 + sgn * step))
    return float(optimize.brentq(f, a, b, xtol=1e-15, rtol=1e-15))


def _logsumexp_parts(measure, a):
    s = measure.offsets @ np.asarray(a, dtype=float)
    smax = s.max()
    w = measure.probs * np.exp(s - smax)
    return smax, w


def log_phi(measure, a) -> float:
    smax, w = _logsumexp_parts(measure, a)
    return float(smax + np.log(w.sum()))


def _legendre_newton(z, p, v, iters=200):
    """sup_a a.v - log sum p exp(a.z) for v interior to the hull of z."""
    a = np.zeros(z.shape[1])

    def obj(a):
        s = z @ a
        m = s.max()
        return a @ v - (m + np.log(np.sum(p * np.exp(s - m))))

    f = obj(a)
    for _ in range(iters):
        s = z @ a
        w = p * np.exp(s - s.max())
        w /= w.sum()
        mean = w @ z
        g = v - mean
        if np.max(np.abs(g)) < 1e-13:
            break
        cov = (z - mean).T @ ((z - mean) * w[:, None])
        try:
            step = np.linalg.solve(cov, g)
        except np.linalg.LinAlgError:
            step = g
        t = 1.0
        while t > 1e-14:
            fc = obj(a + t * step)
            if fc >= f + 1e-4 * t * (g @ step):
                break
            t *= 0.5
        if t <= 1e-14:
            break
        a = a + t * step
        f = fc
    return f, a


def legendre(measure: JumpMeasure, v) -> RateValue:
    """Convex conjugate of log phi at v; +inf outside the support hull."""
    v = np.asarray(v, dtype=float)
    pts = measure.offsets.astype(float)
    p = measure.probs
    uniq = np.unique(pts, axis=0)
    try:
        hull = ConvexHull(uniq)
    except Exception:
        hull = None
    if hull is None:
        return _legendre_degenerate(pts, p, v, uniq)
    eq = hull.equations
    dist = eq[:, :2] @ v + eq[:, 2]
    tol = 1e-12
    if np.any(dist > tol):
        return RateValue(float("inf"), None)
    on = np.where(np.abs(dist) <= tol)[0]
    if on.size == 0:
        val, a = _legendre_newton(pts, p, v)
        return RateValue(float(val), (float(a[0]), float(a[1])))
    # v on an exposed face: only support points on that face contribute;
    # the supremum is approached as a -> infinity along the face normal
    normal = eq[on[0], :2]
    offset = eq[on[0], 2]
    face = np.abs(pts @ normal + offset) <= tol
    fpts, fp = pts[face], p[face]
    if len(on) > 1 or np.unique(fpts, axis=0).shape[0] == 1:
        # vertex
        hit = np.all(np.abs(fpts - v) <= 1e-12, axis=1)
        mass = fp[hit].sum()
        return RateValue(float(-np.log(mass)) if mass > 0 else float("inf"), None)
    tang = np.array([-normal[1], normal[0]])
    val, _ = _legendre_newton((fpts @ tang)[:, None], fp, np.array([v @ tang]))
    return RateValue(float(val), None)


def _legendre_degenerate(pts, p, v, uniq):
    base = uniq[0]
    span = uniq[-1] - base
    if np.hypot(*span) == 0:
        hit = np.all(np.abs(pts - v) <= 1e-12, axis=1)
        m = p[hit].sum()
        return RateValue(float(-np.log(m)) if m > 0 else float("inf"), None)
    u = span / np.hypot(*span)
    perp = np.array([-u[1], u[0]])
    if abs((v - base) @ perp) > 1e-12:
        return RateValue(float("inf"), None)
    s = pts @ u
    t = v @ u
    if t < s.min() - 1e-12 or t > s.max() + 1e-12:
        return RateValue(float("inf"), None)
    if abs(t - s.min()) <= 1e-12 or abs(t - s.max()) <= 1e-12:
        m = p[np.abs(s - t) <= 1e-12].sum()
        return RateValue(float(-np.log(m)), None)
    val, _ = _legendre_newton(s[:, None], p, np.array([t]))
    return RateValue(float(val), None)


def pathwise_rate(measure: JumpMeasure, times, points, constraint: str = "none") -> float:
    """Integrated rate of a piecewise-linear path.

    ``times`` are strictly increasing breakpoints and ``points`` the path
    values there.  ``constraint`` is one of ``none``, ``half-plane-1``
    (second coordinate >= 0), ``half-plane-2`` (first coordinate >= 0) or
    ``quadrant``.  The constraint sets are convex so checking breakpoints
    covers the segments.
    """
    t = np.asarray(times, dtype=float)
    x = np.asarray(points, dtype=float).reshape(-1, 2)
    if t.ndim != 1 or len(t) != len(x) or len(t) < 2:
        raise ValueError("times and points must have equal length >= 2")
    if np.any(np.diff(t) <= 0):
        raise ValueError("breakpoint times must be strictly increasing")
    lower = {"none": (-np.inf, -np.inf), "half-plane-1": (-np.inf, 0.0),
             "half-plane-2": (0.0, -np.inf), "quadrant": (0.0, 0.0)}
    if constraint not in lower:
        raise ValueError(f"unknown constraint {constraint!r}")
    lo = np.array(lower[constraint])
    if np.any(x < lo - 1e-12):
        return float("inf")
    total = 0.0
    for i in range(len(t) - 1):
        dt = t[i + 1] - t[i]
        r = legendre(measure, (x[i + 1] - x[i]) / dt)
        if not r.finite:
            return float("inf")
        total += dt * r.value
    return float(total)


def support_function(measure: JumpMeasure, v) -> float:
    """a(v/|v|).v, the positively homogeneous extension of the rate."""
    v = np.asarray(v, dtype=float)
    n = np.hypot(v[0], v[1])
    if n == 0:
        raise ValueError("support function undefined at the zero vector")
    return float(a_of_q(measure, v / n).vec @ v)


def lambda_eps(measure: JumpMeasure, q, w, eps: float = 0.0) -> float:
    q = _unit(q)
    w = np.asarray(w, dtype=float)
    return support_function(measure, w) + support_function(measure, q - w) - eps * np.hypot(*w)
