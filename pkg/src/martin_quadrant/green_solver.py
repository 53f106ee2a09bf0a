"""Green functions of free and killed lattice walks on truncated boxes.

A column G(., z') solves (I - P_a) g = e_{z'} on box ∩ domain with g = 0
outside.  Twisted columns (a != 0) are related to untwisted ones by
G^a(z, z') = G(z, z') exp(a.(z' - z)); drivers use this to keep values in
floating-point range and reassemble ratios in log space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import warnings

import numpy as np

from . import geometry
from ._lattice import Box, SolverError, check_kind, in_domain, region_system
from .lattice_measure import JumpMeasure

RESIDUAL_TOL = 1e-11


class UnderflowError(ArithmeticError):
    pass


@dataclass
class GreenColumn:
    """Twisted Green values z -> G^a(z, target) over ``region``."""

    target: tuple
    kind: str
    twist: tuple
    box: Box
    region: tuple
    grid: np.ndarray = field(repr=False)
    truncation_error: float
    residual: float
    warning: bool = False

    def value(self, z) -> float:
        """G^a(z, target); zero outside the domain or the box."""
        x0, x1, y0, y1 = self.region
        if not (x0 <= z[0] <= x1 and y0 <= z[1] <= y1):
            return 0.0
        if not in_domain(self.kind, z[0], z[1]):
            return 0.0
        return float(self.grid[int(z[0]) - x0, int(z[1]) - y0])

    __getitem__ = value

    def log_untwisted(self, z) -> float:
        """log G(z, target), from the twisted value."""
        v = self.value(z)
        if v <= 0.0:
            return float("-inf")
        shift = np.dot(self.twist, np.subtract(self.target, z))
        return float(np.log(v) - shift)

    def untwisted(self, z) -> float:
        return float(np.exp(self.log_untwisted(z)))

    @property
    def values(self) -> dict:
        x0, x1, y0, y1 = self.region
        return {(x, y): float(self.grid[x - x0, y - y0])
                for x in range(x0, x1 + 1) for y in range(y0, y1 + 1)}


def _solve_column(measure, kind, a, target, box):
    system = region_system(measure, a, box.region(kind))
    if not system.contains(target):
        raise ValueError(f"target {tuple(target)} outside box ∩ domain")
    rhs = np.zeros(system.size)
    rhs[system.index(target)] = 1.0
    g = system.solve(rhs)
    return system, g, system.residual(g, rhs)


def green_column(measure: JumpMeasure, kind: str, a=(0.0, 0.0), target=(1, 1), box: Box = None,
                 *, query=None, estimate_truncation: bool = True,
                 tol: float | None = None) -> GreenColumn:
    """Green column G^a(., target) on ``box``.

    ``query`` lists the points where the truncation error is measured
    (default: the box shrunk by its margin).  The error estimate is twice
    the largest change observed when the box grows by its margin on every
    side.
    """
    check_kind(kind)
    a = np.asarray(a, dtype=float)
    if geometry.phi(measure, a) > 1.0 + 1e-12:
        raise ValueError("phi(a) must be <= 1")
    target = (int(target[0]), int(target[1]))
    if not in_domain(kind, *target):
        raise ValueError(f"target {target} outside the domain of {kind}")
    if box is None:
        box = Box.around([target], 40)
    system, g, res = _solve_column(measure, kind, a, target, box)
    if res > RESIDUAL_TOL:
        raise SolverError(f"linear residual {res:.3e} above {RESIDUAL_TOL}")
    grid = system.grid(g)
    col = GreenColumn(target, kind, (float(a[0]), float(a[1])), box, system.region, grid, 0.0, res)
    if estimate_truncation:
        if query is None:
            ib = box.inner()
            qx0, qx1, qy0, qy1 = ib.region(kind)
            xs, ys = np.meshgrid(np.arange(qx0, qx1 + 1), np.arange(qy0, qy1 + 1), indexing="ij")
            query = np.stack([xs.ravel(), ys.ravel()], axis=1)
        query = np.asarray(query, dtype=np.int64).reshape(-1, 2)
        big = box.grown()
        sys2, g2, _ = _solve_column(measure, kind, a, target, big)
        bx0, _, by0, _ = sys2.region
        grid2 = sys2.grid(g2)
        x0, x1, y0, y1 = system.region
        keep = ((query[:, 0] >= x0) & (query[:, 0] <= x1) & (query[:, 1] >= y0)
                & (query[:, 1] <= y1) & in_domain(kind, query[:, 0], query[:, 1]))
        qk = query[keep]
        diff = 0.0
        if len(qk):
            v1 = grid[qk[:, 0] - x0, qk[:, 1] - y0]
            v2 = grid2[qk[:, 0] - bx0, qk[:, 1] - by0]
            diff = float(np.max(np.abs(v2 - v1)))
        col.truncation_error = 2.0 * diff
    if tol is not None and col.truncation_error > tol:
        col.warning = True
        warnings.warn(f"truncation error {col.truncation_error:.3e} exceeds {tol:.1e}",
                      stacklevel=2)
    return col


def martin_kernel(column: GreenColumn, z, z0) -> float:
    """G(z, target) / G(z0, target), computed from twisted values in log space."""
    num, den = column.value(z), column.value(z0)
    if den < 1e-300:
        raise UnderflowError("denominator underflows; recompute with a twisted column")
    if num <= 0.0:
        return 0.0
    shift = np.dot(column.twist, np.subtract(z, z0))
    return float(np.exp(np.log(num) - np.log(den) + shift))


def check_twist_identity(measure: JumpMeasure, kind: str, a, box: Box, pairs,
                         floor: float = 1e-300) -> float:
    """max |G^a(z,z') - G(z,z') e^{a.(z'-z)}| / max(G^a(z,z'), floor) over pairs."""
    if kind not in ("Free", "HalfPlane1"):
        raise ValueError("twist identity is checked for Free and HalfPlane1")
    a = np.asarray(a, dtype=float)
    by_target = {}
    for z, zp in pairs:
        by_target.setdefault((int(zp[0]), int(zp[1])), []).append((int(z[0]), int(z[1])))
    worst = 0.0
    for zp, zs in sorted(by_target.items()):
        ga = green_column(measure, kind, a, zp, box, estimate_truncation=False)
        g0 = green_column(measure, kind, (0.0, 0.0), zp, box, estimate_truncation=False)
        for z in zs:
            lhs = ga.value(z)
            rhs = g0.value(z) * np.exp(a @ np.subtract(zp, z))
            worst = max(worst, abs(lhs - rhs) / max(lhs, floor))
    return float(worst)


@dataclass(frozen=True)
class RenewalCheck:
    lhs: float
    rhs: float
    residual: float


def check_renewal(measure: JumpMeasure, variant: str, z, target, box: Box) -> RenewalCheck:
    """Compare G_+(z, z') with its renewal decomposition on the same box.

    ``quadrant_vs_free``: G_+ = G - sum_w P_z(S(tau) = w) G(w, z').
    ``quadrant_vs_halfplane1``: G_+ = G^1_+ - sum over exits with tau = tau1 < tau2.
    """
    from .boundary_functionals import exit_distribution

    if variant == "quadrant_vs_free":
        outer, event_class = "Free", None
    elif variant == "quadrant_vs_halfplane1":
        outer, event_class = "HalfPlane1", "tau1"
    else:
        raise ValueError(f"unknown renewal variant {variant!r}")
    z = (int(z[0]), int(z[1]))
    target = (int(target[0]), int(target[1]))
    if not (in_domain("Quadrant", *z) and in_domain("Quadrant", *target)):
        raise ValueError("z and target must lie in the open quadrant")
    inner = green_column(measure, "Quadrant", (0.0, 0.0), target, box, estimate_truncation=False)
    full = green_column(measure, outer, (0.0, 0.0), target, box, estimate_truncation=False)
    ex = exit_distribution(measure, "Quadrant", (0.0, 0.0), z, box)
    corr = 0.0
    for w, c, m in zip(ex.points, ex.classes, ex.masses):
        if event_class is None or c == event_class:
            corr += m * full.value(w)
    lhs = inner.value(z)
    rhs = full.value(z) - corr
    return RenewalCheck(lhs, rhs, abs(lhs - rhs))
