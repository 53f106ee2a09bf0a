"""Sparse linear algebra for walks restricted to a rectangular window."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from threading import Lock

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spl

from .lattice_measure import JumpMeasure

KINDS = ("Free", "Quadrant", "HalfPlane1", "HalfPlane2")
_LOWER = {"Free": (None, None), "Quadrant": (1, 1), "HalfPlane1": (None, 1), "HalfPlane2": (1, None)}


def check_kind(kind: str) -> str:
    if kind not in KINDS:
        raise ValueError(f"unknown walk kind {kind!r}; expected one of {KINDS}")
    return kind


def in_domain(kind: str, x, y):
    """Membership in Z^2, N*xN*, ZxN* or N*xZ."""
    lx, ly = _LOWER[check_kind(kind)]
    ok = np.ones(np.broadcast(np.asarray(x), np.asarray(y)).shape, dtype=bool)
    if lx is not None:
        ok &= np.asarray(x) >= lx
    if ly is not None:
        ok &= np.asarray(y) >= ly
    return ok if ok.ndim else bool(ok)


def exit_class(x, y):
    """``tau1`` when only the first coordinate left, ``tau2`` otherwise (ties included)."""
    return np.where(np.asarray(y) <= 0, "tau2", "tau1")


@dataclass(frozen=True)
class Box:
    """Rectangular truncation window ``x_range x y_range`` (inclusive).

    ``margin`` records the padding added beyond the queried points; it is
    also the growth used when estimating truncation error.
    """

    x_range: tuple
    y_range: tuple
    margin: int = 40

    def __post_init__(self):
        x0, x1 = (int(v) for v in self.x_range)
        y0, y1 = (int(v) for v in self.y_range)
        if x1 < x0 or y1 < y0:
            raise ValueError(f"empty box {self.x_range} x {self.y_range}")
        object.__setattr__(self, "x_range", (x0, x1))
        object.__setattr__(self, "y_range", (y0, y1))
        object.__setattr__(self, "margin", int(self.margin))

    @classmethod
    def around(cls, points, margin: int = 40) -> "Box":
        pts = np.asarray(points, dtype=np.int64).reshape(-1, 2)
        return cls((int(pts[:, 0].min()) - margin, int(pts[:, 0].max()) + margin),
                   (int(pts[:, 1].min()) - margin, int(pts[:, 1].max()) + margin), margin)

    @classmethod
    def square(cls, lo: int, hi: int, margin: int = 40) -> "Box":
        return cls((lo, hi), (lo, hi), margin)

    def grown(self, extra: int | None = None) -> "Box":
        e = self.margin if extra is None else int(extra)
        return Box((self.x_range[0] - e, self.x_range[1] + e),
                   (self.y_range[0] - e, self.y_range[1] + e), self.margin)

    def inner(self) -> "Box":
        """Queried region: the window shrunk by the margin (never empty)."""
        m = self.margin
        x0, x1 = self.x_range
        y0, y1 = self.y_range
        if x1 - x0 < 2 * m or y1 - y0 < 2 * m:
            return self
        return Box((x0 + m, x1 - m), (y0 + m, y1 - m), 0)

    def region(self, kind: str):
        """Intersection with the domain of ``kind`` as (x0, x1, y0, y1)."""
        lx, ly = _LOWER[check_kind(kind)]
        x0, x1 = self.x_range
        y0, y1 = self.y_range
        if lx is not None:
            x0 = max(x0, lx)
        if ly is not None:
            y0 = max(y0, ly)
        if x1 < x0 or y1 < y0:
            raise ValueError(f"box {self} does not meet the domain of {kind}")
        return (x0, x1, y0, y1)

    def contains(self, z) -> bool:
        return (self.x_range[0] <= z[0] <= self.x_range[1]
                and self.y_range[0] <= z[1] <= self.y_range[1])


class SolverError(RuntimeError):
    pass


class RegionSystem:
    """I - P_a on a rectangle, with P_a(y, y+d) = mu(d) exp(a.d)."""

    def __init__(self, measure: JumpMeasure, a, region):
        self.measure = measure
        self.a = np.asarray(a, dtype=float)
        self.region = tuple(int(v) for v in region)
        x0, x1, y0, y1 = self.region
        self.nx, self.ny = x1 - x0 + 1, y1 - y0 + 1
        self.size = self.nx * self.ny
        self.weights = measure.probs * np.exp(measure.offsets @ self.a)
        self.offsets = measure.offsets
        X, Y = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1), indexing="ij")
        self.X, self.Y = X, Y
        idx = np.arange(self.size).reshape(self.nx, self.ny)
        rows, cols, vals = [np.arange(self.size)], [np.arange(self.size)], [np.ones(self.size)]
        for (dx, dy), p in zip(self.offsets, self.weights):
            Xn, Yn = X + dx, Y + dy
            m = (Xn >= x0) & (Xn <= x1) & (Yn >= y0) & (Yn <= y1)
            rows.append(idx[m])
            cols.append(idx[Xn[m] - x0, Yn[m] - y0])
            vals.append(np.full(int(m.sum()), -p))
        A = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(self.size, self.size))
        self.A = A
        self.AT = A.T.tocsc()
        try:
            self.lu = spl.splu(A)
        except RuntimeError as exc:
            raise SolverError(f"factorisation failed on region {self.region}: {exc}") from exc

    def index(self, z) -> int:
        x0, _, y0, _ = self.region
        return (int(z[0]) - x0) * self.ny + (int(z[1]) - y0)

    def contains(self, z) -> bool:
        x0, x1, y0, y1 = self.region
        return x0 <= z[0] <= x1 and y0 <= z[1] <= y1

    def _refine(self, A, rhs, trans):
        x = self.lu.solve(rhs, trans=trans)
        scale = max(np.max(np.abs(rhs)), 1e-300)
        for _ in range(3):
            r = rhs - A @ x
            if np.max(np.abs(r)) <= 1e-15 * scale:
                break
            x = x + self.lu.solve(r, trans=trans)
        if not np.all(np.isfinite(x)):
            raise SolverError("non-finite solution")
        return x

    def solve(self, rhs) -> np.ndarray:
        return self._refine(self.A, np.asarray(rhs, dtype=float), "N")

    def solve_adjoint(self, rhs) -> np.ndarray:
        return self._refine(self.AT, np.asarray(rhs, dtype=float), "T")

    def residual(self, x, rhs) -> float:
        return float(np.max(np.abs(self.A @ x - rhs)))

    def grid(self, vec) -> np.ndarray:
        return np.asarray(vec).reshape(self.nx, self.ny)

    def boundary_rhs(self, outside_value) -> np.ndarray:
        """sum_d P_a(y, y+d) f(y+d) over steps leaving the rectangle.

        ``outside_value(X, Y)`` evaluates f on arrays of outside points.
        """
        x0, x1, y0, y1 = self.region
        rhs = np.zeros((self.nx, self.ny))
        for (dx, dy), p in zip(self.offsets, self.weights):
            Xn, Yn = self.X + dx, self.Y + dy
            out = (Xn < x0) | (Xn > x1) | (Yn < y0) | (Yn > y1)
            if out.any():
                rhs[out] += p * outside_value(Xn[out], Yn[out])
        return rhs.ravel()

    def exit_mass(self, visits):
        """Aggregate sum_y visits(y) P_a(y, w) over outside points w.

        Returns (points (n, 2) int array, masses (n,)), sorted lexicographically.
        """
        x0, x1, y0, y1 = self.region
        v = self.grid(visits)
        pts, mass = [], []
        for (dx, dy), p in zip(self.offsets, self.weights):
            Xn, Yn = self.X + dx, self.Y + dy
            out = (Xn < x0) | (Xn > x1) | (Yn < y0) | (Yn > y1)
            if out.any():
                pts.append(np.stack([Xn[out], Yn[out]], axis=1))
                mass.append(p * v[out])
        if not pts:
            return np.zeros((0, 2), dtype=np.int64), np.zeros(0)
        pts = np.concatenate(pts)
        mass = np.concatenate(mass)
        uniq, inv = np.unique(pts, axis=0, return_inverse=True)
        agg = np.zeros(len(uniq))
        np.add.at(agg, inv.ravel(), mass)
        return uniq, agg


_CACHE: "OrderedDict[tuple, RegionSystem]" = OrderedDict()
_CACHE_LOCK = Lock()
_CACHE_SIZE = 6
_CACHE_BUDGET = 400_000  # total unknowns kept factorised


def region_system(measure: JumpMeasure, a, region) -> RegionSystem:
    """Factorised system, memoised on (measure, a, region)."""
    key = (measure.entries, tuple(float(v) for v in np.asarray(a, dtype=float)), tuple(region))
    with _CACHE_LOCK:
        if key in _CACHE:
            _CACHE.move_to_end(key)
            return _CACHE[key]
    system = RegionSystem(measure, a, region)
    with _CACHE_LOCK:
        _CACHE[key] = system
        while len(_CACHE) > 1 and (len(_CACHE) > _CACHE_SIZE or
                                   sum(s.size for s in _CACHE.values()) > _CACHE_BUDGET):
            _CACHE.popitem(last=False)
    return system


def clear_cache():
    with _CACHE_LOCK:
        _CACHE.clear()
