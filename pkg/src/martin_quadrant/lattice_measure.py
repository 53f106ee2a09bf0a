"""Jump measures on Z^2 and their structural hypotheses.

A :class:`JumpMeasure` is a finitely supported probability measure on
lattice offsets.  :func:`validate` checks irreducibility of the free walk,
non-zero drift, irreducibility of the walk killed outside the open
quadrant, aperiodicity of the coordinate walks and the period of the
planar walk.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property, reduce
from math import fsum, gcd

import numpy as np

MASS_TOL = 1e-12


class MeasureError(ValueError):
    """Raised for malformed measures or failed structural checks."""


@dataclass(frozen=True)
class JumpMeasure:
    """Finite-support probability measure on Z^2.

    ``entries`` maps integer offsets ``(dx, dy)`` to strictly positive
    masses summing to one.
    """

    entries: tuple
    name: str = ""

    def __init__(self, entries, name=""):
        items = dict(entries).items() if not isinstance(entries, tuple) else entries
        cleaned = []
        seen = set()
        for key, p in items:
            dx, dy = (int(key[0]), int(key[1]))
            if (dx, dy) != tuple(key):
                raise MeasureError(f"entries: offset {key!r} is not integral")
            if (dx, dy) in seen:
                raise MeasureError(f"entries: duplicate offset {(dx, dy)}")
            seen.add((dx, dy))
            p = float(p)
            if not np.isfinite(p) or p <= 0.0 or p > 1.0:
                raise MeasureError(f"entries: mass {p!r} at {(dx, dy)} not in (0, 1]")
            cleaned.append(((dx, dy), p))
        if not cleaned:
            raise MeasureError("entries: support is empty")
        total = float(np.sum([p for _, p in cleaned]))
        if abs(total - 1.0) > MASS_TOL:
            raise MeasureError(f"entries: masses sum to {total!r}, expected 1")
        if all(z == (0, 0) for z, _ in cleaned):
            raise MeasureError("entries: support is {(0, 0)}")
        cleaned.sort()
        object.__setattr__(self, "entries", tuple(cleaned))
        object.__setattr__(self, "name", str(name))

    @cached_property
    def offsets(self) -> np.ndarray:
        """Integer array of shape (n, 2)."""
        return np.array([z for z, _ in self.entries], dtype=np.int64).reshape(-1, 2)

    @cached_property
    def probs(self) -> np.ndarray:
        return np.array([p for _, p in self.entries], dtype=float)

    def as_dict(self) -> dict:
        return dict(self.entries)

    def swapped(self) -> "JumpMeasure":
        """Measure with the two coordinates exchanged."""
        return JumpMeasure({(dy, dx): p for (dx, dy), p in self.entries}, self.name)

    def is_swap_invariant(self, tol: float = 1e-15) -> bool:
        d = self.as_dict()
        return all(abs(d.get((dy, dx), 0.0) - p) <= tol for (dx, dy), p in self.entries)

    def __hash__(self):
        return hash(self.entries)


@dataclass(frozen=True)
class HypothesisReport:
    h1_irreducible: bool
    mean: tuple
    h2_killed_irreducible: bool
    h3_finite_phi: bool
    h4_coordinates_aperiodic: tuple
    period_2d: int | None
    notes: tuple = field(default=())

    @property
    def all_ok(self) -> bool:
        return (self.h1_irreducible and self.h2_killed_irreducible and self.h3_finite_phi
                and all(self.h4_coordinates_aperiodic))


def mean(measure: JumpMeasure) -> np.ndarray:
    """Drift vector sum_z z mu(z), summed with compensated arithmetic."""
    return np.array([fsum(p * z[0] for z, p in measure.entries),
                     fsum(p * z[1] for z, p in measure.entries)])


def mixture(m1: JumpMeasure, m2: JumpMeasure, lam: float) -> JumpMeasure:
    """Convex combination lam*m1 + (1-lam)*m2."""
    out = {}
    for z, p in m1.entries:
        out[z] = out.get(z, 0.0) + lam * p
    for z, p in m2.entries:
        out[z] = out.get(z, 0.0) + (1.0 - lam) * p
    out = {z: p for z, p in out.items() if p > 0.0}
    # renormalise rounding in the last bit
    s = sum(out.values())
    return JumpMeasure({z: p / s for z, p in out.items()})


def _reach(start, steps, inside, limit):
    seen = {start}
    queue = deque([start])
    while queue:
        x, y = queue.popleft()
        for dx, dy in steps:
            nxt = (x + dx, y + dy)
            if nxt not in seen and inside(nxt):
                seen.add(nxt)
                if len(seen) > limit:
                    return seen
                queue.append(nxt)
    return seen


def _free_irreducible(measure: JumpMeasure) -> bool:
    """Every unit vector is reachable from the origin.

    The set of reachable points is a semigroup; it is all of Z^2 iff it
    contains +-e1 and +-e2.  The search is confined to a window whose size
    is a multiple of the support radius, which suffices for the small
    measures this library handles.
    """
    steps = [tuple(z) for z in measure.offsets if tuple(z) != (0, 0)]
    radius = int(np.abs(measure.offsets).max())
    half = 6 * radius + 6
    seen = _reach((0, 0), steps, lambda z: abs(z[0]) <= half and abs(z[1]) <= half,
                  limit=(2 * half + 1) ** 2)
    return all(u in seen for u in [(1, 0), (-1, 0), (0, 1), (0, -1)])


def killed_irreducible(measure: JumpMeasure, window: int = 12) -> bool:
    """Reachability and co-reachability of the window from (1, 1) inside the quadrant."""
    steps = [tuple(z) for z in measure.offsets if tuple(z) != (0, 0)]
    radius = int(np.abs(measure.offsets).max())
    bound = window + 4 * radius + 4

    def inside(z):
        return 1 <= z[0] <= bound and 1 <= z[1] <= bound

    fwd = _reach((1, 1), steps, inside, limit=bound * bound)
    back = _reach((1, 1), [(-dx, -dy) for dx, dy in steps], inside, limit=bound * bound)
    box = {(x, y) for x in range(1, window + 1) for y in range(1, window + 1)}
    return box <= fwd and box <= back


def _coordinate_aperiodic(measure: JumpMeasure, axis: int) -> bool:
    """The 1D marginal walk is irreducible on Z with return-time gcd 1."""
    jumps = sorted({int(z[axis]) for z in measure.offsets})
    nonzero = [j for j in jumps if j != 0]
    if not nonzero or min(nonzero) > 0 or max(nonzero) < 0:
        return False
    if reduce(gcd, [abs(j) for j in nonzero]) != 1:
        return False
    if 0 in jumps:
        return True
    times = _return_times_1d(jumps, k_max=4 * (max(nonzero) - min(nonzero)) + 8)
    return reduce(gcd, times, 0) == 1


def _return_times_1d(jumps, k_max):
    lo, hi = min(jumps), max(jumps)
    support = {0}
    times = []
    for k in range(1, k_max + 1):
        support = {s + j for s in support for j in jumps if lo * k_max <= s + j <= hi * k_max}
        if 0 in support:
            times.append(k)
    return times


def return_times(measure: JumpMeasure, k_max: int, domain: str = "free") -> list:
    """Times k <= k_max with positive return probability.

    ``domain`` is ``"free"`` for the walk on Z^2 or ``"halfplane1"`` for the
    walk killed when the second coordinate becomes non-positive, started
    from (0, 1).  Only positivity is tracked (boolean set convolution).
    """
    offsets = measure.offsets
    r = int(np.abs(offsets).max())
    n = r * k_max + 2
    size = 2 * n + 1
    start = (0, 0) if domain == "free" else (0, 1)
    cur = np.zeros((size, size), dtype=bool)
    cur[start[0] + n, start[1] + n] = True
    if domain == "free":
        alive = None
    elif domain == "halfplane1":
        alive = np.zeros((size, size), dtype=bool)
        alive[:, n + 1:] = True
    else:
        raise ValueError(f"unknown domain {domain!r}")
    times = []
    for k in range(1, k_max + 1):
        nxt = np.zeros_like(cur)
        for dx, dy in offsets:
            nxt |= np.roll(np.roll(cur, dx, axis=0), dy, axis=1)
        if alive is not None:
            nxt &= alive
        cur = nxt
        if cur[start[0] + n, start[1] + n]:
            times.append(k)
    return times


def period2d(measure: JumpMeasure, k_max: int = 12, domain: str = "free") -> int:
    """Gcd of return times up to ``k_max``, checked stable when ``k_max`` doubles."""
    if k_max < 8:
        raise ValueError("k_max must be at least 8")
    t1 = return_times(measure, k_max, domain)
    if not t1:
        raise MeasureError(f"no return within k_max={k_max}; increase k_max")
    t2 = return_times(measure, 2 * k_max, domain)
    g1, g2 = reduce(gcd, t1), reduce(gcd, t2)
    if g1 != g2:
        raise MeasureError(f"period unstable: gcd {g1} at k_max={k_max}, {g2} at {2 * k_max}")
    return g1


def validate(measure: JumpMeasure, window: int = 12, k_max: int = 12) -> HypothesisReport:
    m = mean(measure)
    notes = []
    irreducible = _free_irreducible(measure)
    h1 = irreducible and bool(np.any(np.abs(m) > MASS_TOL))
    if not irreducible:
        notes.append("support does not generate Z^2 as a semigroup")
    elif not h1:
        notes.append("zero mean")
    h2 = killed_irreducible(measure, window)
    h4 = (_coordinate_aperiodic(measure, 0), _coordinate_aperiodic(measure, 1))
    period = period2d(measure, k_max) if irreducible else None
    return HypothesisReport(
        h1_irreducible=bool(h1),
        mean=(float(m[0]), float(m[1])),
        h2_killed_irreducible=bool(h2),
        h3_finite_phi=True,
        h4_coordinates_aperiodic=h4,
        period_2d=period,
        notes=tuple(notes),
    )


M1 = JumpMeasure({(1, 0): 0.35, (-1, 0): 0.15, (0, 1): 0.35, (0, -1): 0.15}, name="M1")
M2 = JumpMeasure({(1, 0): 0.3, (0, 1): 0.3, (-1, -1): 0.2, (1, 1): 0.1,
                  (-1, 0): 0.05, (0, -1): 0.05}, name="M2")
