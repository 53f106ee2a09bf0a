"""One-dimensional coordinate walks used for far-field closures.

The coordinate process S_j of a (twisted, possibly killed) planar walk is
itself a killed walk on Z.  Its exit functionals from the half-line
{x >= 1} are computed here by banded solves.
"""

from __future__ import annotations

from math import ceil, log

import numpy as np
from scipy import linalg, optimize

from .lattice_measure import JumpMeasure

TAIL_EPS = 1e-20


class Marginal1D:
    """Walk on Z with step j taken with weight ``p[j]`` (total <= 1)."""

    def __init__(self, weights: dict):
        items = sorted((int(j), float(p)) for j, p in weights.items() if p > 0)
        self.jumps = np.array([j for j, _ in items], dtype=np.int64)
        self.p = np.array([p for _, p in items])
        self.total = float(self.p.sum())
        self.drift = float(self.p @ self.jumps)
        self.d_down = int(max(0, -self.jumps.min()))
        self.d_up = int(max(0, self.jumps.max()))
        self._tables = {}

    @classmethod
    def from_measure(cls, measure: JumpMeasure, a, axis: int) -> "Marginal1D":
        w = measure.probs * np.exp(measure.offsets @ np.asarray(a, dtype=float))
        out = {}
        for z, p in zip(measure.offsets[:, axis], w):
            out[int(z)] = out.get(int(z), 0.0) + float(p)
        return cls(out)

    @property
    def certain_exit(self) -> bool:
        """Exit from {x >= 1} happens almost surely (stochastic, non-positive drift)."""
        return self.d_down > 0 and self.total >= 1.0 - 1e-13 and self.drift <= 1e-10

    def lundberg(self) -> float | None:
        """Negative root beta of sum p_j e^{beta j} = 1, or None if u is not exponentially small."""
        if self.d_down == 0 or self.certain_exit:
            return None
        f = lambda b: float(self.p @ np.exp(b * self.jumps)) - 1.0
        lo = -1.0
        while f(lo) < 0:
            lo *= 2.0
            if lo < -1e4:
                return None
        hi = 0.0
        if f(hi) >= 0:
            # stochastic with positive drift: 0 is a root, move just inside
            hi = -1e-9
            while f(hi) >= 0 and hi > lo:
                hi *= 0.5
                if hi > -1e-300:
                    return None
        return float(optimize.brentq(f, lo, hi, xtol=1e-14))

    def tail_length(self, scale: float = 1.0) -> int:
        beta = self.lundberg()
        if beta is None:
            return 64
        return int(ceil(log(TAIL_EPS / max(scale, 1e-300)) / beta)) + self.d_up + 2

    def _solve(self, L, boundary, top):
        """Values v(x), x = 1..L, of the killed walk with v = boundary(s) for s <= 0
        and v = top for s > L."""
        lo_b, up_b = self.d_down, self.d_up
        ab = np.zeros((lo_b + up_b + 1, L))
        rhs = np.zeros(L)
        ab[up_b, :] = 1.0
        x = np.arange(1, L + 1)
        for j, p in zip(self.jumps, self.p):
            tgt = x + j
            inside = (tgt >= 1) & (tgt <= L)
            cols = tgt[inside] - 1
            rows = x[inside] - 1
            ab[up_b + rows - cols, cols] -= p
            below = tgt <= 0
            if below.any():
                rhs[below] += p * boundary(tgt[below])
            if top != 0.0:
                rhs[tgt > L] += p * top
        return linalg.solve_banded((lo_b, up_b), ab, rhs)

    def exit_functional(self, f, x_max: int, key=None) -> np.ndarray:
        """v(x) = E_x(f(S_T); T < inf), T the first time S <= 0, for x = 0..x_max.

        Entry 0 is f(0).  ``f`` maps integer arrays (s <= 0) to values.
        Results are cached under ``key`` when given.
        """
        if key is not None and key in self._tables and len(self._tables[key]) > x_max:
            return self._tables[key][: x_max + 1]
        out = np.empty(x_max + 1)
        out[0] = float(f(np.array([0]))[0])
        if self.d_down == 0 or x_max == 0:
            out[1:] = 0.0
        elif self.certain_exit and self.d_down == 1:
            out[1:] = out[0]
        elif self.certain_exit:
            L = max(4 * x_max, 4096)
            ones = self._solve(L, lambda s: np.zeros(len(s)), 1.0)
            base = self._solve(L, f, 0.0)
            mid = L // 2 - 1
            c = base[mid] / (1.0 - ones[mid])
            out[1:] = (base + c * ones)[:x_max]
        else:
            fmax = float(np.max(np.abs(f(np.arange(-self.d_down + 1, 1)))))
            L = max(x_max, self.tail_length(fmax))
            out[1:] = self._solve(L, f, 0.0)[:x_max]
        if key is not None:
            self._tables[key] = out
        return out

    def exit_probability(self, x_max: int) -> np.ndarray:
        if self.certain_exit:
            out = np.ones(x_max + 1)
            return out
        return self.exit_functional(lambda s: np.ones(len(s)), x_max, key="one")

    def exact_level_hit(self, k: int, delta: int) -> float:
        """P_k(hit level k+1 exactly before entering {<= 0}), strip truncated at k+1+delta."""
        top = k + 1 + delta
        L = top
        lo_b, up_b = self.d_down, self.d_up
        ab = np.zeros((lo_b + up_b + 1, L))
        ab[up_b, :] = 1.0
        rhs = np.zeros(L)
        x = np.arange(1, L + 1)
        target = k + 1
        for j, p in zip(self.jumps, self.p):
            tgt = x + j
            inside = (tgt >= 1) & (tgt <= L) & (tgt != target)
            ab[up_b + (x[inside] - 1) - (tgt[inside] - 1), tgt[inside] - 1] -= p
            rhs[tgt == target] += p
        # state ``target`` itself is absorbing; make its row trivial
        row = target - 1
        for c in range(max(0, row - lo_b), min(L, row + up_b + 1)):
            if c != row:
                ab[up_b + row - c, c] = 0.0
        ab[up_b, row] = 1.0
        rhs[row] = 1.0
        v = linalg.solve_banded((lo_b, up_b), ab, rhs)
        return float(v[k - 1])
