"""Transition kernels, path sampling and Monte Carlo exit probabilities.

Twisted kernels put weight mu(z) exp(a.z) on step z.  When phi(a) < 1
the missing mass 1 - phi(a) is a per-step killing probability, simulated
explicitly rather than renormalised.

Random streams: a root seed feeds ``numpy.random.SeedSequence``; Monte
Carlo samples are split into fixed-size chunks and chunk ``i`` uses the
``i``-th spawned child.  Results therefore do not depend on how chunks are
distributed over worker threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import os

import numpy as np

from ._lattice import check_kind, in_domain
from .lattice_measure import JumpMeasure

WALK_KINDS = ("Free", "Quadrant", "HalfPlane1", "HalfPlane2")
MC_CHUNK = 8192


@dataclass(frozen=True)
class TwistedKernel:
    base: JumpMeasure
    a: tuple
    offsets: np.ndarray
    weights: np.ndarray

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    @property
    def deficit(self) -> float:
        """Per-step killing probability 1 - phi(a) (zero when stochastic)."""
        return max(0.0, 1.0 - self.total)

    @property
    def mean(self) -> np.ndarray:
        return self.weights @ self.offsets.astype(float)

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.weights)


def twisted_kernel(measure: JumpMeasure, a=(0.0, 0.0)) -> TwistedKernel:
    a = np.asarray(a, dtype=float)
    w = measure.probs * np.exp(measure.offsets @ a)
    return TwistedKernel(measure, (float(a[0]), float(a[1])), measure.offsets.copy(), w)


@dataclass(frozen=True)
class PathSample:
    states: np.ndarray
    stop_reason: str
    stop_time: int
    tau_class: str | None


def _stop_check(kind, x, y):
    """Return the stop reason if (x, y) lies outside the domain of ``kind``."""
    if kind == "Free":
        return None
    if kind == "Quadrant":
        if y <= 0:
            return "hit_tau2"
        if x <= 0:
            return "hit_tau1"
        return None
    if kind == "HalfPlane1":
        return "hit_tau2" if y <= 0 else None
    return "hit_tau1" if x <= 0 else None


def sample_path(kind: str, kernel: TwistedKernel, z0, horizon: int, seed: int) -> PathSample:
    """Simulate one path until it leaves the domain, is killed, or reaches ``horizon`` steps."""
    check_kind(kind)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if not in_domain(kind, z0[0], z0[1]):
        raise ValueError(f"start point {tuple(z0)} is outside the domain of {kind}")
    if kernel.total > 1.0 + 1e-12:
        raise ValueError("kernel weights exceed one")
    rng = np.random.default_rng(seed)
    u = rng.random(horizon)
    cum = kernel.cumulative
    killed = u >= cum[-1]
    kill_at = int(np.argmax(killed)) if killed.any() else horizon
    steps = kernel.offsets[np.minimum(np.searchsorted(cum, u[:kill_at], side="right"),
                                      len(cum) - 1)]
    pos = np.vstack([np.asarray(z0, dtype=np.int64)[None, :],
                     np.asarray(z0, dtype=np.int64) + np.cumsum(steps, axis=0)])
    if kind == "Free":
        bad = np.zeros(len(pos), dtype=bool)
    else:
        bad = ~in_domain(kind, pos[:, 0], pos[:, 1])
    if bad.any():
        t = int(np.argmax(bad))
        reason = _stop_check(kind, pos[t, 0], pos[t, 1])
        tau = "tau2" if reason == "hit_tau2" else "tau1"
        return PathSample(pos[:t + 1], reason, t, tau if kind == "Quadrant" else None)
    if kill_at < horizon:
        return PathSample(pos, "killed_mass", kill_at + 1, None)
    return PathSample(pos, "horizon", horizon, None)


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    stderr: float
    n: int
    seed: int
    horizon: int
    exits_tau1: int
    exits_tau2: int
    killed: int


def _mc_chunk(cum, offsets, z0, horizon, n, seed_seq):
    rng = np.random.default_rng(seed_seq)
    x = np.full(n, int(z0[0]), dtype=np.int64)
    y = np.full(n, int(z0[1]), dtype=np.int64)
    alive = np.arange(n)
    ex1 = ex2 = killed = 0
    total = cum[-1]
    for _ in range(horizon):
        if alive.size == 0:
            break
        u = rng.random(alive.size)
        dead = u >= total
        killed += int(dead.sum())
        keep = ~dead
        alive, u = alive[keep], u[keep]
        k = np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1)
        x[alive] += offsets[k, 0]
        y[alive] += offsets[k, 1]
        out2 = y[alive] <= 0
        out1 = (x[alive] <= 0) & ~out2
        ex1 += int(out1.sum())
        ex2 += int(out2.sum())
        alive = alive[~(out1 | out2)]
    return ex1, ex2, killed


def resolve_threads(threads: int) -> int:
    if threads is None or threads <= 0:
        return max(1, os.cpu_count() or 1)
    return int(threads)


def exit_probability_mc(kernel: TwistedKernel, z0, horizon: int, n_samples: int, seed: int,
                        threads: int = 1) -> MCEstimate:
    """Fraction of twisted quadrant paths from z0 that exit before ``horizon``."""
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    if kernel.total > 1.0 + 1e-12:
        raise ValueError("phi(a) must be <= 1")
    if not (z0[0] >= 1 and z0[1] >= 1):
        raise ValueError("z0 must lie in the open quadrant")
    n_chunks = -(-n_samples // MC_CHUNK)
    children = np.random.SeedSequence(int(seed)).spawn(n_chunks)
    sizes = [min(MC_CHUNK, n_samples - i * MC_CHUNK) for i in range(n_chunks)]
    cum = kernel.cumulative
    jobs = [(cum, kernel.offsets, z0, horizon, sizes[i], children[i]) for i in range(n_chunks)]
    nthreads = min(resolve_threads(threads), n_chunks)
    if nthreads == 1:
        parts = [_mc_chunk(*j) for j in jobs]
    else:
        with ThreadPoolExecutor(nthreads) as pool:
            parts = list(pool.map(lambda j: _mc_chunk(*j), jobs))
    e1 = sum(p[0] for p in parts)
    e2 = sum(p[1] for p in parts)
    k = sum(p[2] for p in parts)
    p_hat = (e1 + e2) / n_samples
    se = float(np.sqrt(p_hat * (1.0 - p_hat) / n_samples))
    return MCEstimate(float(p_hat), se, n_samples, int(seed), int(horizon), e1, e2, k)
