from math import gcd

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from martin_quadrant.lattice_measure import (M1, M2, JumpMeasure, MeasureError, killed_irreducible,
                                             mean, mixture, period2d, return_times, validate)


def brute_period(entries, k_max=12, halfplane=False):
    """gcd of return times to the start, by explicit reachable-set iteration."""
    start = (0, 1) if halfplane else (0, 0)
    cur = {start}
    g = 0
    for n in range(1, k_max + 1):
        nxt = set()
        for (x, y) in cur:
            for (dx, dy), _ in entries:
                w = (x + dx, y + dy)
                if halfplane and w[1] < 1:
                    continue
                nxt.add(w)
        cur = nxt
        if start in cur:
            g = gcd(g, n)
    return g


def test_rejects_bad_input():
    with pytest.raises(MeasureError, match="sum to"):
        JumpMeasure({(1, 0): 0.5, (-1, 0): 0.49})
    with pytest.raises(MeasureError):
        JumpMeasure({(1, 0): 1.5, (-1, 0): -0.5})
    with pytest.raises(MeasureError):
        JumpMeasure({(0.5, 0): 1.0})
    with pytest.raises(MeasureError):
        JumpMeasure({(0, 0): 1.0})
    with pytest.raises(MeasureError):
        JumpMeasure({})
    with pytest.raises(MeasureError, match="duplicate"):
        JumpMeasure((((1, 0), 0.5), ((1, 0), 0.5)))


def test_fixtures():
    assert np.allclose(mean(M1), (0.2, 0.2), atol=0)
    assert np.allclose(mean(M2), (0.3 + 0.1 - 0.2 - 0.05, 0.3 + 0.1 - 0.2 - 0.05), atol=1e-15)
    for m in (M1, M2):
        rep = validate(m)
        assert rep.all_ok
        assert killed_irreducible(m)
    assert period2d(M1) == 2
    assert period2d(M2) == 1


def test_h1_failures():
    diag = JumpMeasure({(1, 1): 0.25, (-1, -1): 0.25, (1, -1): 0.25, (-1, 1): 0.25})
    even = JumpMeasure({(2, 0): 0.25, (-2, 0): 0.25, (0, 2): 0.25, (0, -2): 0.25})
    assert not validate(diag).h1_irreducible
    assert not validate(even).h1_irreducible


def test_period_matches_brute_force():
    for m in (M1, M2):
        assert period2d(m) == brute_period(m.entries)
        assert period2d(m, domain="halfplane1") == brute_period(m.entries, halfplane=True)


def test_return_times_m1_even():
    t = return_times(M1, 12)
    assert t == [2, 4, 6, 8, 10, 12]


def test_period_requires_window():
    with pytest.raises(ValueError):
        period2d(M1, k_max=4)


def test_swap():
    s = M2.swapped()
    assert s.as_dict()[(0, 1)] == M2.as_dict()[(1, 0)]
    assert M1.is_swap_invariant()
    assert not JumpMeasure({(1, 0): 0.5, (0, -1): 0.3, (-1, 1): 0.2}).is_swap_invariant()


offsets = st.sampled_from([(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (2, -1),
                           (-1, 2), (0, 0)])


@st.composite
def measures(draw):
    support = sorted(set(draw(st.lists(offsets, min_size=3, max_size=6))))
    if all(z == (0, 0) for z in support):
        support.append((1, 0))
    w = np.array(draw(st.lists(st.floats(0.05, 1.0), min_size=len(support),
                               max_size=len(support))))
    w = w / w.sum()
    w[-1] = 1.0 - w[:-1].sum()
    return JumpMeasure(dict(zip(support, w.tolist())))


@given(measures(), measures(), st.floats(0.0, 1.0))
def test_mixture_mean_is_linear(m1, m2, lam):
    mix = mixture(m1, m2, lam)
    expect = lam * mean(m1) + (1 - lam) * mean(m2)
    assert np.allclose(mean(mix), expect, atol=1e-12)


@given(measures())
def test_period_stable_and_swap_symmetric(m):
    assume(validate(m).h1_irreducible)
    k = period2d(m, 8)
    assert k == brute_period(m.entries, 8)
    assert period2d(m, 16) == k
    assert period2d(m.swapped(), 8) == k
