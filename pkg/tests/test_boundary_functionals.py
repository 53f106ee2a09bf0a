import numpy as np
import pytest
from hypothesis import given, strategies as st

from martin_quadrant import geometry
from martin_quadrant._lattice import Box
from martin_quadrant._marginal import Marginal1D
from martin_quadrant.boundary_functionals import (FarField, boundary_expectation, exit_distribution,
                                                  functional_field, h1_function, h_function,
                                                  harmonicity_residual, level_hit_profile,
                                                  martingale_residual, weight_fn)
from martin_quadrant.lattice_measure import M1, M2

A10 = geometry.a_of_q(M1, (1, 0)).vec


def test_marginal_closed_forms():
    # nearest-neighbour marginals exit with probability (down/up)^x
    x = np.arange(0, 30)
    m = Marginal1D.from_measure(M1, (0.0, 0.0), 0)
    assert np.allclose(m.exit_probability(29), (3 / 7) ** x, rtol=1e-12, atol=1e-18)
    assert m.lundberg() == pytest.approx(np.log(3 / 7), abs=1e-12)
    m = Marginal1D.from_measure(M1, A10, 0)
    r = 3 / 7 * np.exp(-2 * A10[0])
    assert np.allclose(m.exit_probability(29), r ** x, rtol=1e-11, atol=1e-18)
    # vertical marginal is a lazy symmetric walk
    mv = Marginal1D.from_measure(M1, A10, 1)
    assert mv.certain_exit
    for k in (1, 2, 5, 64):
        assert mv.exact_level_hit(k, 60) == pytest.approx(k / (k + 1), abs=1e-12)


def test_self_consistent_closure_with_overshoot():
    # steps -2, 0, +1 with zero drift: P_x(S_T = 0) = 2/3 + (1/3)(-1/2)^x
    m = Marginal1D({-2: 0.25, 0: 0.25, 1: 0.5})
    assert m.certain_exit
    v = m.exit_functional(lambda s: (s == 0).astype(float), 40)
    x = np.arange(41)
    assert np.allclose(v, 2 / 3 + (-0.5) ** x / 3, atol=1e-10)
    # S_T lies in {-1, 0}, so E(S_T) = -P(S_T = -1)
    w = m.exit_functional(lambda s: s.astype(float), 40)
    assert np.allclose(w, -(1 - v), atol=1e-10)


def test_weight_fn_parsing():
    assert weight_fn("S1").axis == 0
    assert weight_fn(("exp_extra", 0.5)).label == "exp_extra(0.5)"
    assert weight_fn("abs_S2")(np.array([-3.0]))[0] == 3.0
    with pytest.raises(ValueError):
        weight_fn("S3")


@given(st.integers(1, 10), st.integers(1, 10), st.floats(0.0, 1.0))
def test_conservation(x, y, s):
    amin = geometry.min_point(M2)
    a = amin + s * (geometry.a_of_q(M2, (0.6, 0.8)).vec - amin)
    ex = exit_distribution(M2, "Quadrant", a, (x, y), Box((-5, 25), (-5, 25), 5))
    assert ex.conservation_error <= 1e-12
    assert np.all(ex.masses >= 0) and np.all(ex.leak_masses >= 0)
    assert np.all((ex.points[:, 0] <= 0) | (ex.points[:, 1] <= 0))
    assert set(ex.classes[ex.points[:, 1] <= 0]) <= {"tau2"}


def test_adjoint_matches_forward():
    a = geometry.a_of_q(M2, (1, 0)).vec
    box = Box((-20, 60), (-20, 60), 20)
    lo, hi, system = functional_field(M2, "Quadrant", a, box, "S2")
    for z in [(3, 3), (10, 2), (1, 7)]:
        ex = exit_distribution(M2, "Quadrant", a, z, box)
        e = boundary_expectation(ex, "S2", detailed=True)
        i = system.index(z)
        scale = np.exp(a @ np.array(z))
        assert e.lo == pytest.approx(lo.ravel()[i] * scale, rel=1e-10, abs=1e-14)
        assert e.hi == pytest.approx(hi.ravel()[i] * scale, rel=1e-10, abs=1e-14)


@pytest.mark.parametrize("weight,event", [("one", "tau_lt_inf"), ("S2", "tau2_before_tau1"),
                                          ("S1", "tau1_before_tau2"), ("S2", "tau_lt_inf")])
def test_far_field_bracket_contains_large_box_value(weight, event):
    a = geometry.a_of_q(M1, (1, 0)).vec
    z = (4, 3)
    small = boundary_expectation(exit_distribution(M1, "Quadrant", a, z, Box((1, 30), (1, 30), 0)),
                                 weight, event, detailed=True)
    big = boundary_expectation(exit_distribution(M1, "Quadrant", a, z, Box((1, 300), (1, 300), 0)),
                               weight, event, detailed=True)
    assert small.lo - 1e-12 <= big.value <= small.hi + 1e-12
    assert big.width <= small.width + 1e-15


def test_critical_twist_exits_surely():
    ex = exit_distribution(M1, "Quadrant", A10, (3, 3), Box((1, 200), (1, 200), 0))
    e = boundary_expectation(ex, "one", detailed=True)
    assert e.lo * np.exp(-A10 @ (3, 3)) >= 1 - 1e-5


def test_free_far_field_is_zero():
    ff = FarField(M1, A10, "Free")
    lo, hi = ff.bracket(weight_fn("one"), "tau_lt_inf", [(100, 100)])
    assert lo[0] == hi[0] == 0.0


@pytest.mark.parametrize("m", [M1, M2], ids=["M1", "M2"])
@pytest.mark.parametrize("q", [(1, 0), (0, 1), (1, 1), (3, 1)])
def test_h_harmonic_positive(m, q):
    h = h_function(m, q, Box((-59, 80), (-59, 80), 60))
    assert h.bracket_width <= 1e-7
    for z in [(1, 1), (2, 5), (7, 3), (15, 15)]:
        assert h(z) > 0
        assert harmonicity_residual(h, m, z) <= 1e-9 * max(1.0, h(z))
    assert h((0, 4)) == 0.0 and h((4, 0)) == 0.0
    with pytest.raises(ValueError):
        harmonicity_residual(h, m, (80, 80))


@pytest.mark.parametrize("m", [M1, M2], ids=["M1", "M2"])
def test_h1_identity(m):
    """h1(z) - E_z(h1(S(tau)); tau = tau1 < tau2) = h(z) for the critical twist a(1,0)."""
    a = geometry.a_of_q(m, (1, 0)).vec
    h = h_function(m, (1, 0), Box((-99, 110), (-99, 110), 100))
    top = 200
    h1 = h1_function(m, Box((-3, 12), (1, top + 3), 0))
    c = max(0.0, -float(min(h1.twisted((0, y)) - y for y in range(1, top + 1))))
    box = Box((1, top), (1, top), 0)
    for x in range(1, 11):
        for y in range(1, 11):
            ex = exit_distribution(m, "Quadrant", a, (x, y), box)
            sel = ex.classes == "tau1"
            acc = sum(mass * h1.twisted(w) for w, mass in zip(ex.points[sel], ex.masses[sel]))
            # mass leaked beyond the box: twisted h1 is between 0 and s2 + c
            ff = ex.far_field
            _, s2 = ff.bracket(weight_fn("S2"), "tau1_before_tau2", ex.leak_points)
            _, one = ff.bracket(weight_fn("one"), "tau1_before_tau2", ex.leak_points)
            slack = float(np.sum(ex.leak_masses * (s2 + c * one)))
            lhs = h1.twisted((x, y)) - acc
            assert abs(lhs - h.twisted((x, y))) <= 1e-7 + slack
            assert slack <= 1e-9


def test_martingale_and_profile():
    for m in (M1, M2):
        for z in [(1, 1), (5, 9), (30, 2)]:
            assert martingale_residual(m, z) <= 1e-12
    prof = level_hit_profile(M1, [1, 2, 4, 64])
    assert prof == pytest.approx([1 / 2, 2 / 3, 4 / 5, 64 / 65], abs=1e-9)
