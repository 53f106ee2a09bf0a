import numpy as np
import pytest

from martin_quadrant import geometry
from martin_quadrant._lattice import Box
from martin_quadrant.boundary_functionals import h1_function, exit_distribution
from martin_quadrant.lattice_measure import M1, M2
from martin_quadrant.martin_limits import (RaySpec, lambda0_grid, log_asymptotics,
                                           ney_spitzer_check, ratio_limit_check,
                                           smoothed_nonincreasing, theorem1_convergence,
                                           uniform_bound_scan, xi_decomposition, xi_report)


def test_ray_projection():
    ray = RaySpec((1, 0), (20, 30))
    assert ray.points() == [(20, 1), (30, 1)]
    ray = RaySpec((1, 1), (20,))
    assert ray.point(20) == (14, 14)
    assert ray.q == pytest.approx((2 ** -0.5, 2 ** -0.5))
    with pytest.raises(ValueError):
        RaySpec((1, 1), (30, 20))


def test_smoothed_trend():
    assert smoothed_nonincreasing([0.05, 0.03, 0.031, 0.02])
    assert not smoothed_nonincreasing([0.01, 0.02, 0.03, 0.04])
    assert smoothed_nonincreasing([0.3])


def test_theorem1_interior_small():
    rep = theorem1_convergence(M1, RaySpec((1, 1), (20, 30, 40)), [(2, 3)])
    gaps = [r["relative_gap"] for r in rep.rows]
    assert gaps[-1] < gaps[0] < 0.02
    assert rep.extra["branch"] == "interior"


def test_theorem1_critical_target_via_halfplane_identity():
    """Critical target ratios from h1 minus its tau1-exit correction."""
    a = geometry.a_of_q(M1, (1, 0)).vec
    rep = theorem1_convergence(M1, RaySpec((1, 0), (20,)), [(2, 3), (4, 1)])
    top = 200
    h1 = h1_function(M1, Box((-3, 12), (1, top + 3), 0))
    box = Box((1, top), (1, top), 0)

    def h(z):
        ex = exit_distribution(M1, "Quadrant", a, z, box)
        sel = ex.classes == "tau1"
        acc = sum(m * h1.twisted(w) for w, m in zip(ex.points[sel], ex.masses[sel]))
        return (h1.twisted(z) - acc) * np.exp(a @ np.array(z))

    for row in rep.rows:
        assert row["target"] == pytest.approx(h(row["point"]) / h((1, 1)), rel=1e-6)


def test_ney_spitzer_and_ratio():
    rep = ney_spitzer_check(M2, RaySpec((1, 0), (20, 40)), [(2, 0)])
    assert rep.final_gap < 0.05
    rep = ratio_limit_check(M1, "Free", RaySpec((1, 0), (20, 40)), (1, 1), (2, 0))
    for row in rep.rows:
        assert row["reciprocal_defect"] <= 1e-6
    assert rep.extra["period"] == rep.extra["halfplane_period"] == 2
    with pytest.raises(ValueError):
        ratio_limit_check(M1, "Free", RaySpec((1, 0), (20,)), (1, 1), (1, 0))
    with pytest.raises(ValueError):
        ratio_limit_check(M2, "HalfPlane1", RaySpec((1, 0), (20,)), (1, 1), (0, 1))
    with pytest.raises(ValueError):
        ratio_limit_check(M2, "Quadrant", RaySpec((1, 0), (20,)), (1, 1), (1, 0))


def test_log_target_independent_of_newton():
    for m, q in [(M1, (1, 0)), (M2, (0.3, 0.9))]:
        rep = log_asymptotics(m, "Free", RaySpec(q, (20, 30, 40)))
        assert rep.rows[0]["target"] == pytest.approx(rep.extra["newton_rate"], abs=1e-12)
    # with a log|z_n| term the fit recovers the rate far better than the raw quotient
    rep = log_asymptotics(M1, "Free", RaySpec((1, 0), (20, 30, 40)))
    assert abs(rep.extra["fit_rate"] / rep.rows[0]["target"] - 1) < 0.01
    assert rep.final_gap > 0.1


def test_xi_ratio_close_to_one():
    gaps = [abs(xi_decomposition(M1, (1, 1), 0.3, (2, 2), r).ratio - 1) for r in (20, 30, 40)]
    assert gaps[0] > gaps[1] > gaps[2] and gaps[2] < 0.01
    rec = xi_decomposition(M1, (1, 0), 0.3, (2, 2), 20)
    assert rec.branch == "critical_10" and abs(rec.ratio - 1) < 0.01
    rep = xi_report(M1, (0, 1), 0.3, (2, 2), (20, 30))
    assert rep.final_gap < 0.05
    with pytest.raises(ValueError):
        xi_decomposition(M1, (1, 1), 1.5, (2, 2), 20)


def test_bound_scan_brackets_one():
    # z0 lies in the scanned disc with ratio exactly 1
    scan = uniform_bound_scan(M1, "Free", RaySpec((1, 1), (30, 40)), 0.0, z0=(0, 0))
    assert scan.passed
    assert all(lo <= 1.0 + 1e-12 for lo in scan.c_lower)
    assert all(up >= 1.0 - 1e-12 for up in scan.c_upper)
    with pytest.raises(ValueError):
        uniform_bound_scan(M1, "Quadrant", RaySpec((1, 1), (30, 40)), 0.05)


def test_lambda0_off_ray_positive():
    mn, count = lambda0_grid(M2, (0.6, 0.8))
    assert count > 50 and mn > 0
