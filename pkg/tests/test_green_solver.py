import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from martin_quadrant import geometry
from martin_quadrant._lattice import Box, in_domain
from martin_quadrant.green_solver import (GreenColumn, UnderflowError, check_renewal,
                                          check_twist_identity, green_column, martin_kernel)
from martin_quadrant.lattice_measure import M1, M2


def series_column(measure, kind, a, target, region, tol=1e-17, max_steps=200000):
    """sum_n P^n e_target on a rectangle, by explicit shifted sums."""
    x0, x1, y0, y1 = region
    X, Y = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1), indexing="ij")
    mask = in_domain(kind, X, Y).astype(float)
    g = np.zeros(X.shape)
    g[target[0] - x0, target[1] - y0] = 1.0
    total = g.copy()
    nx, ny = X.shape
    for _ in range(max_steps):
        new = np.zeros_like(g)
        for (dx, dy), p in zip(measure.offsets, measure.probs):
            w = p * np.exp(a[0] * dx + a[1] * dy)
            # new(z) += w g(z + d) for z + d inside the rectangle
            sx = slice(max(0, -dx), min(nx, nx - dx))
            sy = slice(max(0, -dy), min(ny, ny - dy))
            tx = slice(max(0, dx), min(nx, nx + dx))
            ty = slice(max(0, dy), min(ny, ny + dy))
            new[sx, sy] += w * g[tx, ty]
        g = new * mask
        total += g
        if g.max() < tol:
            break
    return total


@pytest.mark.parametrize("m,kind,a,target,box", [
    (M1, "Free", (0.0, 0.0), (0, 0), Box((-25, 25), (-25, 25), 10)),
    (M2, "Quadrant", (-0.1, -0.05), (4, 6), Box((-5, 30), (-5, 30), 10)),
    (M1, "HalfPlane1", None, (2, 3), Box((-20, 20), (-5, 30), 10)),
], ids=["free", "quadrant", "halfplane1"])
def test_column_matches_series(m, kind, a, target, box):
    a = geometry.a_of_q(m, (1, 0)).vec if a is None else np.asarray(a)
    col = green_column(m, kind, a, target, box, estimate_truncation=False)
    ref = series_column(m, kind, a, target, col.region)
    assert np.max(np.abs(col.grid - ref)) <= 1e-10 * ref.max()
    assert col.residual <= 1e-11


def test_free_green_against_long_series():
    # untruncated reference: G(0,0) of M1 from a series on a large grid
    col = green_column(M1, "Free", (0, 0), (0, 0), Box((-80, 80), (-80, 80), 40))
    assert col.value((0, 0)) == pytest.approx(1.501953827176897, abs=1e-12)
    assert col.truncation_error < 1e-12


def test_twist_identity_and_renewal():
    a = geometry.a_of_q(M1, (1, 0)).vec
    box = Box((-12, 12), (-12, 12), 0)
    pairs = [((0, 0), (5, 3)), ((-4, 7), (2, -2)), ((10, 10), (-10, 1))]
    assert check_twist_identity(M1, "Free", a, box, pairs) <= 1e-9
    box = Box((-40, 40), (-40, 40), 0)
    for variant, z, t in [("quadrant_vs_free", (2, 2), (6, 6)),
                          ("quadrant_vs_halfplane1", (3, 1), (8, 2))]:
        assert check_renewal(M2, variant, z, t, box).residual <= 1e-7
    with pytest.raises(ValueError):
        check_renewal(M2, "free_vs_quadrant", (1, 1), (2, 2), box)


@given(st.integers(1, 12), st.integers(1, 12))
def test_domain_monotonicity(tx, ty):
    box = Box((-15, 30), (-15, 30), 0)
    g = {k: green_column(M2, k, (0, 0), (tx, ty), box, estimate_truncation=False)
         for k in ("Quadrant", "HalfPlane1", "Free")}
    for x in range(-3, 20, 4):
        for y in range(-3, 20, 4):
            q, h, f = (g[k].value((x, y)) for k in ("Quadrant", "HalfPlane1", "Free"))
            assert 0 <= q <= h + 1e-15 and h <= f + 1e-15
            if not in_domain("Quadrant", x, y):
                assert q == 0.0


def test_martin_kernel_twisted_vs_plain():
    box = Box((-10, 50), (-10, 50), 10)
    a = geometry.a_of_q(M1, (1, 1)).vec + np.array([0.02, -0.03])
    a = a if geometry.phi(M1, a) <= 1 else geometry.min_point(M1)
    ct = green_column(M1, "Quadrant", a, (30, 30), box, estimate_truncation=False)
    c0 = green_column(M1, "Quadrant", (0, 0), (30, 30), box, estimate_truncation=False)
    for z in [(2, 3), (5, 1), (10, 10)]:
        assert martin_kernel(ct, z, (1, 1)) == pytest.approx(c0.value(z) / c0.value((1, 1)),
                                                             rel=1e-10)
        assert ct.untwisted(z) == pytest.approx(c0.value(z), rel=1e-10)


def test_underflow_and_errors():
    col = GreenColumn((5, 5), "Quadrant", (0.0, 0.0), Box((1, 5), (1, 5), 0), (1, 5, 1, 5),
                      np.zeros((5, 5)), 0.0, 0.0)
    with pytest.raises(UnderflowError):
        martin_kernel(col, (2, 2), (1, 1))
    with pytest.raises(ValueError):
        green_column(M1, "Quadrant", (0, 0), (0, 3))
    with pytest.raises(ValueError):
        green_column(M1, "Free", (2.0, 2.0), (0, 0))


def test_truncation_warning():
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        col = green_column(M1, "Free", (0, 0), (0, 0), Box((-3, 3), (-3, 3), 2), tol=1e-12)
    assert col.warning and rec
