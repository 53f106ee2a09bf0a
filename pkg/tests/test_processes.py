import numpy as np
import pytest
from hypothesis import given, strategies as st

from martin_quadrant import geometry
from martin_quadrant._lattice import Box, in_domain
from martin_quadrant.boundary_functionals import boundary_expectation, exit_distribution
from martin_quadrant.lattice_measure import M1, M2
from martin_quadrant.processes import exit_probability_mc, sample_path, twisted_kernel


def test_kernel_weights():
    a = geometry.a_of_q(M1, (1, 0)).vec
    k = twisted_kernel(M1, a)
    assert k.total == pytest.approx(1.0, abs=1e-14)
    assert k.deficit == pytest.approx(0.0, abs=1e-14)
    k0 = twisted_kernel(M1, geometry.min_point(M1))
    assert k0.deficit == pytest.approx(1 - 4 * np.sqrt(0.35 * 0.15), abs=1e-12)


@given(st.integers(0, 10**6), st.sampled_from(["Free", "Quadrant", "HalfPlane1", "HalfPlane2"]),
       st.integers(1, 5), st.integers(1, 5))
def test_path_stays_in_domain_until_stop(seed, kind, x, y):
    k = twisted_kernel(M2, (-0.1, 0.05))
    p = sample_path(kind, k, (x, y), 200, seed)
    inside = in_domain(kind, p.states[:, 0], p.states[:, 1])
    if p.stop_reason.startswith("hit"):
        assert inside[:-1].all() and not inside[-1]
        assert len(p.states) == p.stop_time + 1
        if kind == "Quadrant":
            assert p.tau_class == ("tau2" if p.states[-1, 1] <= 0 else "tau1")
    else:
        assert inside.all()
        assert p.stop_reason in ("killed_mass", "horizon")


def test_sample_path_rejects_bad_input():
    k = twisted_kernel(M1)
    with pytest.raises(ValueError):
        sample_path("Quadrant", k, (0, 3), 10, 1)
    with pytest.raises(ValueError):
        sample_path("Quadrant", k, (1, 3), 0, 1)
    with pytest.raises(ValueError):
        exit_probability_mc(k, (1, 1), 10, 0, 1)


def test_mc_independent_of_threads():
    k = twisted_kernel(M2, (-0.2, -0.1))
    r1 = exit_probability_mc(k, (2, 3), 2000, 30000, seed=5, threads=1)
    r3 = exit_probability_mc(k, (2, 3), 2000, 30000, seed=5, threads=3)
    assert r1 == r3


@pytest.mark.parametrize("m,a,z0", [(M1, (-0.2, -0.3), (3, 2)), (M2, (0.05, -0.25), (1, 4))])
def test_mc_matches_dp_with_killing(m, a, z0):
    a = np.asarray(a)
    assert geometry.phi(m, a) < 1
    est = exit_probability_mc(twisted_kernel(m, a), z0, 5000, 40000, seed=11)
    ex = exit_distribution(m, "Quadrant", a, z0, Box.around([z0], 80))
    dp = boundary_expectation(ex, "one") * np.exp(-a @ np.array(z0))
    assert abs(est.estimate - dp) <= 4 * est.stderr
    # killed fraction against the DP killed mass
    p_kill = est.killed / est.n
    se = np.sqrt(p_kill * (1 - p_kill) / est.n)
    assert abs(p_kill - ex.survival_mass) <= 4 * se + 1e-4
    # exit side split
    share1 = sum(ex.weights[k] for k in ex.weights if k[1] == "tau1")
    p1 = est.exits_tau1 / est.n
    assert abs(p1 - share1) <= 4 * np.sqrt(p1 * (1 - p1) / est.n) + 1e-4
