import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gibbsperc.integrals import (BoundReport, adjacency_distance, bound_report, decay_bound_rhs,
                                 mayer_radius_lb, mu_plus_rhs, zk_cluster_integral, zk_upper_bound)
from gibbsperc.potential import PairPotential, triple_norm
from oracles import z3_square_well_2d

P0 = PairPotential.square_well()
Z3_BETA_HALF = 14.1989785  # semi-analytic oracle, frozen


def test_z1_is_one():
    e = zk_cluster_integral(P0, 1, 2.0, 1.5)
    assert e.value == 1.0 and e.std_err == 0.0 and e.method == "closed_form"


def test_z2_closed_form():
    e = zk_cluster_integral(P0, 2, 1.0, 1.5)
    assert e.value == pytest.approx(0.625 * math.pi * math.e, rel=1e-10)
    assert e.std_err == 0.0


def test_z2_with_larger_radius_adds_free_annulus():
    e = zk_cluster_integral(P0, 2, 1.0, 2.0)
    expected = 0.5 * (math.pi * 1.25 * math.e + math.pi * (4.0 - 2.25))
    assert e.value == pytest.approx(expected, rel=1e-10)


def test_z2_hit_or_miss_agrees():
    e = zk_cluster_integral(P0, 2, 1.0, 1.5, samples=200_000, seed=1, method="hit_or_miss")
    assert abs(e.value - 0.625 * math.pi * math.e) < 3 * e.std_err
    assert e.std_err > 0


def test_z3_oracle_frozen_value():
    assert z3_square_well_2d(0.5) == pytest.approx(Z3_BETA_HALF, rel=1e-6)


def test_z3_hit_or_miss_matches_oracle():
    e = zk_cluster_integral(P0, 3, 0.5, 1.5, samples=400_000, seed=3)
    assert abs(e.value - Z3_BETA_HALF) < 3 * e.std_err


def test_estimator_deterministic():
    a = zk_cluster_integral(P0, 3, 1.0, 1.5, samples=20_000, seed=9)
    b = zk_cluster_integral(P0, 3, 1.0, 1.5, samples=20_000, seed=9)
    assert a == b


def test_rejections():
    with pytest.raises(ValueError):
        zk_cluster_integral(P0, 6, 1.0, 1.5)
    with pytest.raises(ValueError):
        zk_cluster_integral(P0, 2, 1.0, 1.4)
    with pytest.raises(ValueError):
        zk_cluster_integral(P0, 3, 1.0, 1.5, method="closed_form")
    with pytest.raises(ValueError):
        zk_cluster_integral(P0, 0, 1.0, 1.5)


def test_upper_bound_examples():
    assert zk_upper_bound(1, 1.0, 0.0, 1.5, 2) == pytest.approx(math.e)
    assert zk_upper_bound(1, 2.0, -3.0, 1.5, 2) >= 1.0
    val = zk_upper_bound(2, 1.0, -3.0, 1.5, 2)
    assert val == pytest.approx(math.exp(8) * 2.25 * math.pi, rel=1e-12)
    assert val == pytest.approx(21073, rel=1e-3)
    assert val >= 0.625 * math.pi * math.e
    assert zk_upper_bound(2, 0.0, 0.0, 1.5, 2) == pytest.approx(math.e**2 * 2.25 * math.pi)


@pytest.mark.parametrize("beta", [0.5, 1.0])
@pytest.mark.parametrize("k", [2, 3])
def test_estimates_below_upper_bound(k, beta):
    e = zk_cluster_integral(P0, k, beta, 1.5, samples=50_000, seed=k)
    assert e.value <= zk_upper_bound(k, beta, -3.0, 1.5, 2) + 3 * e.std_err


def test_mayer_radius_examples():
    assert mayer_radius_lb(1.0, 0.0, 1.0) == 1.0
    assert mayer_radius_lb(1.0, -3.0, 2.25 * math.pi) == pytest.approx(0.007043, rel=1e-3)


def test_mayer_radius_log_rate():
    e_inf, tn = -3.0, triple_norm(P0)
    for beta in (5.0, 20.0, 100.0):
        rate = math.log(mayer_radius_lb(beta, e_inf, tn)) / beta
        assert abs(rate - e_inf) <= (math.log(beta) + math.log(tn)) / beta + 1e-12


def test_decay_rhs_examples():
    assert decay_bound_rhs(1, 1.7, -3.0, -3.0, 1.5, 2) == pytest.approx(math.e)
    val = decay_bound_rhs(2, 2.0, -4.0, -3.0, 1.5, 2)
    assert val == pytest.approx(2 * math.e**2 * 2.25 * math.pi * math.exp(-4), rel=1e-12)
    assert val == pytest.approx(1.9123, rel=1e-3)


def test_decay_rhs_decreasing_in_beta():
    for k in range(1, 7):
        vals = [decay_bound_rhs(k, b, -3.5, -3.0, 1.5, 2) for b in np.linspace(0.1, 10, 50)]
        assert np.all(np.diff(vals) < 0)


def test_mu_plus_examples():
    val = mu_plus_rhs(1.0, 0.1, 0.2, 10.0, 50.0, 2)
    assert val == pytest.approx(-0.9 - 0.1 * math.log(0.04 * math.pi) + 5.0, rel=1e-12)
    assert val == pytest.approx(4.3073, abs=1e-3)
    assert mu_plus_rhs(1.0, 0.1, 0.2, 1e12, 50.0, 2) == pytest.approx(-0.9, abs=1e-9)
    a = mu_plus_rhs(1.0, 0.1, 0.2, 3.0, 20.0, 2)
    b = mu_plus_rhs(1.0, 0.1, 0.2, 3.0, 40.0, 2)
    assert b - a == pytest.approx(20.0 / 3.0, rel=1e-12)


def test_adjacency_distance():
    assert adjacency_distance(1.0, 2) == pytest.approx(math.sqrt(5))
    assert adjacency_distance(1.0, 3) == pytest.approx(math.sqrt(6))
    assert adjacency_distance(2.5, 2) == pytest.approx(2.5 * math.sqrt(5))
    with pytest.raises(ValueError):
        adjacency_distance(0.0, 2)


# independent re-implementations, written from the formulas only
def _ball(R, d):
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * R**d


@given(st.integers(1, 8), st.floats(0.01, 5), st.floats(-6, 0), st.floats(1.0, 3.0), st.integers(1, 3),
       st.floats(-12, 0))
def test_formulas_match_reimplementation(k, beta, e_inf, R, d, mu):
    ref_up = math.exp(-beta * k * e_inf) * math.e**k * _ball(R, d) ** (k - 1)
    assert zk_upper_bound(k, beta, e_inf, R, d) == pytest.approx(ref_up, rel=1e-12)
    ref_dec = k * math.e**k * _ball(R, d) ** (k - 1) * math.exp(-beta * k * (e_inf - mu))
    assert decay_bound_rhs(k, beta, mu, e_inf, R, d) == pytest.approx(ref_dec, rel=1e-12)
    tn = 2.25 * math.pi
    assert mayer_radius_lb(beta, e_inf, tn) == pytest.approx(math.exp(beta * e_inf) / (beta * tn), rel=1e-12)


def test_bound_report_is_flat_json():
    rep = bound_report(4.0, -3.5, -3.0, 1.5, 2, triple_norm(P0), k_max=3)
    d = json.loads(rep.to_json())
    assert d["decay_rhs_3"] == pytest.approx(decay_bound_rhs(3, 4.0, -3.5, -3.0, 1.5, 2))
    assert d["alpha_d"] == 50.0 and "zk_upper_1" in d
    assert all(not isinstance(v, (list, dict)) for v in d.values())
    assert all(math.isfinite(v) and v > 0 for k, v in d.items() if k.startswith(("zk_", "decay_")))
    assert isinstance(rep, BoundReport)
