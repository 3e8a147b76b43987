from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from scipy.stats import norm

from rrglab.errors import (
    BadSupport,
    DegenerateFit,
    DegenerateSample,
    EmptySample,
    UnknownTestFunction,
)
from rrglab.graphgen import cycle_graph, sample_configuration_model
from rrglab.seeding import make_rng
from rrglab.spectral import full_eigensystem, normalize_adjacency
from rrglab.steinlab import (
    BerryEsseenPlan,
    Direction,
    berry_esseen_experiment,
    build_direction,
    cumulants,
    ks_statistic,
    overlap,
    overlap_from_vector,
    run_ensemble,
    scaling_fit,
    stein_discrepancy,
)


def _normal_source(seed):
    return float(make_rng(seed).standard_normal()), False, None


# --------------------------------------------------------------------------- directions


def test_coordinate_difference():
    q = build_direction("coordinate-difference", 6)
    assert np.array_equal(q.coords, np.array([1, -1, 0, 0, 0, 0]) / math.sqrt(2))
    assert q.coords.sum() == 0.0


def test_random_orthogonal_invariants():
    a = build_direction("random-orthogonal", 100, seed=1)
    b = build_direction("random-orthogonal", 100, seed=2)
    assert not np.allclose(a.coords, b.coords)
    for q in (a, b):
        assert abs(np.linalg.norm(q.coords) - 1) <= 1e-12
        assert abs(q.coords.sum()) <= 1e-12


def test_d_supported_projection():
    q = build_direction("d-supported", 100, {"size": 4})
    # projecting 1/2 on 4 coordinates: entries 1/2 - 1/50 and -1/50, scaled to unit norm
    on, off = 0.5 - 0.02, -0.02
    scale = math.sqrt(4 * on**2 + 96 * off**2)
    assert np.allclose(q.coords[:4], on / scale, atol=1e-15)
    assert np.allclose(q.coords[4:], off / scale, atol=1e-15)
    assert abs(np.linalg.norm(q.coords) - 1) <= 1e-12 and abs(q.coords.sum()) <= 1e-12
    assert np.allclose(q.raw[:4], 0.5)


@pytest.mark.parametrize("params", [{"size": 0}, {"size": 100}, {"support": [0, 0]}, {"support": [0, 200]}])
def test_d_supported_bad_support(params):
    with pytest.raises(BadSupport):
        build_direction("d-supported", 100, params)


# --------------------------------------------------------------------------- overlap


def test_overlap_extremal_cases():
    g = sample_configuration_model(200, 3, 5)
    u2 = full_eigensystem(normalize_adjacency(g)).vectors[:, 1]
    x, degenerate = overlap(g, Direction(200, u2.copy(), "random-orthogonal"), seed=1)
    assert not degenerate and abs(abs(x) - math.sqrt(200)) <= 1e-8
    r = make_rng(0).standard_normal(200)
    r -= r.mean()
    r -= (r @ u2) * u2
    r /= np.linalg.norm(r)
    x, _ = overlap(g, Direction(200, r, "random-orthogonal"), seed=1)
    assert abs(x) <= 1e-8 * math.sqrt(200)


def test_overlap_degenerate_on_cycle():
    _, degenerate = overlap(cycle_graph(6), build_direction("coordinate-difference", 6), seed=0)
    assert degenerate


def test_overlap_ignores_e_component():
    g = sample_configuration_model(300, 4, 1)
    u2 = full_eigensystem(normalize_adjacency(g)).vectors[:, 1]
    q = build_direction("random-orthogonal", 300, seed=4).coords
    assert abs(overlap_from_vector(u2, q + 0.7 * np.ones(300)) - overlap_from_vector(u2, q)) <= 1e-8


# --------------------------------------------------------------------------- KS


def test_ks_examples():
    assert ks_statistic([0.0]) == 0.5
    phi1 = float(mpmath.ncdf(1))
    oracle = max(phi1 - 2 / 3, 1 / 3 - (1 - phi1), 1 / 3 - 0.5, 0.5 - 1 / 3, 1 - phi1)
    assert ks_statistic([-1.0, 0.0, 1.0]) == pytest.approx(oracle, abs=1e-12)
    assert ks_statistic([-1.0, 0.0, 1.0]) == pytest.approx(0.174678, abs=1e-6)
    x = make_rng(3).standard_normal(200)
    assert ks_statistic(x + 10) > 0.99
    with pytest.raises(EmptySample):
        ks_statistic([])


def test_ks_matches_scipy():
    from scipy.stats import kstest

    x = make_rng(8).standard_normal(500) * 1.1
    assert ks_statistic(x) == pytest.approx(kstest(x, "norm").statistic, abs=1e-12)


def test_ks_injected_normal_stream():
    res = run_ensemble(1000, 3, 100_000, base_seed=17, sample_source=_normal_source, n_boot=0)
    assert res.ks <= 1.63 / math.sqrt(100_000)
    for value in res.stein.values():
        assert value <= 0.02


# --------------------------------------------------------------------------- cumulants


def test_cumulants_quantile_stream():
    m = 10_000
    x = norm.ppf((np.arange(1, m + 1) - 0.5) / m)
    c = cumulants(x, n_boot=200)
    assert abs(c.kappa3) <= 0.02 and abs(c.kappa4) <= 0.05


def test_cumulants_rademacher_and_constant():
    c = cumulants(np.tile([1.0, -1.0], 100), n_boot=50)
    assert c.kappa4 == pytest.approx(-2.0, abs=1e-12)
    assert c.variance == pytest.approx(1.0) and c.kappa2 == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DegenerateSample):
        cumulants(np.ones(200))


def test_cumulants_standardized_kappa2_zero():
    x = make_rng(2).standard_normal(1000) * 3.0 + 1.0
    x = (x - x.mean()) / x.std()
    assert abs(cumulants(x, n_boot=0).kappa2) <= 1e-12


def test_cumulants_bootstrap_deterministic():
    x = make_rng(2).standard_normal(300)
    a, b = cumulants(x, seed=5), cumulants(x, seed=5)
    assert a.ci == b.ci
    lo, hi = a.ci["variance"]
    assert lo <= a.variance <= hi


# --------------------------------------------------------------------------- Stein


def test_stein_examples():
    zeros = np.zeros(100)
    assert stein_discrepancy(zeros, ["cos"])["cos"] == pytest.approx(0.3934693, abs=1e-7)
    x = make_rng(1).standard_normal(500) * 4
    sym = np.concatenate([x, -x])
    assert stein_discrepancy(sym, ["clipped_identity"])["clipped_identity"] == 0.0
    with pytest.raises(UnknownTestFunction):
        stein_discrepancy(x, ["nope"])


def test_clipped_square_expectation():
    exact = mpmath.quad(lambda t: min(t * t, 9) * mpmath.npdf(t), [-mpmath.inf, -3, 3, mpmath.inf])
    z = stein_discrepancy(np.zeros(1), ["clipped_square"])["clipped_square"]
    assert z == pytest.approx(float(exact), abs=1e-12)


# --------------------------------------------------------------------------- scaling fit


def test_scaling_fit_examples():
    s, i, _ = scaling_fit([(1, 1), (2, 2), (4, 4)])
    assert s == pytest.approx(1) and i == pytest.approx(0, abs=1e-12)
    assert scaling_fit([(1, 1), (4, 2), (16, 4)])[0] == pytest.approx(0.5)
    s, i, _ = scaling_fit([(1, 2), (2, 2), (4, 2)])
    assert s == pytest.approx(0, abs=1e-12) and i == pytest.approx(math.log(2))
    with pytest.raises(DegenerateFit):
        scaling_fit([(1, 1), (2, 2)])
    with pytest.raises(DegenerateFit):
        scaling_fit([(2, 1), (2, 2), (2, 3)])


# --------------------------------------------------------------------------- ensembles


def test_ensemble_deterministic():
    a = run_ensemble(500, 3, 100, "coordinate-difference", 1, n_boot=200)
    b = run_ensemble(500, 3, 100, "coordinate-difference", 1, n_boot=200, workers=2)
    assert a.to_json() == b.to_json()
    assert len(a.samples) + a.excluded == 100
    assert 0 <= a.ks <= 1 and a.variance >= 0


@pytest.mark.slow
def test_ensemble_exact_second_moment_and_symmetry():
    # exchangeability of u2 over coordinates forces n E<q,u2>^2 = n/(n-1) for q = (e_0 - e_1)/sqrt(2)
    n, M = 60, 4000
    res = run_ensemble(n, 3, M, "coordinate-difference", 99, n_boot=0)
    x = res.samples
    second = float(np.mean(x * x))
    se = float(np.std(x * x, ddof=1)) / math.sqrt(len(x))
    assert abs(second - n / (n - 1)) <= 4 * se
    assert abs(x.mean()) <= 4 * x.std() / math.sqrt(len(x))


def test_berry_esseen_single_cell():
    plan = BerryEsseenPlan(N=[200], d=[3], M=500, base_seed=3, n_boot=100)
    rep = berry_esseen_experiment(plan)
    assert len(rep["cells"]) == 1 and rep["ks_vs_N"] == [] and rep["kappa4_vs_d"] == []
    (cell,) = rep["_ensembles"].values()
    assert rep["cells"][0] == cell.to_dict()
