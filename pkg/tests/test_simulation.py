import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hurdle_uplift.data import generate_covariates
from hurdle_uplift.errors import DataError
from hurdle_uplift.simulation import (
    GroundTruth, SimConfig, SimulationWarning, draw_effect_weights, effect_scores,
    generate_campaign, load_truth, scale_effect, simulate, simulate_ite, write_truth,
)


def test_effect_weights_shapes_and_determinism():
    w = draw_effect_weights(11, 11, seed=3)
    assert w.w_c1.shape == (11, 11) and w.w_c2.shape == (11,)
    w2 = draw_effect_weights(11, 11, seed=3)
    assert all(np.array_equal(a, b) for a, b in zip(
        (w.w_c1, w.w_c2, w.w_v1, w.w_v2), (w2.w_c1, w2.w_c2, w2.w_v1, w2.w_v2)))


def test_effect_weights_are_standard_normal():
    w = draw_effect_weights(250, 200, seed=0)
    entries = np.concatenate([w.w_c1.ravel(), w.w_v1.ravel()])
    assert entries.size >= 10**5
    assert abs(entries.mean()) < 0.02 and abs(entries.var() - 1) < 0.05


def test_effect_scores_shape():
    w = draw_effect_weights(4, 6, seed=0)
    assert effect_scores(np.zeros((7, 4)), w.w_c1, w.w_c2).shape == (7,)


def test_constant_input_gives_ate():
    cfg = SimConfig()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SimulationWarning)
        tc, tv = simulate_ite(np.zeros((50, 11)), draw_effect_weights(seed=1), cfg)
    np.testing.assert_array_equal(tc, cfg.ate_conversion)
    np.testing.assert_array_equal(tv, cfg.ate_value)


def test_constant_score_warns():
    with pytest.warns(SimulationWarning):
        scale_effect(np.ones(10), 0.05, -0.1, 0.15)


@given(st.integers(0, 10_000), st.floats(-0.05, 0.1))
def test_scaled_effect_mass_and_range(seed, ate):
    raw = np.random.default_rng(seed).standard_cauchy(500)
    eff = scale_effect(raw, ate, -0.10, 0.15, 0.9)
    assert np.all((eff.tau >= -0.10) & (eff.tau <= 0.15))
    assert np.mean((eff.unclipped >= -0.10) & (eff.unclipped <= 0.15)) >= 0.9


@pytest.mark.slow
def test_ite_marginals_large_n():
    cfg = SimConfig(seed=2)
    X = generate_covariates(100_000, 30, seed=2).X[:, :11]
    tc, tv = simulate_ite(X, draw_effect_weights(seed=2), cfg)
    assert abs(tc.mean() - 0.05) <= 0.005
    assert np.all((tc >= -0.10) & (tc <= 0.15))
    assert np.all((tv >= -10) & (tv <= 10))


def test_nuisance_fit_contract(small_sim):
    nu = small_sim.nuisance
    assert nu.n_converters == int(small_sim.base.c[: nu.n_rows].sum())
    assert np.all(small_sim.truth.v0 > 0) and np.all(small_sim.truth.v1 > 0)
    assert abs(small_sim.truth.p0.mean() - 0.07) <= 0.01


def test_truth_identity_exact(small_sim):
    tr = small_sim.truth
    assert np.array_equal(tr.tau, tr.p1 * tr.v1 - tr.p0 * tr.v0)
    assert np.all((tr.p0 >= 0) & (tr.p0 <= 1) & (tr.p1 >= 0) & (tr.p1 <= 1))
    assert np.all((tr.tau_c >= -0.10) & (tr.tau_c <= 0.15))
    assert np.all((tr.tau_v >= -10) & (tr.tau_v <= 10))
    np.testing.assert_allclose(tr.p1 - tr.p0, tr.tau_c, atol=1e-15)


def test_simulation_deterministic(small_sim):
    again = simulate(3000, 30, SimConfig(seed=5, nuisance_pool=3000))
    assert again.data.equals(small_sim.data)
    assert np.array_equal(again.truth.tau, small_sim.truth.tau)


def test_full_propensity_treats_everyone(small_sim):
    cfg = SimConfig(seed=1, propensity=1.0)
    cov = small_sim.data.subset(np.arange(200))
    n = cov.n
    data, _ = generate_campaign(cov, small_sim.nuisance, np.zeros(n), np.zeros(n), cfg)
    assert np.all(data.t == 1)


def test_clipping_keeps_probabilities_valid(small_sim):
    cov = small_sim.data.subset(np.arange(300))
    data, truth = generate_campaign(cov, small_sim.nuisance, np.full(300, 5.0),
                                    np.full(300, -500.0))
    assert np.all((truth.p1 >= 0) & (truth.p1 <= 1))
    assert np.all(truth.v1 >= 1.0)


@pytest.mark.slow
def test_treated_conversion_matches_p1():
    sim = simulate(100_000, 30, SimConfig(seed=9))
    treated = sim.data.t == 1
    assert abs(sim.data.c[treated].mean() - sim.truth.p1[treated].mean()) <= 0.005


def test_truth_round_trip(tmp_path, small_sim):
    path = tmp_path / "truth.csv"
    write_truth(small_sim.truth, path)
    back = load_truth(path)
    np.testing.assert_allclose(back.tau, small_sim.truth.tau, atol=1e-3)
    assert np.array_equal(back.tau, back.p1 * back.v1 - back.p0 * back.v0)


def test_truth_file_inconsistency_detected(tmp_path):
    path = tmp_path / "truth.csv"
    path.write_text("id,p0,p1,v0,v1,tau_c,tau_v,tau\n1,0.1,0.2,10,10,0.1,0,5.0\n")
    with pytest.raises(DataError):
        load_truth(path)


def test_aligned_reorders_and_rejects_unknown_ids():
    tr = GroundTruth([3, 1, 2], [0.1, 0.2, 0.3], [0.1, 0.2, 0.3], [1, 2, 3], [1, 2, 3])
    assert tr.aligned([1, 2, 3]).v0.tolist() == [2, 3, 1]
    with pytest.raises(DataError):
        tr.aligned([4])


@pytest.mark.parametrize("kw", [dict(propensity=0.0), dict(ate_conversion=0.2), dict(k=0)])
def test_bad_sim_config(kw):
    with pytest.raises(ValueError):
        SimConfig(**kw)
