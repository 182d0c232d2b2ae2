import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hurdle_uplift import causal
from hurdle_uplift.causal import (
    ATE, HURDLE_SINGLE, HURDLE_TWO, ONESTAGE_DR, ONESTAGE_SINGLE, ONESTAGE_TWO, ORACLE,
    build_dr_transform, dr_pseudo_outcome, fit_architecture, fit_conversion_separate,
    fit_hurdle_single, fit_hurdle_two, ipw_weights, make_ate_model, make_oracle_model,
)
from hurdle_uplift.data import Dataset
from hurdle_uplift.errors import DataError
from hurdle_uplift.evaluation import brier, rmse_vs_oracle
from hurdle_uplift.learners.gbt import GbtParams, predict
from hurdle_uplift.learners.linear import LinearModel

from conftest import make_dataset

FAST = GbtParams(20, 2, 0.1, 5.0)
ZERO = GbtParams(0, 1, 0.1, 1.0)


@pytest.fixture(scope="module")
def data():
    return make_dataset(n=600, p=3, seed=1, effect=0.6)


@pytest.fixture(scope="module")
def fitted(data):
    return {a: fit_architecture(a, data, FAST) for a in causal.FITTED_ARCHITECTURES}


@pytest.mark.parametrize(
    "arch,count",
    [(HURDLE_SINGLE, 2), (HURDLE_TWO, 4), (ONESTAGE_SINGLE, 2), (ONESTAGE_TWO, 3), (ONESTAGE_DR, 5)],
)
def test_model_counts(fitted, arch, count):
    assert fitted[arch].n_models == count


@pytest.mark.parametrize("arch", [HURDLE_SINGLE, HURDLE_TWO])
def test_hurdle_identity(fitted, data, arch):
    pred = fitted[arch].predict(data)
    parts = pred.parts
    assert np.array_equal(pred.tau_hat, parts["p1"] * parts["v1"] - parts["p0"] * parts["v0"])
    assert np.all(parts["v0"] >= causal.VALUE_FLOOR) and np.all(pred.v1_hat >= causal.VALUE_FLOOR)


def test_hurdle_two_recomputed_from_components(fitted, data):
    m = fitted[HURDLE_TWO]
    c = {k: predict(v, data.X) for k, v in m.components.items()}
    tau = (c["p1"] * np.maximum(c["v1"], 0.01) - c["p0"] * np.maximum(c["v0"], 0.01))
    np.testing.assert_allclose(m.cate(data), tau, rtol=0, atol=1e-12)


def test_hurdle_single_conversion_is_fc_at_treatment(fitted, data):
    m = fitted[HURDLE_SINGLE]
    row = data.X[:1]
    direct = predict(m.components["f_c"], np.hstack([row, [[1.0]]]))
    assert m.conversion(data.subset([0]))[0] == direct[0]


@pytest.mark.parametrize("arch", [ONESTAGE_SINGLE, ONESTAGE_TWO])
def test_onestage_difference_form(fitted, data, arch):
    pred = fitted[arch].predict(data)
    assert np.array_equal(pred.tau_hat, pred.parts["y1"] - pred.parts["y0"])
    assert pred.v1_hat is None


@pytest.mark.parametrize("arch", causal.FITTED_ARCHITECTURES)
def test_conversion_scores_in_unit_interval(fitted, data, arch):
    p = fitted[arch].conversion(data)
    assert np.all((p > 0) & (p < 1))


def test_separate_equals_hurdle_two_p1(fitted, data):
    sep = fit_conversion_separate(data, {"conversion": FAST})
    h2 = fit_hurdle_two(data, FAST)
    np.testing.assert_array_equal(predict(sep, data.X), h2.conversion(data))


def test_ipw_weights_clipped():
    w = ipw_weights([0.0, 0.01, 0.5, 1.0])
    assert w.max() <= 1 / causal.W_CLIP
    np.testing.assert_allclose(w, [50, 50, 2, 1])


def test_shuffled_arms_give_small_effects():
    taus = []
    for seed in range(4):
        d = make_dataset(n=800, seed=seed, effect=0.0)
        perm = np.random.default_rng(seed).permutation(d.n)
        shuffled = Dataset(d.ids, d.X, d.t[perm], d.c, d.v)
        taus.append(fit_hurdle_single(shuffled, FAST).cate(shuffled).mean())
    assert abs(np.mean(taus)) < 2.0


def _duplicated_arms(n=300, seed=0):
    d = make_dataset(n=n, seed=seed)
    ids = np.arange(2 * n)
    X = np.vstack([d.X, d.X])
    t = np.repeat([0, 1], n)
    return Dataset(ids, X, t, np.concatenate([d.c, d.c]), np.concatenate([d.v, d.v]))


@pytest.mark.parametrize("arch", [HURDLE_TWO, ONESTAGE_TWO])
def test_identical_arms_zero_effect(arch):
    d = _duplicated_arms()
    np.testing.assert_allclose(fit_architecture(arch, d, FAST).cate(d), 0.0, atol=1e-9)


def test_constant_outcome_zero_effect():
    d = make_dataset(n=200)
    const = Dataset(d.ids, d.X, d.t, np.ones(d.n), np.full(d.n, 7.0))
    tau = fit_architecture(ONESTAGE_SINGLE, const, FAST).cate(const)
    np.testing.assert_allclose(tau, 0.0, atol=1e-12)


def test_zero_tree_single_model_cancels(data):
    np.testing.assert_array_equal(fit_architecture(ONESTAGE_SINGLE, data, ZERO).cate(data), 0.0)


def test_zero_tree_two_model_is_mean_difference(data):
    y = data.y
    diff = y[data.t == 1].mean() - y[data.t == 0].mean()
    np.testing.assert_allclose(fit_architecture(ONESTAGE_TWO, data, ZERO).cate(data), diff)


def test_dr_hand_rows():
    y = np.array([10.0, 0.0, 4.0, 6.0])
    t = np.array([1, 1, 0, 0])
    mu1 = np.array([8.0, 2.0, 5.0, 5.0])
    mu0 = np.array([3.0, 1.0, 4.0, 2.0])
    got = dr_pseudo_outcome(y, t, mu1, mu0, np.full(4, 0.5))
    np.testing.assert_allclose(got, [9.0, -3.0, 1.0, -5.0], atol=1e-12)


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(0.01, 0.99))
def test_dr_residual_vanishes(m1, m0, e):
    assert dr_pseudo_outcome(m1, 1, m1, m0, e) == pytest.approx(m1 - m0, abs=1e-12)


def test_dr_propensity_clipped(data):
    dr = build_dr_transform(data)
    assert np.all((dr.e_hat >= 0.01) & (dr.e_hat <= 0.99))
    assert np.all(np.isfinite(dr.y_dr))
    known = build_dr_transform(data, known_propensity=0.5)
    assert np.all(known.e_hat == 0.5)


def test_dr_constant_pseudo_outcome(data):
    tr = build_dr_transform(data)
    const = causal.DrTransform(np.full(data.n, 3.25), tr.mu1, tr.mu0, tr.propensity, tr.e_hat)
    m = causal.fit_onestage_dr(data, FAST, transform=const)
    np.testing.assert_allclose(m.cate(data), 3.25)


@pytest.mark.slow
def test_dr_unbiased_large_n():
    rng = np.random.default_rng(0)
    n = 100_000
    X = rng.normal(size=(n, 3))
    t = rng.integers(0, 2, n)
    c = (rng.random(n) < 0.2 + 0.1 * t).astype(int)
    v = np.where(c == 1, np.round(np.exp(3 + 0.3 * X[:, 0]), 6), 0.0)
    d = Dataset(np.arange(n), X, t, c, v)
    dr = build_dr_transform(d, known_propensity=0.5)
    ate = d.y[t == 1].mean() - d.y[t == 0].mean()
    se = dr.y_dr.std() / np.sqrt(n)
    assert abs(dr.y_dr.mean() - ate) <= 3 * se


def test_all_treated_converted():
    d = make_dataset(n=200)
    conv = Dataset(d.ids, d.X, d.t, np.where(d.t == 1, 1, d.c), np.where(d.t == 1, 5.0, d.v))
    p = predict(fit_conversion_separate(conv, {"conversion": FAST}), conv.X)
    assert np.all(p > 0.99)


def test_separate_conversion_beats_base_rate(small_sim):
    train = small_sim.data.subset(np.arange(2000))
    test = small_sim.data.subset(np.arange(2000, 3000))
    p = predict(fit_conversion_separate(train, {"conversion": FAST}), test.X)
    treated = test.t == 1
    base = train.c[train.t == 1].mean()
    assert brier(p[treated], test.c[treated]) <= brier(np.full(treated.sum(), base), test.c[treated])


def test_ate_hand_dataset():
    d = Dataset(np.arange(4), np.zeros((4, 1)), [1, 1, 0, 0], [1, 1, 1, 0], [2.0, 4.0, 2.0, 0.0])
    m = make_ate_model(d)
    np.testing.assert_array_equal(m.cate(d), 2.0)
    np.testing.assert_array_equal(m.conversion(d), 1.0)


def test_ate_equal_means_and_rate(data):
    d = _duplicated_arms()
    np.testing.assert_array_equal(make_ate_model(d).cate(d), 0.0)
    treated = data.t == 1
    assert make_ate_model(data).conversion(data)[0] == data.c[treated].sum() / treated.sum()


def test_oracle_reads_truth(small_sim):
    m = make_oracle_model(small_sim.truth)
    sub = small_sim.data.subset(np.arange(100, 0, -1))
    assert rmse_vs_oracle(m.cate(sub), small_sim.truth.aligned(sub.ids)) == 0.0
    assert m.has_value_scorer


@pytest.mark.parametrize("arch", causal.FITTED_ARCHITECTURES + (ATE,))
def test_serialisation_round_trip(fitted, data, arch):
    m = fitted.get(arch) or make_ate_model(data)
    back = causal.loads_model(causal.dumps_model(m))
    assert back.architecture == arch and back.n_models == m.n_models
    np.testing.assert_array_equal(back.cate(data), m.cate(data))
    np.testing.assert_array_equal(back.conversion(data), m.conversion(data))


def test_oracle_not_serialisable(small_sim):
    with pytest.raises(ValueError):
        causal.dumps_model(make_oracle_model(small_sim.truth))


def test_missing_converters_rejected():
    d = make_dataset(n=50)
    none = Dataset(d.ids, d.X, d.t, np.zeros(50), np.zeros(50))
    with pytest.raises(DataError):
        fit_hurdle_two(none, FAST)


def test_unknown_architecture():
    with pytest.raises(ValueError):
        causal.TargetingModel("bogus", {})


def test_models_are_immutable(fitted):
    with pytest.raises(TypeError):
        fitted[HURDLE_TWO].components["p0"] = None


def test_tuning_returns_components(data):
    grid = causal.HyperGrid((5, 10), (2,), (0.1,), (5.0,))
    for arch in causal.FITTED_ARCHITECTURES:
        params = causal.tune_components(arch, data, grid, 3, 0)
        assert set(causal.GBT_COMPONENTS[arch]) == set(params)
        assert fit_architecture(arch, data, params).n_models >= len(params)


def test_preds_writer(tmp_path, fitted, data):
    path = tmp_path / "preds.csv"
    sub = data.subset(np.arange(3))
    causal.write_preds(path, sub.ids, fitted[HURDLE_TWO].predict(sub), HURDLE_TWO)
    causal.write_preds(path, sub.ids, fitted[ONESTAGE_DR].predict(sub), ONESTAGE_DR, mode="a")
    lines = path.read_text().splitlines()
    assert lines[0] == "id,tau_hat,p1_hat,v1_hat,architecture"
    assert len(lines) == 7
    assert lines[4].split(",")[3] == ""
