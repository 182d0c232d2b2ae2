import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hurdle_uplift.evaluation import (
    ReportRow, assemble_report, brier, mean_rows, read_report_csv, render_table,
    rmse_vs_oracle, roc_auc, spearman, tol, transformed_outcome, true_profit, write_report_csv,
)
from hurdle_uplift.policy import CostSpec, PolicyDecision
from hurdle_uplift.simulation import GroundTruth


def _truth(n=4, seed=0):
    rng = np.random.default_rng(seed)
    p0 = rng.uniform(0, 0.3, n)
    return GroundTruth(np.arange(n), p0, np.clip(p0 + rng.uniform(-0.05, 0.1, n), 0, 1),
                       rng.uniform(10, 100, n), rng.uniform(10, 100, n))


def test_two_customer_hand_case():
    tr = GroundTruth([1, 2], [0.05, 0.2], [0.1, 0.3], [100, 50], [100, 60])
    profit, ft = true_profit(np.array([True, False]), tr, CostSpec.fixed(10))
    assert profit == pytest.approx(19.0)
    assert ft == 0.5


def test_nobody_and_everybody():
    tr = _truth(50)
    assert true_profit(np.zeros(50, bool), tr, CostSpec.fixed(10))[0] == pytest.approx(
        np.sum(tr.p0 * tr.v0))
    assert true_profit(np.ones(50, bool), tr, CostSpec())[0] == pytest.approx(np.sum(tr.p1 * tr.v1))


def test_decisions_aligned_by_id():
    tr = GroundTruth([1, 2], [0.05, 0.2], [0.1, 0.3], [100, 50], [100, 60])
    d = PolicyDecision(np.array([False, True]), None, None, ids=np.array([2, 1]))
    assert true_profit(d, tr, CostSpec.fixed(10))[0] == pytest.approx(19.0)


def test_percentage_cost_uses_true_value():
    tr = GroundTruth([1], [0.0], [0.5], [0.0], [80.0])
    assert true_profit(np.array([True]), tr, CostSpec.percentage(0.25))[0] == pytest.approx(30.0)


@pytest.mark.slow
def test_expected_equals_mean_realized():
    tr = _truth(10_000, seed=1)
    target = np.random.default_rng(2).random(10_000) < 0.5
    cost = CostSpec.fixed(10, 0.5)
    exp, _ = true_profit(target, tr, cost)
    draws = np.array([true_profit(target, tr, cost, "realized", seed=s)[0] for s in range(200)])
    assert abs(draws.mean() - exp) <= 3 * draws.std(ddof=1) / np.sqrt(len(draws))


def test_realized_needs_seed():
    with pytest.raises(ValueError):
        true_profit(np.ones(4, bool), _truth(), CostSpec(), "realized")


def test_tol_cases():
    assert tol([5.0], [10.0], [1]) == 225.0
    y = np.array([3.0, 0.0, 7.0])
    t = np.array([1, 0, 0])
    assert tol(transformed_outcome(y, t, 0.5), y, t) == 0.0


@given(st.lists(st.floats(0, 100), min_size=2, max_size=30), st.floats(-10, 10))
def test_tol_shift_identity(ys, c):
    y = np.array(ys)
    t = np.arange(len(ys)) % 2
    tau = np.linspace(-1, 1, len(ys))
    resid = transformed_outcome(y, t, 0.5) - tau
    shifted = tol(tau + c, y, t)
    assert shifted - tol(tau, y, t) == pytest.approx(c * c - 2 * c * resid.mean(), abs=1e-6 * (1 + shifted))


def test_rmse_cases():
    tr = _truth(40)
    assert rmse_vs_oracle(tr.tau, tr) == 0.0
    assert rmse_vs_oracle(tr.tau + 1, tr) == pytest.approx(1.0)
    assert rmse_vs_oracle(np.full(40, tr.tau.mean()), tr) == pytest.approx(tr.tau.std())


def test_brier_and_auc_cases():
    c = np.array([0, 1, 0, 1])
    assert brier(c.astype(float), c) == 0.0
    assert roc_auc([0.1, 0.9, 0.2, 0.8], c) == 1.0
    assert brier(np.full(4, 0.5), c) == 0.25
    assert roc_auc([0.9, 0.1, 0.8, 0.2], c) == 0.0
    assert math.isnan(roc_auc([0.2, 0.3], [1, 1]))


def test_auc_ties_count_half():
    assert roc_auc([0.5, 0.5], [0, 1]) == 0.5


@given(st.integers(0, 10_000))
def test_auc_invariant_under_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    p = rng.random(30)
    c = rng.integers(0, 2, 30)
    assert roc_auc(p, c) == roc_auc(np.exp(3 * p) - 7, c) or math.isnan(roc_auc(p, c))


@given(st.integers(1, 200), st.integers(0, 100))
def test_base_rate_brier(n1, n0):
    c = np.array([1] * n1 + [0] * n0)
    r = c.mean()
    assert brier(np.full(c.size, r), c) == pytest.approx(r * (1 - r))


def test_spearman_cases():
    a = np.array([1.0, 5.0, 2.0, 8.0])
    assert spearman(a, a) == pytest.approx(1.0)
    assert spearman(a, -a) == pytest.approx(-1.0)
    assert spearman([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)
    assert math.isnan(spearman([1, 1, 1], [1, 2, 3]))


def _rows():
    return [
        ReportRow("empirical", "hurdle-two", 10.0, 0.5, 1.0, 2.0, 0.1, 0.7),
        ReportRow("analytical", "hurdle-two", 12.0, 0.4),
        ReportRow("baseline", "none", 5.0, 0.0),
        ReportRow("analytical", "ate-constant", 11.0, 1.0),
    ]


def test_single_row_verbatim():
    row = _rows()[0]
    assert assemble_report([row]) == [row]


def test_rows_sorted_deterministically():
    rows = _rows()
    out = assemble_report(rows[::-1])
    assert [(r.policy, r.architecture) for r in out] == [
        ("baseline", "none"), ("analytical", "ate-constant"), ("analytical", "hurdle-two"),
        ("empirical", "hurdle-two")]
    assert out == assemble_report(rows)


def test_duplicate_rows_rejected():
    with pytest.raises(ValueError):
        assemble_report(_rows() + [_rows()[0]])


def test_report_csv_round_trip(tmp_path):
    path = tmp_path / "report.csv"
    write_report_csv(_rows(), path)
    text = path.read_text().splitlines()
    assert text[0] == "policy,architecture,profit,ft,rmse,tol,brier,auc"
    assert text[1] == "baseline,none,5.000000,0.000000,,,,"
    back = read_report_csv(path)
    assert [r.profit for r in back] == [5.0, 11.0, 12.0, 10.0]


def test_render_table_aligned():
    lines = render_table(_rows()).splitlines()
    assert lines[0].startswith("policy") and set(lines[1]) <= {"-", " "}
    assert len(lines) == 6


def test_mean_rows():
    a = [ReportRow("analytical", "x", 10.0, 0.2, 1.0)]
    b = [ReportRow("analytical", "x", 20.0, 0.4, 3.0)]
    (m,) = mean_rows([a, b])
    assert (m.profit, m.ft, m.rmse) == (15.0, pytest.approx(0.3), 2.0)
    assert math.isnan(m.auc)


def test_fraction_targeted_validated():
    with pytest.raises(ValueError):
        ReportRow("analytical", "x", 1.0, 1.5)
