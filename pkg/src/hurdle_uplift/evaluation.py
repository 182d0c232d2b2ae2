"""Campaign profit accounting against ground truth, CATE and conversion metrics, reports."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .data import rng_for
from .learners.tuning import transformed_outcome
from .policy import CostSpec, PolicyDecision
from .simulation import GroundTruth

EXPECTED = "expected"
REALIZED = "realized"

__all__ = [
    "true_profit", "transformed_outcome", "tol", "rmse_vs_oracle", "brier", "roc_auc",
    "rankdata", "spearman", "ReportRow", "assemble_report", "write_report_csv",
    "read_report_csv", "render_table",
]


def _targets_and_truth(decisions, truth: GroundTruth):
    if isinstance(decisions, PolicyDecision):
        target = np.asarray(decisions.target, dtype=bool)
        if decisions.ids is not None:
            truth = truth.aligned(decisions.ids)
    else:
        target = np.asarray(decisions, dtype=bool)
    if target.shape != (truth.n,):
        raise ValueError("decisions must cover every ground-truth row")
    return target, truth


def true_profit(decisions, truth: GroundTruth, cost: CostSpec, mode: str = EXPECTED, seed=None):
    """Campaign profit and fraction targeted under the true potential outcomes.

    Expected mode sums p1 (v1 - delta_eff) - kappa over targeted customers and
    p0 v0 over the rest. Realized mode draws each customer's conversion from
    the probability of the action taken.
    """
    target, truth = _targets_and_truth(decisions, truth)
    d1 = cost.delta_eff(truth.v1) if cost.needs_value else cost.delta_eff()
    if mode == EXPECTED:
        per = np.where(target, truth.p1 * (truth.v1 - d1) - cost.kappa, truth.p0 * truth.v0)
    elif mode == REALIZED:
        if seed is None:
            raise ValueError("realized mode needs a seed")
        u = rng_for(seed, 41).random(truth.n)
        conv_t = u < truth.p1
        conv_c = u < truth.p0
        per = np.where(
            target,
            np.where(conv_t, truth.v1 - d1, 0.0) - cost.kappa,
            np.where(conv_c, truth.v0, 0.0),
        )
    else:
        raise ValueError(f"unknown profit mode {mode!r}")
    return float(per.sum()), float(target.mean()) if target.size else 0.0


def tol(tau_hat, y, t, e=0.5) -> float:
    """Transformed outcome loss: mean squared gap between Y* and the estimate."""
    tau_hat = np.asarray(tau_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if tau_hat.shape != y.shape or np.shape(t) != y.shape:
        raise ValueError("tau_hat, y and t must have equal length")
    return float(np.mean((transformed_outcome(y, t, e) - tau_hat) ** 2))


def rmse_vs_oracle(tau_hat, truth) -> float:
    tau = truth.tau if isinstance(truth, GroundTruth) else np.asarray(truth, dtype=np.float64)
    tau_hat = np.asarray(tau_hat, dtype=np.float64)
    if tau_hat.shape != tau.shape:
        raise ValueError("estimates and truth must align")
    return float(np.sqrt(np.mean((tau_hat - tau) ** 2)))


def brier(p_hat, c) -> float:
    p_hat = np.asarray(p_hat, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    return float(np.mean((p_hat - c) ** 2))


def rankdata(a) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    a = np.asarray(a, dtype=np.float64)
    order = np.argsort(a, kind="mergesort")
    s = a[order]
    new = np.concatenate(([True], s[1:] != s[:-1]))
    grp = np.cumsum(new) - 1
    starts = np.flatnonzero(new)
    ends = np.concatenate((starts[1:], [s.size]))
    avg = (starts + ends + 1) / 2.0
    ranks = np.empty(a.size)
    ranks[order] = avg[grp]
    return ranks


def roc_auc(p_hat, c) -> float:
    """Probability that a converter outranks a non-converter (ties count one half)."""
    c = np.asarray(c).astype(bool)
    n1 = int(c.sum())
    n0 = c.size - n1
    if n1 == 0 or n0 == 0:
        return math.nan
    r = rankdata(p_hat)
    return float((r[c].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def spearman(a, b) -> float:
    """Pearson correlation of average ranks; NaN when either input is constant."""
    ra, rb = rankdata(a), rankdata(b)
    if ra.size != rb.size:
        raise ValueError("inputs must have equal length")
    da, db = ra - ra.mean(), rb - rb.mean()
    den = math.sqrt(float(np.dot(da, da)) * float(np.dot(db, db)))
    if den == 0.0:
        return math.nan
    return float(np.dot(da, db) / den)


# -- reports --------------------------------------------------------------------

POLICY_ORDER = ("baseline", "analytical", "empirical")
REPORT_COLUMNS = ("policy", "architecture", "profit", "ft", "rmse", "tol", "brier", "auc")


@dataclass(frozen=True)
class ReportRow:
    policy: str
    architecture: str
    profit: float
    ft: float
    rmse: float = math.nan
    tol: float = math.nan
    brier: float = math.nan
    auc: float = math.nan

    def __post_init__(self):
        if not (0.0 <= self.ft <= 1.0):
            raise ValueError("fraction targeted must lie in [0, 1]")


def _row_key(row: ReportRow):
    pol = POLICY_ORDER.index(row.policy) if row.policy in POLICY_ORDER else len(POLICY_ORDER)
    return (pol, row.policy, row.architecture)


def assemble_report(rows) -> list:
    """Rows in deterministic (policy, architecture) order; keys must be unique."""
    rows = list(rows)
    seen = set()
    for r in rows:
        key = (r.policy, r.architecture)
        if key in seen:
            raise ValueError(f"duplicate report row {key}")
        seen.add(key)
    return sorted(rows, key=_row_key)


def _fmt(x: float) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.6f}"


def write_report_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(REPORT_COLUMNS) + "\n")
        for r in assemble_report(rows):
            vals = [r.policy, r.architecture] + [_fmt(getattr(r, k)) for k in REPORT_COLUMNS[2:]]
            fh.write(",".join(vals) + "\n")


def read_report_csv(path) -> list:
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != REPORT_COLUMNS:
            raise ValueError("unexpected report header")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            nums = [float(p) if p else math.nan for p in parts[2:]]
            rows.append(ReportRow(parts[0], parts[1], *nums))
    return rows


def render_table(rows) -> str:
    """Aligned plain-text rendering of report rows."""
    rows = assemble_report(rows)
    head = list(REPORT_COLUMNS)
    body = [
        [r.policy, r.architecture]
        + [("-" if math.isnan(getattr(r, k)) else f"{getattr(r, k):,.2f}" if k == "profit"
            else f"{getattr(r, k):.4f}") for k in REPORT_COLUMNS[2:]]
        for r in rows
    ]
    widths = [max(len(x) for x in col) for col in zip(head, *body)]
    lines = []
    for i, line in enumerate([head] + body):
        cells = [c.ljust(w) if j < 2 else c.rjust(w) for j, (c, w) in enumerate(zip(line, widths))]
        lines.append("  ".join(cells).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def row_as_dict(row: ReportRow) -> dict:
    return asdict(row)


def mean_rows(groups) -> list:
    """Average numeric fields of rows sharing (policy, architecture) across runs."""
    acc = {}
    for rows in groups:
        for r in rows:
            acc.setdefault((r.policy, r.architecture), []).append(r)
    out = []
    for (pol, arch), rs in acc.items():
        vals = {}
        for f in fields(ReportRow)[2:]:
            xs = [getattr(r, f.name) for r in rs]
            vals[f.name] = math.nan if any(math.isnan(x) for x in xs) else float(np.mean(xs))
        out.append(ReportRow(pol, arch, **vals))
    return assemble_report(out)
