"""Customer datasets, CSV interchange, fold plans and the synthetic covariate generator.

A :class:`Dataset` stores its records column-wise (numpy arrays) and is
read-only after construction; :attr:`Dataset.records` gives the row view.
Reals are written with six fixed decimals. The generator rounds its
continuous draws to that grid, so simulated data survive a CSV round trip
bit-exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Iterator, Optional

import numpy as np

from .errors import DataError

DECIMALS = 6
N_EFFECT_COVARIATES = 11
MIN_COVARIATES = 12

# log-normal purchase value: median 73, 5% and 95% quantiles 11.59 and 210
VALUE_MEDIAN = 73.0
VALUE_Q05 = 11.59
VALUE_Q95 = 210.0
_Z95 = NormalDist().inv_cdf(0.95)
VALUE_SIGMA_LO = math.log(VALUE_MEDIAN / VALUE_Q05) / _Z95
VALUE_SIGMA_HI = math.log(VALUE_Q95 / VALUE_MEDIAN) / _Z95
# intercept of the baseline conversion logit; calibrated offline to a 7% rate
CONVERSION_INTERCEPT = -6.5704
BASE_CONVERSION_RATE = 0.07


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Independent PCG64 stream for ``seed`` and a stream label."""
    return np.random.default_rng([int(s) for s in stream] + [int(seed)])


def round_grid(a):
    """Round to the fixed CSV decimal grid."""
    return np.round(np.asarray(a, dtype=np.float64), DECIMALS)


@dataclass(frozen=True)
class CustomerRecord:
    id: int
    x: np.ndarray
    t: int
    c: int
    v: float

    @property
    def y(self) -> float:
        return self.c * self.v


def _readonly(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable column store of customer records.

    ``t``, ``c`` and ``v`` are ``None`` for covariate-only data (generator
    output before outcomes are attached).
    """

    ids: np.ndarray
    X: np.ndarray
    t: Optional[np.ndarray] = None
    c: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    schema: tuple = field(default=())

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2 or ids.shape != (X.shape[0],):
            raise DataError("ids and X must describe the same number of rows")
        if np.unique(ids).size != ids.size:
            raise DataError("customer ids must be unique")
        if not np.all(np.isfinite(X)):
            raise DataError("covariates must be finite")
        schema = tuple(self.schema) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(schema) != X.shape[1]:
            raise DataError("schema length does not match covariate count")
        object.__setattr__(self, "ids", _readonly(ids))
        object.__setattr__(self, "X", _readonly(X))
        object.__setattr__(self, "schema", schema)
        outcome = (self.t, self.c, self.v)
        if all(a is None for a in outcome):
            return
        if any(a is None for a in outcome):
            raise DataError("t, c and v must be given together")
        t = np.asarray(self.t)
        c = np.asarray(self.c)
        v = np.asarray(self.v, dtype=np.float64)
        n = ids.size
        if t.shape != (n,) or c.shape != (n,) or v.shape != (n,):
            raise DataError("outcome columns must have one entry per row")
        if not np.all((t == 0) | (t == 1)):
            raise DataError("t must be binary")
        if not np.all((c == 0) | (c == 1)):
            raise DataError("c must be binary")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise DataError("v must be finite and non-negative")
        if np.any((c == 0) & (v != 0)):
            raise DataError("v must be 0 when c = 0")
        object.__setattr__(self, "t", _readonly(t.astype(np.int8)))
        object.__setattr__(self, "c", _readonly(c.astype(np.int8)))
        object.__setattr__(self, "v", _readonly(v))

    @property
    def n(self) -> int:
        return int(self.ids.size)

    @property
    def p(self) -> int:
        return int(self.X.shape[1])

    def __len__(self):
        return self.n

    @property
    def has_outcomes(self) -> bool:
        return self.t is not None

    @property
    def y(self) -> np.ndarray:
        """Observed profit Y = c * v."""
        self._need_outcomes()
        return self.c * self.v

    def _need_outcomes(self):
        if not self.has_outcomes:
            raise DataError("dataset has no outcome columns")

    @property
    def records(self) -> Iterator[CustomerRecord]:
        self._need_outcomes()
        for i in range(self.n):
            yield CustomerRecord(
                int(self.ids[i]), self.X[i], int(self.t[i]), int(self.c[i]), float(self.v[i])
            )

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        if not self.has_outcomes:
            return Dataset(self.ids[idx], self.X[idx], schema=self.schema)
        return Dataset(
            self.ids[idx], self.X[idx], self.t[idx], self.c[idx], self.v[idx], self.schema
        )

    def with_outcomes(self, t, c, v) -> "Dataset":
        return Dataset(self.ids, self.X, t, c, v, self.schema)

    def equals(self, other: "Dataset") -> bool:
        """Bit-exact equality of every column."""
        same = (
            self.schema == other.schema
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.X, other.X)
            and self.has_outcomes == other.has_outcomes
        )
        if same and self.has_outcomes:
            same = (
                np.array_equal(self.t, other.t)
                and np.array_equal(self.c, other.c)
                and np.array_equal(self.v, other.v)
            )
        return bool(same)


def _fmt(x: float) -> str:
    return f"{x:.{DECIMALS}f}"


def write_csv(data: Dataset, path) -> None:
    """Write ``customers.csv`` (header ``id,x0..x{p-1},t,c,v``)."""
    data._need_outcomes()
    header = ["id"] + [f"x{j}" for j in range(data.p)] + ["t", "c", "v"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(data.n):
            cols = [str(int(data.ids[i]))]
            cols.extend(_fmt(x) for x in data.X[i])
            cols.extend((str(int(data.t[i])), str(int(data.c[i])), _fmt(data.v[i])))
            fh.write(",".join(cols) + "\n")


def _parse_binary(tok, name, line):
    if tok not in ("0", "1"):
        raise DataError(f"line {line}: {name} must be 0 or 1, got {tok!r}")
    return int(tok)


def load_csv(path) -> Dataset:
    """Parse ``customers.csv``; errors name the offending line."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("line 1: empty file") from None
        if len(header) < 5 or header[0] != "id" or header[-3:] != ["t", "c", "v"]:
            raise DataError("line 1: header must be id,x0..x{p-1},t,c,v")
        p = len(header) - 4
        if header[1:-3] != [f"x{j}" for j in range(p)]:
            raise DataError("line 1: covariate columns must be x0..x{p-1} in order")
        ids, X, t, c, v = [], [], [], [], []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != p + 4:
                raise DataError(f"line {line}: expected {p + 4} fields, got {len(row)}")
            try:
                ids.append(int(row[0]))
                xs = [float(tok) for tok in row[1 : p + 1]]
                vv = float(row[-1])
            except ValueError as exc:
                raise DataError(f"line {line}: {exc}") from None
            if not all(math.isfinite(x) for x in xs) or not math.isfinite(vv):
                raise DataError(f"line {line}: non-finite value")
            tt = _parse_binary(row[-3], "t", line)
            cc = _parse_binary(row[-2], "c", line)
            if vv < 0:
                raise DataError(f"line {line}: v must be non-negative")
            if cc == 0 and vv != 0:
                raise DataError(f"line {line}: invariant violated, c = 0 but v = {vv}")
            X.append(xs)
            t.append(tt)
            c.append(cc)
            v.append(vv)
    if len(set(ids)) != len(ids):
        raise DataError("duplicate customer ids")
    X = np.asarray(X, dtype=np.float64).reshape(len(ids), p)
    return Dataset(np.asarray(ids, dtype=np.int64), X, np.asarray(t), np.asarray(c), np.asarray(v))


@dataclass(frozen=True, eq=False)
class FoldPlan:
    """Assignment of every id to one of ``k`` folds (``fold`` is aligned with ``ids``)."""

    k: int
    ids: np.ndarray
    fold: np.ndarray
    seed: int

    @property
    def assignment(self) -> dict:
        return {int(i): int(f) for i, f in zip(self.ids, self.fold)}

    def split(self, j: int):
        """Row positions (train, test) for fold ``j``."""
        test = np.flatnonzero(self.fold == j)
        train = np.flatnonzero(self.fold != j)
        return train, test

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold, minlength=self.k)


def make_folds(data: Dataset, k: int, seed: int) -> FoldPlan:
    """Deterministic k-fold plan stratified on (t, c).

    Rows of each stratum are shuffled and dealt round-robin, with the dealing
    position carried over between strata, so overall fold sizes and per-stratum
    counts both differ by at most one.
    """
    n = data.n
    if not isinstance(k, (int, np.integer)) or k < 2 or k > n:
        raise ValueError(f"fold count k={k} must satisfy 2 <= k <= {n}")
    rng = rng_for(seed, 101)
    if data.has_outcomes:
        stratum = 2 * data.t.astype(np.int64) + data.c.astype(np.int64)
    else:
        stratum = np.zeros(n, dtype=np.int64)
    fold = np.empty(n, dtype=np.int64)
    pos = 0
    for s in range(4):
        rows = np.flatnonzero(stratum == s)
        rows = rows[rng.permutation(rows.size)]
        fold[rows] = (pos + np.arange(rows.size)) % k
        pos += rows.size
    fold.setflags(write=False)
    return FoldPlan(int(k), data.ids, fold, int(seed))


# ---------------------------------------------------------------------------
# synthetic covariates

_EFFECT_NAMES = (
    "channel_direct",
    "channel_search",
    "channel_social",
    "returning",
    "prev_visits",
    "prev_purchases",
    "days_since_visit",
    "page_views",
    "session_minutes",
    "basket_items",
    "prev_basket_value",
    "cart_value",
)
_CHANNEL_P = (0.5, 0.3, 0.2)
_RETURNING_P = 0.45
_KINDS = ("count", "positive", "binary")


def _nuisance_kind(j):
    r = j - MIN_COVARIATES
    return _KINDS[r % 3], r


def covariate_schema(p: int) -> tuple:
    names = list(_EFFECT_NAMES[:p])
    for j in range(len(names), p):
        kind, _ = _nuisance_kind(j)
        names.append(f"{kind}_{j}")
    return tuple(names)


def covariate_kinds(p: int) -> tuple:
    base = ("binary",) * 4 + ("count", "count", "positive", "count", "positive", "count", "positive", "positive")
    return tuple(base[:p]) + tuple(_nuisance_kind(j)[0] for j in range(len(base), p))


def _nuisance_params(r):
    return 0.2 + 0.1 * (r % 5), 1.0 + 0.2 * (r % 4), 0.2 + 0.1 * (r % 4)


def covariate_means(p: int) -> np.ndarray:
    """Closed-form marginal means of the generator's covariates."""
    e = math.exp
    means = [
        _CHANNEL_P[0], _CHANNEL_P[1], _CHANNEL_P[2], _RETURNING_P,
        e(0.5 + 0.36 / 2),
        e(-1.2 + (0.25 + 0.16) / 2),
        e(2.5 + (0.16 + 0.64) / 2),
        5.0 + e(1.5 + (0.09 + 0.09) / 2),
        e(1.5 + (0.09 + 0.09 + 0.25) / 2),
        e(0.2 + 0.36 / 2),
        e(4.0 + (0.09 + 0.36) / 2),
        e(4.0 + 0.49 / 2),
    ]
    out = means[:p]
    for j in range(len(out), p):
        kind, r = _nuisance_kind(j)
        a, b, m = _nuisance_params(r)
        if kind == "count":
            out.append(e(a + 0.09 / 2))
        elif kind == "positive":
            out.append(e(b + (0.04 + 0.25) / 2))
        else:
            out.append(m)
    return np.asarray(out)


def generate_covariates(n: int, p: int = 30, seed: int = 0) -> Dataset:
    """Draw ``n`` synthetic visitor covariate rows.

    Two latent traits (engagement ``u`` and purchase intent ``z``) induce
    correlation between count-like, right-skewed positive and binary
    features. The first 11 columns describe entry channel, visit history and
    the current session; they are the effect-driving covariates. Column 11
    is the cart value, which drives purchase value.
    """
    if int(n) < 1:
        raise ValueError("n must be at least 1")
    if int(p) < MIN_COVARIATES:
        raise ValueError(f"p must be at least {MIN_COVARIATES}")
    n, p = int(n), int(p)
    rng = rng_for(seed, 11)
    u = rng.standard_normal(n)
    z = rng.standard_normal(n)
    X = np.empty((n, p))
    ch = rng.choice(3, size=n, p=_CHANNEL_P)
    for j in range(3):
        X[:, j] = ch == j
    q = NormalDist().inv_cdf(1.0 - _RETURNING_P)
    X[:, 3] = 0.8 * u + 0.6 * rng.standard_normal(n) > q
    X[:, 4] = rng.poisson(np.exp(0.5 + 0.6 * u))
    X[:, 5] = rng.poisson(np.exp(-1.2 + 0.5 * u + 0.4 * z))
    X[:, 6] = np.exp(2.5 - 0.4 * u + 0.8 * rng.standard_normal(n))
    X[:, 7] = 5 + rng.poisson(np.exp(1.5 + 0.3 * u + 0.3 * z))
    X[:, 8] = np.exp(1.5 + 0.3 * u + 0.3 * z + 0.5 * rng.standard_normal(n))
    X[:, 9] = rng.poisson(np.exp(0.2 + 0.6 * z))
    X[:, 10] = np.exp(4.0 + 0.3 * u + 0.6 * rng.standard_normal(n))
    X[:, 11] = np.exp(4.0 + 0.7 * rng.standard_normal(n))
    for j in range(MIN_COVARIATES, p):
        kind, r = _nuisance_kind(j)
        a, b, m = _nuisance_params(r)
        eps = rng.standard_normal(n)
        if kind == "count":
            X[:, j] = rng.poisson(np.exp(a + 0.3 * u))
        elif kind == "positive":
            X[:, j] = np.exp(b + 0.2 * z + 0.5 * eps)
        else:
            X[:, j] = 0.5 * u + math.sqrt(0.75) * eps > NormalDist().inv_cdf(1.0 - m)
    return Dataset(np.arange(n, dtype=np.int64), round_grid(X))


def baseline_conversion_logit(X) -> np.ndarray:
    """Untreated conversion log-odds; depends on the first 12 columns only."""
    X = np.asarray(X, dtype=np.float64)
    return (
        CONVERSION_INTERCEPT
        + 1.8 * np.log1p(X[:, 9])
        + 0.9 * X[:, 3]
        + 0.75 * np.log1p(X[:, 5])
        + 0.9 * np.log(X[:, 8])
        + 0.6 * X[:, 1]
        - 0.6 * X[:, 2]
        - 0.375 * np.log(X[:, 6])
        + 0.225 * np.log1p(X[:, 4])
        + 0.15 * np.log1p(X[:, 7] - 5)
    )


def baseline_value_score(X, noise) -> np.ndarray:
    """Standard-normal value score driven by the cart value column."""
    s = (np.log(np.asarray(X)[:, 11]) - 4.0) / 0.7
    return 0.95 * s + math.sqrt(1.0 - 0.95**2) * noise


def value_from_score(score) -> np.ndarray:
    """Map a standard-normal score to purchase value (piecewise log-normal)."""
    score = np.asarray(score, dtype=np.float64)
    sigma = np.where(score < 0, VALUE_SIGMA_LO, VALUE_SIGMA_HI)
    return VALUE_MEDIAN * np.exp(sigma * score)


def baseline_outcomes(covariates: Dataset, seed: int):
    """Generator-defined untreated outcomes ``(c, v)`` used to fit nuisance models."""
    X = covariates.X
    rng = rng_for(seed, 12)
    n = X.shape[0]
    prob = 1.0 / (1.0 + np.exp(-baseline_conversion_logit(X)))
    c = (rng.random(n) < prob).astype(np.int8)
    v = value_from_score(baseline_value_score(X, rng.standard_normal(n)))
    v = np.where(c == 1, round_grid(v), 0.0)
    return c, v
