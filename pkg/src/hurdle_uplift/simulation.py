"""Monte Carlo ground truth: nonlinear treatment effects on top of learned baseline surfaces."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, baseline_outcomes, generate_covariates, rng_for, round_grid
from .errors import DataError
from .learners.gbt import BINARY, REGRESSION, GbtModel, GbtParams, fit_gbt, predict

WEAK_PRESET = GbtParams(n_trees=300, max_depth=6, learning_rate=0.1, min_leaf_weight=5.0)
Z90 = 1.6448536269514722  # standard normal 95% quantile


class SimulationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    ate_conversion: float = 0.05
    ate_value: float = 1.0
    tau_c_range: tuple = (-0.10, 0.15)
    tau_v_range: tuple = (-10.0, 10.0)
    propensity: float = 0.5
    k: int = 11
    hidden: int = 11
    mass_inside: float = 0.90
    value_floor: float = 1.0
    nuisance_params: GbtParams = WEAK_PRESET
    nuisance_pool: int = 20000

    def __post_init__(self):
        if not 0.0 < self.propensity <= 1.0:
            raise ValueError("propensity must lie in (0, 1]")
        for lo, hi, ate in (
            (*self.tau_c_range, self.ate_conversion),
            (*self.tau_v_range, self.ate_value),
        ):
            if not lo < ate < hi:
                raise ValueError("ATE target must lie strictly inside its truncation range")
        if self.k < 1 or self.hidden < 1:
            raise ValueError("k and hidden must be positive")
        if not 0.0 < self.mass_inside <= 1.0:
            raise ValueError("mass_inside must lie in (0, 1]")
        if self.nuisance_pool < 1:
            raise ValueError("nuisance_pool must be positive")


@dataclass(frozen=True, eq=False)
class EffectWeights:
    w_c1: np.ndarray
    w_c2: np.ndarray
    w_v1: np.ndarray
    w_v2: np.ndarray


def draw_effect_weights(k: int = 11, hidden: int = 11, seed: int = 0) -> EffectWeights:
    """I.i.d. standard normal weights for both effect networks."""
    rng = rng_for(seed, 21)
    return EffectWeights(
        rng.standard_normal((k, hidden)),
        rng.standard_normal(hidden),
        rng.standard_normal((k, hidden)),
        rng.standard_normal(hidden),
    )


def standardize(x) -> np.ndarray:
    """Column z-scores; constant columns map to zero."""
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    safe = np.where(sd > 0, sd, 1.0)
    return np.where(sd > 0, (x - mu) / safe, 0.0)


def effect_scores(x_tau, w1, w2) -> np.ndarray:
    """Raw nonlinear score sigma(x W1) W2 per row."""
    return (1.0 / (1.0 + np.exp(-(x_tau @ w1)))) @ w2


@dataclass(frozen=True, eq=False)
class ScaledEffect:
    tau: np.ndarray        # clipped
    unclipped: np.ndarray  # centered, scaled, shifted
    scale: float
    degenerate: bool


def scale_effect(raw, ate, lo, hi, mass_inside=0.90) -> ScaledEffect:
    """Center ``raw``, rescale it around ``ate`` and clip to ``[lo, hi]``.

    The initial scale puts 1.645 standard deviations inside the distance from
    ``ate`` to the nearer bound; it then shrinks until at least
    ``mass_inside`` of the values fall inside the range before clipping.
    A constant score yields the constant ``ate``.
    """
    raw = np.asarray(raw, dtype=np.float64)
    centered = raw - raw.mean()
    sd = float(centered.std())
    if not sd > 1e-12 * (1.0 + abs(float(raw.mean()))):
        warnings.warn("effect score has zero variance; using the constant ATE", SimulationWarning)
        const = np.full(raw.shape, float(ate))
        return ScaledEffect(const, const.copy(), 0.0, True)
    scale = min(hi - ate, ate - lo) / (Z90 * sd)
    while True:
        shifted = ate + scale * centered
        inside = np.mean((shifted >= lo) & (shifted <= hi))
        if inside >= mass_inside:
            break
        scale *= 0.98
    return ScaledEffect(np.clip(shifted, lo, hi), shifted, float(scale), False)


def simulate_ite(x_tau, w: EffectWeights, cfg: SimConfig = SimConfig()):
    """Treatment effects on conversion probability and on purchase value.

    Columns of ``x_tau`` are standardized before entering the networks.
    """
    x_tau = np.asarray(x_tau, dtype=np.float64)
    if x_tau.ndim != 2 or x_tau.shape[1] != w.w_c1.shape[0]:
        raise ValueError(f"x_tau must have {w.w_c1.shape[0]} columns")
    z = standardize(x_tau)
    tc = scale_effect(effect_scores(z, w.w_c1, w.w_c2), cfg.ate_conversion, *cfg.tau_c_range,
                      cfg.mass_inside)
    tv = scale_effect(effect_scores(z, w.w_v1, w.w_v2), cfg.ate_value, *cfg.tau_v_range,
                      cfg.mass_inside)
    return tc.tau, tv.tau


@dataclass(frozen=True, eq=False)
class NuisanceModels:
    p_model: GbtModel
    v_model: GbtModel
    n_rows: int
    n_converters: int


def fit_nuisance(base: Dataset, params: GbtParams = WEAK_PRESET) -> NuisanceModels:
    """Conversion classifier on all rows and value regressor on converters."""
    if not base.has_outcomes:
        raise DataError("nuisance fit needs conversion and value columns")
    conv = base.c == 1
    if not conv.any():
        raise DataError("nuisance fit needs at least one converter")
    p_model = fit_gbt(base.X, base.c, task=BINARY, params=params)
    v_model = fit_gbt(base.X[conv], base.v[conv], task=REGRESSION, params=params)
    return NuisanceModels(p_model, v_model, base.n, int(conv.sum()))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Potential outcomes per id; ``tau`` is computed as p1 v1 - p0 v0."""

    ids: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    v0: np.ndarray
    v1: np.ndarray
    tau_c: np.ndarray = field(default=None)
    tau_v: np.ndarray = field(default=None)
    tau: np.ndarray = field(default=None)

    def __post_init__(self):
        arrs = {k: np.asarray(getattr(self, k), dtype=np.float64) for k in ("p0", "p1", "v0", "v1")}
        ids = np.asarray(self.ids, dtype=np.int64)
        n = ids.size
        if any(a.shape != (n,) for a in arrs.values()):
            raise DataError("truth columns must align with ids")
        if np.unique(ids).size != n:
            raise DataError("truth ids must be unique")
        for k in ("p0", "p1"):
            if np.any((arrs[k] < 0) | (arrs[k] > 1)):
                raise DataError(f"{k} must lie in [0, 1]")
        for k in ("v0", "v1"):
            if np.any(arrs[k] < 0):
                raise DataError(f"{k} must be non-negative")
        p0, p1, v0, v1 = arrs["p0"], arrs["p1"], arrs["v0"], arrs["v1"]
        tau_c = p1 - p0 if self.tau_c is None else np.asarray(self.tau_c, dtype=np.float64)
        tau_v = v1 - v0 if self.tau_v is None else np.asarray(self.tau_v, dtype=np.float64)
        for name, a in (("ids", ids), ("p0", p0), ("p1", p1), ("v0", v0), ("v1", v1),
                        ("tau_c", tau_c), ("tau_v", tau_v), ("tau", p1 * v1 - p0 * v0)):
            a = np.array(a, copy=True)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n(self) -> int:
        return int(self.ids.size)

    def aligned(self, ids) -> "GroundTruth":
        """Rows reordered to match ``ids``; raises on ids without truth."""
        ids = np.asarray(ids, dtype=np.int64)
        order = np.argsort(self.ids, kind="stable")
        pos = np.searchsorted(self.ids[order], ids)
        pos = np.clip(pos, 0, self.n - 1)
        rows = order[pos]
        if np.any(self.ids[rows] != ids):
            missing = ids[self.ids[rows] != ids]
            raise DataError(f"no ground truth for ids {missing[:5].tolist()}")
        return GroundTruth(ids, self.p0[rows], self.p1[rows], self.v0[rows], self.v1[rows],
                           self.tau_c[rows], self.tau_v[rows])


def generate_campaign(covariates: Dataset, nuisance: NuisanceModels, tau_c, tau_v,
                      cfg: SimConfig = SimConfig()):
    """Randomize treatment and realize outcomes; returns ``(Dataset, GroundTruth)``.

    Clipping of p1 to [0, 1] and of v1 at the value floor is folded into the
    stored effects, so ``tau_c = p1 - p0`` and ``tau_v = v1 - v0`` stay within
    their truncation ranges.
    """
    X = covariates.X
    n = X.shape[0]
    tau_c = np.asarray(tau_c, dtype=np.float64)
    tau_v = np.asarray(tau_v, dtype=np.float64)
    if tau_c.shape != (n,) or tau_v.shape != (n,):
        raise ValueError("effects must align with covariate rows")
    p0 = np.clip(predict(nuisance.p_model, X), 0.0, 1.0)
    v0 = np.maximum(predict(nuisance.v_model, X), cfg.value_floor)
    eff_c = np.clip(tau_c, -p0, 1.0 - p0)
    p1 = np.clip(p0 + eff_c, 0.0, 1.0)
    eff_v = np.maximum(tau_v, cfg.value_floor - v0)
    v1 = v0 + eff_v

    rng = rng_for(cfg.seed, 31)
    t = (rng.random(n) < cfg.propensity).astype(np.int8)
    c = (rng.random(n) < np.where(t == 1, p1, p0)).astype(np.int8)
    v = np.where(c == 1, round_grid(np.where(t == 1, v1, v0)), 0.0)
    data = covariates.with_outcomes(t, c, v)
    truth = GroundTruth(covariates.ids, p0, p1, v0, v1, eff_c, eff_v)
    return data, truth


@dataclass(frozen=True, eq=False)
class Simulation:
    data: Dataset
    truth: GroundTruth
    nuisance: NuisanceModels
    weights: EffectWeights
    base: Dataset


def simulate(n: int, p: int = 30, cfg: SimConfig = SimConfig()) -> Simulation:
    """Full pipeline: covariates, baseline outcomes, nuisance fit, effects, campaign.

    Nuisance models are fit on the first ``cfg.nuisance_pool`` rows (rows are
    i.i.d., so this is a random subsample) and applied to all rows.
    """
    cov = generate_covariates(n, p, cfg.seed)
    c, v = baseline_outcomes(cov, cfg.seed)
    base = cov.with_outcomes(np.zeros(cov.n, dtype=np.int8), c, v)
    pool = base.subset(np.arange(min(cov.n, cfg.nuisance_pool)))
    nuisance = fit_nuisance(pool, cfg.nuisance_params)
    w = draw_effect_weights(cfg.k, cfg.hidden, cfg.seed)
    tau_c, tau_v = simulate_ite(cov.X[:, : cfg.k], w, cfg)
    data, truth = generate_campaign(cov, nuisance, tau_c, tau_v, cfg)
    return Simulation(data, truth, nuisance, w, base)


TRUTH_COLUMNS = ("id", "p0", "p1", "v0", "v1", "tau_c", "tau_v", "tau")


def write_truth(truth: GroundTruth, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(TRUTH_COLUMNS) + "\n")
        cols = (truth.p0, truth.p1, truth.v0, truth.v1, truth.tau_c, truth.tau_v, truth.tau)
        for i in range(truth.n):
            fh.write(str(int(truth.ids[i])) + "," + ",".join(f"{a[i]:.6f}" for a in cols) + "\n")


def load_truth(path) -> GroundTruth:
    """Read ``truth.csv``; effects are recomputed from the potentials and checked."""
    try:
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read truth file: {exc}") from None
    if tuple(header) != TRUTH_COLUMNS:
        raise DataError("truth header must be " + ",".join(TRUTH_COLUMNS))
    truth = GroundTruth(raw[:, 0].astype(np.int64), raw[:, 1], raw[:, 2], raw[:, 3], raw[:, 4])
    # every column carries up to half a unit in the sixth decimal of rounding error
    tol = 5e-7 * (raw[:, 1] + raw[:, 2] + raw[:, 3] + raw[:, 4]) + 1e-6
    if np.any(np.abs(truth.tau - raw[:, 7]) > tol):
        raise DataError("truth file tau column is inconsistent with p0, p1, v0, v1")
    return truth
