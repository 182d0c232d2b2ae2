"""CATE, conversion and value estimators, including causal hurdle models.

Every estimator returns a :class:`TargetingModel`, an immutable bundle of
fitted component models plus the architecture tag that says how to combine
them. Hurdle models estimate conversion and conditional value separately
and form the effect on profit as p1 v1 - p0 v0. One-stage models estimate
the effect on profit directly and carry a separate conversion classifier
for costing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Optional, Union

import numpy as np

from .data import Dataset, make_folds
from .errors import DataError
from .learners import gbt as gbt_mod
from .learners import linear as lin_mod
from .learners.gbt import BINARY, REGRESSION, GbtModel, GbtParams, fit_gbt, predict, predict_staged
from .learners.linear import IDENTITY, LOGISTIC, LinearModel, fit_linear, predict_linear
from .learners.tuning import GridResult, HyperGrid, grid_search
from .simulation import GroundTruth

HURDLE_SINGLE = "hurdle-single"
HURDLE_TWO = "hurdle-two"
ONESTAGE_SINGLE = "onestage-single"
ONESTAGE_TWO = "onestage-two"
ONESTAGE_DR = "onestage-dr"
ATE = "ate-constant"
ORACLE = "oracle"

FITTED_ARCHITECTURES = (HURDLE_SINGLE, HURDLE_TWO, ONESTAGE_SINGLE, ONESTAGE_TWO, ONESTAGE_DR)
ARCHITECTURES = FITTED_ARCHITECTURES + (ATE, ORACLE)
HURDLES = (HURDLE_SINGLE, HURDLE_TWO)
VALUE_ARCHITECTURES = HURDLES + (ATE, ORACLE)

# GBT components per architecture (linear DR nuisances are not tuned)
GBT_COMPONENTS = {
    HURDLE_SINGLE: ("f_c", "f_v"),
    HURDLE_TWO: ("p0", "p1", "v0", "v1"),
    ONESTAGE_SINGLE: ("f_y", "conversion"),
    ONESTAGE_TWO: ("f_y1", "f_y0", "conversion"),
    ONESTAGE_DR: ("f_dr", "conversion"),
}

W_CLIP = 0.02       # floor on the conversion probability inside IPW weights
VALUE_FLOOR = 0.01  # floor on value-scorer outputs
E_CLIP = 0.01       # propensity clipped to [E_CLIP, 1 - E_CLIP]


@dataclass(frozen=True)
class Constant:
    value: float


Component = Union[GbtModel, LinearModel, Constant]


@dataclass(frozen=True, eq=False)
class Predictions:
    tau_hat: np.ndarray
    p1_hat: np.ndarray
    v1_hat: Optional[np.ndarray] = None
    parts: Mapping = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class TargetingModel:
    """Fitted scorers for one architecture.

    ``components`` maps component names to fitted models. Query with
    :meth:`predict` on a :class:`Dataset` (the oracle looks rows up by id).
    """

    architecture: str
    components: Mapping
    truth: Optional[GroundTruth] = None

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        object.__setattr__(self, "components", MappingProxyType(dict(self.components)))

    @property
    def n_models(self) -> int:
        return len(self.components)

    @property
    def has_value_scorer(self) -> bool:
        return self.architecture in VALUE_ARCHITECTURES

    def predict(self, data: Dataset) -> Predictions:
        return _PREDICTORS[self.architecture](self, data)

    def cate(self, data: Dataset) -> np.ndarray:
        return self.predict(data).tau_hat

    def conversion(self, data: Dataset) -> np.ndarray:
        return self.predict(data).p1_hat

    def value(self, data: Dataset) -> Optional[np.ndarray]:
        return self.predict(data).v1_hat


def _with_t(X, t):
    return np.hstack([X, np.broadcast_to(np.asarray(t, dtype=np.float64), (X.shape[0],))[:, None]])


def _eval(comp: Component, X) -> np.ndarray:
    if isinstance(comp, GbtModel):
        return predict(comp, X)
    if isinstance(comp, LinearModel):
        return predict_linear(comp, X)
    return np.full(X.shape[0], comp.value)


def _floor_value(v):
    return np.maximum(v, VALUE_FLOOR)


def _predict_hurdle_single(m, data):
    X = data.X
    f_c, f_v = m.components["f_c"], m.components["f_v"]
    X1, X0 = _with_t(X, 1.0), _with_t(X, 0.0)
    p1, p0 = _eval(f_c, X1), _eval(f_c, X0)
    v1, v0 = _floor_value(_eval(f_v, X1)), _floor_value(_eval(f_v, X0))
    return Predictions(p1 * v1 - p0 * v0, p1, v1, {"p0": p0, "p1": p1, "v0": v0, "v1": v1})


def _predict_hurdle_two(m, data):
    X = data.X
    c = m.components
    p1, p0 = _eval(c["p1"], X), _eval(c["p0"], X)
    v1, v0 = _floor_value(_eval(c["v1"], X)), _floor_value(_eval(c["v0"], X))
    return Predictions(p1 * v1 - p0 * v0, p1, v1, {"p0": p0, "p1": p1, "v0": v0, "v1": v1})


def _predict_onestage_single(m, data):
    X = data.X
    f_y = m.components["f_y"]
    y1, y0 = _eval(f_y, _with_t(X, 1.0)), _eval(f_y, _with_t(X, 0.0))
    return Predictions(y1 - y0, _eval(m.components["conversion"], X), None, {"y1": y1, "y0": y0})


def _predict_onestage_two(m, data):
    X = data.X
    y1, y0 = _eval(m.components["f_y1"], X), _eval(m.components["f_y0"], X)
    return Predictions(y1 - y0, _eval(m.components["conversion"], X), None, {"y1": y1, "y0": y0})


def _predict_dr(m, data):
    X = data.X
    return Predictions(_eval(m.components["f_dr"], X), _eval(m.components["conversion"], X))


def _predict_ate(m, data):
    n = data.n
    c = m.components
    return Predictions(np.full(n, c["tau"].value), np.full(n, c["conversion"].value),
                       np.full(n, c["value"].value))


def _predict_oracle(m, data):
    tr = m.truth.aligned(data.ids)
    return Predictions(tr.tau.copy(), tr.p1.copy(), tr.v1.copy(), {"p0": tr.p0, "v0": tr.v0})


_PREDICTORS = {
    HURDLE_SINGLE: _predict_hurdle_single,
    HURDLE_TWO: _predict_hurdle_two,
    ONESTAGE_SINGLE: _predict_onestage_single,
    ONESTAGE_TWO: _predict_onestage_two,
    ONESTAGE_DR: _predict_dr,
    ATE: _predict_ate,
    ORACLE: _predict_oracle,
}


# -- fitting ---------------------------------------------------------------------

def _params_for(params, name) -> GbtParams:
    if params is None:
        return GbtParams()
    if isinstance(params, GbtParams):
        return params
    return params.get(name, GbtParams())


def _check_arms(train: Dataset, converters=False):
    if not train.has_outcomes:
        raise DataError("training data needs t, c and v")
    for arm in (0, 1):
        rows = train.t == arm
        if not rows.any():
            raise DataError(f"training data has no rows with t={arm}")
        if converters and not np.any(train.c[rows] == 1):
            raise DataError(f"training data has no converters with t={arm}")


def ipw_weights(p_hat) -> np.ndarray:
    """Inverse conversion-probability weights, with the probability floored at W_CLIP."""
    return 1.0 / np.maximum(np.asarray(p_hat, dtype=np.float64), W_CLIP)


def fit_hurdle_single(train: Dataset, params=None, backend=None) -> TargetingModel:
    """One conversion classifier and one IPW-weighted value regressor, both on (x, t)."""
    _check_arms(train, converters=True)
    Xt = _with_t(train.X, train.t)
    f_c = fit_gbt(Xt, train.c, task=BINARY, params=_params_for(params, "f_c"), backend=backend)
    conv = train.c == 1
    w = ipw_weights(predict(f_c, Xt[conv], backend=backend))
    f_v = fit_gbt(Xt[conv], train.v[conv], w, task=REGRESSION,
                  params=_params_for(params, "f_v"), backend=backend)
    return TargetingModel(HURDLE_SINGLE, {"f_c": f_c, "f_v": f_v})


def _fit_arm_hurdle(train, arm, params, backend, p_name, v_name, p_model=None):
    rows = train.t == arm
    X, c, v = train.X[rows], train.c[rows], train.v[rows]
    if p_model is None:
        p_model = fit_gbt(X, c, task=BINARY, params=_params_for(params, p_name), backend=backend)
    conv = c == 1
    w = ipw_weights(predict(p_model, X[conv], backend=backend))
    v_model = fit_gbt(X[conv], v[conv], w, task=REGRESSION,
                      params=_params_for(params, v_name), backend=backend)
    return p_model, v_model


def fit_hurdle_two(train: Dataset, params=None, backend=None, conversion=None) -> TargetingModel:
    """Per-arm conversion classifiers and IPW-weighted per-arm value regressors.

    ``conversion`` may pass in an already fitted treated-arm classifier; the
    separate conversion model is the same fit.
    """
    _check_arms(train, converters=True)
    p0, v0 = _fit_arm_hurdle(train, 0, params, backend, "p0", "v0")
    p1, v1 = _fit_arm_hurdle(train, 1, params, backend, "p1", "v1", conversion)
    return TargetingModel(HURDLE_TWO, {"p0": p0, "p1": p1, "v0": v0, "v1": v1})


def fit_conversion_separate(train: Dataset, params=None, backend=None) -> GbtModel:
    """Conversion classifier on treated rows only."""
    if not train.has_outcomes or not np.any(train.t == 1):
        raise DataError("separate conversion model needs treated rows")
    rows = train.t == 1
    return fit_gbt(train.X[rows], train.c[rows], task=BINARY,
                   params=_params_for(params, "conversion"), backend=backend)


def fit_onestage_single(train: Dataset, params=None, backend=None, conversion=None) -> TargetingModel:
    """S-learner on profit Y = c v with t as an extra covariate."""
    _check_arms(train)
    f_y = fit_gbt(_with_t(train.X, train.t), train.y, task=REGRESSION,
                  params=_params_for(params, "f_y"), backend=backend)
    conv = conversion if conversion is not None else fit_conversion_separate(train, params, backend)
    return TargetingModel(ONESTAGE_SINGLE, {"f_y": f_y, "conversion": conv})


def fit_onestage_two(train: Dataset, params=None, backend=None, conversion=None) -> TargetingModel:
    """T-learner on profit: separate regressions per arm."""
    _check_arms(train)
    t1, t0 = train.t == 1, train.t == 0
    y = train.y
    f_y1 = fit_gbt(train.X[t1], y[t1], params=_params_for(params, "f_y1"), backend=backend)
    f_y0 = fit_gbt(train.X[t0], y[t0], params=_params_for(params, "f_y0"), backend=backend)
    conv = conversion if conversion is not None else fit_conversion_separate(train, params, backend)
    return TargetingModel(ONESTAGE_TWO, {"f_y1": f_y1, "f_y0": f_y0, "conversion": conv})


@dataclass(frozen=True, eq=False)
class DrTransform:
    y_dr: np.ndarray
    mu1: LinearModel
    mu0: LinearModel
    propensity: Component
    e_hat: np.ndarray


def dr_pseudo_outcome(y, t, mu1, mu0, e_hat) -> np.ndarray:
    """mu1 - mu0 + t (y - mu1) / e - (1 - t)(y - mu0) / (1 - e)."""
    y, t, mu1, mu0, e_hat = (np.asarray(a, dtype=np.float64) for a in (y, t, mu1, mu0, e_hat))
    return mu1 - mu0 + t * (y - mu1) / e_hat - (1.0 - t) * (y - mu0) / (1.0 - e_hat)


def build_dr_transform(train: Dataset, known_propensity: Optional[float] = None) -> DrTransform:
    """Doubly robust pseudo-outcomes with linear outcome models per arm.

    The propensity is a logistic regression of t on x unless
    ``known_propensity`` is given; either way it is clipped to [0.01, 0.99].
    """
    _check_arms(train)
    X, t, y = train.X, train.t, train.y
    mu1 = fit_linear(X[t == 1], y[t == 1], IDENTITY)
    mu0 = fit_linear(X[t == 0], y[t == 0], IDENTITY)
    if known_propensity is None:
        prop = fit_linear(X, t, LOGISTIC)
    else:
        prop = Constant(float(known_propensity))
    e_hat = np.clip(_eval(prop, X), E_CLIP, 1.0 - E_CLIP)
    y_dr = dr_pseudo_outcome(y, t, predict_linear(mu1, X), predict_linear(mu0, X), e_hat)
    return DrTransform(y_dr, mu1, mu0, prop, e_hat)


def fit_onestage_dr(train: Dataset, params=None, backend=None, conversion=None,
                    known_propensity: Optional[float] = None, transform=None) -> TargetingModel:
    """Regression of the doubly robust pseudo-outcome on x."""
    dr = transform if transform is not None else build_dr_transform(train, known_propensity)
    f_dr = fit_gbt(train.X, dr.y_dr, params=_params_for(params, "f_dr"), backend=backend)
    conv = conversion if conversion is not None else fit_conversion_separate(train, params, backend)
    return TargetingModel(
        ONESTAGE_DR,
        {"mu1": dr.mu1, "mu0": dr.mu0, "propensity": dr.propensity, "f_dr": f_dr,
         "conversion": conv},
    )


def make_ate_model(train: Dataset) -> TargetingModel:
    """Constant difference in mean profit, treated conversion rate and treated converter value."""
    _check_arms(train)
    y = train.y
    t1, t0 = train.t == 1, train.t == 0
    tau = float(y[t1].mean() - y[t0].mean())
    conv = t1 & (train.c == 1)
    rate = float(np.count_nonzero(conv) / np.count_nonzero(t1))
    value = float(train.v[conv].mean()) if conv.any() else 0.0
    return TargetingModel(ATE, {"tau": Constant(tau), "conversion": Constant(rate),
                                "value": Constant(value)})


def make_oracle_model(truth: GroundTruth) -> TargetingModel:
    return TargetingModel(ORACLE, {}, truth=truth)


def fit_architecture(arch: str, train: Dataset, params=None, backend=None,
                     known_propensity: Optional[float] = None, conversion=None,
                     truth: Optional[GroundTruth] = None) -> TargetingModel:
    """Dispatch by architecture tag; ``conversion`` reuses a fitted separate classifier."""
    if arch == HURDLE_SINGLE:
        return fit_hurdle_single(train, params, backend)
    if arch == HURDLE_TWO:
        return fit_hurdle_two(train, params, backend, conversion)
    if arch == ONESTAGE_SINGLE:
        return fit_onestage_single(train, params, backend, conversion)
    if arch == ONESTAGE_TWO:
        return fit_onestage_two(train, params, backend, conversion)
    if arch == ONESTAGE_DR:
        return fit_onestage_dr(train, params, backend, conversion, known_propensity)
    if arch == ATE:
        return make_ate_model(train)
    if arch == ORACLE:
        if truth is None:
            raise DataError("the oracle needs ground truth")
        return make_oracle_model(truth)
    raise ValueError(f"unknown architecture {arch!r}")


# -- tuning ------------------------------------------------------------------------

def _inner_folds(data: Dataset, k: int, seed: int):
    return make_folds(data, min(k, data.n), seed)


def _tune(X, y, folds, grid, objective, **kw) -> GbtParams:
    return grid_search(X, y, kw.pop("t", None), grid, folds, objective, **kw).best


def tune_components(arch: str, train: Dataset, grid: HyperGrid, inner_k: int, seed: int,
                    e: float = 0.5, known_propensity: Optional[float] = None,
                    backend=None, cache: Optional[dict] = None) -> dict:
    """Inner cross-validated grid search for each GBT component of ``arch``.

    Classifiers minimize log loss, value and per-arm outcome regressions
    minimize (IPW-weighted) squared error, and the S-learner and DR
    regressions minimize the transformed outcome loss. ``cache`` shares
    results between architectures with identical components.
    """
    cache = {} if cache is None else cache
    out = {}

    def cached(key, fn):
        if key not in cache:
            cache[key] = fn()
        return cache[key]

    folds = _inner_folds(train, inner_k, seed)
    X, t, c, v, y = train.X, train.t, train.c, train.v, train.y

    def arm_pair(arm):
        rows = np.flatnonzero(t == arm)
        sub = train.subset(rows)
        sub_folds = _inner_folds(sub, inner_k, seed)
        p_par = cached(("p", arm), lambda: _tune(sub.X, sub.c, sub_folds, grid, "logloss",
                                                 backend=backend))
        conv = sub.c == 1

        def tune_v():
            pm = fit_gbt(sub.X, sub.c, task=BINARY, params=p_par, backend=backend)
            w = ipw_weights(predict(pm, sub.X[conv], backend=backend))
            vsub = sub.subset(np.flatnonzero(conv))
            vf = _inner_folds(vsub, inner_k, seed)
            return _tune(vsub.X, vsub.v, vf, grid, "mse", weights=w, backend=backend)

        return p_par, cached(("v", arm), tune_v)

    if arch == HURDLE_SINGLE:
        Xt = _with_t(X, t)
        out["f_c"] = cached("f_c", lambda: _tune(Xt, c, folds, grid, "logloss", backend=backend))

        def tune_fv():
            f_c = fit_gbt(Xt, c, task=BINARY, params=out["f_c"], backend=backend)
            conv = c == 1
            w = ipw_weights(predict(f_c, Xt[conv], backend=backend))
            vsub = train.subset(np.flatnonzero(conv))
            vf = _inner_folds(vsub, inner_k, seed)
            return _tune(Xt[conv], v[conv], vf, grid, "mse", weights=w, backend=backend)

        out["f_v"] = cached("f_v", tune_fv)
    elif arch == HURDLE_TWO:
        out["p0"], out["v0"] = arm_pair(0)
        out["p1"], out["v1"] = arm_pair(1)
    else:
        out["conversion"] = arm_pair_conversion(train, grid, inner_k, seed, backend, cached)
        if arch == ONESTAGE_SINGLE:
            Xt = _with_t(X, t)
            X1, X0 = _with_t(X, 1.0), _with_t(X, 0.0)

            def s_learner(tr, te, params, stages):
                m = fit_gbt(Xt[tr], y[tr], params=params, backend=backend)
                return (predict_staged(m, X1[te], stages, backend)
                        - predict_staged(m, X0[te], stages, backend))

            out["f_y"] = cached("f_y", lambda: _tune(X, y, folds, grid, "tol", t=t, e=e,
                                                     learner=s_learner, backend=backend))
        elif arch == ONESTAGE_TWO:
            for arm, name in ((1, "f_y1"), (0, "f_y0")):
                rows = np.flatnonzero(t == arm)
                sub = train.subset(rows)
                sf = _inner_folds(sub, inner_k, seed)
                out[name] = cached(name, lambda sub=sub, sf=sf: _tune(
                    sub.X, sub.y, sf, grid, "mse", backend=backend))
        elif arch == ONESTAGE_DR:
            def tune_dr():
                dr = build_dr_transform(train, known_propensity)
                return _tune(X, y, folds, grid, "tol", t=t, e=e, target=dr.y_dr, backend=backend)

            out["f_dr"] = cached("f_dr", tune_dr)
        else:
            raise ValueError(f"architecture {arch!r} has no tunable components")
    return out


def arm_pair_conversion(train, grid, inner_k, seed, backend, cached):
    """Tuned params of the treated-arm classifier (shared with the two-model hurdle)."""
    rows = np.flatnonzero(train.t == 1)
    sub = train.subset(rows)
    sf = _inner_folds(sub, inner_k, seed)
    return cached(("p", 1), lambda: _tune(sub.X, sub.c, sf, grid, "logloss", backend=backend))


# -- serialisation -----------------------------------------------------------------

MODEL_FORMAT_VERSION = 1


def _dump_linear(m: LinearModel) -> str:
    coef = " ".join(repr(float(x)) for x in m.coef)
    return (f"linear v1 link={m.link} intercept={m.intercept!r} n_features={m.coef.size}\n"
            f"coef {coef}\nend\n")


def _read_linear(lines) -> LinearModel:
    head = next(lines).split()
    if head[:2] != ["linear", "v1"]:
        raise ValueError("not a linear model block")
    meta = dict(kv.split("=", 1) for kv in head[2:])
    coef_line = next(lines).split()
    if coef_line[0] != "coef":
        raise ValueError("linear block missing coef line")
    coef = np.asarray([float(x) for x in coef_line[1:]])
    if coef.size != int(meta["n_features"]):
        raise ValueError("coefficient count mismatch")
    if next(lines).strip() != "end":
        raise ValueError("linear block not terminated by 'end'")
    return LinearModel(coef, float(meta["intercept"]), meta["link"])


def dumps_model(model: TargetingModel) -> str:
    """Text form: a header line, then one tagged block per component."""
    if model.architecture == ORACLE:
        raise ValueError("the oracle model reads ground truth and cannot be serialised")
    parts = [f"targeting v{MODEL_FORMAT_VERSION} architecture={model.architecture} "
             f"n_components={model.n_models}\n"]
    for name in sorted(model.components):
        comp = model.components[name]
        if isinstance(comp, GbtModel):
            parts.append(f"component {name} gbt\n" + gbt_mod.dumps(comp))
        elif isinstance(comp, LinearModel):
            parts.append(f"component {name} linear\n" + _dump_linear(comp))
        else:
            parts.append(f"component {name} constant\nconstant {comp.value!r}\n")
    return "".join(parts)


def loads_model(text: str) -> TargetingModel:
    lines = iter(text.splitlines())
    head = next(lines).split()
    if head[:2] != ["targeting", f"v{MODEL_FORMAT_VERSION}"]:
        raise ValueError("not a targeting model file")
    meta = dict(kv.split("=", 1) for kv in head[2:])
    comps = {}
    for _ in range(int(meta["n_components"])):
        _, name, kind = next(lines).split()
        if kind == "gbt":
            comps[name] = gbt_mod.read_lines(lines)
        elif kind == "linear":
            comps[name] = _read_linear(lines)
        elif kind == "constant":
            comps[name] = Constant(float(next(lines).split()[1]))
        else:
            raise ValueError(f"unknown component kind {kind!r}")
    return TargetingModel(meta["architecture"], comps)


def save_model(model: TargetingModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_model(model))


def load_model(path) -> TargetingModel:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())


PREDS_COLUMNS = ("id", "tau_hat", "p1_hat", "v1_hat", "architecture")


def write_preds(path, ids, preds: Predictions, architecture: str, mode: str = "w") -> None:
    """Append-capable writer for ``preds.csv``; v1_hat is blank without a value scorer."""
    with open(path, mode, newline="", encoding="utf-8") as fh:
        if mode == "w":
            fh.write(",".join(PREDS_COLUMNS) + "\n")
        v1 = preds.v1_hat
        for i in range(len(ids)):
            vv = "" if v1 is None else f"{v1[i]:.6f}"
            fh.write(f"{int(ids[i])},{preds.tau_hat[i]:.6f},{preds.p1_hat[i]:.6f},{vv},"
                     f"{architecture}\n")
