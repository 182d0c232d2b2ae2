"""Cross-validated simulation experiments in three stages.

Stage A holds the CATE at the ATE or the true ITE and varies the model that
prices the response-dependent cost. Stage B compares CATE architectures
under one population-average cost. Stage C pairs every architecture with
its own cost estimates and contrasts the analytical rule with an empirical
threshold chosen on the training folds.
"""

from __future__ import annotations

import json
import os
import platform
from dataclasses import asdict, dataclass, field

import numpy as np

from . import causal
from .causal import ATE, FITTED_ARCHITECTURES, HURDLE_SINGLE, HURDLE_TWO, ORACLE, Predictions
from .config import ExperimentConfig
from .data import Dataset, make_folds
from .errors import DataError
from .evaluation import (ReportRow, assemble_report, brier, mean_rows, rmse_vs_oracle, roc_auc,
                         tol, true_profit, write_report_csv)
from .learners import _backend
from .policy import analytical_policy, apply_threshold, empirical_policy_threshold
from .simulation import Simulation, simulate

BASELINE = "baseline"
ANALYTICAL = "analytical"
EMPIRICAL = "empirical"
NO_MODEL = "none"
COST_MODELS = ("conversion-rate", HURDLE_SINGLE, "separate")


class ExperimentError(RuntimeError):
    """A stage failed; ``stage`` and ``seed`` say where."""

    def __init__(self, stage, seed, cause):
        super().__init__(f"stage {stage} failed for seed {seed}: {cause}")
        self.stage, self.seed, self.cause = stage, seed, cause


@dataclass
class OutOfFold:
    """Held-out predictions assembled over the outer folds of one seed."""

    n: int
    fold: np.ndarray
    tau: dict = field(default_factory=dict)
    p1: dict = field(default_factory=dict)
    v1: dict = field(default_factory=dict)
    empirical: dict = field(default_factory=dict)
    rate: np.ndarray = None
    value: np.ndarray = None

    def put(self, store, key, rows, values):
        if values is None:
            store.setdefault(key, None)
            return
        arr = store.get(key)
        if arr is None:
            arr = store[key] = np.full(self.n, np.nan)
        arr[rows] = values


@dataclass
class SeedResult:
    seed: int
    reports: dict          # stage -> list of ReportRow
    oof: OutOfFold
    params: dict


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    seeds: dict            # seed -> SeedResult
    summary: dict          # stage -> mean-over-seeds rows


def _needed_archs(cfg: ExperimentConfig) -> tuple:
    fitted = [a for a in FITTED_ARCHITECTURES if a in cfg.roster]
    if "a" in cfg.stages and HURDLE_SINGLE not in fitted:
        fitted.insert(0, HURDLE_SINGLE)
    return tuple(fitted)


def _needs_separate(cfg, archs) -> bool:
    return "a" in cfg.stages or any(a not in causal.HURDLES for a in archs)


def tune_all(cfg: ExperimentConfig, train: Dataset, seed: int, backend=None) -> dict:
    """Hyperparameters for every GBT component used by the run, keyed by architecture."""
    archs = _needed_archs(cfg)
    cache = {}
    out = {}
    kp = cfg.propensity if cfg.known_propensity else None
    for a in archs:
        out[a] = causal.tune_components(a, train, cfg.grid, cfg.inner_folds, seed,
                                        e=cfg.propensity, known_propensity=kp,
                                        backend=backend, cache=cache)
    if _needs_separate(cfg, archs) and not any("conversion" in p for p in out.values()):
        out["separate"] = {"conversion": causal.arm_pair_conversion(
            train, cfg.grid, cfg.inner_folds, seed, backend,
            lambda key, fn: cache[key] if key in cache else cache.setdefault(key, fn()))}
    return out


def _separate_params(params):
    for p in params.values():
        if "conversion" in p:
            return p["conversion"]
    return params.get(HURDLE_TWO, {}).get("p1")


def _fit_fold(cfg, train, test, params, oof, rows, truth, backend):
    """Fit the roster on one training fold and fill the held-out slots."""
    archs = _needed_archs(cfg)
    kp = cfg.propensity if cfg.known_propensity else None
    sep_params = _separate_params(params)
    separate = None
    if _needs_separate(cfg, archs):
        separate = causal.fit_conversion_separate(train, {"conversion": sep_params}, backend)
    models = {}
    for a in archs:
        reuse = separate
        if a == HURDLE_TWO and params[a].get("p1") != sep_params:
            reuse = None
        models[a] = causal.fit_architecture(a, train, params[a], backend,
                                            known_propensity=kp, conversion=reuse)
    models[ATE] = causal.make_ate_model(train)
    models[ORACLE] = causal.make_oracle_model(truth)

    ate_pred = models[ATE].predict(test)
    oof.rate[rows] = ate_pred.p1_hat
    oof.value[rows] = ate_pred.v1_hat
    if separate is not None:
        oof.put(oof.p1, "separate", rows, causal.predict(separate, test.X))

    need_emp = "c" in cfg.stages
    cost = cfg.cost
    for a, m in models.items():
        pred = m.predict(test)
        oof.put(oof.tau, a, rows, pred.tau_hat)
        oof.put(oof.p1, a, rows, pred.p1_hat)
        oof.put(oof.v1, a, rows, pred.v1_hat)
        if need_emp and (a in cfg.roster):
            scores = m.predict(train).tau_hat
            sweep = empirical_policy_threshold(scores, train.t, train.c, train.v, cost,
                                               cfg.propensity)
            oof.put(oof.empirical, a, rows, apply_threshold(pred.tau_hat, sweep.threshold))


def _check_discipline(folds, data: Dataset):
    """Every id is held out exactly once and never shares a fold with its training set."""
    seen = np.zeros(data.n, dtype=np.int64)
    for j in range(folds.k):
        train, test = folds.split(j)
        if np.intersect1d(data.ids[train], data.ids[test]).size:
            raise DataError("training and held-out ids overlap")
        seen[test] += 1
    if not np.all(seen == 1):
        raise DataError("out-of-fold predictions do not cover each id exactly once")


def run_seed(cfg: ExperimentConfig, seed: int, shared_params=None, backend=None,
             sim: Simulation = None) -> SeedResult:
    stage = "simulate"
    try:
        if sim is None:
            sim = simulate(cfg.n, cfg.p, cfg.sim_config(seed))
        data, truth = sim.data, sim.truth
        stage = "fit"
        folds = make_folds(data, cfg.outer_folds, seed)
        _check_discipline(folds, data)
        oof = OutOfFold(data.n, folds.fold, rate=np.full(data.n, np.nan),
                        value=np.full(data.n, np.nan))
        params = shared_params
        for j in range(folds.k):
            train_rows, test_rows = folds.split(j)
            train, test = data.subset(train_rows), data.subset(test_rows)
            if cfg.tuning == "fold" or params is None:
                params = tune_all(cfg, train, seed, backend)
            _fit_fold(cfg, train, test, params, oof, test_rows, truth, backend)
        reports = {}
        for stage in cfg.stages:
            reports[stage] = _STAGE_BUILDERS[stage](cfg, data, truth, oof, seed)
    except ExperimentError:
        raise
    except Exception as exc:
        raise ExperimentError(stage, seed, exc) from exc
    return SeedResult(seed, reports, oof, params)


# -- stage reports -----------------------------------------------------------------

def _profit(cfg, target, truth, seed):
    return true_profit(np.asarray(target, dtype=bool), truth, cfg.cost, cfg.profit_mode, seed)


def _cate_metrics(cfg, data, truth, tau):
    return dict(rmse=rmse_vs_oracle(tau, truth), tol=tol(tau, data.y, data.t, cfg.propensity))


def _conversion_metrics(data, p1):
    treated = data.t == 1
    return dict(brier=brier(p1[treated], data.c[treated]), auc=roc_auc(p1[treated], data.c[treated]))


def _baseline_row(cfg, truth, seed):
    profit, ft = _profit(cfg, np.zeros(truth.n, dtype=bool), truth, seed)
    return ReportRow(BASELINE, NO_MODEL, profit, ft)


def _cost_model(oof, name, truth):
    if name == "conversion-rate":
        return oof.rate, oof.value
    if name == HURDLE_SINGLE:
        return oof.p1[HURDLE_SINGLE], oof.v1[HURDLE_SINGLE]
    return oof.p1["separate"], oof.value


def stage_a(cfg, data, truth, oof, seed):
    """ATE or true ITE as CATE, priced by each conversion model."""
    rows = [_baseline_row(cfg, truth, seed)]
    cates = {"ate": oof.tau[ATE], "oracle": oof.tau[ORACLE]}
    costs = [(name,) + _cost_model(oof, name, truth) for name in COST_MODELS]
    costs.append(("true", truth.p1, truth.v1))
    for cname, tau in cates.items():
        for mname, p1, v1 in costs:
            if cname == "ate" and mname == "true":
                continue
            d = analytical_policy(tau, p1, cfg.cost, v1)
            profit, ft = _profit(cfg, d.target, truth, seed)
            rows.append(ReportRow(ANALYTICAL, f"{cname}/{mname}", profit, ft,
                                  **_cate_metrics(cfg, data, truth, tau),
                                  **_conversion_metrics(data, p1)))
    return assemble_report(rows)


def stage_b(cfg, data, truth, oof, seed):
    """Every architecture's CATE under the fold's population-average cost."""
    rows = [_baseline_row(cfg, truth, seed)]
    for a in cfg.roster:
        tau = oof.tau[a]
        d = analytical_policy(tau, oof.rate, cfg.cost, oof.value)
        profit, ft = _profit(cfg, d.target, truth, seed)
        rows.append(ReportRow(ANALYTICAL, a, profit, ft, **_cate_metrics(cfg, data, truth, tau),
                              **_conversion_metrics(data, oof.p1[a])))
    return assemble_report(rows)


def stage_c(cfg, data, truth, oof, seed):
    """Analytical rule with model-based cost against the empirical threshold."""
    rows = [_baseline_row(cfg, truth, seed)]
    for a in cfg.roster:
        tau, p1 = oof.tau[a], oof.p1[a]
        metrics = dict(**_cate_metrics(cfg, data, truth, tau), **_conversion_metrics(data, p1))
        d = analytical_policy(tau, p1, cfg.cost, oof.v1.get(a))
        profit, ft = _profit(cfg, d.target, truth, seed)
        rows.append(ReportRow(ANALYTICAL, a, profit, ft, **metrics))
        profit, ft = _profit(cfg, oof.empirical[a] > 0, truth, seed)
        rows.append(ReportRow(EMPIRICAL, a, profit, ft, **metrics))
    return assemble_report(rows)


_STAGE_BUILDERS = {"a": stage_a, "b": stage_b, "c": stage_c}


# -- output ---------------------------------------------------------------------------

def _stage_preds(stage, cfg, oof):
    if stage == "a":
        out = []
        for cname, tau_key in (("ate", ATE), ("oracle", ORACLE)):
            for mname in COST_MODELS:
                p1, v1 = _cost_model(oof, mname, None)
                out.append((f"{cname}/{mname}", oof.tau[tau_key], p1, v1))
        return out
    if stage == "b":
        return [(a, oof.tau[a], oof.rate, oof.value) for a in cfg.roster]
    return [(a, oof.tau[a], oof.p1[a], oof.v1.get(a)) for a in cfg.roster]


def manifest(cfg: ExperimentConfig, seeds, stage=None, params=None) -> dict:
    from . import __version__

    out = {
        "config_sha256": cfg.digest,
        "config": cfg.to_ini(),
        "seeds": list(seeds),
        "cost": cfg.cost.describe(),
        "versions": {
            "hurdle_uplift": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        "rng": {"bit_generator": type(np.random.default_rng(0).bit_generator).__name__,
                "numpy": np.__version__},
        "backend": _backend.BACKEND,
    }
    if stage is not None:
        out["stage"] = stage
    if params is not None:
        out["tuned_params"] = {
            arch: {comp: asdict(p) for comp, p in sorted(comps.items())}
            for arch, comps in sorted(params.items())
        }
    return out


def _write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serialisable: {type(o)}")


def write_seed_outputs(cfg, res: SeedResult, data: Dataset, out_dir):
    base = os.path.join(out_dir, f"seed_{res.seed}")
    for stage, rows in res.reports.items():
        d = os.path.join(base, f"stage_{stage}")
        os.makedirs(d, exist_ok=True)
        write_report_csv(rows, os.path.join(d, "report.csv"))
        if cfg.write_preds:
            mode = "w"
            for label, tau, p1, v1 in _stage_preds(stage, cfg, res.oof):
                causal.write_preds(os.path.join(d, "preds.csv"), data.ids,
                                   Predictions(tau, p1, v1), label, mode)
                mode = "a"
        _write_json(manifest(cfg, [res.seed], stage, res.params), os.path.join(d, "manifest.json"))


def run_experiment(cfg: ExperimentConfig, out_dir=None, backend=None, log=None) -> ExperimentResult:
    """Run every seed, optionally writing per-seed and mean-over-seeds outputs."""
    shared = None
    results = {}
    for seed in cfg.seeds:
        try:
            sim = simulate(cfg.n, cfg.p, cfg.sim_config(seed))
        except Exception as exc:
            raise ExperimentError("simulate", seed, exc) from exc
        if cfg.tuning == "run" and shared is None:
            try:
                folds = make_folds(sim.data, cfg.outer_folds, seed)
                shared = tune_all(cfg, sim.data.subset(folds.split(0)[0]), seed, backend)
            except Exception as exc:
                raise ExperimentError("tune", seed, exc) from exc
        res = run_seed(cfg, seed, shared, backend, sim)
        results[seed] = res
        if out_dir is not None:
            write_seed_outputs(cfg, res, sim.data, out_dir)
        if log is not None:
            log(f"seed {seed} done")
    summary = {s: mean_rows([r.reports[s] for r in results.values()]) for s in cfg.stages}
    if out_dir is not None:
        for stage, rows in summary.items():
            d = os.path.join(out_dir, "summary", f"stage_{stage}")
            os.makedirs(d, exist_ok=True)
            write_report_csv(rows, os.path.join(d, "report.csv"))
        _write_json(manifest(cfg, cfg.seeds), os.path.join(out_dir, "manifest.json"))
    return ExperimentResult(cfg, results, summary)
