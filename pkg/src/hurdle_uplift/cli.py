"""Command line entry point: simulate, experiment, fit, decide, evaluate."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import causal
from .config import ExperimentConfig, load_config
from .data import load_csv, write_csv
from .errors import ConfigError, DataError
from .evaluation import ReportRow, render_table, rmse_vs_oracle, true_profit
from .experiment import ExperimentError, manifest, run_experiment
from .policy import FIXED, PERCENTAGE, CostSpec, IncompatibleCostError, analytical_policy
from .simulation import load_truth, simulate, write_truth

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    over = {}
    if args.seed is not None:
        over["seeds"] = (args.seed,)
    if args.kappa is not None:
        over["kappa"] = args.kappa
    if args.eta is not None:
        over["cost_kind"], over["eta"] = PERCENTAGE, args.eta
    elif args.delta is not None:
        over["cost_kind"], over["delta"] = FIXED, args.delta
    if getattr(args, "arch", None) and args.command == "experiment":
        over["roster"] = tuple(a.strip() for a in args.arch.split(","))
    return cfg.with_overrides(**over)


def _cost(args) -> CostSpec:
    # built directly: single-model commands must not validate the experiment roster
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    kind, delta, eta = cfg.cost_kind, cfg.delta, cfg.eta
    if args.eta is not None:
        kind, eta = PERCENTAGE, args.eta
    elif args.delta is not None:
        kind, delta = FIXED, args.delta
    kappa = cfg.kappa if args.kappa is None else args.kappa
    return CostSpec(kappa=kappa, kind=kind, delta=delta, eta=eta)


def _out_dir(args, default):
    out = args.out or default
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    return out


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, "runs/simulate")
    for seed in cfg.seeds:
        sim = simulate(cfg.n, cfg.p, cfg.sim_config(seed))
        d = os.path.join(out, f"seed_{seed}") if len(cfg.seeds) > 1 else out
        os.makedirs(d, exist_ok=True)
        write_csv(sim.data, os.path.join(d, "customers.csv"))
        write_truth(sim.truth, os.path.join(d, "truth.csv"))
        with open(os.path.join(d, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest(cfg, [seed]), fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"seed {seed}: {sim.data.n} customers written to {d}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, "runs/experiment")
    res = run_experiment(cfg, out, log=lambda m: print(m, file=sys.stderr))
    for stage, rows in res.summary.items():
        print(f"stage {stage} (mean over {len(cfg.seeds)} seeds)")
        print(render_table(rows))
        print()
    return EXIT_OK


def cmd_fit(args) -> int:
    if not args.arch:
        raise ConfigError("fit needs --arch")
    if args.arch == causal.ORACLE:
        raise ConfigError("the oracle is not fitted; pass --truth to decide instead")
    if not args.data:
        raise ConfigError("fit needs --data customers.csv")
    data = load_csv(args.data)
    seed = args.seed if args.seed is not None else 0
    params = None
    if args.tune:
        cfg = _config(args)
        params = causal.tune_components(args.arch, data, cfg.grid, cfg.inner_folds, seed,
                                        e=cfg.propensity) if args.arch != causal.ATE else None
    model = causal.fit_architecture(args.arch, data, params)
    out = args.out or "model.txt"
    causal.save_model(model, out)
    print(f"{args.arch} with {model.n_models} components written to {out}")
    return EXIT_OK


def cmd_decide(args) -> int:
    if not args.data:
        raise ConfigError("decide needs --data customers.csv")
    if not (args.truth or args.model):
        raise ConfigError("decide needs --model or --truth")
    cost = _cost(args)
    data = load_csv(args.data)
    if args.truth:
        model = causal.make_oracle_model(load_truth(args.truth))
    else:
        try:
            model = causal.load_model(args.model)
        except (OSError, ValueError, StopIteration, KeyError) as exc:
            raise DataError(f"cannot read model {args.model}: {exc}") from exc
    pred = model.predict(data)
    if cost.needs_value and not model.has_value_scorer:
        raise IncompatibleCostError(
            f"percentage cost needs a value scorer; {model.architecture} has none")
    d = analytical_policy(pred.tau_hat, pred.p1_hat, cost, pred.v1_hat, data.ids)
    out = args.out or "decisions.csv"
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("id,target,expected_lhs,expected_cost\n")
        for i in range(data.n):
            fh.write(f"{int(data.ids[i])},{int(d.target[i])},{d.expected_lhs[i]:.6f},"
                     f"{d.expected_cost[i]:.6f}\n")
    print(f"targeted {int(np.sum(d.target))} of {data.n}; decisions written to {out}")
    return EXIT_OK


def _read_decisions(path):
    ids, target = [], []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[:2] != ["id", "target"]:
            raise DataError(f"{path}: expected header starting with id,target")
        for lineno, line in enumerate(fh, start=2):
            parts = line.strip().split(",")
            try:
                ids.append(int(parts[0]))
                target.append(int(parts[1]))
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}:{lineno}: malformed row") from exc
    return np.asarray(ids, dtype=np.int64), np.asarray(target, dtype=bool)


def _read_preds(path):
    ids, tau = [], []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != causal.PREDS_COLUMNS:
            raise DataError(f"{path}: unexpected header")
        for lineno, line in enumerate(fh, start=2):
            parts = line.strip().split(",")
            try:
                ids.append(int(parts[0]))
                tau.append(float(parts[1]))
            except (ValueError, IndexError) as exc:
                raise DataError(f"{path}:{lineno}: malformed row") from exc
    return np.asarray(ids, dtype=np.int64), np.asarray(tau)


def cmd_evaluate(args) -> int:
    if not args.truth or not args.decisions:
        raise ConfigError("evaluate needs --decisions and --truth")
    truth = load_truth(args.truth)
    ids, target = _read_decisions(args.decisions)
    tr = truth.aligned(ids)
    profit, ft = true_profit(target, tr, _cost(args))
    rmse = float("nan")
    if args.preds:
        pids, tau = _read_preds(args.preds)
        rmse = rmse_vs_oracle(tau, truth.aligned(pids))
    print(render_table([ReportRow("analytical", args.arch or "model", profit, ft, rmse)]))
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "experiment": cmd_experiment,
    "fit": cmd_fit,
    "decide": cmd_decide,
    "evaluate": cmd_evaluate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (INI, [experiment] section)")
    common.add_argument("--seed", type=int, help="single seed overriding the config")
    common.add_argument("--out", help="output directory or file")
    common.add_argument("--kappa", type=float, help="targeting cost per treated customer")
    cost = common.add_mutually_exclusive_group()
    cost.add_argument("--delta", type=float, help="fixed cost paid on conversion")
    cost.add_argument("--eta", type=float, help="percentage discount paid on conversion")
    common.add_argument("--arch", help="architecture tag (comma list for experiment)")

    parser = argparse.ArgumentParser(prog="hurdle-uplift", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write customers.csv and truth.csv")
    sub.add_parser("experiment", parents=[common], help="run the three-stage protocol")
    p = sub.add_parser("fit", parents=[common], help="fit one architecture on customers.csv")
    p.add_argument("--data", help="customers.csv with t, c and v")
    p.add_argument("--tune", action="store_true", help="grid search before fitting")
    p = sub.add_parser("decide", parents=[common], help="score customers and apply the rule")
    p.add_argument("--data", help="customers.csv")
    p.add_argument("--model", help="serialised model file")
    p.add_argument("--truth", help="truth.csv; decide with the oracle")
    p = sub.add_parser("evaluate", parents=[common], help="true profit of a decisions file")
    p.add_argument("--decisions", help="decisions.csv")
    p.add_argument("--truth", help="truth.csv")
    p.add_argument("--preds", help="optional preds.csv for RMSE against the true ITE")
    return parser


def _is_data_error(exc) -> bool:
    while exc is not None:
        if isinstance(exc, DataError):
            return True
        if isinstance(exc, ConfigError):
            return False
        exc = exc.__cause__
    return False


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA if _is_data_error(exc.cause) else EXIT_CONFIG if isinstance(
            exc.cause, ConfigError) else 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
