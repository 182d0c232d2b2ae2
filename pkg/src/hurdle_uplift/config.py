"""Experiment configuration: a flat ``[experiment]`` INI section with full defaulting.

Keys (all optional)::

    n, p                       customers and covariates per simulated dataset
    seeds                      comma-separated simulation seeds
    kappa, delta, eta          targeting cost, fixed and percentage response cost
    cost_kind                  none | fixed | percentage
    roster                     comma-separated architecture tags
    outer_folds, inner_folds   cross-validation protocol
    tuning                     fold | seed | run  (scope of one hyperparameter search)
    grid_n_trees, grid_max_depth, grid_learning_rate, grid_min_leaf_weight
    known_propensity           true to use the design propensity in the DR transform
    profit_mode                expected | realized
    stages                     comma-separated subset of a, b, c
    write_preds                true to emit per-customer predictions
    ate_conversion, ate_value, tau_c_min, tau_c_max, tau_v_min, tau_v_max,
    propensity, nuisance_pool  simulation settings
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields, replace

from .causal import ARCHITECTURES, VALUE_ARCHITECTURES
from .errors import ConfigError
from .learners.tuning import HyperGrid
from .policy import FIXED, NONE, PERCENTAGE, CostSpec
from .simulation import SimConfig

SECTION = "experiment"
TUNING_SCOPES = ("fold", "seed", "run")
STAGES = ("a", "b", "c")


def _floats(s):
    return tuple(float(x) for x in _items(s))


def _ints(s):
    return tuple(int(x) for x in _items(s))


def _items(s):
    return [x.strip() for x in str(s).split(",") if x.strip()]


def _bool(s):
    v = str(s).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    n: int = 20000
    p: int = 30
    seeds: tuple = (1, 2, 3)
    kappa: float = 0.0
    cost_kind: str = FIXED
    delta: float = 10.0
    eta: float = 0.0
    roster: tuple = ARCHITECTURES
    outer_folds: int = 5
    inner_folds: int = 10
    tuning: str = "fold"
    grid_n_trees: tuple = (50, 100, 200)
    grid_max_depth: tuple = (2, 3, 4)
    grid_learning_rate: tuple = (0.05, 0.1)
    grid_min_leaf_weight: tuple = (10.0,)
    known_propensity: bool = False
    profit_mode: str = "expected"
    stages: tuple = STAGES
    write_preds: bool = True
    ate_conversion: float = 0.05
    ate_value: float = 1.0
    tau_c_min: float = -0.10
    tau_c_max: float = 0.15
    tau_v_min: float = -10.0
    tau_v_max: float = 10.0
    propensity: float = 0.5
    nuisance_pool: int = 20000

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seed list must not be empty")
        if not self.roster:
            raise ConfigError("architecture roster must not be empty")
        bad = [a for a in self.roster if a not in ARCHITECTURES]
        if bad:
            raise ConfigError(f"unknown architectures {bad}; choose from {list(ARCHITECTURES)}")
        if len(set(self.roster)) != len(self.roster) or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("roster and seeds must not repeat")
        if self.n < 10 or self.p < 12:
            raise ConfigError("need n >= 10 and p >= 12")
        if self.outer_folds < 2 or self.inner_folds < 2:
            raise ConfigError("fold counts must be at least 2")
        if self.tuning not in TUNING_SCOPES:
            raise ConfigError(f"tuning must be one of {TUNING_SCOPES}")
        if self.profit_mode not in ("expected", "realized"):
            raise ConfigError("profit_mode must be expected or realized")
        if not self.stages or any(s not in STAGES for s in self.stages):
            raise ConfigError(f"stages must be a non-empty subset of {STAGES}")
        if not 0.0 < self.propensity < 1.0:
            raise ConfigError("propensity must lie in (0, 1)")
        if self.cost.needs_value:
            lacking = [a for a in self.roster if a not in VALUE_ARCHITECTURES]
            if lacking:
                raise ConfigError(f"percentage cost needs a value scorer; {lacking} have none")
        try:
            self.grid
            self.sim_config(0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def cost(self) -> CostSpec:
        return CostSpec(kappa=self.kappa, kind=self.cost_kind, delta=self.delta, eta=self.eta)

    @property
    def grid(self) -> HyperGrid:
        return HyperGrid(self.grid_n_trees, self.grid_max_depth, self.grid_learning_rate,
                         self.grid_min_leaf_weight)

    def sim_config(self, seed: int) -> SimConfig:
        return SimConfig(
            seed=seed, ate_conversion=self.ate_conversion, ate_value=self.ate_value,
            tau_c_range=(self.tau_c_min, self.tau_c_max),
            tau_v_range=(self.tau_v_min, self.tau_v_max),
            propensity=self.propensity, nuisance_pool=self.nuisance_pool,
        )

    def to_ini(self) -> str:
        """Canonical text form; parsing it gives back an equal config."""
        lines = [f"[{SECTION}]"]
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, tuple):
                val = ", ".join(str(x) for x in val)
            elif isinstance(val, bool):
                val = "true" if val else "false"
            lines.append(f"{f.name} = {val}")
        return "\n".join(lines) + "\n"

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.to_ini().encode("utf-8")).hexdigest()

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        try:
            return replace(self, **kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


_PARSERS = {
    "n": int, "p": int, "seeds": _ints, "kappa": float, "cost_kind": str, "delta": float,
    "eta": float, "roster": lambda s: tuple(_items(s)), "outer_folds": int, "inner_folds": int,
    "tuning": str, "grid_n_trees": _ints, "grid_max_depth": _ints,
    "grid_learning_rate": _floats, "grid_min_leaf_weight": _floats,
    "known_propensity": _bool, "profit_mode": str, "stages": lambda s: tuple(_items(s.lower())),
    "write_preds": _bool, "ate_conversion": float, "ate_value": float, "tau_c_min": float,
    "tau_c_max": float, "tau_v_min": float, "tau_v_max": float, "propensity": float,
    "nuisance_pool": int,
}


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    extra = [s for s in cp.sections() if s != SECTION]
    if extra:
        raise ConfigError(f"unknown config sections {extra}")
    kw = {}
    if cp.has_section(SECTION):
        for key, raw in cp.items(SECTION):
            if key not in _PARSERS:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                kw[key] = _PARSERS[key](raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    if kw.get("cost_kind", FIXED) not in (NONE, FIXED, PERCENTAGE):
        raise ConfigError(f"unknown cost_kind {kw['cost_kind']!r}")
    return ExperimentConfig(**kw)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
