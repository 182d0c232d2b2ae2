"""Targeting decisions under targeting-dependent and response-dependent costs.

A customer is worth targeting when the expected incremental margin covers
the expected cost of the offer. Response-dependent costs are paid only on
conversion, so customers likely to buy anyway are expensive to treat.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError

NONE = "none"
FIXED = "fixed"
PERCENTAGE = "percentage"


class IncompatibleCostError(ConfigError):
    """Percentage cost requested for a model without a value scorer."""


@dataclass(frozen=True)
class CostSpec:
    """Targeting cost ``kappa`` plus a response cost (none, fixed ``delta`` or percentage ``eta``)."""

    kappa: float = 0.0
    kind: str = NONE
    delta: float = 0.0
    eta: float = 0.0

    def __post_init__(self):
        if self.kind not in (NONE, FIXED, PERCENTAGE):
            raise ConfigError(f"unknown response cost kind {self.kind!r}")
        if not self.kappa >= 0:
            raise ConfigError("kappa must be non-negative")
        if self.kind == FIXED and not self.delta >= 0:
            raise ConfigError("delta must be non-negative")
        if self.kind == PERCENTAGE and not 0 <= self.eta < 1:
            raise ConfigError("eta must lie in [0, 1)")

    @classmethod
    def fixed(cls, delta: float, kappa: float = 0.0) -> "CostSpec":
        return cls(kappa=kappa, kind=FIXED, delta=delta)

    @classmethod
    def percentage(cls, eta: float, kappa: float = 0.0) -> "CostSpec":
        return cls(kappa=kappa, kind=PERCENTAGE, eta=eta)

    @property
    def needs_value(self) -> bool:
        return self.kind == PERCENTAGE

    def delta_eff(self, v1=None):
        """Cost paid on conversion; ``eta * v1`` for a percentage discount."""
        if self.kind == FIXED:
            return self.delta
        if self.kind == PERCENTAGE:
            if v1 is None:
                raise IncompatibleCostError("percentage cost needs a value estimate")
            return self.eta * np.asarray(v1, dtype=np.float64)
        return 0.0

    def describe(self) -> dict:
        return {"kappa": self.kappa, "kind": self.kind, "delta": self.delta, "eta": self.eta}


@dataclass(frozen=True, eq=False)
class PolicyDecision:
    """Targeting flag with both sides of the rule. Arrays for vector input."""

    target: object
    expected_lhs: object
    expected_cost: object
    ids: Optional[np.ndarray] = None

    @property
    def fraction_targeted(self) -> float:
        return float(np.mean(self.target))


def _check_domain(p1, v1, p0, v0):
    for name, p in (("p1", p1), ("p0", p0)):
        if np.any(~((p >= 0) & (p <= 1))):
            raise ValueError(f"{name} must lie in [0, 1]")
    for name, v in (("v1", v1), ("v0", v0)):
        if np.any(~(v >= 0)):
            raise ValueError(f"{name} must be non-negative")


def _pack(target, lhs, cost, scalar, ids=None):
    if scalar:
        return PolicyDecision(bool(target), float(lhs), float(cost))
    return PolicyDecision(np.asarray(target, dtype=bool), lhs, cost, ids)


def _expected(p1, v1, p0, v0, cost):
    lhs = p1 * v1 - p0 * v0
    rhs = p1 * cost.delta_eff(v1) + cost.kappa
    return lhs, np.broadcast_to(rhs, np.shape(lhs)) * 1.0


def decide(p1, v1, p0, v0, cost: CostSpec) -> PolicyDecision:
    """Target iff p1 v1 - p0 v0 > p1 delta_eff + kappa (ties are not targeted)."""
    scalar = all(np.ndim(a) == 0 for a in (p1, v1, p0, v0))
    p1, v1, p0, v0 = (np.asarray(a, dtype=np.float64) for a in (p1, v1, p0, v0))
    _check_domain(p1, v1, p0, v0)
    lhs, rhs = _expected(p1, v1, p0, v0, cost)
    return _pack(lhs > rhs, lhs, rhs, scalar)


def decide_roas(p1, v1, p0, v0, cost: CostSpec, target_roas: float) -> PolicyDecision:
    """Target iff incremental margin / expected cost >= ``target_roas``.

    With zero expected cost the return is infinite when the margin is
    positive (target) and undefined otherwise (do not target).
    """
    if not target_roas >= 0:
        raise ValueError("target ROAS must be non-negative")
    scalar = all(np.ndim(a) == 0 for a in (p1, v1, p0, v0))
    p1, v1, p0, v0 = (np.asarray(a, dtype=np.float64) for a in (p1, v1, p0, v0))
    _check_domain(p1, v1, p0, v0)
    lhs, rhs = _expected(p1, v1, p0, v0, cost)
    pos = rhs > 0
    with np.errstate(over="ignore"):  # +inf for tiny costs compares correctly
        ratio = np.divide(lhs, rhs, out=np.zeros_like(lhs), where=pos)
    target = np.where(pos, ratio >= target_roas, lhs > 0)
    return _pack(target, lhs, rhs, scalar)


def analytical_policy(tau_hat, p1_hat, cost: CostSpec, v1_hat=None, ids=None) -> PolicyDecision:
    """Target iff tau_hat > p1_hat * delta_eff + kappa, using model estimates."""
    tau_hat = np.asarray(tau_hat, dtype=np.float64)
    p1_hat = np.asarray(p1_hat, dtype=np.float64)
    if cost.needs_value and v1_hat is None:
        raise IncompatibleCostError(
            "percentage cost requires a value scorer; this architecture has none"
        )
    d = cost.delta_eff(v1_hat)
    rhs = np.broadcast_to(p1_hat * d + cost.kappa, tau_hat.shape) * 1.0
    return PolicyDecision(tau_hat > rhs, tau_hat, rhs, None if ids is None else np.asarray(ids))


@dataclass(frozen=True, eq=False)
class ThresholdSweep:
    threshold: float
    profit: float
    candidates: np.ndarray  # -inf followed by the sorted unique scores
    profits: np.ndarray

    @property
    def n_policies(self) -> int:
        return int(self.candidates.size)


def ipw_policy_profit(target, t, c, v, cost: CostSpec, e=0.5) -> float:
    """IPW estimate of campaign profit for a targeting vector on randomized data."""
    target = np.asarray(target, dtype=bool)
    t = np.asarray(t)
    c = np.asarray(c, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    y = c * v
    paid = t * (c * cost.delta_eff(v if cost.needs_value else None) + cost.kappa)
    pt = np.where(t == 1, e, 1.0 - e)
    return float(np.sum(np.where(target == (t == 1), (y - paid) / pt, 0.0)))


def empirical_policy_threshold(scores, t, c, v, cost: CostSpec, e=0.5) -> ThresholdSweep:
    """Profit-maximizing score threshold on training data (target iff score > threshold).

    Every unique score and ``-inf`` (target everyone) is a candidate. Profit
    is the IPW policy value with the realized response cost (``eta * v`` for
    percentage discounts). Ties go to the higher threshold.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.size
    if n == 0:
        raise ValueError("empty training set")
    t = np.asarray(t)
    c = np.asarray(c, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    y = c * v
    paid = c * (cost.delta_eff(v) if cost.needs_value else cost.delta_eff()) + cost.kappa
    gain_t = np.where(t == 1, (y - paid) / e, 0.0)        # row counted when targeted
    gain_c = np.where(t == 0, y / (1.0 - e), 0.0)         # row counted when not targeted

    uniq, inv = np.unique(scores, return_inverse=True)
    # per unique score sums, then profit(theta_j) = targeted above + untreated at/below
    gt = np.bincount(inv, weights=gain_t, minlength=uniq.size)
    gc = np.bincount(inv, weights=gain_c, minlength=uniq.size)
    above_t = np.concatenate(([gt.sum()], gt.sum() - np.cumsum(gt)))
    below_c = np.concatenate(([0.0], np.cumsum(gc)))
    profits = above_t + below_c
    candidates = np.concatenate(([-np.inf], uniq))
    best = int(np.flatnonzero(profits == profits.max())[-1])
    return ThresholdSweep(float(candidates[best]), float(profits[best]), candidates, profits)


def apply_threshold(scores, threshold: float) -> np.ndarray:
    return np.asarray(scores, dtype=np.float64) > threshold


# -- churn campaigns -----------------------------------------------------------

@dataclass(frozen=True)
class ChurnParams:
    beta: float
    gamma: float
    lam: float = 0.0
    V: float = 0.0
    delta: float = 0.0
    kappa: float = 0.0
    N: float = 1.0
    alpha: float = 1.0
    A: float = 0.0

    def __post_init__(self):
        for name in ("beta", "gamma", "lam"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.gamma + self.lam > 1.0 + 1e-12:
            raise ValueError("gamma + lambda must not exceed 1")


def churn_profit(cp: ChurnParams) -> float:
    """Retention campaign profit allowing adverse reactions with probability ``lam``."""
    b, g, lam, V, d, k = cp.beta, cp.gamma, cp.lam, cp.V, cp.delta, cp.kappa
    inner = (
        b * g * (V - d - k)
        + (1 - b) * lam * (-V - k)
        + b * (1 - g - lam) * (-k)
        + (1 - b) * (-d - k)
    )
    return cp.N * cp.alpha * inner - cp.A


def churn_profit_classic(cp: ChurnParams) -> float:
    """Campaign profit without adverse reactions (``lam`` ignored)."""
    b, g, V, d, k = cp.beta, cp.gamma, cp.V, cp.delta, cp.kappa
    inner = b * g * (V - d - k) + b * (1 - g) * (-k) + (1 - b) * (-d - k)
    return cp.N * cp.alpha * inner - cp.A


def churn_potential_outcomes(cp: ChurnParams):
    """Retention probabilities implied by churn parameters: ``(p1, p0, p1 - p0)``.

    p1 = 1 - beta (1 - gamma) and p1 - p0 = beta gamma - (1 - beta) lam; the
    untreated probability follows from the two.
    """
    p1 = 1.0 - cp.beta * (1.0 - cp.gamma)
    uplift = cp.beta * cp.gamma - (1.0 - cp.beta) * cp.lam
    return p1, p1 - uplift, uplift


@dataclass(frozen=True)
class ChurnCheck:
    agree: bool
    churn_margin: float
    rule_target: bool
    p1: float
    p0: float
    uplift: float


def churn_rule_equivalence_check(cp: ChurnParams) -> ChurnCheck:
    """Compare the sign of the per-customer churn profit with the targeting rule.

    The rule is evaluated on the mapped retention probabilities with
    V(1) = V(0) = V, fixed cost ``delta`` and targeting cost ``kappa``.
    """
    per_customer = ChurnParams(cp.beta, cp.gamma, cp.lam, cp.V, cp.delta, cp.kappa)
    margin = churn_profit(per_customer)
    p1, p0, uplift = churn_potential_outcomes(cp)
    # same comparison as decide(); p0 may leave [0, 1] when lam > 0
    lhs = p1 * cp.V - p0 * cp.V
    rhs = p1 * cp.delta + cp.kappa
    rule = bool(lhs > rhs)
    return ChurnCheck(bool((margin > 0) == rule), float(margin), rule, p1, p0, uplift)
