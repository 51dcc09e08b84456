"""Scoring functions: the global scoring mechanism and the baseline family."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from . import kernels
from .core import (
    AttentionLedger,
    EmptyLedger,
    GlobalAttention,
    GlobalAwareError,
    Hypothesis,
    LengthMismatch,
    ScorerConfig,
)

SQRT2 = math.sqrt(2.0)


class NonPositiveZ(GlobalAwareError, ValueError):
    pass


class Unfinished(GlobalAwareError, ValueError):
    pass


class ZeroLength(GlobalAwareError, ValueError):
    pass


class WrongInputShape(GlobalAwareError, ValueError):
    pass


def _values(g) -> np.ndarray:
    return g.values if isinstance(g, GlobalAttention) else np.asarray(g, dtype=np.float64)


def attention_score(ledger: AttentionLedger, g) -> float:
    """Fraction of the ledger's attention that stays within the global budget.

    ``sum_i min(l_i, g_i) / zeta``. Equals ``1 - overshoot / zeta`` and lies
    in [0, 1].
    """
    gv = _values(g)
    if len(ledger) != gv.shape[0]:
        raise LengthMismatch(len(ledger), gv.shape[0])
    if ledger.total <= 0:
        raise EmptyLedger("attention score is undefined before any token is generated")
    within, _ = kernels.min_sum(ledger.local, gv)
    # the ratio is at most 1 exactly; clamp rounding drift between the two sums
    return min(within / ledger.total, 1.0)


def overshoot(local, g) -> float:
    """Total amount by which local attention exceeds the global budget."""
    diff = np.asarray(local, dtype=np.float64) - _values(g)
    return float(diff[diff > 0].sum())


def step_length_reward(t: int, Z: float) -> float:
    """Per-step length reward; its running mean over steps peaks near ``t = Z``."""
    if not Z > 0:
        raise NonPositiveZ(f"optimal length must be positive, got {Z!r}")
    return -abs(t - Z / SQRT2 - 0.5) / Z


def cumulative_length_reward(j: int, Z: float) -> float:
    """Mean of the step rewards over the first ``j`` steps."""
    return sum(step_length_reward(t, Z) for t in range(1, j + 1)) / j


def joint_step_update(J_prev: float, logp: float, A: float, R: float,
                      beta: float, gamma: float, a_floor: float = 1e-12) -> float:
    return J_prev + logp + beta * (math.log(max(A, a_floor)) + gamma * R)


def final_hypothesis_score(h: Hypothesis) -> float:
    """Accumulated joint score divided by generated length."""
    if not h.finished:
        raise Unfinished("hypothesis has not emitted end-of-sequence")
    if h.length < 1:
        raise ZeroLength("hypothesis has no generated tokens")
    return h.joint / h.length


def length_normalized_score(logprob: float, length: int, a: float) -> float:
    if length < 1:
        raise ZeroLength("length must be >= 1")
    return logprob / length ** a


@dataclass(frozen=True)
class PenaltyKind:
    """A coverage-style penalty.

    ``kind`` is one of gnmt, truncated, stepwise-see, stepwise-li, bottom-up.
    ``threshold`` replaces the constant 1 of the gnmt row with per-token
    budgets (typically the global attention).
    """

    kind: str
    truncation: Optional[float] = None
    threshold: Optional[np.ndarray] = None

    KINDS = ("gnmt", "truncated", "stepwise-see", "stepwise-li", "bottom-up")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if self.kind == "truncated" and (self.truncation is None or self.truncation <= 0):
            raise ValueError("truncated penalty needs a positive truncation value")
        if self.threshold is not None:
            th = np.asarray(self.threshold, dtype=np.float64)
            if th.ndim != 1 or np.any(th < 0):
                raise ValueError("threshold must be a non-negative vector")
            object.__setattr__(self, "threshold", th)

    @property
    def stepwise(self) -> bool:
        return self.kind.startswith("stepwise")


def baseline_penalty(kind: PenaltyKind, ledger: Optional[AttentionLedger] = None, *,
                     row=None, prev: Optional[AttentionLedger] = None,
                     a_floor: float = 1e-12) -> float:
    """Evaluate a baseline penalty.

    Terminal kinds (gnmt, truncated, bottom-up) read the column sums in
    ``ledger``. Step-wise kinds compare the current ``row`` with the
    attention accumulated before it (``prev``). Logs are floored at
    ``a_floor`` so uncovered tokens give a large finite penalty.
    """
    if kind.stepwise:
        if row is None or prev is None:
            raise WrongInputShape(f"{kind.kind} needs the step row and the prior ledger")
        row = np.asarray(row, dtype=np.float64)
        if row.shape[0] != len(prev):
            raise LengthMismatch(len(prev), row.shape[0])
        overlap = kernels.min_sum(row, prev.local)[0]
        return -overlap if kind.kind == "stepwise-see" else 1.0 - overlap

    if ledger is None:
        raise WrongInputShape(f"{kind.kind} needs the terminal ledger")
    sums = ledger.local
    n = sums.shape[0]
    if kind.kind == "bottom-up":
        return float(n - np.maximum(sums, 1.0).sum())
    if kind.kind == "truncated":
        capped = np.minimum(sums, kind.truncation)
    else:
        th = np.ones(n) if kind.threshold is None else kind.threshold
        if th.shape[0] != n:
            raise LengthMismatch(n, th.shape[0])
        capped = np.minimum(sums, th)
    return float(np.log(np.maximum(capped, a_floor)).sum())


def repetition_penalty(logits, generated: Iterable[int], theta: float) -> np.ndarray:
    """Discount already generated tokens: positive logits / theta, negative * theta."""
    if theta < 1:
        raise ValueError("theta must be >= 1")
    out = np.array(logits, dtype=np.float64)
    if theta == 1:
        return out
    idx = np.array(sorted(set(int(t) for t in generated)), dtype=np.int64)
    idx = idx[(idx >= 0) & (idx < out.shape[0])]
    if idx.size:
        vals = out[idx]
        out[idx] = np.where(vals > 0, vals / theta, vals * theta)
    return out


def adjusted_logprobs(logprobs: np.ndarray, generated, theta: Optional[float]) -> np.ndarray:
    """Apply the repetition overlay to log-probabilities and renormalize."""
    if theta is None or theta == 1:
        return logprobs
    logits = repetition_penalty(logprobs, generated, theta)
    finite = np.isfinite(logits)
    m = logits[finite].max()
    return logits - (m + math.log(np.exp(logits[finite] - m).sum()))


# -- per-scorer plumbing shared by beam search and the exhaustive oracle ------

@dataclass(frozen=True)
class StepTerms:
    """Score terms shared by every continuation of one parent beam."""

    addend: float
    attention: Optional[float] = None
    reward: Optional[float] = None
    penalty: Optional[float] = None


def penalty_kind(config: ScorerConfig, g: Optional[GlobalAttention]) -> Optional[PenaltyKind]:
    if config.scorer == "coverage-gnmt":
        if config.coverage_threshold == "global":
            if g is None:
                raise ValueError("coverage threshold 'global' needs a global attention")
            return PenaltyKind("gnmt", threshold=g.values)
        return PenaltyKind("gnmt")
    if config.scorer == "coverage-trunc":
        return PenaltyKind("truncated", truncation=config.truncation)
    if config.scorer == "coverage-step":
        return PenaltyKind("stepwise-" + config.step_penalty)
    if config.scorer == "bottom-up":
        return PenaltyKind("bottom-up")
    return None


def step_terms(config: ScorerConfig, prev: AttentionLedger, ledger: AttentionLedger,
               row: np.ndarray, g: Optional[GlobalAttention], t: int,
               Z: Optional[float]) -> StepTerms:
    if config.scorer == "global":
        A = attention_score(ledger, g)
        R = step_length_reward(t, Z) if config.gamma else 0.0
        addend = config.beta * (math.log(max(A, config.a_floor)) + config.gamma * R)
        return StepTerms(addend, attention=A, reward=R)
    if config.scorer == "coverage-step":
        p = baseline_penalty(penalty_kind(config, g), row=row, prev=prev)
        return StepTerms(config.beta * p, penalty=p)
    return StepTerms(0.0)


def final_score(config: ScorerConfig, h: Hypothesis, g: Optional[GlobalAttention]) -> float:
    """Ranking score of a finished hypothesis under ``config``."""
    if config.scorer == "global":
        return final_hypothesis_score(h)
    if not h.finished:
        raise Unfinished("hypothesis has not emitted end-of-sequence")
    if config.scorer == "coverage-step":
        return length_normalized_score(h.joint, h.length, config.a)
    base = length_normalized_score(h.logprob, h.length, config.a)
    kind = penalty_kind(config, g)
    if kind is None:
        return base
    return base + config.beta * baseline_penalty(kind, h.ledger, a_floor=config.a_floor)
