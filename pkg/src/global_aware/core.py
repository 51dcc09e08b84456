"""Domain types and attention bookkeeping shared across the package."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

VALIDATION_TOL = 1e-6
ACCUMULATION_TOL = 1e-9

SCORERS = ("beam", "global", "coverage-gnmt", "coverage-trunc", "coverage-step", "bottom-up")


class GlobalAwareError(Exception):
    """Base class for errors raised by this package."""


class InvalidDistribution(GlobalAwareError, ValueError):
    pass


class NegativeEntry(InvalidDistribution):
    def __init__(self, index: int, value: float):
        super().__init__(f"negative entry {value!r} at index {index}")
        self.index = index
        self.value = value


class NotNormalized(InvalidDistribution):
    def __init__(self, total: float):
        super().__init__(f"row sums to {total!r}, expected 1")
        self.sum = total


class LengthMismatch(GlobalAwareError, ValueError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"length mismatch: expected {expected}, got {got}")
        self.expected = expected
        self.got = got


class EmptyLedger(GlobalAwareError, ValueError):
    pass


def _as_vector(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


def validate_distribution(row) -> np.ndarray:
    """Check that ``row`` is a probability vector and return it as an array.

    Raises :class:`NegativeEntry` or :class:`NotNormalized`.
    """
    arr = np.asarray(row, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidDistribution("row must be a non-empty vector")
    neg = np.flatnonzero(arr < 0)
    if neg.size:
        raise NegativeEntry(int(neg[0]), float(arr[neg[0]]))
    total = float(arr.sum())
    if not abs(total - 1.0) <= VALIDATION_TOL:
        raise NotNormalized(total)
    return arr


@dataclass(frozen=True)
class SourceDocument:
    """Source token ids with optional per-token feature vectors (n x d)."""

    tokens: tuple
    features: Optional[np.ndarray] = None

    def __post_init__(self):
        tokens = tuple(int(t) for t in self.tokens)
        if not tokens:
            raise ValueError("source must contain at least one token")
        if any(t < 0 for t in tokens):
            raise ValueError("token ids must be non-negative")
        object.__setattr__(self, "tokens", tokens)
        if self.features is not None:
            feats = np.array(self.features, dtype=np.float64)
            if feats.ndim != 2 or feats.shape[0] != len(tokens):
                raise ValueError(
                    f"features must have shape ({len(tokens)}, d), got {feats.shape}"
                )
            feats.setflags(write=False)
            object.__setattr__(self, "features", feats)

    def __len__(self):
        return len(self.tokens)

    @property
    def feature_dim(self) -> Optional[int]:
        return None if self.features is None else self.features.shape[1]

    def __eq__(self, other):
        if not isinstance(other, SourceDocument):
            return NotImplemented
        if self.tokens != other.tokens:
            return False
        if self.features is None or other.features is None:
            return self.features is other.features
        return np.array_equal(self.features, other.features)

    def __hash__(self):
        return hash(self.tokens)


@dataclass(frozen=True, eq=False)
class GlobalAttention:
    """Per-source-token attention budget ``g`` and its sum, the optimal length."""

    values: np.ndarray

    def __post_init__(self):
        vals = _as_vector(self.values)
        if vals.size == 0:
            raise ValueError("global attention must be non-empty")
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ValueError("global attention values must be finite and non-negative")
        object.__setattr__(self, "values", vals)

    @property
    def optimal_length(self) -> float:
        return float(self.values.sum())

    def __len__(self):
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, GlobalAttention):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __repr__(self):
        return f"GlobalAttention(n={len(self)}, Z={self.optimal_length:.4f})"


@dataclass(frozen=True, eq=False)
class AttentionLedger:
    """Local attention ``l`` accumulated by one beam and its total ``zeta``."""

    local: np.ndarray
    total: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "local", _as_vector(self.local))
        object.__setattr__(self, "total", float(self.total))

    @classmethod
    def empty(cls, n: int) -> "AttentionLedger":
        return cls(np.zeros(n), 0.0)

    def __len__(self):
        return self.local.shape[0]

    def __eq__(self, other):
        if not isinstance(other, AttentionLedger):
            return NotImplemented
        return self.total == other.total and np.array_equal(self.local, other.local)


def accumulate_attention(ledger: AttentionLedger, row) -> AttentionLedger:
    """Add one cross-attention row to ``ledger``; the total grows by exactly 1."""
    arr = validate_distribution(row)
    if arr.shape[0] != len(ledger):
        raise LengthMismatch(len(ledger), arr.shape[0])
    # zeta counts rows rather than summing floats, so zeta_t == t exactly
    return AttentionLedger(ledger.local + arr, ledger.total + 1.0)


@dataclass(frozen=True)
class StepRecord:
    """Score components of one generated token.

    ``attention`` and ``reward`` are set by the global scorer, ``penalty`` by
    step-wise coverage scorers. ``contribution`` is what was added to J.
    """

    logp: float
    contribution: float
    attention: Optional[float] = None
    reward: Optional[float] = None
    penalty: Optional[float] = None


@dataclass(frozen=True, eq=False)
class Hypothesis:
    tokens: tuple
    logprob: float
    joint: float
    ledger: AttentionLedger
    records: tuple = ()
    finished: bool = False
    forced: bool = False

    @property
    def length(self) -> int:
        """Generated length, start token excluded."""
        return len(self.tokens) - 1

    @property
    def generated(self) -> tuple:
        return self.tokens[1:]

    @property
    def attention_product(self) -> Optional[float]:
        """Total attention score: product of per-step scores (global scorer only)."""
        scores = [r.attention for r in self.records]
        if not scores or any(s is None for s in scores):
            return None
        return math.prod(scores)

    def extend(self, token: int, ledger: AttentionLedger, record: StepRecord,
               eos: int, forced: bool = False) -> "Hypothesis":
        return Hypothesis(
            tokens=self.tokens + (int(token),),
            logprob=self.logprob + record.logp,
            joint=self.joint + record.contribution,
            ledger=ledger,
            records=self.records + (record,),
            finished=int(token) == eos,
            forced=forced,
        )


@dataclass(frozen=True)
class ScorerConfig:
    """Decoder settings.

    ``beta``/``gamma`` weight the attention score and the length reward for
    the global scorer; for coverage scorers ``beta`` weights the penalty.
    ``a`` is the length-normalization exponent of the non-global scorers.
    ``max_steps=None`` resolves to ``ceil(3 * Z)`` at decode time.
    """

    scorer: str = "global"
    beta: float = 12.0
    gamma: float = 1.0
    a: float = 1.0
    beam_size: int = 4
    repetition_theta: Optional[float] = None
    block_length: Optional[int] = None
    max_steps: Optional[int] = None
    min_length: int = 0
    a_floor: float = 1e-12
    seed: int = 0
    coverage_threshold: str = "one"
    truncation: float = 2.0
    step_penalty: str = "li"

    def __post_init__(self):
        if self.scorer not in SCORERS:
            raise ValueError(f"unknown scorer {self.scorer!r}; expected one of {SCORERS}")
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta and gamma must be non-negative")
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.repetition_theta is not None and self.repetition_theta < 1:
            raise ValueError("repetition_theta must be >= 1")
        if self.block_length is not None and self.block_length < 1:
            raise ValueError("block_length must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.a_floor <= 0:
            raise ValueError("a_floor must be positive")
        if self.coverage_threshold not in ("one", "global"):
            raise ValueError("coverage_threshold must be 'one' or 'global'")
        if self.step_penalty not in ("li", "see"):
            raise ValueError("step_penalty must be 'li' or 'see'")

    def replace(self, **changes) -> "ScorerConfig":
        return replace(self, **changes)

    def resolve_max_steps(self, optimal_length: Optional[float], source_len: int) -> int:
        if self.max_steps is not None:
            return self.max_steps
        if optimal_length is not None and optimal_length > 0:
            return max(1, math.ceil(3 * optimal_length))
        return max(1, 3 * source_len)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}
