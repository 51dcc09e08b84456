"""Autoregressive attentive models for desk-scale decoding.

Every model exposes ``vocab_size``, ``bos``, ``eos`` and
``step(source, prefix) -> StepOutput`` where ``prefix`` starts with ``bos``.
The start token is reserved outside the output vocabulary (``bos ==
vocab_size``) so it can never be emitted.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import (
    GlobalAttention,
    GlobalAwareError,
    LengthMismatch,
    SourceDocument,
    VALIDATION_TOL,
    validate_distribution,
)


class ModelError(GlobalAwareError):
    pass


class PrefixTooLong(ModelError):
    pass


class BadPrefix(ModelError, ValueError):
    pass


class InvalidSpec(ModelError, ValueError):
    pass


def _log(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(p)


def log_softmax(x: np.ndarray) -> np.ndarray:
    m = np.max(x)
    shifted = x - m
    return shifted - np.log(np.exp(shifted).sum())


@dataclass(frozen=True, eq=False)
class StepOutput:
    """Next-token log-probabilities and one pooled cross-attention row."""

    logprobs: np.ndarray
    attention: np.ndarray

    def __post_init__(self):
        lp = np.array(self.logprobs, dtype=np.float64)
        total = float(np.exp(lp).sum())
        if lp.ndim != 1 or not abs(total - 1.0) <= VALIDATION_TOL:
            raise ModelError(f"exp(logprobs) sums to {total}, expected 1")
        att = np.array(validate_distribution(self.attention))
        lp.setflags(write=False)
        att.setflags(write=False)
        object.__setattr__(self, "logprobs", lp)
        object.__setattr__(self, "attention", att)

    @classmethod
    def from_probs(cls, probs, attention) -> "StepOutput":
        return cls(_log(np.asarray(probs, dtype=np.float64)), attention)


@dataclass(frozen=True)
class Instance:
    """One decoding instance; ``reference`` excludes the start token."""

    id: str
    source: SourceDocument
    reference: Optional[tuple] = None
    global_attention: Optional[GlobalAttention] = None


class TableModel:
    """Lookup-table model keyed by the generated prefix (start token excluded).

    Unlisted prefixes fall back to ``default`` so decoding never dead-ends.
    """

    def __init__(self, vocab_size: int, source_len: int, entries: dict, default: StepOutput,
                 eos: Optional[int] = None, horizon: Optional[int] = None):
        if vocab_size < 1:
            raise InvalidSpec("vocab_size must be >= 1")
        self.vocab_size = vocab_size
        self.source_len = source_len
        self.eos = vocab_size - 1 if eos is None else eos
        self.bos = vocab_size
        self.horizon = horizon
        self._entries = {tuple(k): v for k, v in entries.items()}
        self._default = default
        for out in list(self._entries.values()) + [default]:
            if out.logprobs.shape[0] != vocab_size or out.attention.shape[0] != source_len:
                raise InvalidSpec("table entry has the wrong shape")

    @classmethod
    def from_dict(cls, data: dict) -> "TableModel":
        def out(e):
            return StepOutput.from_probs(e["p"], e["att"])

        entries = {tuple(e["prefix"]): out(e) for e in data["entries"]}
        return cls(int(data["vocab_size"]), int(data["source_len"]), entries,
                   out(data["default"]), eos=data.get("eos"), horizon=data.get("horizon"))

    def to_dict(self) -> dict:
        def enc(o):
            return {"p": np.exp(o.logprobs).tolist(), "att": o.attention.tolist()}

        data = {
            "vocab_size": self.vocab_size,
            "source_len": self.source_len,
            "eos": self.eos,
            "entries": [{"prefix": list(k), **enc(v)} for k, v in self._entries.items()],
            "default": enc(self._default),
        }
        if self.horizon is not None:
            data["horizon"] = self.horizon
        return data

    def default_source(self) -> SourceDocument:
        return SourceDocument(tuple(range(self.source_len)))

    def step(self, source: SourceDocument, prefix: Sequence[int]) -> StepOutput:
        prefix = tuple(prefix)
        _check_prefix(self, prefix)
        if len(source) != self.source_len:
            raise LengthMismatch(self.source_len, len(source))
        return self._entries.get(prefix[1:], self._default)


def _check_prefix(model, prefix: tuple) -> None:
    if not prefix or prefix[0] != model.bos:
        raise BadPrefix("prefix must begin with the start token")
    if model.horizon is not None and len(prefix) - 1 >= model.horizon:
        raise PrefixTooLong(f"prefix of {len(prefix) - 1} tokens exceeds horizon {model.horizon}")


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs for a seeded synthetic model.

    Source tokens carry features ``e_i``; token salience is
    ``exp(w . e_i + b)`` and the salience mass sets the natural target length,
    so the teacher-forced global attention is a smooth function of features.
    ``length_bias`` < 1 makes the model's own end-of-sequence belief shorter
    than the reference.
    """

    seed: int = 0
    vocab_size: int = 12
    source_len: int = 16
    feature_dim: int = 8
    peakedness: float = 1.0
    smoothness: float = 0.3
    attention_noise: float = 0.1
    coverage_decay: float = 0.15
    salience_spread: float = 1.2
    rate: float = 0.5
    length_bias: float = 0.85
    eos_sharpness: float = 1.0
    copy_gain: float = 4.0
    token_noise: float = 0.5
    horizon: Optional[int] = None


class SyntheticModel:
    """Deterministic pseudo-random attentive model built from a spec.

    All per-step randomness is keyed by (seed, source tokens, prefix), so
    ``step`` is referentially transparent.
    """

    def __init__(self, spec: SyntheticSpec):
        self.spec = spec
        self.vocab_size = spec.vocab_size
        self.eos = spec.vocab_size - 1
        self.bos = spec.vocab_size
        self.horizon = spec.horizon
        self.n_content = spec.vocab_size - 1
        rng = np.random.default_rng([spec.seed, 0])
        d = spec.feature_dim
        w = rng.standard_normal(d)
        self.salience_weight = w / np.linalg.norm(w) * spec.salience_spread
        # smoothed features have per-dim variance close to this factor
        s = spec.smoothness
        var_factor = (1 - s) ** 2 + s ** 2 / 2
        self.salience_bias = math.log(spec.rate) - 0.5 * spec.salience_spread ** 2 * var_factor
        self.transitions = rng.standard_normal((spec.vocab_size + 1, max(self.n_content, 1)))
        self.embeddings = rng.standard_normal((max(self.n_content, 1), d))

    def to_dict(self) -> dict:
        return {"synthetic": asdict(self.spec)}

    # -- sources -------------------------------------------------------------

    def smooth(self, raw: np.ndarray) -> np.ndarray:
        s = self.spec.smoothness
        if s == 0 or raw.shape[0] == 1:
            return raw
        left = np.vstack([raw[:1], raw[:-1]])
        right = np.vstack([raw[1:], raw[-1:]])
        return (1 - s) * raw + s * (left + right) / 2

    def features_for(self, source: SourceDocument) -> np.ndarray:
        if source.features is not None:
            if source.features.shape[1] != self.spec.feature_dim:
                raise ModelError("source feature dimension does not match the model")
            return source.features
        ids = np.asarray(source.tokens) % max(self.n_content, 1)
        return self.smooth(self.embeddings[ids])

    def salience(self, source: SourceDocument) -> np.ndarray:
        return np.exp(self.features_for(source) @ self.salience_weight + self.salience_bias)

    def make_source(self, index: int) -> SourceDocument:
        rng = np.random.default_rng([self.spec.seed, 1, index])
        n = self.spec.source_len
        tokens = rng.integers(0, max(self.n_content, 1), size=n)
        raw = rng.standard_normal((n, self.spec.feature_dim))
        return SourceDocument(tuple(int(t) for t in tokens), self.smooth(raw))

    def reference_length(self, source: SourceDocument) -> int:
        return max(1, int(round(float(self.salience(source).sum()))))

    def make_instance(self, index: int) -> Instance:
        """Source plus a reference sampled from the model's content distribution.

        The reference length is the rounded salience mass of the source.
        """
        source = self.make_source(index)
        T = self.reference_length(source)
        rng = np.random.default_rng([self.spec.seed, 3, index])
        prefix = [self.bos]
        for _ in range(T - 1):
            lp = self.step(source, prefix).logprobs[: self.n_content]
            p = np.exp(lp - lp.max())
            prefix.append(int(rng.choice(self.n_content, p=p / p.sum())))
        reference = tuple(prefix[1:]) + (self.eos,)
        return Instance(id=f"syn-{self.spec.seed}-{index}", source=source, reference=reference)

    # -- stepping --------------------------------------------------------------

    def step(self, source: SourceDocument, prefix: Sequence[int]) -> StepOutput:
        prefix = tuple(int(t) for t in prefix)
        _check_prefix(self, prefix)
        spec = self.spec
        t = len(prefix)
        sal = self.salience(source)
        key = [spec.seed, 2, len(source), *source.tokens, t, *prefix]
        rng = np.random.default_rng(key)
        generated = prefix[1:]
        covered = np.array([generated.count(x) for x in source.tokens], dtype=np.float64)
        att_logits = (spec.peakedness * np.log(sal) - spec.coverage_decay * covered
                      + spec.attention_noise * rng.standard_normal(len(source)))
        att = np.exp(att_logits - att_logits.max())
        att /= att.sum()

        if self.n_content == 0:
            return StepOutput(np.zeros(1), att)
        content = self.transitions[prefix[-1]].copy()
        np.add.at(content, np.asarray(source.tokens) % self.n_content, spec.copy_gain * att)
        content += spec.token_noise * rng.standard_normal(self.n_content)
        belief = spec.length_bias * float(sal.sum()) + 1.0
        lse = float(np.log(np.exp(content - content.max()).sum()) + content.max())
        eos_logit = lse + spec.eos_sharpness * (t - belief)
        return StepOutput(log_softmax(np.append(content, eos_logit)), att)


def make_synthetic(spec: SyntheticSpec) -> SyntheticModel:
    if spec.vocab_size < 2:
        raise InvalidSpec("vocab_size must be >= 2 (one content token plus end-of-sequence)")
    if spec.source_len < 1:
        raise InvalidSpec("source_len must be >= 1")
    if spec.feature_dim < 1:
        raise InvalidSpec("feature_dim must be >= 1")
    if spec.rate <= 0:
        raise InvalidSpec("rate must be positive")
    return SyntheticModel(spec)


def teacher_forced_global_attention(model, source: SourceDocument,
                                    reference: Sequence[int]) -> GlobalAttention:
    """Sum the attention rows produced while feeding the reference."""
    reference = tuple(int(t) for t in reference)
    if not reference:
        raise ValueError("reference must contain at least one token")
    if reference[-1] != model.eos:
        raise ValueError("reference must end with end-of-sequence")
    prefix = (model.bos,)
    total = np.zeros(len(source))
    for token in reference:
        total += model.step(source, prefix).attention
        prefix += (token,)
    return GlobalAttention(total)


def teacher_forced_prefix_attention(model, source: SourceDocument, reference: Sequence[int],
                                    lengths: Sequence[int]) -> list:
    """Global attention of reference prefixes of the given lengths (capped at T)."""
    reference = tuple(int(t) for t in reference)
    rows = []
    prefix = (model.bos,)
    for token in reference:
        rows.append(model.step(source, prefix).attention)
        prefix += (token,)
    cumulative = np.cumsum(rows, axis=0)
    return [GlobalAttention(cumulative[min(k, len(rows)) - 1]) for k in lengths]


def load_model(path) -> object:
    data = json.loads(Path(path).read_text())
    return model_from_dict(data)


def model_from_dict(data: dict):
    if "entries" in data:
        return TableModel.from_dict(data)
    if "synthetic" in data:
        return make_synthetic(SyntheticSpec(**data["synthetic"]))
    raise InvalidSpec("model file must hold a table ('entries') or a 'synthetic' spec")


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2))
