"""Decoding engines.

:func:`beam_search` runs any scorer from :class:`ScorerConfig`; with
``scorer="global"`` it is global-aware beam search, with ``scorer="beam"``
the standard length-normalized baseline. :func:`exhaustive_oracle`
enumerates every terminated sequence and scores it through the same
pipeline, and :func:`blocked_decode` switches global attention
distributions by step range.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels, scoring
from .core import (
    AttentionLedger,
    GlobalAttention,
    GlobalAwareError,
    Hypothesis,
    ScorerConfig,
    SourceDocument,
    StepRecord,
    accumulate_attention,
)
from .model import teacher_forced_prefix_attention

MAX_ORACLE_SEQUENCES = 10 ** 6


class NoHypothesis(GlobalAwareError):
    pass


class SearchSpaceTooLarge(GlobalAwareError):
    pass


class InvalidSchedule(GlobalAwareError, ValueError):
    pass


@dataclass(frozen=True)
class StepTrace:
    step: int
    active: int
    attention_evals: int
    beams: tuple
    finished: tuple

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "active": self.active,
            "attention_evals": self.attention_evals,
            "beams": [{"tokens": list(t), "joint": j} for t, j in self.beams],
            "finished": [{"tokens": list(t), "score": s} for t, s in self.finished],
        }


@dataclass(frozen=True)
class DecodeResult:
    """Outcome of one decode.

    ``pool`` holds ``(hypothesis, final_score)`` pairs, best first.
    ``attention_evals`` counts attention-score evaluations per step.
    """

    best: Hypothesis
    best_score: float
    pool: tuple
    attention_evals: tuple = ()
    trace: Optional[tuple] = None
    enumerated: Optional[int] = None

    @property
    def forced(self) -> bool:
        return self.best.forced

    @property
    def steps(self) -> int:
        return len(self.attention_evals)


@dataclass(frozen=True)
class BlockSchedule:
    """Step ranges mapped to global attention distributions.

    ``segments`` is a tuple of ``(first_step, last_step, g)``; the final
    segment is open-ended (``last_step is None``) and carries the
    whole-sequence distribution.
    """

    segments: tuple

    def __post_init__(self):
        segs = tuple((int(a), None if b is None else int(b), g) for a, b, g in self.segments)
        if not segs:
            raise InvalidSchedule("schedule needs at least one segment")
        expected = 1
        for i, (first, last, g) in enumerate(segs):
            if not isinstance(g, GlobalAttention):
                raise InvalidSchedule("segment distributions must be GlobalAttention")
            if first != expected:
                raise InvalidSchedule(f"segment {i} starts at {first}, expected {expected}")
            if last is None:
                if i != len(segs) - 1:
                    raise InvalidSchedule("only the final segment may be open-ended")
            elif last < first:
                raise InvalidSchedule(f"segment {i} is empty")
            else:
                expected = last + 1
        if segs[-1][1] is not None:
            raise InvalidSchedule("final segment must be open-ended")
        n = len(segs[0][2])
        if any(len(g) != n for _, _, g in segs):
            raise InvalidSchedule("segment distributions differ in length")
        object.__setattr__(self, "segments", segs)

    @property
    def whole(self) -> GlobalAttention:
        return self.segments[-1][2]

    def at(self, step: int) -> GlobalAttention:
        for first, last, g in self.segments:
            if last is None or step <= last:
                return g
        raise AssertionError("unreachable: final segment is open-ended")

    @classmethod
    def single(cls, g: GlobalAttention) -> "BlockSchedule":
        return cls(((1, None, g),))

    @classmethod
    def from_blocks(cls, blocks: Sequence[GlobalAttention], whole: GlobalAttention,
                    block_length: int) -> "BlockSchedule":
        """Block ``k`` guides steps ``(k-1)*L+1 .. k*L``; ``whole`` takes over after."""
        segs = [((k * block_length) + 1, (k + 1) * block_length, g) for k, g in enumerate(blocks)]
        segs.append((len(blocks) * block_length + 1, None, whole))
        return cls(tuple(segs))


def block_count(optimal_length: float, block_length: int) -> int:
    """Number of intermediate blocks before the whole-sequence distribution.

    An optimal length of 32 with blocks of 10 gives three blocks (steps
    1-10, 11-20, 21-30), after which the whole distribution is used.
    """
    if block_length < 1:
        raise InvalidSchedule("block_length must be >= 1")
    return max(0, math.ceil(optimal_length / block_length) - 1)


def block_ranges(length: int, block_length: int) -> list:
    """Token ranges of the equal-length blocks of a reference (last one may be short)."""
    return [(s, min(s + block_length - 1, length)) for s in range(1, length + 1, block_length)]


def teacher_forced_schedule(model, source: SourceDocument, reference: Sequence[int],
                            block_length: int) -> BlockSchedule:
    """Schedule whose block ``k`` is the attention of the reference's first ``k*L`` tokens."""
    reference = tuple(reference)
    T = len(reference)
    k = block_count(T, block_length)
    lengths = [block_length * (i + 1) for i in range(k)] + [T]
    dists = teacher_forced_prefix_attention(model, source, reference, lengths)
    return BlockSchedule.from_blocks(dists[:-1], dists[-1], block_length)


def expand_and_select(scores, beam_size: int, eos: Optional[int] = None):
    """Pick continuations from a ``(beams, vocab)`` score matrix.

    Candidates are ranked by score, then parent index, then token id.
    Returns ``(kept, finished)`` lists of ``(parent, token, score)``. Without
    ``eos`` the top ``beam_size`` candidates are kept. With ``eos``, kept
    holds the best ``beam_size`` non-eos continuations and finished holds
    the eos continuations ranked within the top ``beam_size``.
    Non-finite candidates are never selected.
    """
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ValueError("scores must be a (beams, vocab) matrix")
    vocab = scores.shape[1]
    flat = scores.ravel()
    kept, finished = [], []
    for rank, idx in enumerate(kernels.rank_candidates(scores)):
        s = flat[idx]
        if not np.isfinite(s):
            break
        parent, token = divmod(int(idx), vocab)
        if eos is not None and token == eos:
            if rank < beam_size:
                finished.append((parent, token, float(s)))
        elif len(kept) < beam_size:
            kept.append((parent, token, float(s)))
        if len(kept) >= beam_size and rank >= beam_size - 1:
            break
    return kept, finished


def _root(model, source: SourceDocument) -> Hypothesis:
    return Hypothesis((model.bos,), 0.0, 0.0, AttentionLedger.empty(len(source)))


def _expand(model, source, hyp: Hypothesis, config: ScorerConfig, g: Optional[GlobalAttention],
            t: int, Z: Optional[float]):
    """Model step plus the scorer terms shared by all continuations of ``hyp``."""
    out = model.step(source, hyp.tokens)
    logp = scoring.adjusted_logprobs(out.logprobs, hyp.generated, config.repetition_theta)
    ledger = accumulate_attention(hyp.ledger, out.attention)
    terms = scoring.step_terms(config, hyp.ledger, ledger, out.attention, g, t, Z)
    return logp, ledger, terms


def _child(hyp, token, logp, ledger, terms, eos, forced=False) -> Hypothesis:
    record = StepRecord(
        logp=float(logp[token]),
        contribution=float(logp[token] + terms.addend),
        attention=terms.attention,
        reward=terms.reward,
        penalty=terms.penalty,
    )
    return hyp.extend(token, ledger, record, eos, forced=forced)


def _check_inputs(source, g_at, whole, config):
    needs_g = config.scorer == "global" or (
        config.scorer == "coverage-gnmt" and config.coverage_threshold == "global")
    if needs_g and whole is None:
        raise ValueError(f"scorer {config.scorer!r} needs a global attention distribution")
    if whole is not None and len(whole) != len(source):
        raise scoring.LengthMismatch(len(source), len(whole))


def _decode(model, source: SourceDocument, config: ScorerConfig,
            g_at: Callable[[int], Optional[GlobalAttention]], whole: Optional[GlobalAttention],
            trace: bool) -> DecodeResult:
    _check_inputs(source, g_at, whole, config)
    V, eos, K = model.vocab_size, model.eos, config.beam_size
    Z = whole.optimal_length if whole is not None else None
    max_steps = config.resolve_max_steps(Z, len(source))

    active = [_root(model, source)]
    pool = []  # (hyp, score, insertion order)
    evals, snaps = [], []
    for t in range(1, max_steps + 1):
        forced = t == max_steps
        scores = np.empty((len(active), V))
        expanded = []
        n_evals = 0
        g = g_at(t)
        for k, hyp in enumerate(active):
            logp, ledger, terms = _expand(model, source, hyp, config, g, t, Z)
            n_evals += terms.attention is not None
            scores[k] = hyp.joint + (logp + terms.addend)
            if t < config.min_length and eos < V:
                scores[k, eos] = -np.inf
            if forced:
                keep = scores[k, eos]
                scores[k] = -np.inf
                scores[k, eos] = keep
            expanded.append((logp, ledger, terms))
        evals.append(n_evals)

        kept, finished = expand_and_select(scores, K, eos)
        done_now = []
        for parent, token, _ in finished:
            logp, ledger, terms = expanded[parent]
            child = _child(active[parent], token, logp, ledger, terms, eos, forced=forced)
            score = scoring.final_score(config, child, whole)
            pool.append((child, score, len(pool)))
            done_now.append((child.tokens, score))
        active = [
            _child(active[p], tok, *expanded[p], eos) for p, tok, _ in kept
        ]
        if trace:
            snaps.append(StepTrace(t, len(expanded), n_evals,
                                   tuple((h.tokens, h.joint) for h in active), tuple(done_now)))
        if len(pool) >= K or not active:
            break

    if not pool:
        raise NoHypothesis("no hypothesis reached end-of-sequence")
    pool.sort(key=lambda item: (-item[1], item[2]))
    pool = pool[:K]
    best, best_score, _ = pool[0]
    return DecodeResult(
        best=best,
        best_score=best_score,
        pool=tuple((h, s) for h, s, _ in pool),
        attention_evals=tuple(evals),
        trace=tuple(snaps) if trace else None,
    )


def beam_search(model, source: SourceDocument, g: Optional[GlobalAttention],
                config: ScorerConfig, *, trace: bool = False) -> DecodeResult:
    """Decode ``source`` with beam search under ``config``'s scorer."""
    return _decode(model, source, config, lambda t: g, g, trace)


def standard_beam_search(model, source: SourceDocument, config: ScorerConfig,
                         g: Optional[GlobalAttention] = None, *, trace: bool = False):
    """Length-normalized beam search baseline; ``g`` only sets the default step cap."""
    return beam_search(model, source, g, config.replace(scorer="beam"), trace=trace)


def blocked_decode(model, source: SourceDocument, schedule: BlockSchedule,
                   config: ScorerConfig, *, trace: bool = False) -> DecodeResult:
    """Beam search whose attention score at step t uses ``schedule.at(t)``.

    The ledger is never reset; the length reward uses the whole-sequence
    optimal length.
    """
    if not isinstance(schedule, BlockSchedule):
        raise InvalidSchedule("schedule must be a BlockSchedule")
    return _decode(model, source, config, schedule.at, schedule.whole, trace)


def count_terminated(vocab_size: int, l_max: int, min_length: int = 0) -> int:
    """Number of sequences of generated length <= l_max that end with eos."""
    c = vocab_size - 1
    return sum(c ** (k - 1) for k in range(max(1, min_length), l_max + 1))


def exhaustive_oracle(model, source: SourceDocument, g: Optional[GlobalAttention],
                      config: ScorerConfig, l_max: int, *,
                      schedule: Optional[BlockSchedule] = None) -> DecodeResult:
    """Score every terminated sequence of length <= ``l_max`` and return the best.

    Uses the same per-step terms and final score as :func:`beam_search`.
    Ties keep the first sequence in depth-first token order.
    """
    if l_max < 1:
        raise ValueError("l_max must be >= 1")
    total = count_terminated(model.vocab_size, l_max, config.min_length)
    if total > MAX_ORACLE_SEQUENCES:
        raise SearchSpaceTooLarge(f"{total} sequences exceed the limit of {MAX_ORACLE_SEQUENCES}")
    if schedule is not None:
        g_at, whole = schedule.at, schedule.whole
    else:
        g_at, whole = (lambda t: g), g
    _check_inputs(source, g_at, whole, config)
    Z = whole.optimal_length if whole is not None else None
    eos = model.eos
    results = []  # (score, order, hyp)

    def visit(hyp: Hypothesis, t: int):
        logp, ledger, terms = _expand(model, source, hyp, config, g_at(t), t, Z)
        for token in range(model.vocab_size):
            if not np.isfinite(logp[token] + terms.addend):
                continue
            if token == eos:
                if t < config.min_length:
                    continue
                child = _child(hyp, token, logp, ledger, terms, eos, forced=False)
                results.append((scoring.final_score(config, child, whole), len(results), child))
            elif t < l_max:
                visit(_child(hyp, token, logp, ledger, terms, eos), t + 1)

    visit(_root(model, source), 1)
    if not results:
        raise NoHypothesis("no terminated sequence within l_max")
    results.sort(key=lambda r: (-r[0], r[1]))
    top = results[: config.beam_size]
    return DecodeResult(
        best=top[0][2],
        best_score=top[0][0],
        pool=tuple((h, s) for s, _, h in top),
        enumerated=len(results),
    )


def recompute_joint(h: Hypothesis) -> float:
    """Sum of per-step contributions, independent of the running total."""
    return math.fsum(r.contribution for r in h.records)
