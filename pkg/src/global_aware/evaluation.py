"""Evaluation metrics and experiment harnesses."""
from __future__ import annotations

import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import kernels
from .core import (
    AttentionLedger,
    GlobalAttention,
    GlobalAwareError,
    ScorerConfig,
    accumulate_attention,
)
from .model import Instance, teacher_forced_global_attention
from .predictor import corrupt, predict
from .scoring import attention_score
from .search import beam_search, blocked_decode, exhaustive_oracle, teacher_forced_schedule

DEFAULT_BETAS = (2, 4, 6, 10, 12, 15, 18, 20)
DEFAULT_GAMMAS = (0, 0.5, 1, 1.5, 2)
DEFAULT_BEAM_SIZES = (1, 2, 4, 8, 16)
G_MODES = ("oracle", "predicted", "provided", "corrupted")


class EmptyReference(GlobalAwareError, ValueError):
    pass


class EmptyHypothesis(GlobalAwareError, ValueError):
    pass


class EmptySet(GlobalAwareError, ValueError):
    pass


# -- metrics ------------------------------------------------------------------

@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_pr(cls, p: float, r: float) -> "RougeScore":
        return cls(p, r, 2 * p * r / (p + r) if p + r > 0 else 0.0)


def _ngrams(tokens: Sequence[int], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge(reference: Sequence[int], hypothesis: Sequence[int], order=1) -> RougeScore:
    """ROUGE-N (clipped n-gram overlap) or ROUGE-L (LCS) over token ids."""
    reference = list(reference)
    hypothesis = list(hypothesis)
    if not reference:
        raise EmptyReference("reference is empty")
    if not hypothesis:
        return RougeScore(0.0, 0.0, 0.0)
    if order in ("L", "l"):
        lcs = kernels.lcs_length(np.asarray(reference, dtype=np.int64),
                                 np.asarray(hypothesis, dtype=np.int64))
        return RougeScore.from_pr(lcs / len(hypothesis), lcs / len(reference))
    n = int(order)
    if n < 1:
        raise ValueError("order must be a positive integer or 'L'")
    ref, hyp = _ngrams(reference, n), _ngrams(hypothesis, n)
    overlap = sum((ref & hyp).values())
    n_hyp, n_ref = sum(hyp.values()), sum(ref.values())
    p = overlap / n_hyp if n_hyp else 0.0
    r = overlap / n_ref if n_ref else 0.0
    return RougeScore.from_pr(p, r)


def rouge_all(reference, hypothesis) -> dict:
    return {k: rouge(reference, hypothesis, k) for k in (1, 2, "L")}


def novel_word_pct(source: Sequence[int], hypothesis: Sequence[int]) -> float:
    """Percentage of hypothesis positions whose token never occurs in the source."""
    hypothesis = list(hypothesis)
    if not hypothesis:
        raise EmptyHypothesis("hypothesis is empty")
    vocab = set(getattr(source, "tokens", source))
    return 100.0 * sum(t not in vocab for t in hypothesis) / len(hypothesis)


def divergence_position(h1: Sequence[int], h2: Sequence[int]) -> Optional[int]:
    """1-based index where two sequences first differ, or None if identical."""
    h1, h2 = list(h1), list(h2)
    for i, (a, b) in enumerate(zip(h1, h2), 1):
        if a != b:
            return i
    if len(h1) != len(h2):
        return min(len(h1), len(h2)) + 1
    return None


def length_stats(results: Iterable) -> tuple:
    """Mean length and mean absolute deviation from the optimal length."""
    pairs = []
    for r in results:
        if isinstance(r, dict):
            pairs.append((r["length"], r["Z"]))
        else:
            pairs.append((r.length, r.Z))
    if not pairs:
        raise EmptySet("no results")
    lengths = np.array([p[0] for p in pairs], dtype=np.float64)
    zs = np.array([p[1] for p in pairs], dtype=np.float64)
    return float(lengths.mean()), float(np.abs(lengths - zs).mean())


# -- decoding harness ---------------------------------------------------------

@dataclass
class ExperimentRecord:
    id: str
    config: dict
    hypothesis: list
    final_score: float
    attention_score: Optional[float]
    length: int
    Z: Optional[float]
    wall_time: float
    forced: bool = False

    def to_result(self) -> dict:
        """Row of the result JSONL file."""
        return {
            "id": self.id,
            "hypothesis": list(self.hypothesis),
            "final_score": self.final_score,
            "attention_score": self.attention_score,
            "length": self.length,
            "Z": self.Z,
            "forced": self.forced,
        }

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentRecord":
        return cls(**obj)


def attention_product(model, source, tokens: Sequence[int], g: GlobalAttention) -> float:
    """Product of per-step attention scores of ``tokens`` (start token excluded)."""
    ledger = AttentionLedger.empty(len(source))
    prefix = (model.bos,)
    product = 1.0
    for tok in tokens:
        ledger = accumulate_attention(ledger, model.step(source, prefix).attention)
        product *= attention_score(ledger, g)
        prefix += (int(tok),)
    return product


def _reference(model, inst: Instance) -> tuple:
    ref = tuple(inst.reference)
    return ref if ref and ref[-1] == model.eos else ref + (model.eos,)


def resolve_global_attention(model, inst: Instance, g_mode: str, *, predictor=None,
                             sigma: float = 0.0, seed: int = 0) -> GlobalAttention:
    if g_mode not in G_MODES:
        raise ValueError(f"unknown g-mode {g_mode!r}")
    if g_mode == "provided":
        if inst.global_attention is None:
            raise ValueError(f"instance {inst.id} has no global_attention")
        return inst.global_attention
    if g_mode == "predicted":
        if predictor is None:
            raise ValueError("g-mode 'predicted' needs a trained predictor")
        return predict(predictor, inst.source).as_global()
    if inst.reference is None:
        raise ValueError(f"instance {inst.id} has no reference for g-mode {g_mode!r}")
    g = teacher_forced_global_attention(model, inst.source, _reference(model, inst))
    if g_mode == "corrupted":
        g = corrupt(g, sigma, seed)
    return g


def decode_instance(model, inst: Instance, config: ScorerConfig, g_mode: str = "oracle", *,
                    predictor=None, sigma: float = 0.0, l_max: Optional[int] = None):
    """Decode one instance; returns ``(DecodeResult, g)``.

    With ``config.block_length`` the global scorer runs blocked decoding on a
    teacher-forced schedule (oracle mode only). With ``l_max`` the
    exhaustive oracle is used instead of beam search.
    """
    needs_g = config.scorer == "global" or (
        config.scorer == "coverage-gnmt" and config.coverage_threshold == "global")
    g = None
    if needs_g or inst.reference is not None or inst.global_attention is not None:
        try:
            g = resolve_global_attention(model, inst, g_mode, predictor=predictor,
                                         sigma=sigma, seed=config.seed)
        except ValueError:
            if needs_g:
                raise
    schedule = None
    if config.block_length and config.scorer == "global":
        if g_mode != "oracle":
            raise ValueError("blocked decoding needs per-block distributions (g-mode 'oracle')")
        schedule = teacher_forced_schedule(model, inst.source, _reference(model, inst),
                                           config.block_length)
    if l_max is not None:
        return exhaustive_oracle(model, inst.source, g, config, l_max, schedule=schedule), g
    if schedule is not None:
        return blocked_decode(model, inst.source, schedule, config), g
    return beam_search(model, inst.source, g, config), g


def run_decode(model, instances: Sequence[Instance], config: ScorerConfig,
               g_mode: str = "oracle", *, predictor=None, sigma: float = 0.0,
               l_max: Optional[int] = None) -> list:
    """Decode every instance in order and return :class:`ExperimentRecord` s."""
    records = []
    cfg = config.to_dict()
    for inst in instances:
        t0 = time.perf_counter()
        result, g = decode_instance(model, inst, config, g_mode, predictor=predictor,
                                    sigma=sigma, l_max=l_max)
        elapsed = time.perf_counter() - t0
        best = result.best
        product = best.attention_product
        if product is None and g is not None:
            product = attention_product(model, inst.source, best.generated, g)
        records.append(ExperimentRecord(
            id=inst.id,
            config={**cfg, "g_mode": g_mode, "sigma": sigma},
            hypothesis=list(best.generated),
            final_score=result.best_score,
            attention_score=product,
            length=best.length,
            Z=None if g is None else g.optimal_length,
            wall_time=elapsed,
            forced=best.forced,
        ))
    return records


def _strip(tokens, eos):
    tokens = list(tokens)
    return tokens[:-1] if tokens and tokens[-1] == eos else tokens


def summarize(model, instances: Sequence[Instance], records: Sequence[ExperimentRecord]) -> dict:
    """Mean ROUGE F1, length, |length - Z| and final score over records."""
    by_id = {i.id: i for i in instances}
    r1, r2, rl = [], [], []
    for rec in records:
        inst = by_id[rec.id]
        if inst.reference is None:
            continue
        ref = _strip(inst.reference, model.eos)
        hyp = _strip(rec.hypothesis, model.eos)
        if not ref:
            continue
        scores = rouge_all(ref, hyp)
        r1.append(scores[1].f1)
        r2.append(scores[2].f1)
        rl.append(scores["L"].f1)
    row = {
        "rouge1": float(np.mean(r1)) if r1 else None,
        "rouge2": float(np.mean(r2)) if r2 else None,
        "rougeL": float(np.mean(rl)) if rl else None,
        "mean_final_score": float(np.mean([r.final_score for r in records])),
        "mean_length": float(np.mean([r.length for r in records])),
    }
    with_z = [r for r in records if r.Z is not None]
    row["mean_abs_length_dev"] = length_stats(with_z)[1] if with_z else None
    return row


@dataclass
class SweepResult:
    rows: list
    records: dict = field(repr=False)


def run_sweep(model, instances: Sequence[Instance], betas: Sequence[float] = DEFAULT_BETAS,
              gammas: Sequence[float] = DEFAULT_GAMMAS, config: Optional[ScorerConfig] = None,
              g_mode: str = "oracle", *, predictor=None) -> SweepResult:
    """Decode the dataset with the global scorer at every (beta, gamma) grid point."""
    config = (config or ScorerConfig()).replace(scorer="global")
    rows, records = [], {}
    for beta in betas:
        for gamma in gammas:
            cfg = config.replace(beta=float(beta), gamma=float(gamma))
            recs = run_decode(model, instances, cfg, g_mode, predictor=predictor)
            records[(float(beta), float(gamma))] = recs
            rows.append({"beta": float(beta), "gamma": float(gamma),
                         **summarize(model, instances, recs)})
    return SweepResult(rows, records)


@dataclass
class DegradationReport:
    """Per-K metrics for each decoding mode.

    ``objectives[(mode, K)]`` lists per-instance final scores; ``K`` is
    ``"exhaustive"`` for the exhaustive-oracle row when it was computed.
    """

    rows: list
    objectives: dict = field(repr=False)

    def oracle_dominates(self, tol: float = 1e-12) -> bool:
        for (mode, k), objs in self.objectives.items():
            if k == "exhaustive":
                continue
            best = self.objectives.get((mode, "exhaustive"))
            if best is None:
                continue
            if any(o > b + tol for o, b in zip(objs, best)):
                return False
        return True


def run_degradation(model, instances: Sequence[Instance],
                    beam_sizes: Sequence[int] = DEFAULT_BEAM_SIZES,
                    config: Optional[ScorerConfig] = None, *, predictor=None,
                    oracle_l_max: Optional[int] = None) -> DegradationReport:
    """Decode with growing beam sizes for beam search and global-aware inference.

    Modes: ``beam`` (length-normalized baseline), ``global-oracle``
    (teacher-forced g) and ``global-predicted`` (when a predictor is given).
    With ``oracle_l_max`` every decode is capped at that many steps and an
    exhaustive-oracle row is added per mode.
    """
    if not beam_sizes:
        raise ValueError("beam_sizes must be non-empty")
    config = config or ScorerConfig()
    if oracle_l_max is not None:
        config = config.replace(max_steps=oracle_l_max)
    modes = [("beam", config.replace(scorer="beam"), "oracle"),
             ("global-oracle", config.replace(scorer="global"), "oracle")]
    if predictor is not None:
        modes.append(("global-predicted", config.replace(scorer="global"), "predicted"))
    rows, objectives = [], {}
    for mode, cfg, g_mode in modes:
        sizes = list(beam_sizes) + (["exhaustive"] if oracle_l_max is not None else [])
        for k in sizes:
            if k == "exhaustive":
                recs = run_decode(model, instances, cfg.replace(beam_size=1), g_mode,
                                  predictor=predictor, l_max=oracle_l_max)
            else:
                recs = run_decode(model, instances, cfg.replace(beam_size=int(k)), g_mode,
                                  predictor=predictor)
            objectives[(mode, k)] = [r.final_score for r in recs]
            rows.append({"mode": mode, "beam_size": k, **summarize(model, instances, recs)})
    return DegradationReport(rows, objectives)
