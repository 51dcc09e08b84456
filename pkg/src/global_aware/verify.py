"""Runtime self-checks behind ``global-aware verify``.

Each check returns ``(name, passed, detail)``. They exercise the scoring
identities and the engine on seeded toy instances; the pytest acceptance
suite covers the same ground at full size.
"""
from __future__ import annotations

import math
from importlib.resources import files

import numpy as np

from .core import AttentionLedger, ScorerConfig
from .evaluation import rouge
from .model import SyntheticSpec, load_model, make_synthetic, teacher_forced_global_attention
from .predictor import init_params, loss, loss_and_gradient, predict
from .scoring import attention_score, step_length_reward
from .search import beam_search, exhaustive_oracle, recompute_joint, standard_beam_search


def _random_pairs(rng, count):
    for _ in range(count):
        n = int(rng.integers(1, 12))
        l = rng.exponential(1.0, n) * rng.integers(0, 2, n)
        if l.sum() == 0:
            l[0] = rng.exponential(1.0) + 1e-3
        yield l, rng.exponential(1.0, n)


def check_score_identity(count=10_000, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for l, g in _random_pairs(rng, count):
        zeta = l.sum()
        A = attention_score(AttentionLedger(l, zeta), g)
        delta = np.clip(l - g, 0, None).sum()
        worst = max(worst, abs(A - (1 - delta / zeta)))
    # at fixed zeta, sorting by overshoot must leave the score non-increasing
    zeta = 5.0
    g = rng.exponential(1.0, 6)
    samples = []
    for _ in range(2000):
        l = rng.dirichlet(np.ones(6)) * zeta
        samples.append((np.clip(l - g, 0, None).sum(), attention_score(AttentionLedger(l, zeta), g)))
    samples.sort()
    mono = all(b[1] <= a[1] + 1e-12 for a, b in zip(samples, samples[1:]))
    return "score-identity", worst <= 1e-9 and mono, f"max |A-(1-D/zeta)|={worst:.2e}, monotone={mono}"


def check_score_bounds(count=10_000, seed=0):
    rng = np.random.default_rng(seed)
    lo, hi = math.inf, -math.inf
    for l, g in _random_pairs(rng, count):
        A = attention_score(AttentionLedger(l, l.sum()), g)
        lo, hi = min(lo, A), max(hi, A)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 10))
        g = rng.exponential(1.0, n)
        l = g + rng.exponential(1.0, n) + 1e-9
        A = attention_score(AttentionLedger(l, l.sum()), g)
        worst = max(worst, abs(A - g.sum() / l.sum()))
    ok = lo >= 0 and hi <= 1 + 1e-12 and worst <= 1e-9
    return "score-bounds", ok, f"range=[{lo:.3g}, {hi:.3g}], all-exceed err={worst:.2e}"


def check_length_peak(z_range=range(5, 201)):
    misses = []
    for Z in z_range:
        horizon = 4 * Z + 10
        cum, best_j, best = 0.0, 0, -math.inf
        for j in range(1, horizon + 1):
            cum += step_length_reward(j, Z)
            if cum / j > best:
                best, best_j = cum / j, j
        if abs(best_j - Z) > 1:
            misses.append((Z, best_j))
    return "length-peak", not misses, f"misses={misses[:5]}"


def _instances(spec, count):
    model = make_synthetic(spec)
    for i in range(count):
        inst = model.make_instance(i)
        yield model, inst, teacher_forced_global_attention(model, inst.source, inst.reference)


def check_reduction(count=20):
    bad = 0
    for model, inst, g in _instances(SyntheticSpec(seed=11), count):
        ga = beam_search(model, inst.source, g, ScorerConfig(beta=0, gamma=0, beam_size=4))
        bs = standard_beam_search(model, inst.source, ScorerConfig(a=1.0, beam_size=4), g)
        bad += ga.best.tokens != bs.best.tokens
    return "reduction", bad == 0, f"{bad}/{count} mismatches"


def check_oracle(count=10):
    bad = 0
    spec = SyntheticSpec(seed=12, vocab_size=3, source_len=4)
    for model, inst, g in _instances(spec, count):
        cfg = ScorerConfig(max_steps=5)
        oracle = exhaustive_oracle(model, inst.source, g, cfg, 5)
        wide = beam_search(model, inst.source, g, cfg.replace(beam_size=64))
        narrow = beam_search(model, inst.source, g, cfg.replace(beam_size=2))
        bad += wide.best.tokens != oracle.best.tokens
        bad += narrow.best_score > oracle.best_score + 1e-12
    return "oracle", bad == 0, f"{bad} failures over {count} instances"


def check_consistency(count=10):
    worst = 0.0
    for model, inst, g in _instances(SyntheticSpec(seed=13), count):
        res = beam_search(model, inst.source, g, ScorerConfig(beam_size=4))
        for h, _ in res.pool:
            worst = max(worst, abs(h.joint - recompute_joint(h)),
                        abs(h.ledger.total - h.length), abs(h.ledger.local.sum() - h.length))
    return "consistency", worst <= 1e-9, f"max error={worst:.2e}"


def check_cost(count=5, beam_size=3):
    bad = 0
    for model, inst, g in _instances(SyntheticSpec(seed=14), count):
        res = beam_search(model, inst.source, g, ScorerConfig(beam_size=beam_size), trace=True)
        for snap in res.trace:
            bad += snap.attention_evals != snap.active
            if snap.step > 1:
                bad += snap.attention_evals != beam_size
    return "cost", bad == 0, f"{bad} steps with unexpected evaluation counts"


def check_gradient(seed=0):
    model = make_synthetic(SyntheticSpec(seed=15))
    inst = model.make_instance(0)
    g = teacher_forced_global_attention(model, inst.source, inst.reference)
    params = init_params(inst.source.feature_dim, len(inst.source), seed=seed)
    params = params.replace(W=np.random.default_rng(seed).normal(0, 0.3, params.W.shape))
    _, dW, _ = loss_and_gradient(params, inst.source, g)

    def at(i, delta):
        W = params.W.copy()
        W[i] += delta
        return loss(predict(params.replace(W=W), inst.source), g)

    h = 1e-4
    worst = 0.0
    for i in range(params.W.shape[0]):
        # fourth-order stencil keeps the reference's own error far below the tolerance
        fd = (8 * (at(i, h) - at(i, -h)) - (at(i, 2 * h) - at(i, -2 * h))) / (12 * h)
        worst = max(worst, abs(fd - dW[i]) / max(abs(fd), 1e-8))
    return "gradient", worst <= 1e-5, f"max relative error={worst:.2e}"


def check_rouge():
    ref, hyp = [0, 1, 2], [0, 1, 3]
    ok = (abs(rouge(ref, hyp, 1).f1 - 2 / 3) < 1e-12 and abs(rouge(ref, hyp, 2).f1 - 0.5) < 1e-12
          and abs(rouge(ref, hyp, "L").f1 - 2 / 3) < 1e-12 and rouge(ref, ref, "L").f1 == 1.0)
    return "rouge", ok, "hand-derived values"


def check_fixture():
    model = load_model(files("global_aware") / "fixtures" / "tm1.json")
    src = model.default_source()
    g = teacher_forced_global_attention(model, src, (0, 1, 2))
    res = beam_search(model, src, g, ScorerConfig(beta=0, gamma=0, beam_size=1))
    ok = res.best.generated == (0, 1, 2) and abs(res.best_score - (-1.2447948 / 3)) < 1e-6
    return "fixture", ok, f"greedy={res.best.generated}, score={res.best_score:.5f}"


CHECKS = (check_score_identity, check_score_bounds, check_length_peak, check_reduction, check_oracle,
          check_consistency, check_cost, check_gradient, check_rouge, check_fixture)


def run_all():
    return [check() for check in CHECKS]
