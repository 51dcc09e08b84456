import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from global_aware.core import ScorerConfig
from global_aware.evaluation import (
    DEFAULT_BETAS,
    DEFAULT_GAMMAS,
    EmptyHypothesis,
    EmptyReference,
    EmptySet,
    ExperimentRecord,
    divergence_position,
    length_stats,
    novel_word_pct,
    resolve_global_attention,
    rouge,
    run_decode,
    run_degradation,
    run_sweep,
)
from global_aware.model import Instance

A, B, C, D = 0, 1, 2, 3


@pytest.mark.parametrize("order,expected", [(1, 2 / 3), (2, 1 / 2), ("L", 2 / 3)])
def test_rouge_examples(order, expected):
    s = rouge([A, B, C], [A, B, D], order)
    assert s.precision == s.recall == s.f1 == pytest.approx(expected, abs=1e-15)


def test_rouge_clips_counts():
    s = rouge([A, B], [A, A, A], 1)
    assert s.precision == pytest.approx(1 / 3) and s.recall == pytest.approx(1 / 2)


def test_rouge_empty_inputs():
    with pytest.raises(EmptyReference):
        rouge([], [A])
    assert rouge([A], [], 1).f1 == 0.0


seqs = st.lists(st.integers(0, 5), min_size=1, max_size=15)


@settings(max_examples=200, deadline=None)
@given(seqs, seqs)
def test_rouge_bounds_and_identity(ref, hyp):
    for order in (1, 2, "L"):
        s = rouge(ref, hyp, order)
        assert 0 <= s.precision <= 1 and 0 <= s.recall <= 1 and 0 <= s.f1 <= 1
        p, r = s.precision, s.recall
        assert s.f1 == (2 * p * r / (p + r) if p + r > 0 else 0.0)
        assert rouge(ref, ref, order).f1 == 1.0 or (order == 2 and len(ref) == 1)


def test_novel_word_pct():
    assert novel_word_pct([A, B, C], [A, B]) == 0.0
    assert novel_word_pct([A, B, C], [A, B, C, D]) == 25.0
    assert novel_word_pct([A], [B, C]) == 100.0
    with pytest.raises(EmptyHypothesis):
        novel_word_pct([A], [])


def test_divergence_position():
    assert divergence_position([A, B], [A, B]) is None
    assert divergence_position([A, B], [B, B]) == 1
    assert divergence_position([A, B, C], [A, B, D]) == 3
    assert divergence_position([A, B], [A, B, C]) == 3


def test_length_stats():
    assert length_stats([{"length": 5, "Z": 5}]) == (5.0, 0.0)
    assert length_stats([{"length": 4, "Z": 5}, {"length": 6, "Z": 5}]) == (5.0, 1.0)
    with pytest.raises(EmptySet):
        length_stats([])


def test_record_round_trip(tiny_synth):
    insts = [tiny_synth.make_instance(i) for i in range(2)]
    recs = run_decode(tiny_synth, insts, ScorerConfig(beam_size=2))
    for rec in recs:
        again = ExperimentRecord.from_dict(json.loads(json.dumps(rec.to_dict())))
        assert again == rec
        row = rec.to_result()
        assert set(row) == {"id", "hypothesis", "final_score", "attention_score", "length", "Z",
                            "forced"}


def test_g_modes(tiny_synth):
    inst = tiny_synth.make_instance(0)
    oracle = resolve_global_attention(tiny_synth, inst, "oracle")
    assert oracle.optimal_length == pytest.approx(len(inst.reference))
    noisy = resolve_global_attention(tiny_synth, inst, "corrupted", sigma=0.5, seed=1)
    assert noisy != oracle
    provided = Instance(inst.id, inst.source, None, oracle)
    assert resolve_global_attention(tiny_synth, provided, "provided") is oracle
    with pytest.raises(ValueError):
        resolve_global_attention(tiny_synth, provided, "oracle")
    with pytest.raises(ValueError):
        resolve_global_attention(tiny_synth, inst, "predicted")


def test_sweep_shape_and_determinism(tiny_synth):
    insts = [tiny_synth.make_instance(i) for i in range(3)]
    one = run_sweep(tiny_synth, insts, [12], [1])
    assert len(one.rows) == 1
    a = run_sweep(tiny_synth, insts, [2, 12], [0, 1])
    b = run_sweep(tiny_synth, insts, [2, 12], [0, 1])
    assert len(a.rows) == 4 and a.rows == b.rows
    assert len(DEFAULT_BETAS) * len(DEFAULT_GAMMAS) == 40


def test_degradation_shape(tiny_synth):
    insts = [tiny_synth.make_instance(i) for i in range(3)]
    greedy = run_degradation(tiny_synth, insts, [1])
    assert [(r["mode"], r["beam_size"]) for r in greedy.rows] == [("beam", 1), ("global-oracle", 1)]
    full = run_degradation(tiny_synth, insts, [1, 2, 4, 8, 16])
    assert sum(r["mode"] == "beam" for r in full.rows) == 5
    with pytest.raises(ValueError):
        run_degradation(tiny_synth, insts, [])
