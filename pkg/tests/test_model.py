import json
from importlib.resources import files

import numpy as np
import pytest

from global_aware.core import SourceDocument
from global_aware.model import (
    BadPrefix,
    InvalidSpec,
    ModelError,
    PrefixTooLong,
    StepOutput,
    SyntheticSpec,
    TableModel,
    load_model,
    make_synthetic,
    model_from_dict,
    save_model,
    teacher_forced_global_attention,
    teacher_forced_prefix_attention,
)

TM1_PATH = files("global_aware") / "fixtures" / "tm1.json"


def test_tm1_table_lookup(tm1, src2):
    out = tm1.step(src2, (tm1.bos,))
    assert np.allclose(np.exp(out.logprobs), [0.6, 0.3, 0.1])
    assert np.allclose(out.attention, [0.7, 0.3])
    out = tm1.step(src2, (tm1.bos, 0))
    assert np.allclose(np.exp(out.logprobs), [0.1, 0.6, 0.3])
    assert np.allclose(out.attention, [0.2, 0.8])


def test_tm1_default_row(tm1, src2):
    out = tm1.step(src2, (tm1.bos, 1, 1, 0))
    assert np.allclose(out.attention, [0.5, 0.5])


def test_tm1_teacher_forced(tm1, src2):
    g = teacher_forced_global_attention(tm1, src2, (0, 1, 2))
    assert np.allclose(g.values, [1.4, 1.6])
    assert abs(g.optimal_length - 3) <= 1e-9


def test_single_token_reference(tm1, src2):
    g = teacher_forced_global_attention(tm1, src2, (tm1.eos,))
    assert np.allclose(g.values, [0.7, 0.3]) and g.optimal_length == pytest.approx(1.0)


def test_reference_must_end_with_eos(tm1, src2):
    with pytest.raises(ValueError):
        teacher_forced_global_attention(tm1, src2, (0, 1))


def test_prefix_must_start_with_bos(tm1, src2):
    with pytest.raises(BadPrefix):
        tm1.step(src2, (0,))


def test_horizon():
    data = json.loads(TM1_PATH.read_text())
    data["horizon"] = 2
    model = model_from_dict(data)
    src = model.default_source()
    model.step(src, (model.bos, 0))
    with pytest.raises(PrefixTooLong):
        model.step(src, (model.bos, 0, 1))


def test_step_output_validation():
    with pytest.raises(ModelError):
        StepOutput(np.log([0.5, 0.4]), [1.0])
    with pytest.raises(ValueError):
        StepOutput(np.log([0.5, 0.5]), [0.7, 0.7])


def test_table_round_trip(tm1, src2, tmp_path):
    path = tmp_path / "m.json"
    save_model(tm1, path)
    again = load_model(path)
    for prefix in [(tm1.bos,), (tm1.bos, 0), (tm1.bos, 0, 1), (tm1.bos, 2)]:
        a, b = tm1.step(src2, prefix), again.step(src2, prefix)
        assert np.allclose(a.logprobs, b.logprobs) and np.array_equal(a.attention, b.attention)


def test_synthetic_outputs_validate(synth):
    rng = np.random.default_rng(0)
    for i in range(50):
        src = synth.make_source(i)
        for _ in range(20):
            prefix = (synth.bos,) + tuple(int(t) for t in rng.integers(0, synth.vocab_size,
                                                                       rng.integers(0, 8)))
            out = synth.step(src, prefix)
            assert abs(np.exp(out.logprobs).sum() - 1) <= 1e-6
            assert abs(out.attention.sum() - 1) <= 1e-6 and np.all(out.attention >= 0)


def test_synthetic_is_deterministic():
    spec = SyntheticSpec(seed=4)
    a, b = make_synthetic(spec), make_synthetic(spec)
    src = a.make_source(3)
    for prefix in [(a.bos,), (a.bos, 1, 2), (a.bos, 5, 5, 5)]:
        assert np.array_equal(a.step(src, prefix).logprobs, b.step(src, prefix).logprobs)
        assert np.array_equal(a.step(src, prefix).attention, b.step(src, prefix).attention)


def test_seeds_differ():
    a, b = make_synthetic(SyntheticSpec(seed=1)), make_synthetic(SyntheticSpec(seed=2))
    rng = np.random.default_rng(0)
    differ = 0
    for _ in range(100):
        src = SourceDocument(tuple(int(t) for t in rng.integers(0, 11, 16)))
        prefix = (a.bos,) + tuple(int(t) for t in rng.integers(0, 11, rng.integers(0, 5)))
        differ += not np.array_equal(a.step(src, prefix).logprobs, b.step(src, prefix).logprobs)
    assert differ > 0


def test_teacher_forced_sum_equals_length(synth):
    rng = np.random.default_rng(1)
    for T in range(1, 11):
        src = synth.make_source(T)
        ref = tuple(int(t) for t in rng.integers(0, synth.eos, T - 1)) + (synth.eos,)
        assert abs(teacher_forced_global_attention(synth, src, ref).optimal_length - T) <= 1e-9


def test_prefix_attention_matches_whole(synth):
    inst = synth.make_instance(0)
    T = len(inst.reference)
    parts = teacher_forced_prefix_attention(synth, inst.source, inst.reference, [1, T])
    whole = teacher_forced_global_attention(synth, inst.source, inst.reference)
    assert np.allclose(parts[-1].values, whole.values)
    assert parts[0].optimal_length == pytest.approx(1.0)


def test_instances_carry_features_and_end_with_eos(synth):
    inst = synth.make_instance(7)
    assert inst.source.features.shape == (16, 8)
    assert inst.reference[-1] == synth.eos
    assert len(inst.reference) == synth.reference_length(inst.source)


@pytest.mark.parametrize("bad", [{"vocab_size": 1}, {"source_len": 0}, {"feature_dim": 0},
                                 {"rate": 0}])
def test_invalid_spec(bad):
    with pytest.raises(InvalidSpec):
        make_synthetic(SyntheticSpec(**bad))


def test_synthetic_round_trip(tmp_path):
    model = make_synthetic(SyntheticSpec(seed=9, vocab_size=5))
    save_model(model, tmp_path / "s.json")
    again = load_model(tmp_path / "s.json")
    src = model.make_source(0)
    assert np.array_equal(model.step(src, (model.bos, 1)).logprobs,
                          again.step(src, (again.bos, 1)).logprobs)


def test_unknown_model_file():
    with pytest.raises(InvalidSpec):
        model_from_dict({"weights": []})


def test_table_shape_checked():
    out = StepOutput.from_probs([0.5, 0.5], [1.0])
    with pytest.raises(InvalidSpec):
        TableModel(3, 1, {}, out)
