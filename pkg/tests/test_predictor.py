import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from global_aware.core import GlobalAttention, LengthMismatch, SourceDocument
from global_aware.model import teacher_forced_global_attention
from global_aware.predictor import (
    CORRUPTION_FLOOR,
    DimensionMismatch,
    EmptyDataset,
    MissingFeatures,
    PredictorParams,
    context_features,
    corrupt,
    init_for_dataset,
    init_params,
    load_params,
    loss,
    loss_and_gradient,
    predict,
    r2_score,
    save_params,
    train,
)


def source(n=4, d=3, seed=0):
    rng = np.random.default_rng(seed)
    return SourceDocument(tuple(range(n)), rng.standard_normal((n, d)))


def test_zero_params_give_ones():
    out = predict(PredictorParams(np.zeros(3), np.zeros(4)), source())
    assert np.array_equal(out.values, np.ones(4)) and out.predicted_optimal_length == 4


def test_log_two_gives_two():
    src = SourceDocument((0, 1), np.zeros((2, 3)))
    out = predict(PredictorParams(np.ones(3), [math.log(2)]), src)
    assert np.allclose(out.values, 2.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.floats(-5, 5))
def test_predictions_positive(W, b):
    out = predict(PredictorParams(W, [b]), source())
    assert np.all(out.values > 0)
    assert abs(out.predicted_optimal_length - out.values.sum()) <= 1e-9


def test_predict_errors():
    with pytest.raises(MissingFeatures):
        predict(PredictorParams(np.zeros(3), [0.0]), SourceDocument((0, 1)))
    with pytest.raises(DimensionMismatch):
        predict(PredictorParams(np.zeros(2), [0.0]), source())
    with pytest.raises(DimensionMismatch):
        predict(PredictorParams(np.zeros(3), np.zeros(5)), source())


def test_loss_examples():
    assert loss([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert loss([1.0, 1.0], [0.0, 0.0]) == pytest.approx(1.41421, abs=5e-6)
    with pytest.raises(LengthMismatch):
        loss([1.0], [1.0, 2.0])


@pytest.mark.parametrize("per_position", [True, False])
@pytest.mark.parametrize("window", [0, 3])
def test_gradient_matches_finite_differences(per_position, window):
    rng = np.random.default_rng(1)
    src = source(6, 4, seed=2)
    g = rng.exponential(1.0, 6)
    params = PredictorParams(rng.normal(0, 0.5, 4), rng.normal(0, 0.5, 6 if per_position else 1),
                             context_window=window)
    _, dW, db = loss_and_gradient(params, src, g)
    h = 1e-4
    for name, grad in (("W", dW), ("b", db)):
        for i in range(grad.shape[0]):
            def at(delta):
                x = getattr(params, name).copy()
                x[i] += delta
                return loss(predict(params.replace(**{name: x}), src), g)

            fd = (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h)
            assert abs(fd - grad[i]) <= 1e-5 * max(abs(fd), 1e-8)


def test_zero_learning_rate_keeps_params(synth):
    data = [(synth.make_source(i), GlobalAttention(np.ones(16))) for i in range(3)]
    params = init_for_dataset(data, learning_rate=0.0, epochs=5)
    out = train(params, data)
    assert np.array_equal(out.W, params.W) and np.array_equal(out.b, params.b)
    assert len(out.loss_history) == 6


def _dataset(model, indices):
    data = []
    for i in indices:
        inst = model.make_instance(i)
        data.append((inst.source, teacher_forced_global_attention(model, inst.source,
                                                                  inst.reference)))
    return data


def test_training_reduces_loss_and_is_deterministic(synth):
    data = _dataset(synth, range(30))
    params = init_for_dataset(data, epochs=60)
    a, b = train(params, data), train(params, data)
    assert a.loss_history[-1] < 0.5 * a.loss_history[0]
    assert np.array_equal(a.W, b.W) and np.array_equal(a.b, b.b)


def test_bias_mode_follows_dataset_lengths():
    fixed = [(source(4), GlobalAttention(np.ones(4))), (source(4, seed=1), GlobalAttention(np.ones(4)))]
    assert init_for_dataset(fixed).b.shape == (4,)
    mixed = fixed + [(source(5), GlobalAttention(np.ones(5)))]
    assert init_for_dataset(mixed).b.shape == (1,)
    with pytest.raises(EmptyDataset):
        init_for_dataset([])
    with pytest.raises(EmptyDataset):
        train(init_params(3), [])


def test_context_features_window():
    feats = np.arange(10, dtype=float).reshape(5, 2)
    out = context_features(feats, 3)
    assert np.allclose(out[0], feats[:2].mean(axis=0))
    assert np.allclose(out[2], feats[1:4].mean(axis=0))
    assert context_features(feats, 0) is feats


def test_r2():
    assert r2_score([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0
    assert r2_score([1.0, 2.0, 3.0], [2.0, 2.0, 2.0]) == pytest.approx(0.0)


def test_corrupt():
    g = GlobalAttention([1.0, 0.01, 2.0])
    assert corrupt(g, 0.0, 1) == g
    noisy = corrupt(g, 5.0, 3)
    assert np.all(noisy.values >= CORRUPTION_FLOOR)
    assert corrupt(g, 0.5, 7) == corrupt(g, 0.5, 7)
    assert noisy.optimal_length == pytest.approx(noisy.values.sum())
    with pytest.raises(ValueError):
        corrupt(g, -1, 0)


def test_checkpoint_round_trip(tmp_path):
    params = init_params(3, 4, seed=2, context_window=3).replace(loss_history=(2.0, 1.0))
    path = tmp_path / "p.json"
    save_params(params, path)
    again = load_params(path)
    assert np.array_equal(again.W, params.W) and np.array_equal(again.b, params.b)
    assert again.context_window == 3 and again.loss_history == (2.0, 1.0)
