import math

import numpy as np
import pytest

import yformer


def test_softmax_matches_closed_form():
    out = yformer.softmax(np.array([0.0, math.log(3.0)]))
    assert out == pytest.approx([0.25, 0.75], abs=1e-12)
    big = yformer.softmax(np.array([1000.0, 1000.0]))
    assert big.tolist() == [0.5, 0.5]


def test_softmax_rows_normalize():
    rng = np.random.default_rng(0)
    x = rng.uniform(-5, 5, size=(2, 4, 6))
    out = yformer.softmax(x, axis=2)
    np.testing.assert_allclose(out.sum(axis=2), 1.0, atol=1e-12)


def test_conv1d_identity_kernel_and_length():
    x = np.arange(5.0).reshape(1, 5, 1)
    w = np.array([0.0, 1.0, 0.0]).reshape(1, 1, 3)
    b = np.zeros(1)
    out = yformer.conv1d(x, w, b, stride=1, padding=1)
    np.testing.assert_array_equal(out, x)

    out2 = yformer.conv1d(x, w, b, stride=2, padding=1)
    assert out2.shape == (1, 3, 1)


def test_conv_transpose1d_doubles_length():
    x = np.zeros((1, 18, 1))
    w = np.ones((1, 1, 2))
    out = yformer.conv_transpose1d(x, w, np.zeros(1), stride=2, padding=0)
    assert out.shape == (1, 36, 1)


def test_maxpool_example():
    x = np.array([1.0, 3.0, 2.0, 5.0, 4.0]).reshape(1, 5, 1)
    out = yformer.maxpool1d(x, kernel_size=3, stride=2, padding=1)
    assert out.ravel().tolist() == [3.0, 5.0, 5.0]


def test_elu_negative_branch():
    out = yformer.elu(np.array([-1.0, 0.0, 2.0]))
    assert out[0] == pytest.approx(math.exp(-1) - 1, abs=1e-12)
    assert out[1] == 0.0
    assert out[2] == 2.0


def test_layer_norm_constant_rows_vanish():
    x = np.full((1, 3, 4), 7.5)
    out = yformer.layer_norm(x, np.ones(4), np.zeros(4))
    np.testing.assert_array_equal(out, np.zeros_like(x))


def test_positional_encoding_row0():
    table = yformer.positional_encoding(4, 6)
    np.testing.assert_allclose(table[0], [0, 1, 0, 1, 0, 1], atol=0)


def test_synth_deterministic():
    ts1, v1 = yformer.synth_series("sum-of-sines", 200, noise_sigma=0.1, seed=7)
    ts2, v2 = yformer.synth_series("sum-of-sines", 200, noise_sigma=0.1, seed=7)
    np.testing.assert_array_equal(v1, v2)
    np.testing.assert_array_equal(ts1, ts2)
    assert ts1[1] - ts1[0] == 3600


def test_time_features_shape_and_range():
    ts, _ = yformer.synth_series("sum-of-sines", 48, seed=1)
    feats = yformer.time_features(ts, spacing_seconds=3600)
    assert feats.shape == (48, 4)
    assert feats.min() >= -0.5 - 1e-12
    assert feats.max() <= 0.5 + 1e-12


def _random_input(rng, T, tau, time_features=4):
    past_values = rng.uniform(-1, 1, size=(2, T, 1))
    past_time = rng.uniform(-0.5, 0.5, size=(2, T, time_features))
    future_values = np.zeros((2, tau, 0))
    future_time = rng.uniform(-0.5, 0.5, size=(2, tau, time_features))
    return past_values, past_time, future_values, future_time


def test_model_forward_shapes_and_determinism():
    rng = np.random.default_rng(3)
    args = _random_input(rng, 16, 8)
    a = yformer.Yformer(history_len=16, horizon=8, d_model=8, n_heads=2, depth=2,
                        seed=5)
    b = yformer.Yformer(history_len=16, horizon=8, d_model=8, n_heads=2, depth=2,
                        seed=5)
    y_past, y_fut = a.forward(*args)
    assert y_past.shape == (2, 16, 1)
    assert y_fut.shape == (2, 8, 1)
    y_past2, y_fut2 = b.forward(*args)
    np.testing.assert_array_equal(y_fut, y_fut2)
    np.testing.assert_array_equal(y_past, y_past2)


def test_model_rejects_bad_shapes():
    model = yformer.Yformer(history_len=16, horizon=8, d_model=8, n_heads=2)
    with pytest.raises(ValueError):
        model.forward(np.zeros((1, 10, 1)), np.zeros((1, 10, 4)),
                      np.zeros((1, 8, 0)), np.zeros((1, 8, 4)))


def test_loss_endpoints():
    rng = np.random.default_rng(4)
    args = _random_input(rng, 16, 8)
    y_past = rng.uniform(-1, 1, size=(2, 16, 1))
    y_fut = rng.uniform(-1, 1, size=(2, 8, 1))

    m_fut_only = yformer.Yformer(history_len=16, horizon=8, d_model=8, n_heads=2,
                                 alpha=0.0, seed=9)
    hp, hf = m_fut_only.forward(*args)
    expected = float(np.mean((hf - y_fut) ** 2))
    assert m_fut_only.loss(*args, y_past, y_fut) == pytest.approx(expected,
                                                                  rel=1e-12)

    m_past_only = yformer.Yformer(history_len=16, horizon=8, d_model=8, n_heads=2,
                                  alpha=1.0, seed=9)
    hp, hf = m_past_only.forward(*args)
    expected = float(np.mean((hp - y_past) ** 2))
    assert m_past_only.loss(*args, y_past, y_fut) == pytest.approx(expected,
                                                                   rel=1e-12)


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    args = _random_input(rng, 16, 8)
    model = yformer.Yformer(history_len=16, horizon=8, d_model=8, n_heads=2,
                            seed=11)
    _, before = model.forward(*args)
    path = str(tmp_path / "ckpt.json")
    model.save_checkpoint(path)
    loaded = yformer.Yformer.load_checkpoint(path)
    _, after = loaded.forward(*args)
    np.testing.assert_array_equal(before, after)


def test_metrics_hand_values():
    truth = np.array([[[1.0], [3.0]]])
    pred = np.array([[[2.0], [2.0]]])
    mse, mae = yformer.forecast_metrics(truth, pred)
    assert mse == 1.0
    assert mae == 1.0


def test_presets_table():
    table = yformer.presets()
    assert len(table) == 40
    row = next(r for r in table
               if r["dataset"] == "ETTm1" and r["horizon"] == 288
               and r["setting"] == "univariate")
    assert row["learning_rate"] == 0.001
    assert row["alpha"] == 0.7
    assert row["batch_size"] == 16
    assert row["encoder_blocks"] == 2


def test_gradient_suite_quick():
    all_ok, lines = yformer.gradient_suite(seed=123)
    assert all_ok
    assert all(ok for _, _, ok in lines)
