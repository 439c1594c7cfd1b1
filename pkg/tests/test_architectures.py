import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gapfill.architectures import (
    DAY,
    Direction,
    GapFillModel,
    MeanPredictor,
    ModelKind,
    baseline_spec,
    build_cnn_bilstm,
    build_cnn_lstm,
    cnn_bilstm_spec,
    cnn_lstm_spec,
    combine_linear,
    combine_sigmoid,
    fill_gap,
    linear_weights,
    sigmoid_weights,
    training_arrays,
)
from gapfill.data import MinMaxScaler, SampleSet, ScalerParams
from gapfill.engine import serialize
from gapfill.errors import ConfigError, DataError, DimensionError, ModelFileError, UsageError

import published

SCALER = ScalerParams(MinMaxScaler(-4.0, 34.0), MinMaxScaler(-10.0, 40.0))


# ------------------------------------------------------------ parameter counts


@pytest.mark.parametrize(
    "spec_fn, rows, total",
    [
        (baseline_spec, published.BASELINE_ROWS, published.BASELINE_TOTAL),
        (cnn_lstm_spec, published.CNN_LSTM_ROWS, published.CNN_LSTM_TOTAL),
        (cnn_bilstm_spec, published.CNN_BILSTM_ROWS, published.CNN_BILSTM_TOTAL),
    ],
    ids=["baseline", "cnn-lstm", "cnn-bilstm"],
)
def test_layer_tables_reproduced(spec_fn, rows, total):
    spec = spec_fn()
    assert published.table_rows(spec) == rows
    assert spec.count_parameters() == total


def test_kernel_size_three_changes_conv_counts_only():
    spec = cnn_lstm_spec(kernel_size=3)
    convs = [r[3] for r in spec.layer_table() if r[1].kind.value == "Conv1D"]
    assert convs == [64, 1568, 64, 1568]
    assert spec.count_parameters() == published.CNN_LSTM_TOTAL + 2 * (64 - 32) + 2 * (1568 - 544)


def test_built_networks_count_like_their_specs():
    model = GapFillModel.build("cnn-lstm", seed=1)
    assert model.count_parameters() == {"onwards": 64_305, "backwards": 64_305}
    assert GapFillModel.build("cnn-bilstm").count_parameters() == {"bilstm": 122_753}


# ------------------------------------------------------------ shapes


def test_cnn_lstm_shapes():
    net = build_cnn_lstm(seed=0)
    seen = {}
    rng = np.random.default_rng(0)
    y = net.forward({"tem": rng.random((2, 576)), "text": rng.random((2, 672))}, intermediates=seen)
    assert seen["tem/4"].shape[1:] == (288, 32)
    assert seen["text/4"].shape[1:] == (336, 32)
    assert seen["head/0"].shape[1:] == (624, 32)
    assert y.shape == (2, 96, 1)


def test_cnn_bilstm_shapes():
    net = build_cnn_bilstm(seed=0)
    seen = {}
    rng = np.random.default_rng(0)
    y = net.forward({"tem": rng.random((1, 1152)), "text": rng.random((1, 1248))}, intermediates=seen)
    assert seen["head/0"].shape[1:] == (1200, 32)
    assert seen["head/1"].shape[1:] == (1200, 32)
    assert y.shape == (1, 96, 1)


def test_wrong_input_length_is_dimension_error():
    net = build_cnn_lstm()
    with pytest.raises(DimensionError, match="576"):
        net.forward({"tem": np.zeros((1, 575)), "text": np.zeros((1, 672))})


# ------------------------------------------------------------ combination rules


def test_linear_weights_examples():
    np.testing.assert_array_equal(combine_linear([1, 1, 1], [3, 3, 3]), [1.0, 2.0, 3.0])
    c = linear_weights(96)
    assert c[0] == 0.0 and c[-1] == 1.0
    assert np.all(np.diff(c) > 0)
    with pytest.raises(ValueError):
        linear_weights(1)


def test_combine_linear_matches_formula_and_endpoints():
    rng = np.random.default_rng(4)
    for _ in range(20):
        a, b = rng.normal(size=5), rng.normal(size=5)
        z = combine_linear(a, b)
        expected = [(1 - i / 4) * a[i] + (i / 4) * b[i] for i in range(5)]
        np.testing.assert_allclose(z, expected, rtol=0, atol=1e-15)
        assert z[0] == a[0] and z[-1] == b[-1]


def test_sigmoid_weights_properties():
    s = sigmoid_weights()
    assert s.shape == (96,)
    assert abs(s[0] - 1 / (1 + np.exp(6.0))) < 1e-12
    assert abs(s[0] - 0.002473) < 5e-7
    np.testing.assert_allclose(s + s[::-1], 1.0, rtol=0, atol=1e-12)
    assert np.all(np.diff(s) > 0)
    grid = -6 + np.arange(96) * 12 / 95
    np.testing.assert_allclose(s, 1 / (1 + np.exp(-grid)), rtol=0, atol=1e-15)


def test_combine_sigmoid_examples():
    rng = np.random.default_rng(1)
    f, b = rng.normal(size=96), rng.normal(size=96)
    p = combine_sigmoid(f, b)
    assert abs(p[0] - f[0]) <= 0.0025 * abs(b[0] - f[0])
    np.testing.assert_allclose(combine_sigmoid(f, f), f, rtol=4e-16, atol=0)
    with pytest.raises(DimensionError):
        combine_sigmoid(f[:95], b[:95])


finite = st.floats(-1e6, 1e6, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, 96, elements=finite), arrays(np.float64, 96, elements=finite))
def test_combinations_are_convex(f, b):
    lo, hi = np.minimum(f, b), np.maximum(f, b)
    slack = 1e-9 * (1 + np.abs(lo) + np.abs(hi))
    for z in (combine_linear(f, b), combine_sigmoid(f, b)):
        assert np.all(z >= lo - slack) and np.all(z <= hi + slack)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 200), st.data())
def test_combine_linear_identity_when_equal(n, data):
    a = data.draw(arrays(np.float64, n, elements=finite))
    np.testing.assert_allclose(combine_linear(a, a), a, rtol=1e-15, atol=1e-9)


# ------------------------------------------------------------ model behaviour


def _inputs(rng, n=2):
    return rng.random((n, 576)), rng.random((n, 576)), rng.random((n, 1248))


def test_backwards_direction_reverses_inputs_and_output():
    rng = np.random.default_rng(0)
    model = GapFillModel.build("cnn-lstm", seed=2)
    before, after, text = _inputs(rng)
    got = model.predict_scaled(None, after, text, "backwards")
    own = model.networks["backwards"].predict({"tem": after[:, ::-1], "text": text[:, 576:][:, ::-1]})[:, :, 0]
    np.testing.assert_array_equal(got, own[:, ::-1])


def test_mirrored_weights_give_mirrored_prediction():
    rng = np.random.default_rng(1)
    model = GapFillModel.build("cnn-lstm", seed=3)
    model.networks["backwards"].set_weights(model.networks["onwards"].get_weights())
    before, _, text_half = _inputs(rng, 1)
    # the 13-day picture mirrored around the gap day
    after = before[:, ::-1]
    head, day = text_half[:, :576], text_half[:, 576:624]
    text = np.concatenate([head, day, day[:, ::-1], head[:, ::-1]], axis=1)
    np.testing.assert_array_equal(text, text[:, ::-1])
    onwards = model.predict_scaled(before, None, text, "onwards")
    backwards = model.predict_scaled(None, after, text, "backwards")
    np.testing.assert_allclose(backwards, onwards[:, ::-1], rtol=0, atol=1e-6)


def test_combined_uses_sigmoid_weights():
    rng = np.random.default_rng(2)
    model = GapFillModel.build("cnn-lstm", seed=4)
    before, after, text = _inputs(rng)
    parts = {}
    combined = model.predict_scaled(before, after, text, "combined", parts)
    np.testing.assert_allclose(combined, combine_sigmoid(parts["onwards"], parts["backwards"]))
    assert np.all(np.abs(combined[:, 0] - parts["onwards"][:, 0]) <= 0.0025 * np.abs(parts["backwards"][:, 0] - parts["onwards"][:, 0]) + 1e-12)


def test_baseline_recursion_and_linear_combination():
    rng = np.random.default_rng(3)
    model = GapFillModel.build("baseline", seed=5)
    before, after, text = _inputs(rng, 1)
    parts = {}
    z = model.predict_scaled(before, after, text, "combined", parts)
    assert z.shape == (1, DAY)
    np.testing.assert_allclose(z, combine_linear(parts["onwards"], parts["backwards"]))
    # first onwards step is a single forward pass over the 576 preceding values
    first = model.networks["onwards"].predict({"tem": before})[0, 0, 0]
    assert parts["onwards"][0, 0] == pytest.approx(first, abs=1e-6)
    # second step sees the first prediction appended to the window
    window = np.concatenate([before[:, 1:], [[first]]], axis=1)
    second = model.networks["onwards"].predict({"tem": window})[0, 0, 0]
    assert parts["onwards"][0, 1] == pytest.approx(second, abs=1e-6)


def test_directions_per_kind():
    assert GapFillModel.build("cnn-bilstm").directions == (Direction.COMBINED,)
    assert len(GapFillModel.build("cnn-lstm").directions) == 3
    with pytest.raises(ConfigError):
        GapFillModel.build("cnn-bilstm").predict_scaled(*_inputs(np.random.default_rng(0)), direction="onwards")


def test_predict_validates_shapes():
    model = GapFillModel.build("cnn-lstm")
    rng = np.random.default_rng(0)
    before, after, text = _inputs(rng)
    with pytest.raises(DimensionError):
        model.predict_scaled(before, after, text[:, :-1])
    with pytest.raises(DimensionError):
        model.predict_scaled(None, after, text, "combined")


def test_fill_gap_requires_scaler_and_gap_free_context():
    model = GapFillModel.build("cnn-lstm")
    rng = np.random.default_rng(0)
    before, after, text = (20 + rng.random(576), 20 + rng.random(576), 10 + rng.random(1248))
    with pytest.raises(UsageError):
        fill_gap(model, before, after, text)
    model.scaler = SCALER
    pred = fill_gap(model, before, after, text)
    assert pred.values.shape == (96,) and np.isfinite(pred.values).all()
    np.testing.assert_allclose(pred.values, combine_sigmoid(pred.onwards, pred.backwards), atol=1e-9)
    np.testing.assert_array_equal(pred.weights, sigmoid_weights())
    before[10] = np.nan
    with pytest.raises(DataError):
        fill_gap(model, before, after, text)


def _pin_output(net, value):
    # zero the output kernel so the network emits its bias whatever the input
    params = net.parameters()
    last = [k for k in params if k.endswith("/kernel")][-1]
    params[last][...] = 0.0
    params[last.replace("kernel", "bias")][...] = SCALER.tem.transform(value)


@pytest.mark.parametrize("kind", ["baseline", "cnn-lstm", "cnn-bilstm"])
def test_fill_gap_returns_pinned_constant_in_degrees(kind):
    model = GapFillModel.build(kind, seed=0, scaler=SCALER)
    for net in model.networks.values():
        _pin_output(net, 20.0)
    rng = np.random.default_rng(1)
    pred = fill_gap(model, rng.uniform(15, 25, 576), rng.uniform(15, 25, 576), rng.uniform(0, 10, 1248))
    np.testing.assert_allclose(pred.values, 20.0, atol=1e-4)


@pytest.mark.parametrize("kind", ["baseline", "cnn-lstm"])
def test_fill_gap_blends_pinned_directions(kind):
    model = GapFillModel.build(kind, seed=0, scaler=SCALER)
    _pin_output(model.networks["onwards"], 18.0)
    _pin_output(model.networks["backwards"], 24.0)
    rng = np.random.default_rng(2)
    args = rng.uniform(15, 25, 576), rng.uniform(15, 25, 576), rng.uniform(0, 10, 1248)
    pred = fill_gap(model, *args)
    w = sigmoid_weights(96) if kind == "cnn-lstm" else linear_weights(96)
    np.testing.assert_allclose(pred.values, 18.0 * (1 - w) + 24.0 * w, atol=1e-4)
    np.testing.assert_allclose(pred.onwards, 18.0, atol=1e-4)
    np.testing.assert_allclose(pred.backwards, 24.0, atol=1e-4)
    np.testing.assert_allclose(fill_gap(model, args[0], None, args[2], "onwards").values, 18.0, atol=1e-4)
    np.testing.assert_allclose(fill_gap(model, None, args[1], args[2], "backwards").values, 24.0, atol=1e-4)


def test_training_arrays_checks_window_kind():
    s = SampleSet.empty("six_to_one")
    with pytest.raises(DataError):
        training_arrays(ModelKind.CNN_BILSTM, s)
    x, y = training_arrays("baseline", SampleSet.empty("six_to_one"))
    assert list(x) == ["tem"] and y.shape == (0, 1, 1)


def test_mean_predictor_repeats_step_means():
    t = np.arange(12.0).reshape(3, 4)
    m = MeanPredictor.fit(t)
    np.testing.assert_array_equal(m.predict(text=np.zeros((2, 1))), [[4, 5, 6, 7]] * 2)


# ------------------------------------------------------------ model files


def test_save_load_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    model = GapFillModel.build("cnn-lstm", seed=8, scaler=SCALER)
    before, after, text = _inputs(rng)
    expected = model.predict_scaled(before, after, text)
    path = model.save(tmp_path / "m.gapf", {"note": "x"})
    loaded = GapFillModel.load(path)
    assert loaded.kind is ModelKind.CNN_LSTM and loaded.scaler == SCALER
    assert loaded.metadata["note"] == "x"
    np.testing.assert_array_equal(loaded.predict_scaled(before, after, text), expected)
    for name, net in model.networks.items():
        for key, p in net.parameters().items():
            got = loaded.networks[name].parameters()[key]
            assert got.dtype == np.float32 and got.tobytes() == p.tobytes()
    assert path.read_bytes() == serialize.dumps(loaded.networks, loaded.metadata)


def test_corrupt_files_are_rejected():
    model = GapFillModel.build("cnn-bilstm", seed=1, scaler=SCALER)
    blob = serialize.dumps(model.networks, {"model_kind": "cnn-bilstm"})
    serialize.loads(blob)
    flipped = bytearray(blob)
    flipped[len(blob) // 2] ^= 0x01
    cases = {
        "checksum": bytes(flipped),
        "truncated": blob[:-100],
        "magic": b"XXXX" + blob[4:],
        "version": blob[:4] + bytes([9]) + blob[5:],
        "trailing": blob + b"\0",
        "empty": b"",
    }
    for name, data in cases.items():
        with pytest.raises(ModelFileError):
            serialize.loads(data)


def test_header_is_readable_json():
    model = GapFillModel.build("cnn-lstm", seed=1, scaler=SCALER)
    blob = serialize.dumps(model.networks, {"model_kind": "cnn-lstm"})
    head_len = int.from_bytes(blob[5:9], "little")
    import json

    header = json.loads(io.BytesIO(blob[9 : 9 + head_len]).read())
    assert [n["name"] for n in header["networks"]] == ["onwards", "backwards"]
    assert header["metadata"]["model_kind"] == "cnn-lstm"
    n_floats = sum(int(np.prod(p["shape"])) for n in header["networks"] for p in n["parameters"])
    assert n_floats == 2 * 64_305
    assert len(blob) == 9 + head_len + 4 * n_floats + 4
