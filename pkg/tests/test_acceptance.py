"""Exit criteria. Each test carries ``acceptance(number, title)`` and the
conftest prints one PASS/FAIL line per criterion at the end of the run.

Criteria 7 to 9 drive the CLI end to end on the bundled configs and take
several minutes each on one CPU core.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from gapfill import metrics
from gapfill.architectures import (
    GapFillModel,
    baseline_spec,
    build_cnn_bilstm,
    build_cnn_lstm,
    cnn_bilstm_spec,
    cnn_lstm_spec,
    combine_linear,
    combine_sigmoid,
    sigmoid_weights,
    training_arrays,
)
from gapfill.cli import main
from gapfill.data import (
    SyntheticParams,
    WindowKind,
    fit_scaler,
    generate_synthetic,
    make_sample_set,
    make_windows,
    resample_15min,
)
from gapfill.engine import LayerKind
from gapfill.training import TrainConfig, evaluate_loss, train

import oracles
import published
from gradcheck import N_INSTANCES, SINGLE_INPUT_KINDS, TOL, check_layer, random_case, random_layer

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def cli(*argv):
    code = main([str(a) for a in argv])
    assert code == 0, f"gapfill {' '.join(map(str, argv))} exited with {code}"


def pipeline(config, out, *train_args):
    for cmd in ("synth", "prepare"):
        cli("--config", config, "--out", out, cmd)
    cli("--config", config, "--out", out, "train", *train_args)
    cli("--config", config, "--out", out, "evaluate", "--mean-predictor")
    return json.loads((out / "reports" / "metrics.json").read_text())["models"]


@pytest.mark.acceptance(1, "parameter counts match the published layer tables")
def test_criterion_1_parameter_counts(record_property):
    t0 = time.perf_counter()
    tables = [
        (baseline_spec(), published.BASELINE_ROWS, published.BASELINE_TOTAL),
        (cnn_lstm_spec(kernel_size=1), published.CNN_LSTM_ROWS, published.CNN_LSTM_TOTAL),
        (cnn_bilstm_spec(kernel_size=1), published.CNN_BILSTM_ROWS, published.CNN_BILSTM_TOTAL),
    ]
    for spec, rows, total in tables:
        assert published.table_rows(spec) == rows
        assert spec.count_parameters() == total
    elapsed = time.perf_counter() - t0
    record_property("detail", f"510,785 / 64,305 / 122,753 in {elapsed * 1000:.0f} ms")
    assert elapsed < 1.0


@pytest.mark.acceptance(2, "intermediate and output shapes")
def test_criterion_2_shapes():
    rng = np.random.default_rng(0)
    seen = {}
    y = build_cnn_lstm(seed=0).forward({"tem": rng.random((2, 576)), "text": rng.random((2, 672))}, intermediates=seen)
    assert seen["head/0"].shape[1:] == (624, 32)
    assert y.shape[1:] == (96, 1)
    seen = {}
    y = build_cnn_bilstm(seed=0).forward({"tem": rng.random((2, 1152)), "text": rng.random((2, 1248))}, intermediates=seen)
    assert seen["head/0"].shape[1:] == (1200, 32)
    assert seen["head/1"].shape[1:] == (1200, 32)
    assert y.shape[1:] == (96, 1)


@pytest.mark.acceptance(3, "analytic gradients match central differences")
def test_criterion_3_gradients(record_property):
    t0 = time.perf_counter()
    worst = {}
    for kind in SINGLE_INPUT_KINDS:
        for seed in range(N_INSTANCES):
            spec, x = random_case(kind, seed)
            layer = random_layer(spec, x.shape[1:], seed)
            errors = check_layer(layer, x, seed, fwd_rng_seed=seed if kind is LayerKind.DROPOUT else None)
            worst[kind.value] = max(worst.get(kind.value, 0.0), max(errors.values()))
    elapsed = time.perf_counter() - t0
    record_property("detail", f"worst relative error {max(worst.values()):.1e}, {elapsed:.1f} s")
    assert all(e < TOL for e in worst.values()), worst
    assert elapsed < 60


@pytest.mark.acceptance(4, "combination formulas")
def test_criterion_4_combination():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(2, 200))
        a, b = rng.normal(size=n) * 10, rng.normal(size=n) * 10
        z = combine_linear(a, b)
        assert z[0] == a[0] and z[-1] == b[-1]
    s = sigmoid_weights(96)
    assert np.max(np.abs(s + s[::-1] - 1.0)) <= 1e-12
    assert abs(s[0] - 1.0 / (1.0 + math.exp(6.0))) <= 1e-12
    f, b = rng.normal(size=96), rng.normal(size=96)
    np.testing.assert_allclose(combine_sigmoid(f, b), (1 - s) * f + s * b, rtol=0, atol=1e-15)


@pytest.mark.acceptance(5, "metrics match loop oracles and fixed points")
def test_criterion_5_metrics():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 12))
        T = rng.uniform(10, 30, size=(n, 96))
        P = T + rng.normal(0, rng.uniform(0.05, 3), size=T.shape)
        Pl, Tl = P.tolist(), T.tolist()
        for name in ("mse", "mae", "mape", "r2_mean", "mstdr"):
            got, want = getattr(metrics, name)(P, T), getattr(oracles, name)(Pl, Tl)
            assert abs(got - want) <= 1e-10 * max(1.0, abs(want)), (seed, name)
        assert np.max(np.abs(metrics.r2_per_step(P, T) - oracles.r2_per_step(Pl, Tl))) <= 1e-10
        assert np.max(np.abs(metrics.stdr(P, T) - [oracles.mstdr([p], [t]) for p, t in zip(Pl, Tl)])) <= 1e-10

        np.testing.assert_array_equal(metrics.r2_per_step(T, T), 1.0)
        mean_pred = np.tile(T.mean(axis=0), (n, 1))
        np.testing.assert_array_equal(metrics.r2_per_step(mean_pred, T), 0.0)
        constant = np.repeat(rng.uniform(10, 30, size=(n, 1)), 96, axis=1)
        np.testing.assert_array_equal(metrics.stdr(constant, T), 0.0)


@pytest.mark.acceptance(6, "window counts and gap exclusion")
def test_criterion_6_window_counts():
    tem, text = generate_synthetic(11, 1, 20, SyntheticParams(gap_rate=0.0))
    tem, text = resample_15min(tem[0]), resample_15min(text)
    L = len(tem)
    assert L == 20 * 96 and not tem.gap_mask.any() and not text.gap_mask.any()
    assert len(make_windows(tem, text, "six_to_one")) == L - 7 * 96 + 1
    assert len(make_windows(tem, text, "thirteen_day")) == L - 13 * 96 + 1

    rng = np.random.default_rng(3)
    for _ in range(10):
        pos, width = int(rng.integers(0, L)), int(rng.integers(1, 200))
        values = tem.values.copy()
        values[pos : pos + width] = np.nan
        holed = type(tem).regular(tem.source_id, tem.timestamps[0], tem.step, values)
        for kind in WindowKind:
            starts = np.arange(L - kind.span + 1)
            overlaps = (starts + kind.span > pos) & (starts < pos + width)
            full = make_windows(tem, text, kind)
            kept = make_windows(holed, text, kind)
            np.testing.assert_array_equal(kept.anchor, full.anchor[~overlaps])


@pytest.mark.acceptance(7, "CNN-BiLSTM overfits 10 samples and beats the mean predictor")
def test_criterion_7_learning_sanity(tmp_path, record_property):
    t0 = time.perf_counter()
    # (a) 10 samples, 500 epochs without early stopping; MAE measured in
    # inference mode on the same samples
    tem, text = generate_synthetic(0, 1, 30)
    tem, text = [resample_15min(s) for s in tem], resample_15min(text)
    samples = make_sample_set(tem, text, "thirteen_day", stride=97)
    samples = samples.take(np.arange(10)).scaled(fit_scaler(tem, text))
    net = GapFillModel.build("cnn-bilstm", seed=0).networks["bilstm"]
    data = training_arrays("cnn-bilstm", samples)
    train(net, data, data, TrainConfig(max_epochs=500, patience=None, batch_size=512, seed=0))
    overfit_mae = evaluate_loss(net, *data)[0]

    # (b) batch 512, patience 20 and at most 100 epochs on 60 synthetic days
    out = tmp_path / "learning"
    results = pipeline(CONFIGS / "learning_sanity.json", out, "--model", "cnn-bilstm")
    training = json.loads((out / "manifests" / "train-cnn-bilstm.json").read_text())["training"]["bilstm"]
    tcfg = GapFillModel.load(out / "models" / "cnn-bilstm.gapf").metadata["train_config"]
    elapsed = time.perf_counter() - t0

    model = results["cnn-bilstm"]
    record_property(
        "detail",
        f"overfit MAE {overfit_mae:.4f}; {training['epochs']} epochs; "
        f"R2 {model['seen']['r2_mean']:.3f}/{model['unseen']['r2_mean']:.3f}, "
        f"MSTDR {model['seen']['mstdr']:.3f}/{model['unseen']['mstdr']:.3f} (seen/unseen); {elapsed / 60:.1f} min",
    )
    assert overfit_mae < 0.01
    assert (tcfg["batch_size"], tcfg["patience"], tcfg["max_epochs"]) == (512, 20, 100)
    assert training["stopped_early"] or training["epochs"] == 100
    assert training["epochs"] <= 100
    for pop in ("seen", "unseen"):
        assert model[pop]["r2_mean"] > 0 and model[pop]["mstdr"] > 0.3
        assert model[pop]["r2_mean"] > results["mean"][pop]["r2_mean"]
    assert elapsed < 30 * 60


@pytest.mark.acceptance(8, "CNN-BiLSTM test MAE <= Baseline test MAE on the benchmark")
def test_criterion_8_model_ordering(tmp_path, record_property):
    results = pipeline(CONFIGS / "benchmark.json", tmp_path / "bench")
    bilstm, base = results["cnn-bilstm"], results["baseline"]
    record_property(
        "detail",
        f"seen MAE {bilstm['seen']['mae']:.4f} vs {base['seen']['mae']:.4f}, "
        f"unseen {bilstm['unseen']['mae']:.4f} vs {base['unseen']['mae']:.4f} (CNN-BiLSTM vs Baseline)",
    )
    assert bilstm["seen"]["mae"] <= base["seen"]["mae"]


@pytest.mark.acceptance(9, "identical train + evaluate runs give byte-identical reports")
def test_criterion_9_determinism(tmp_path):
    config = CONFIGS / "smoke.json"
    reports = []
    for name in ("first", "second"):
        out = tmp_path / name
        pipeline(config, out)
        reports.append((out / "reports" / "metrics.json").read_bytes())
    assert reports[0] == reports[1]
    assert json.loads(reports[0])["models"].keys() == {"baseline", "cnn-lstm", "cnn-bilstm", "mean"}
