"""``gapfill`` command line: synth, prepare, train, fill and evaluate.

All commands share ``--config``, ``--seed`` and ``--out``; every output lands
under ``--out`` next to a manifest recording the config hash, seed and a
SHA-256 of each file written. Exit codes: 0 success, 2 config error,
3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .architectures import CONTEXT, DAY, Direction, GapFillModel, MeanPredictor, ModelKind, training_arrays
from .config import RunConfig
from .data import (
    FIFTEEN_MIN,
    FIVE_MIN,
    RawSeries,
    SampleSet,
    ScalerParams,
    fit_scaler,
    generate_synthetic,
    make_sample_set,
    read_series_csv,
    resample_15min,
    split_by_dates,
    write_series_csv,
)
from .errors import ConfigError, ContextError, DataError, GapfillError, MetricDomainError
from .metrics import evaluate as evaluate_metrics
from .metrics import mae, mape, mse, mstdr
from .training import train

log = logging.getLogger("gapfill")

SEEN, UNSEEN = "seen", "unseen"
PREPARED_SETS = (
    "six_to_one_onwards_train",
    "six_to_one_onwards_val",
    "six_to_one_backwards_train",
    "six_to_one_backwards_val",
    "thirteen_day_train",
    "thirteen_day_val",
    "test_seen",
    "test_unseen",
)


# ---------------------------------------------------------------- plumbing


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class Run:
    """Resolved config plus output directory for one command invocation."""

    def __init__(self, config: RunConfig, out: Path, command: str):
        self.config = config
        self.out = out
        self.command = command
        self.started = _dt.datetime.now(_dt.timezone.utc)
        self.artifacts: list[Path] = []
        self.inputs: list[Path] = []

    def path(self, *parts) -> Path:
        p = self.out.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def data_path(self, key: str) -> Path:
        p = Path(self.config["data"][key])
        return p if p.is_absolute() else self.out / p

    def wrote(self, path) -> Path:
        self.artifacts.append(Path(path))
        return Path(path)

    def write_manifest(self, name: str, extra: dict | None = None) -> Path:
        fingerprint = hashlib.sha256()
        for p in sorted(set(self.inputs)):
            fingerprint.update(f"{p.name}:{sha256_file(p)}\n".encode())
        manifest = {
            "command": self.command,
            "argv": sys.argv[1:],
            "version": __version__,
            "seed": self.config.seed,
            "config_sha256": self.config.digest(),
            "config": self.config.data,
            "dataset_fingerprint": fingerprint.hexdigest() if self.inputs else None,
            "started": self.started.isoformat(),
            "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "artifacts": {str(p.relative_to(self.out)): sha256_file(p) for p in self.artifacts},
        }
        manifest.update(extra or {})
        path = self.path("manifests", f"{name}.json")
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path


def load_series(path, source_id: str | None = None) -> RawSeries:
    """Read a sensor CSV and return it on the 15-minute grid.

    5-minute files are averaged into 15-minute buckets; files already at
    15-minute spacing are used as they are.
    """
    path = Path(path)
    raw = read_series_csv(path, source_id, step=FIVE_MIN)
    observed = raw.timestamps[~raw.gap_mask]
    if len(observed) > 1 and not np.any((observed - observed[0]) % FIFTEEN_MIN):
        return read_series_csv(path, source_id, step=FIFTEEN_MIN)
    return resample_15min(raw)


def _tem_files(run: Run) -> list[Path]:
    tem_dir = run.data_path("tem_dir")
    files = sorted(tem_dir.glob("*.csv"))
    if not files:
        raise DataError(f"no TEM CSV files in {tem_dir}")
    return files


def _unseen_ids(run: Run, all_ids) -> set:
    ids = run.config["data"]["unseen_sources"]
    if ids is None:
        pop_file = run.data_path("tem_dir").parent / "populations.json"
        ids = json.loads(pop_file.read_text())[UNSEEN] if pop_file.exists() else []
    missing = set(ids) - set(all_ids)
    if missing:
        raise ConfigError(f"unseen sources {sorted(missing)} have no TEM file")
    return set(ids)


def _load_set(run: Run, name: str) -> SampleSet:
    path = run.out / "prepared" / f"{name}.npz"
    if not path.exists():
        raise DataError(f"{path} not found; run 'gapfill prepare' first")
    run.inputs.append(path)
    return SampleSet.load(path)


def _load_scaler(run: Run) -> ScalerParams:
    path = run.out / "prepared" / "scaler.json"
    if not path.exists():
        raise DataError(f"{path} not found; run 'gapfill prepare' first")
    run.inputs.append(path)
    return ScalerParams.from_dict(json.loads(path.read_text()))


def _model_path(run: Run, kind: ModelKind) -> Path:
    return run.out / "models" / f"{kind.value}.gapf"


# ---------------------------------------------------------------- commands


def cmd_synth(run: Run, args) -> int:
    cfg = run.config
    days = cfg["synth"]["days"]
    seen, text = generate_synthetic(cfg.seed, cfg["synth"]["seen"]["n_sources"], days, cfg.synthetic_params(SEEN))
    unseen = []
    n_unseen = cfg["synth"]["unseen"]["n_sources"]
    if n_unseen:
        unseen, _ = generate_synthetic(cfg.seed, n_unseen, days, cfg.synthetic_params(UNSEEN))
    ids = [s.source_id for s in seen + unseen]
    if len(set(ids)) != len(ids):
        raise ConfigError("seen and unseen populations produce clashing source ids; change a source_prefix")
    tem_dir = run.data_path("tem_dir")
    tem_dir.mkdir(parents=True, exist_ok=True)
    for s in seen + unseen:
        run.wrote(write_series_csv(tem_dir / f"{s.source_id}.csv", s))
    text_path = run.data_path("text_path")
    text_path.parent.mkdir(parents=True, exist_ok=True)
    run.wrote(write_series_csv(text_path, text))
    pop_path = tem_dir.parent / "populations.json"
    populations = {SEEN: [s.source_id for s in seen], UNSEEN: [s.source_id for s in unseen]}
    pop_path.write_text(json.dumps(populations, indent=2) + "\n")
    run.wrote(pop_path)
    run.write_manifest("synth")
    print(f"wrote {len(seen)} seen + {len(unseen)} unseen TEM files and {text_path.name} to {tem_dir.parent}")
    return 0


def cmd_prepare(run: Run, args) -> int:
    cfg = run.config
    files = _tem_files(run)
    text_path = run.data_path("text_path")
    run.inputs.extend(files + [text_path])
    tem = [load_series(f) for f in files]
    text = load_series(text_path, "TEXT")
    unseen_ids = _unseen_ids(run, [s.source_id for s in tem])
    seen = [s for s in tem if s.source_id not in unseen_ids]
    unseen = [s for s in tem if s.source_id in unseen_ids]
    if not seen:
        raise DataError("no seen sources left to train on")
    splits = cfg["splits"]
    scaler = fit_scaler(seen, text, splits["train"])

    sets = {}
    for direction in ("onwards", "backwards"):
        pooled = make_sample_set(seen, text, "six_to_one", cfg["stride"], direction)
        tr, va, _ = split_by_dates(pooled, splits["train"], splits["val"], [])
        sets[f"six_to_one_{direction}_train"], sets[f"six_to_one_{direction}_val"] = tr, va
    pooled = make_sample_set(seen, text, "thirteen_day", cfg["stride"])
    sets["thirteen_day_train"], sets["thirteen_day_val"], _ = split_by_dates(pooled, splits["train"], splits["val"], [])
    for name, group in (("test_seen", seen), ("test_unseen", unseen)):
        if group:
            pooled = make_sample_set(group, text, "thirteen_day", cfg.eval_stride)
            sets[name] = split_by_dates(pooled, [], [], splits["test"])[2]
        else:
            sets[name] = SampleSet.empty("thirteen_day")
    for name in PREPARED_SETS:
        if name.endswith(("_train", "_val")) and len(sets[name]) == 0:
            raise DataError(f"{name} is empty; check the split date ranges against the data period")

    out = run.path("prepared", "scaler.json")
    out.write_text(json.dumps(scaler.to_dict(), indent=2) + "\n")
    run.wrote(out)
    for name in PREPARED_SETS:
        path = run.path("prepared", f"{name}.npz")
        sets[name].save(path)
        run.wrote(path)
    counts = {name: len(sets[name]) for name in PREPARED_SETS}
    run.write_manifest("prepare", {"sample_counts": counts, "unseen_sources": sorted(unseen_ids)})
    for name in PREPARED_SETS:
        print(f"{name:28s} {counts[name]:8d}")
    return 0


def cmd_train(run: Run, args) -> int:
    cfg = run.config
    kinds = [cfg.model_kind(m) for m in (args.model or cfg["models"])]
    scaler = _load_scaler(run)
    for kind in kinds:
        tcfg = cfg.train_config(kind)
        model = GapFillModel.build(kind, seed=cfg.seed, kernel_size=cfg["kernel_size"], scaler=scaler)
        summaries = {}
        for name, net in model.networks.items():
            prefix = "thirteen_day" if kind is ModelKind.CNN_BILSTM else f"six_to_one_{name}"
            tr = _load_set(run, f"{prefix}_train").scaled(scaler)
            va = _load_set(run, f"{prefix}_val").scaled(scaler)
            log.info("training %s/%s on %d samples (%d validation)", kind.value, name, len(tr), len(va))
            _, report = train(net, training_arrays(kind, tr), training_arrays(kind, va), tcfg)
            run.wrote(report.write_csv(run.path("models", f"{kind.value}_{name}_train.csv")))
            summaries[name] = {
                "epochs": report.epochs,
                "best_epoch": report.best_epoch,
                "best_val_mae": report.val_mae[report.best_epoch - 1],
                "stopped_early": report.stopped_early,
                "train_samples": len(tr),
                "val_samples": len(va),
                "wall_time_s": round(report.wall_time, 3),
            }
            print(
                f"{kind.value}/{name}: {report.epochs} epochs, best epoch {report.best_epoch}, "
                f"val MAE {summaries[name]['best_val_mae']:.5f}"
            )
        meta = {
            "config_sha256": cfg.digest(),
            "seed": cfg.seed,
            "parameters": model.count_parameters(),
            "train_config": tcfg.__dict__,
        }
        run.wrote(model.save(_model_path(run, kind), meta))
        run.write_manifest(f"train-{kind.value}", {"model_kind": kind.value, "training": summaries})
        run.artifacts = []
    return 0


def _predict_sets(model, test_sets: dict) -> dict:
    # one call over every population: the recursive baseline pays per call, not per sample
    if isinstance(model, MeanPredictor):
        return {pop: MeanPredictor.fit(s.target).predict(text=s.text_input) for pop, s in test_sets.items()}
    pooled = SampleSet.concat(list(test_sets.values()))
    preds = model.predict(pooled.tem_input[:, :CONTEXT], pooled.tem_input[:, CONTEXT:], pooled.text_input)
    bounds = np.cumsum([len(s) for s in test_sets.values()])[:-1]
    return dict(zip(test_sets, np.split(preds, bounds)))


def cmd_evaluate(run: Run, args) -> int:
    cfg = run.config
    test_sets = {SEEN: _load_set(run, "test_seen"), UNSEEN: _load_set(run, "test_unseen")}
    test_sets = {k: v for k, v in test_sets.items() if len(v)}
    if not test_sets:
        raise DataError("both test populations are empty")
    models = {}
    for m in args.model or cfg["models"]:
        kind = cfg.model_kind(m)
        path = _model_path(run, kind)
        if not path.exists():
            raise DataError(f"{path} not found; run 'gapfill train --model {kind.value}' first")
        run.inputs.append(path)
        models[kind.value] = GapFillModel.load(path)
    if args.mean_predictor:
        # per-step mean of each evaluated population: the null model of R²
        models["mean"] = MeanPredictor(np.zeros(DAY))

    results = {}
    rows = []
    for name, model in models.items():
        results[name] = {}
        for pop, preds in _predict_sets(model, test_sets).items():
            rep = evaluate_metrics(preds, test_sets[pop].target)
            results[name][pop] = rep.to_dict()
            run.wrote(rep.write_r2_csv(run.path("reports", f"r2_{name}_{pop}.csv")))
            rows.append([name, pop, rep.n_samples, rep.mse, rep.mae, rep.mape, rep.r2_mean, rep.mstdr])
    metrics_path = run.path("reports", "metrics.json")
    metrics_path.write_text(json.dumps({"models": results}, indent=2, sort_keys=True) + "\n")
    run.wrote(metrics_path)
    summary = run.path("reports", "summary.csv")
    with summary.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "population", "n_samples", "mse", "mae", "mape", "r2_mean", "mstdr"])
        w.writerows(rows)
    run.wrote(summary)
    run.write_manifest("evaluate")
    print(f"{'model':12s} {'population':10s} {'n':>5s} {'MSE':>9s} {'MAE':>9s} {'MAPE%':>8s} {'R2':>8s} {'MSTDR':>7s}")
    for r in rows:
        print(f"{r[0]:12s} {r[1]:10s} {r[2]:5d} {r[3]:9.4f} {r[4]:9.4f} {r[5]:8.3f} {r[6]:8.4f} {r[7]:7.4f}")
    return 0


def parse_gap(spec: str):
    """``source_id,start_timestamp`` with the start on the 15-minute grid."""
    try:
        source, stamp = (p.strip() for p in spec.split(",", 1))
        start = np.datetime64(stamp, "m")
        exact = np.datetime64(stamp)
    except ValueError:
        raise ConfigError(f"bad gap spec {spec!r}; expected source_id,start_timestamp") from None
    if not source:
        raise ConfigError(f"bad gap spec {spec!r}; missing source id")
    if exact != start or (start - start.astype("datetime64[D]")) % FIFTEEN_MIN:
        raise ConfigError(f"gap start {stamp} is not on the 15-minute grid")
    return source, start


def _window(series: RawSeries, start, length: int, what: str) -> np.ndarray:
    offset = (start - series.timestamps[0]) // FIFTEEN_MIN
    stop = offset + length
    if offset < 0 or stop > len(series):
        raise ContextError(f"{what} needs {length} steps from {start}, outside the recorded period")
    if series.gap_mask[offset:stop].any():
        raise ContextError(f"{what} has gaps between {start} and {series.timestamps[stop - 1]}")
    return series.values[offset:stop]


def cmd_fill(run: Run, args) -> int:
    cfg = run.config
    path = Path(args.model_file) if args.model_file else _model_path(run, cfg.model_kind(args.model))
    if not path.exists():
        raise DataError(f"model file {path} not found")
    run.inputs.append(path)
    model = GapFillModel.load(path)
    direction = Direction(args.direction)
    text_path = Path(args.text) if args.text else run.data_path("text_path")
    run.inputs.append(text_path)
    text = load_series(text_path, "TEXT")

    gaps: dict[str, list] = {}
    for spec in args.gap:
        source, start = parse_gap(spec)
        gaps.setdefault(source, []).append(start)
    reports = {}
    all_pred, all_true = [], []
    for source, starts in gaps.items():
        tem_path = Path(args.tem) if args.tem else run.data_path("tem_dir") / f"{source}.csv"
        if args.tem and len(gaps) > 1:
            raise ConfigError("--tem names one file but gaps span several sources")
        run.inputs.append(tem_path)
        series = load_series(tem_path, source)
        values, imputed = series.values.copy(), np.zeros(len(series), dtype=bool)
        truth = load_series(args.truth, source) if args.truth else None
        for start in sorted(starts):
            step = np.timedelta64(1, "m") * 15
            before = _window(series, start - CONTEXT * step, CONTEXT, f"{source}: context before the gap")
            after = _window(series, start + DAY * step, CONTEXT, f"{source}: context after the gap")
            text_full = _window(text, start - CONTEXT * step, 2 * CONTEXT + DAY, "TEXT context")
            offset = (start - series.timestamps[0]) // FIFTEEN_MIN
            use_before = direction is not Direction.BACKWARDS
            use_after = direction is not Direction.ONWARDS
            pred = model.predict(
                before[None] if use_before else None, after[None] if use_after else None, text_full[None], direction
            )[0]
            if not np.isfinite(pred).all():
                raise DataError(f"{source}: model produced non-finite values for the gap at {start}")
            day = slice(offset, offset + DAY)
            missing = series.gap_mask[day]
            values[day] = np.where(missing, pred, values[day])
            imputed[day] = missing
            if truth is not None:
                all_pred.append(pred)
                all_true.append(_window(truth, start, DAY, f"{source}: truth"))
        out_series = RawSeries(source, series.timestamps, values)
        run.wrote(write_series_csv(run.path("filled", f"{source}.csv"), out_series, decimals=6, flags=imputed))
        print(f"{source}: filled {int(imputed.sum())} steps over {len(starts)} gap day(s)")
    if all_pred:
        P, T = np.array(all_pred), np.array(all_true)
        reports = {"n_samples": len(P), "mse": mse(P, T), "mae": mae(P, T), "mape": mape(P, T), "mstdr": mstdr(P, T)}
        if len(P) >= 2:
            try:
                reports = evaluate_metrics(P, T).to_dict()
            except MetricDomainError as exc:
                # the fill itself is fine; only the across-gap R² is undefined
                log.warning("per-step R² not reported: %s", exc)
                reports["r2_undefined"] = str(exc)
        rp = run.path("reports", "fill_metrics.json")
        rp.write_text(json.dumps(reports, indent=2, sort_keys=True) + "\n")
        run.wrote(rp)
        print(f"against truth: MAE {reports['mae']:.4f}, MSE {reports['mse']:.4f}, MAPE {reports['mape']:.3f}%")
    run.write_manifest("fill", {"model_file": str(path), "direction": direction.value})
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "prepare": cmd_prepare,
    "train": cmd_train,
    "fill": cmd_fill,
    "evaluate": cmd_evaluate,
}


# ---------------------------------------------------------------- parser


def _global_options(defaults: bool) -> argparse.ArgumentParser:
    # parsed both before and after the subcommand; the sub-level copy must not clobber
    kw = {} if defaults else {"default": argparse.SUPPRESS}
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", type=Path, help="JSON run configuration", **({"default": None} if defaults else kw))
    g.add_argument("--seed", type=int, help="override the config seed", **({"default": None} if defaults else kw))
    g.add_argument("--out", type=Path, help="output directory", **({"default": Path("gapfill-out")} if defaults else kw))
    g.add_argument("-v", "--verbose", action="store_true", help="log progress", **({"default": False} if defaults else kw))
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gapfill",
        description="Fill day-long gaps in indoor temperature series with deep forecasting models.",
        parents=[_global_options(True)],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = [_global_options(False)]
    models = [k.value for k in ModelKind]

    sub.add_parser("synth", parents=common, help="generate a synthetic dataset")
    sub.add_parser("prepare", parents=common, help="resample, scale, window and split the dataset")

    p = sub.add_parser("train", parents=common, help="train one or more models")
    p.add_argument("--model", action="append", choices=models, help="model to train (repeatable; default: config models)")

    p = sub.add_parser("fill", parents=common, help="fill gap days in a TEM series")
    p.add_argument("--gap", action="append", required=True, metavar="SOURCE,START", help="gap day to fill (repeatable)")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--model", choices=models, default="cnn-bilstm", help="trained model under OUT/models")
    src.add_argument("--model-file", help="explicit model file")
    p.add_argument("--direction", choices=[d.value for d in Direction], default="combined")
    p.add_argument("--tem", help="TEM CSV (default: the configured TEM directory / SOURCE.csv)")
    p.add_argument("--text", help="TEXT CSV (default: the configured TEXT path)")
    p.add_argument("--truth", help="CSV with the true values of the gap days, for scoring")

    p = sub.add_parser("evaluate", parents=common, help="score trained models on the test populations")
    p.add_argument("--model", action="append", choices=models, help="model to evaluate (repeatable; default: config models)")
    p.add_argument("--mean-predictor", action="store_true", help="also score the per-step mean of each test population")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = RunConfig.from_file(args.config) if args.config else RunConfig()
        config = config.with_seed(args.seed)
        run = Run(config, Path(args.out), args.command)
        return COMMANDS[args.command](run, args)
    except GapfillError as exc:
        print(f"gapfill {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, RuntimeError) as exc:
        code = getattr(exc, "exit_code", None)
        if code is None:
            raise
        print(f"gapfill {args.command}: error: {exc}", file=sys.stderr)
        return code
    except OSError as exc:
        print(f"gapfill {args.command}: error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
