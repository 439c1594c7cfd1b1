"""Run configuration shared by the CLI commands.

A run is described by one JSON document. Every field has a default, so an
empty file (or no file) is a valid configuration. Unknown keys are rejected
so that typos fail loudly instead of silently falling back to defaults.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from .architectures import ModelKind
from .data.synthetic import SyntheticParams
from .data.windows import DEFAULT_SPLITS
from .errors import ConfigError
from .training import TrainConfig

DEFAULTS = {
    "seed": 0,
    "data": {
        # both paths are relative to --out unless absolute
        "tem_dir": "data/tem",
        "text_path": "data/text.csv",
        # source ids never used for training; evaluated as the unseen population
        "unseen_sources": None,
    },
    "synth": {
        "days": 580,
        "seen": {"n_sources": 17, "params": {}},
        "unseen": {"n_sources": 0, "params": {"source_prefix": "U", "site_offset": 1.0}},
    },
    "splits": copy.deepcopy(DEFAULT_SPLITS),
    "stride": 1,
    "eval_stride": None,
    "kernel_size": 1,
    "models": [k.value for k in ModelKind],
    "training": {
        "default": {},
        "baseline": {"micro_batch": 64},
        "cnn-lstm": {},
        "cnn-bilstm": {},
    },
}


# option bags validated by their consumers; keys are merged shallowly without checks
_FREEFORM = {"params", "default"} | {k.value for k in ModelKind}


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and not isinstance(value, dict):
            raise ConfigError(f"config key {where!r} must be an object")
        if key in _FREEFORM:
            out[key] = {**base[key], **copy.deepcopy(value)}
        elif isinstance(base[key], dict) and key != "splits":
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


class RunConfig:
    """Validated view of a run configuration."""

    def __init__(self, raw: dict | None = None):
        raw = raw or {}
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        self.data = _merge(DEFAULTS, raw)
        self._validate()

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls(raw)

    def _validate(self):
        d = self.data
        if not isinstance(d["seed"], int):
            raise ConfigError("seed must be an integer")
        for key in ("stride", "kernel_size"):
            if not isinstance(d[key], int) or d[key] < 1:
                raise ConfigError(f"{key} must be a positive integer")
        if d["eval_stride"] is not None and (not isinstance(d["eval_stride"], int) or d["eval_stride"] < 1):
            raise ConfigError("eval_stride must be a positive integer or null")
        for name in ("train", "val", "test"):
            if name not in d["splits"]:
                raise ConfigError(f"splits.{name} is missing")
        for m in d["models"]:
            self.model_kind(m)
        for kind in ModelKind:
            self.train_config(kind)
        for pop in ("seen", "unseen"):
            self.synthetic_params(pop)
        if d["synth"]["days"] < 14:
            raise ConfigError(f"synthetic data needs at least 14 days, got {d['synth']['days']}")

    @staticmethod
    def model_kind(name) -> ModelKind:
        try:
            return ModelKind(name)
        except ValueError:
            raise ConfigError(f"unknown model {name!r}; choose from {[k.value for k in ModelKind]}") from None

    def __getitem__(self, key):
        return self.data[key]

    @property
    def seed(self) -> int:
        return self.data["seed"]

    def with_seed(self, seed: int | None) -> "RunConfig":
        if seed is None:
            return self
        raw = copy.deepcopy(self.data)
        raw["seed"] = seed
        return RunConfig(raw)

    @property
    def eval_stride(self) -> int:
        return self.data["eval_stride"] or self.data["stride"]

    def train_config(self, kind) -> TrainConfig:
        kind = ModelKind(kind)
        opts = dict(self.data["training"]["default"])
        opts.update(self.data["training"][kind.value])
        opts.setdefault("seed", self.seed)
        return TrainConfig.from_dict(opts)

    def synthetic_params(self, population: str) -> SyntheticParams:
        params = dict(self.data["synth"][population]["params"])
        if population == "unseen":
            params.setdefault("source_start", self.data["synth"]["seen"]["n_sources"] + 1)
        try:
            return SyntheticParams(**params)
        except TypeError as exc:
            raise ConfigError(f"synth.{population}.params: {exc}") from None

    def canonical(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()
