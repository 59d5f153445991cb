"""Experiment configuration: flat ``key = value`` files with ``#`` comments."""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .dataio import (
    Dataset,
    SyntheticDatasetSpec,
    base_shape_model,
    generate_synthetic,
    hard_point_scales,
    load_manifest_samples,
)
from .errors import ConfigError, InvalidInputError
from .shape_model import EigFractionSchedule, ShapeModel, fit_shape_model
from .trainer import TrainConfig


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"  # or "manifest"
    manifest: str | None = None
    n_points: int = 68
    base_samples: int = 400
    num_train: int = 500
    num_test: int = 200
    hard_fraction: float = 0.2
    hard_noise: float = 0.05
    easy_noise: float = 0.005
    occlusion_fraction: float = 0.1
    occlusion_scale: float = 0.1
    feature_noise: float = 0.0
    mixing: str = "random"
    data_seed: int | None = None  # defaults to the training seed


@dataclass(frozen=True)
class ExperimentConfig:
    label: str = "experiment"
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    architecture: str = "mlp"
    hidden_dim: int = 64
    out_dir: str | None = None

    @property
    def data_seed(self) -> int:
        return self.train.seed if self.data.data_seed is None else self.data.data_seed


def _indices(s):
    parts = [int(p) for p in s.replace(" ", "").split(",") if p]
    if len(parts) != 2:
        raise ValueError("expected two comma-separated point indices")
    return tuple(parts)


def _opt_int(s):
    return None if s.lower() in ("", "none") else int(s)


# config key -> (attribute, parser)
_TRAIN_KEYS = {
    "epochs": ("epochs", int),
    "learning_rate": ("learning_rate", float),
    "beta1": ("beta1", float),
    "beta2": ("beta2", float),
    "eps": ("eps", float),
    "weight_decay": ("weight_decay", float),
    "decay": ("weight_decay", float),
    "decay_mode": ("decay_mode", str),
    "batch_size": ("batch_size", int),
    "loss": ("loss_kind", str),
    "lambda": ("lam", float),
    "continuity": ("continuity", str),
    "hardness_mode": ("hardness_mode", str),
    "schedule": ("schedule", EigFractionSchedule.parse),
    "seed": ("seed", int),
    "normalization": ("normalization", str),
    "eye_indices": ("eye_indices", _indices),
}
_DATA_KEYS = {
    "dataset": ("source", str),
    "manifest": ("manifest", str),
    "n_points": ("n_points", int),
    "base_samples": ("base_samples", int),
    "num_train": ("num_train", int),
    "num_test": ("num_test", int),
    "hard_fraction": ("hard_fraction", float),
    "hard_noise": ("hard_noise", float),
    "easy_noise": ("easy_noise", float),
    "occlusion_fraction": ("occlusion_fraction", float),
    "occlusion_scale": ("occlusion_scale", float),
    "feature_noise": ("feature_noise", float),
    "mixing": ("mixing", str),
    "data_seed": ("data_seed", _opt_int),
}
_TOP_KEYS = {
    "label": ("label", str),
    "architecture": ("architecture", str),
    "hidden_dim": ("hidden_dim", int),
    "out": ("out_dir", str),
}


def parse_key_values(text: str, source: str = "<config>") -> dict[str, tuple[int, str]]:
    out = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{source}:{no}: expected 'key = value', got {raw.strip()!r}")
        key = key.strip().lower()
        if key in out:
            raise ConfigError(f"{source}:{no}: duplicate key {key!r}")
        out[key] = (no, value.strip())
    return out


def build_config(values: dict[str, tuple[int, str]], source: str = "<config>",
                 base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Turn parsed key/values into a validated config, reporting every problem at once."""
    base = base or ExperimentConfig()
    problems = []
    updates = {"train": {}, "data": {}, "top": {}}
    for key, (no, raw) in values.items():
        for section, table in (("train", _TRAIN_KEYS), ("data", _DATA_KEYS), ("top", _TOP_KEYS)):
            if key in table:
                attr, parse = table[key]
                try:
                    updates[section][attr] = parse(raw)
                except (ValueError, InvalidInputError) as exc:
                    problems.append(f"{source}:{no}: bad value for {key}: {exc}")
                break
        else:
            problems.append(f"{source}:{no}: unknown key {key!r}")
    return _finish(base, updates, problems, source)


def _finish(base, updates, problems, source):
    kwargs = {f.name: getattr(base.train, f.name) for f in fields(TrainConfig)}
    kwargs.update(updates["train"])
    train = None
    try:
        train = TrainConfig(**kwargs)
    except InvalidInputError as exc:
        problems += [f"{source}: {p}" for p in str(exc).split("; ")]
    data = replace(base.data, **updates["data"])
    top = {"label": base.label, "architecture": base.architecture,
           "hidden_dim": base.hidden_dim, "out_dir": base.out_dir}
    top.update(updates["top"])
    problems += [f"{source}: {p}" for p in _data_problems(data)]
    if not str(top["label"]).strip():
        problems.append(f"{source}: label must be nonempty")
    if top["architecture"] not in ("linear", "mlp"):
        problems.append(f"{source}: architecture must be 'linear' or 'mlp'")
    if top["hidden_dim"] < 1:
        problems.append(f"{source}: hidden_dim must be >= 1")
    if problems:
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(problems))
    return ExperimentConfig(train=train, data=data, **top)


def _data_problems(d: DataConfig) -> list[str]:
    out = []
    if d.source not in ("synthetic", "manifest"):
        out.append(f"dataset must be 'synthetic' or 'manifest', got {d.source!r}")
    if d.source == "manifest" and not d.manifest:
        out.append("dataset = manifest requires a 'manifest' path")
    if d.num_train < 2 or d.num_test < 1:
        out.append("need num_train >= 2 and num_test >= 1")
    if d.n_points < 2:
        out.append("n_points must be >= 2")
    if not 0 <= d.hard_fraction <= 1:
        out.append("hard_fraction must be in [0, 1]")
    if min(d.hard_noise, d.easy_noise, d.occlusion_scale, d.feature_noise) < 0:
        out.append("noise scales must be >= 0")
    if not 0 <= d.occlusion_fraction < 1:
        out.append("occlusion_fraction must be in [0, 1)")
    if d.mixing not in ("random", "identity"):
        out.append(f"mixing must be 'random' or 'identity', got {d.mixing!r}")
    return out


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    cfg = build_config(parse_key_values(text, str(path)), str(path))
    if cfg.data.manifest:
        cfg = replace(cfg, data=replace(cfg.data, manifest=resolve_path(path, cfg.data.manifest)))
    if cfg.out_dir:
        cfg = replace(cfg, out_dir=resolve_path(path, cfg.out_dir))
    return cfg


def with_overrides(cfg: ExperimentConfig, **train_overrides) -> ExperimentConfig:
    """Apply non-None training overrides (e.g. from CLI flags), revalidating."""
    kw = {k: v for k, v in train_overrides.items() if v is not None}
    if not kw:
        return cfg
    try:
        return replace(cfg, train=replace(cfg.train, **kw))
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc


def generator_model(cfg: ExperimentConfig) -> ShapeModel:
    """Shape model the synthetic faces are drawn from."""
    d = cfg.data
    if d.source == "manifest":
        return fit_shape_model(load_manifest_samples(d.manifest))
    return base_shape_model(d.n_points, d.base_samples, seed=0)


def build_datasets(cfg: ExperimentConfig) -> tuple[Dataset, Dataset, ShapeModel]:
    """Deterministic (train, test) split drawn in one pass from the generator model."""
    gen = generator_model(cfg)
    d = cfg.data
    seed = cfg.data_seed
    scales = hard_point_scales(gen.dim // 2, d.hard_fraction, d.hard_noise, d.easy_noise, seed=seed)
    spec = SyntheticDatasetSpec(
        num_samples=d.num_train + d.num_test,
        noise_scale_per_point=scales,
        occlusion_fraction=d.occlusion_fraction,
        occlusion_scale=d.occlusion_scale,
        feature_noise=d.feature_noise,
        mixing=d.mixing,
        mixing_seed=seed,
        seed=seed,
    )
    full = generate_synthetic(gen, spec)
    idx = np.arange(len(full))
    return full.subset(idx[: d.num_train]), full.subset(idx[d.num_train:]), gen


def resolve_path(cfg_path, value):
    if value is None or os.path.isabs(value):
        return value
    return os.path.join(os.path.dirname(os.path.abspath(cfg_path)), value)
