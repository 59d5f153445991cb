"""Small numpy regressors trained with ACR or L2 loss under Adam.

The regressor maps a feature vector to a flattened face. Gradients are
written out by hand; there is no autodiff.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidInputError, NumericalError, ParseError
from .hardness import hardness_weights
from .loss import AcrLossConfig, acr_batch_grad, acr_loss_values, delta
from .metrics import normalized_errors
from .shape_model import DEFAULT_SCHEDULE, EigFractionSchedule, ShapeModel, fraction_for_epoch, smooth_faces

log = logging.getLogger(__name__)

SNAPSHOT_FORMAT = "acr-regressor"
SNAPSHOT_VERSION = 1
ARCHITECTURES = ("linear", "mlp")


@dataclass
class RegressorModel:
    arch: str
    params: dict[str, np.ndarray]
    input_dim: int
    output_dim: int
    hidden_dim: int = 0

    def copy(self) -> "RegressorModel":
        return replace(self, params={k: v.copy() for k, v in self.params.items()})

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        if self.arch == "linear":
            return {"W": (self.output_dim, self.input_dim), "b": (self.output_dim,)}
        return {
            "W1": (self.hidden_dim, self.input_dim),
            "b1": (self.hidden_dim,),
            "W2": (self.output_dim, self.hidden_dim),
            "b2": (self.output_dim,),
        }


def init_regressor(arch: str, input_dim: int, output_dim: int, hidden_dim: int = 64,
                   seed: int = 0) -> RegressorModel:
    """Glorot-uniform weights, zero biases."""
    if arch not in ARCHITECTURES:
        raise InvalidInputError(f"unknown architecture {arch!r}")
    if input_dim < 1 or output_dim < 1 or (arch == "mlp" and hidden_dim < 1):
        raise InvalidInputError("layer sizes must be positive")
    rng = np.random.default_rng(seed)
    model = RegressorModel(arch, {}, input_dim, output_dim, hidden_dim if arch == "mlp" else 0)
    for name, shape in model.param_shapes().items():
        if len(shape) == 2:
            limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            model.params[name] = rng.uniform(-limit, limit, size=shape)
        else:
            model.params[name] = np.zeros(shape)
    return model


def _as_batch(features, dim):
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise InvalidInputError(f"features must have {dim} columns, got shape {np.shape(features)}")
    return x, single


def forward(model: RegressorModel, features) -> np.ndarray:
    """Predicted face(s); accepts one feature vector or an ``N x F`` batch. Not clipped."""
    x, single = _as_batch(features, model.input_dim)
    p = model.params
    if model.arch == "linear":
        y = x @ p["W"].T + p["b"]
    else:
        y = np.tanh(x @ p["W1"].T + p["b1"]) @ p["W2"].T + p["b2"]
    return y[0] if single else y


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-5
    decay_mode: str = "weight"  # "weight": L2 term on gradients; "lr": exponential lr decay
    batch_size: int = 32
    loss_kind: str = "acr"
    lam: float = 4.0
    continuity: str = "lambda"
    hardness_mode: str = "element"
    schedule: EigFractionSchedule = DEFAULT_SCHEDULE
    seed: int = 0
    normalization: str = "inter-ocular"
    eye_indices: tuple | None = None

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise InvalidInputError("; ".join(problems))

    def problems(self) -> list[str]:
        out = []
        if self.epochs < 1:
            out.append(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate < 0:
            out.append(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            out.append("beta1 and beta2 must be in [0, 1)")
        if self.eps <= 0:
            out.append("eps must be > 0")
        if self.weight_decay < 0:
            out.append("weight_decay must be >= 0")
        if self.decay_mode not in ("weight", "lr"):
            out.append(f"decay_mode must be 'weight' or 'lr', got {self.decay_mode!r}")
        if self.batch_size < 1:
            out.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.loss_kind not in ("acr", "l2"):
            out.append(f"loss must be 'acr' or 'l2', got {self.loss_kind!r}")
        if not self.lam > 0:
            out.append(f"lambda must be > 0, got {self.lam}")
        if not self.schedule.buckets:
            out.append("schedule is empty")
        return out

    @property
    def loss_config(self) -> AcrLossConfig:
        return AcrLossConfig(lam=self.lam, continuity=self.continuity)


def batch_loss(model: RegressorModel, features, targets, phis, cfg: TrainConfig) -> float:
    pred = forward(model, features)
    targets = np.atleast_2d(targets)
    if cfg.loss_kind == "l2":
        return float(np.mean((pred - targets) ** 2))
    return float(np.mean(acr_loss_values(delta(targets, pred), np.atleast_2d(phis), cfg.loss_config)))


def backward(model: RegressorModel, features, targets, phis, cfg: TrainConfig):
    """Gradients of the batch-mean loss with respect to every parameter.

    Returns ``(grads, loss)``. ``phis`` is ignored for L2.
    """
    x, _ = _as_batch(features, model.input_dim)
    t = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if t.shape != (x.shape[0], model.output_dim):
        raise InvalidInputError(f"targets must be {x.shape[0]} x {model.output_dim}, got {t.shape}")
    p = model.params
    if model.arch == "linear":
        hidden = x
        pred = x @ p["W"].T + p["b"]
    else:
        hidden = np.tanh(x @ p["W1"].T + p["b1"])
        pred = hidden @ p["W2"].T + p["b2"]

    if cfg.loss_kind == "l2":
        loss = float(np.mean((pred - t) ** 2))
        g_out = 2.0 * (pred - t) / t.size
    else:
        phis = np.atleast_2d(np.asarray(phis, dtype=np.float64))
        if phis.shape != t.shape:
            raise InvalidInputError(f"hardness weights {phis.shape} do not match targets {t.shape}")
        lcfg = cfg.loss_config
        loss = float(np.mean(acr_loss_values(delta(t, pred), phis, lcfg)))
        g_out = acr_batch_grad(t, pred, phis, lcfg)

    if model.arch == "linear":
        grads = {"W": g_out.T @ x, "b": g_out.sum(axis=0)}
    else:
        g_hidden = (g_out @ p["W2"]) * (1.0 - hidden * hidden)
        grads = {
            "W2": g_out.T @ hidden,
            "b2": g_out.sum(axis=0),
            "W1": g_hidden.T @ x,
            "b1": g_hidden.sum(axis=0),
        }
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {name} (loss={loss})")
    return grads, loss


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls({k: np.zeros_like(a) for k, a in params.items()},
                   {k: np.zeros_like(a) for k, a in params.items()}, 0)


def adam_step(params, grads, state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam update; returns new ``(params, state)``."""
    t = state.t + 1
    lr = cfg.learning_rate
    if cfg.decay_mode == "lr":
        lr = lr * math.exp(-cfg.weight_decay * (t - 1))
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for k, w in params.items():
        g = grads[k]
        if g.shape != w.shape:
            raise InvalidInputError(f"gradient for {k} has shape {g.shape}, parameter {w.shape}")
        if cfg.decay_mode == "weight" and cfg.weight_decay:
            g = g + cfg.weight_decay * w
        m = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g
        new_params[k] = w - lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        new_m[k], new_v[k] = m, v
    return new_params, AdamState(new_m, new_v, t)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    eval_nme: float
    active_fraction: float


@dataclass
class TrainTrace:
    records: list[EpochRecord]
    model: RegressorModel
    phi_recomputations: int = 0
    log: list[str] = field(default_factory=list, repr=False)

    def to_csv(self) -> str:
        rows = ["epoch,train_loss,eval_nme,active_fraction"]
        rows += [f"{r.epoch},{r.train_loss:.17g},{r.eval_nme:.17g},{r.active_fraction:.17g}"
                 for r in self.records]
        return "\n".join(rows) + "\n"


def train(dataset, model_init: RegressorModel, cfg: TrainConfig,
          shape_model: ShapeModel | None = None, eval_set=None) -> TrainTrace:
    """Mini-batch Adam training with the eigenvector-fraction schedule.

    For ACR, Smooth-Faces and hardness weights of the training targets are
    recomputed each time the scheduled fraction changes. ``eval_set``
    defaults to the training set and feeds the per-epoch NME column.
    """
    x = np.asarray(dataset.features, dtype=np.float64)
    y = np.asarray(dataset.targets, dtype=np.float64)
    if len(y) == 0:
        raise InvalidInputError("empty training set")
    if x.shape[0] != y.shape[0]:
        raise InvalidInputError("features and targets differ in sample count")
    if cfg.loss_kind == "acr":
        if shape_model is None:
            raise InvalidInputError("ACR training needs a fitted shape model")
        if shape_model.dim != y.shape[1]:
            raise InvalidInputError(f"shape model has D={shape_model.dim}, targets have {y.shape[1]}")
    eval_set = dataset if eval_set is None else eval_set

    model = model_init.copy()
    state = AdamState.zeros_like(model.params)
    rng = np.random.default_rng(cfg.seed)
    n = len(y)
    phis = None
    current_fraction = None
    recomputations = 0
    records = []
    for epoch in range(cfg.epochs):
        if cfg.loss_kind == "acr":
            fraction = fraction_for_epoch(cfg.schedule, epoch)
            if fraction != current_fraction:
                smooth = smooth_faces(shape_model, y, fraction)
                phis = hardness_weights(y, smooth, mode=cfg.hardness_mode)
                current_fraction = fraction
                recomputations += 1
        else:
            fraction = float("nan")
        order = rng.permutation(n)
        total = 0.0
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            try:
                grads, loss = backward(model, x[idx], y[idx], None if phis is None else phis[idx], cfg)
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch}, batch {bi}: {exc}") from exc
            if not math.isfinite(loss):
                raise NumericalError(f"epoch {epoch}, batch {bi}: non-finite loss {loss}")
            total += loss * len(idx)
            model.params, state = adam_step(model.params, grads, state, cfg)
        pred = forward(model, eval_set.features)
        nme = float(np.mean(normalized_errors(eval_set.targets, pred, cfg.normalization,
                                              eye_indices=cfg.eye_indices)))
        records.append(EpochRecord(epoch, total / n, nme, fraction))
        log.debug("epoch %d loss %.6g nme %.6g fraction %s", epoch, total / n, nme, fraction)
    return TrainTrace(records, model.copy(), recomputations)


def _fmt(values) -> str:
    return "[" + ", ".join(format(float(v), ".17g") for v in np.ravel(values)) + "]"


def regressor_to_text(model: RegressorModel) -> str:
    """Versioned JSON snapshot; arrays row-major at 17 significant digits."""
    lines = [
        "{",
        f'  "format": "{SNAPSHOT_FORMAT}",',
        f'  "version": {SNAPSHOT_VERSION},',
        f'  "arch": "{model.arch}",',
        f'  "input_dim": {model.input_dim},',
        f'  "hidden_dim": {model.hidden_dim},',
        f'  "output_dim": {model.output_dim},',
        '  "params": {',
    ]
    names = list(model.param_shapes())
    for i, name in enumerate(names):
        comma = "," if i < len(names) - 1 else ""
        lines.append(f'    "{name}": {_fmt(model.params[name])}{comma}')
    lines += ["  }", "}"]
    return "\n".join(lines) + "\n"


def regressor_from_text(text: str, source: str | None = None) -> RegressorModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, source=source) from exc
    if doc.get("format") != SNAPSHOT_FORMAT or doc.get("version") != SNAPSHOT_VERSION:
        raise ParseError("not a supported regressor snapshot", source=source)
    try:
        model = RegressorModel(doc["arch"], {}, int(doc["input_dim"]), int(doc["output_dim"]),
                               int(doc["hidden_dim"]))
        for name, shape in model.param_shapes().items():
            arr = np.array(doc["params"][name], dtype=np.float64)
            if arr.size != math.prod(shape):
                raise ParseError(f"parameter {name} has {arr.size} values, expected {shape}", source=source)
            model.params[name] = arr.reshape(shape)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed regressor snapshot: {exc}", source=source) from exc
    return model


def save_regressor(model: RegressorModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(regressor_to_text(model))


def load_regressor(path) -> RegressorModel:
    with open(path, encoding="utf-8") as fh:
        return regressor_from_text(fh.read(), source=str(path))
