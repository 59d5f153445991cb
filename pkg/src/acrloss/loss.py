"""ACR loss, its analytic derivative, and the L2 baseline.

Per-element loss for error ``d`` and hardness ``phi``::

    lam * ln(1 + d**(2 - phi))   if d <= threshold
    d**2 + C                     otherwise

with ``C = lam * ln(2) - 1`` so both pieces meet at ``d = 1``. Setting
``continuity="printed"`` uses ``C = phi * ln(2) - 1`` instead, which is
discontinuous whenever ``phi != lam``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

LN2 = math.log(2.0)
TINY = 1e-300


@dataclass(frozen=True)
class AcrLossConfig:
    lam: float = 4.0
    delta_threshold: float = 1.0
    continuity: str = "lambda"  # or "printed"

    def __post_init__(self):
        if not self.lam > 0:
            raise InvalidInputError(f"lambda must be > 0, got {self.lam}")
        if not self.delta_threshold > 0:
            raise InvalidInputError(f"delta_threshold must be > 0, got {self.delta_threshold}")
        if self.continuity not in ("lambda", "printed"):
            raise InvalidInputError(f"unknown continuity policy {self.continuity!r}")


@dataclass
class LossReport:
    total: float
    per_element: np.ndarray
    branch_taken: np.ndarray  # "log" / "quad" per element; "quad" for every L2 element


def delta(face, pred) -> np.ndarray:
    face = np.asarray(face, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if face.shape != pred.shape:
        raise InvalidInputError(f"face {face.shape} and prediction {pred.shape} differ in shape")
    return np.abs(face - pred)


def _check_domain(d, phi):
    if np.any(~np.isfinite(d)) or np.any(d < 0):
        raise InvalidInputError("errors must be finite and non-negative")
    if np.any(~np.isfinite(phi)) or np.any((phi < 0) | (phi > 1)):
        raise InvalidInputError("hardness weights must lie in [0, 1]")


def _pow(d, p):
    # d**p with d below 1e-300 treated as exactly 0 (p > 0 always here)
    safe = np.where(d > TINY, d, 1.0)
    return np.where(d > TINY, np.exp(p * np.log(safe)), 0.0)


def continuity_constant(phi, cfg: AcrLossConfig):
    if cfg.continuity == "printed":
        return np.asarray(phi, dtype=np.float64) * LN2 - 1.0
    return cfg.lam * LN2 - 1.0


def acr_loss_values(d, phi, cfg: AcrLossConfig) -> np.ndarray:
    """Vectorised per-element ACR loss; ``d`` and ``phi`` broadcast."""
    d, phi = np.broadcast_arrays(np.asarray(d, dtype=np.float64), np.asarray(phi, dtype=np.float64))
    _check_domain(d, phi)
    log_branch = cfg.lam * np.log1p(_pow(d, 2.0 - phi))
    quad_branch = d * d + continuity_constant(phi, cfg)
    return np.where(d <= cfg.delta_threshold, log_branch, quad_branch)


def acr_grad_values(d, phi, cfg: AcrLossConfig) -> np.ndarray:
    """Vectorised derivative of the per-element loss with respect to ``d`` (non-negative)."""
    d, phi = np.broadcast_arrays(np.asarray(d, dtype=np.float64), np.asarray(phi, dtype=np.float64))
    _check_domain(d, phi)
    pos = d > TINY
    safe_d = np.where(pos, d, 1.0)
    log_grad = cfg.lam * (2.0 - phi) * safe_d / (_pow(safe_d, phi) + safe_d * safe_d)
    # limit at d -> 0: lam when phi == 1, 0 below
    at_zero = np.where(phi >= 1.0, cfg.lam, 0.0)
    log_grad = np.where(pos, log_grad, at_zero)
    return np.where(d <= cfg.delta_threshold, log_grad, 2.0 * d)


def acr_loss_elem(d: float, phi: float, cfg: AcrLossConfig) -> float:
    return float(acr_loss_values(d, phi, cfg))


def acr_grad_elem(d: float, phi: float, cfg: AcrLossConfig) -> float:
    return float(acr_grad_values(d, phi, cfg))


def _stack(items, name):
    arr = np.asarray(items, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be a list of coordinate vectors")
    return arr


def acr_loss_batch(faces, preds, phis, cfg: AcrLossConfig) -> LossReport:
    """Mean ACR loss over all ``N * D`` elements."""
    faces, preds, phis = _stack(faces, "faces"), _stack(preds, "preds"), _stack(phis, "phis")
    if not (faces.shape == preds.shape == phis.shape):
        raise InvalidInputError(
            f"faces {faces.shape}, preds {preds.shape} and phis {phis.shape} must match"
        )
    d = delta(faces, preds)
    per = acr_loss_values(d, phis, cfg)
    branch = np.where(d <= cfg.delta_threshold, "log", "quad")
    return LossReport(float(per.mean()), per, branch)


def acr_batch_grad(faces, preds, phis, cfg: AcrLossConfig) -> np.ndarray:
    """Gradient of the batch-mean ACR loss with respect to ``preds``."""
    faces, preds, phis = _stack(faces, "faces"), _stack(preds, "preds"), _stack(phis, "phis")
    d = delta(faces, preds)
    return np.sign(preds - faces) * acr_grad_values(d, phis, cfg) / faces.size


def l2_loss_batch(faces, preds) -> LossReport:
    faces, preds = _stack(faces, "faces"), _stack(preds, "preds")
    if faces.shape != preds.shape:
        raise InvalidInputError(f"faces {faces.shape} and preds {preds.shape} must match")
    per = (preds - faces) ** 2
    return LossReport(float(per.mean()), per, np.full(per.shape, "quad"))


def l2_batch_grad(faces, preds) -> np.ndarray:
    faces, preds = _stack(faces, "faces"), _stack(preds, "preds")
    return 2.0 * (preds - faces) / faces.size
