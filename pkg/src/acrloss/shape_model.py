"""Statistical shape model (ASM-style PCA) and Smooth-Face generation.

A face is a flat vector of ``D = 2P`` normalized coordinates laid out as
``x0, y0, x1, y1, ...``. The model stores the mean face, the covariance
eigenvectors as columns (descending eigenvalue order) and the eigenvalues.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InsufficientDataError, InvalidInputError, NumericalError, ParseError

FORMAT_NAME = "acr-shape-model"
FORMAT_VERSION = 1


def as_sample(face, name: str = "face") -> np.ndarray:
    """Validate and convert one flattened landmark vector."""
    arr = np.asarray(face, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be a 1-D coordinate vector, got shape {arr.shape}")
    if arr.size < 4 or arr.size % 2:
        raise InvalidInputError(f"{name} must have an even length >= 4, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class ShapeModel:
    mean_face: np.ndarray
    eigenvectors: np.ndarray  # D x K, orthonormal columns
    eigenvalues: np.ndarray  # K, non-increasing, >= 0
    num_training_samples: int

    def __post_init__(self):
        for arr in (self.mean_face, self.eigenvectors, self.eigenvalues):
            arr.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.mean_face.shape[0]

    @property
    def num_eigs(self) -> int:
        return self.eigenvalues.shape[0]

    def to_text(self) -> str:
        return shape_model_to_text(self)


def _sign_fix(vectors: np.ndarray) -> np.ndarray:
    # make the largest-magnitude entry of every column positive
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def fit_shape_model(samples: Sequence) -> ShapeModel:
    """Fit mean face and covariance eigenpairs (``N - 1`` divisor).

    The eigenpairs come from an SVD of the centred data matrix, which is
    equivalent to diagonalising the sample covariance but better conditioned.
    At most ``min(D, N - 1)`` eigenpairs are kept; zero-variance directions are
    retained with eigenvalue 0.
    """
    rows = list(samples)
    if len(rows) < 2:
        raise InsufficientDataError(f"need at least 2 samples to fit a shape model, got {len(rows)}")
    dims = {np.shape(r) for r in rows}
    if len(dims) != 1:
        raise InvalidInputError(f"samples have mismatched dimensions: {sorted(dims)}")
    data = np.stack([as_sample(r, "sample") for r in rows])
    n, d = data.shape
    mean = data.mean(axis=0)
    centred = data - mean
    try:
        _, s, vt = np.linalg.svd(centred, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    k = min(d, n - 1)
    eigenvalues = (s[:k] ** 2) / (n - 1)
    eigenvectors = _sign_fix(vt[:k].T.copy())
    if not (np.all(np.isfinite(eigenvalues)) and np.all(np.isfinite(eigenvectors))):
        raise NumericalError("eigendecomposition produced non-finite values")
    return ShapeModel(mean, eigenvectors, eigenvalues, n)


def project(model: ShapeModel, face, num_eigs: int) -> np.ndarray:
    """Shape coefficients ``b = V^T (face - mean)`` over the first ``num_eigs`` columns."""
    face = as_sample(face)
    if face.shape[0] != model.dim:
        raise InvalidInputError(f"face has {face.shape[0]} coordinates, model expects {model.dim}")
    if num_eigs < 0 or num_eigs > model.num_eigs:
        raise InvalidInputError(f"num_eigs={num_eigs} outside [0, {model.num_eigs}]")
    return model.eigenvectors[:, :num_eigs].T @ (face - model.mean_face)


def clamp_params(params, eigenvalues) -> np.ndarray:
    """Clamp each coefficient to ``+-3 sqrt(eigenvalue)``."""
    b = np.asarray(params, dtype=np.float64)
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if b.shape != lam.shape:
        raise InvalidInputError(f"params length {b.shape} does not match eigenvalues {lam.shape}")
    limit = 3.0 * np.sqrt(np.maximum(lam, 0.0))
    return np.clip(b, -limit, limit)


def reconstruct(model: ShapeModel, params) -> np.ndarray:
    b = np.asarray(params, dtype=np.float64)
    if b.ndim != 1 or b.shape[0] > model.num_eigs:
        raise InvalidInputError(f"params of shape {b.shape} do not fit a model with K={model.num_eigs}")
    return model.mean_face + model.eigenvectors[:, : b.shape[0]] @ b


def num_active_eigs(model: ShapeModel, fraction: float) -> int:
    if not 0.0 <= fraction <= 1.0:
        raise InvalidInputError(f"fraction must be in [0, 1], got {fraction}")
    # round half up; Python's round() would go to even
    return max(0, int(math.floor(fraction * model.num_eigs + 0.5)))


def smooth_face(model: ShapeModel, face, fraction: float) -> np.ndarray:
    """Mean face plus the clamped, truncated eigenvector expansion of ``face``.

    The result is not clipped to the unit square.
    """
    n = num_active_eigs(model, fraction)
    b = clamp_params(project(model, face, n), model.eigenvalues[:n])
    return reconstruct(model, b)


def smooth_faces(model: ShapeModel, faces, fraction: float) -> np.ndarray:
    """Vectorised :func:`smooth_face` over the rows of an ``N x D`` array."""
    faces = np.asarray(faces, dtype=np.float64)
    if faces.ndim != 2 or faces.shape[1] != model.dim:
        raise InvalidInputError(f"faces must be N x {model.dim}, got {faces.shape}")
    n = num_active_eigs(model, fraction)
    v = model.eigenvectors[:, :n]
    b = (faces - model.mean_face) @ v
    limit = 3.0 * np.sqrt(np.maximum(model.eigenvalues[:n], 0.0))
    b = np.clip(b, -limit, limit)
    return model.mean_face + b @ v.T


@dataclass(frozen=True)
class EigFractionSchedule:
    """Epoch buckets ``(last_epoch_inclusive, fraction)``."""

    buckets: tuple[tuple[int, float], ...]

    def __post_init__(self):
        buckets = tuple((int(e), float(f)) for e, f in self.buckets)
        object.__setattr__(self, "buckets", buckets)
        for (e0, f0), (e1, f1) in zip(buckets, buckets[1:]):
            if e1 <= e0:
                raise InvalidInputError("schedule epoch bounds must be strictly increasing")
            if f1 < f0:
                raise InvalidInputError("schedule fractions must be non-decreasing")
        for _, f in buckets:
            if not 0.0 < f <= 1.0:
                raise InvalidInputError(f"schedule fraction {f} outside (0, 1]")

    @classmethod
    def parse(cls, text: str) -> "EigFractionSchedule":
        """Parse ``"15:0.80, 30:0.85, ..."``."""
        buckets = []
        for item in text.split(","):
            item = item.strip()
            if not item:
                continue
            try:
                epoch, frac = item.split(":")
                buckets.append((int(epoch), float(frac)))
            except ValueError as exc:
                raise InvalidInputError(f"bad schedule entry {item!r}") from exc
        return cls(tuple(buckets))

    def format(self) -> str:
        return ",".join(f"{e}:{f:g}" for e, f in self.buckets)

    def bucket_index(self, epoch: int) -> int:
        if not self.buckets:
            raise InvalidInputError("empty eigenvector-fraction schedule")
        if epoch < 0:
            raise InvalidInputError(f"epoch must be >= 0, got {epoch}")
        for i, (bound, _) in enumerate(self.buckets):
            if epoch <= bound:
                return i
        return len(self.buckets) - 1


DEFAULT_SCHEDULE = EigFractionSchedule(
    ((15, 0.80), (30, 0.85), (70, 0.90), (100, 0.95), (150, 0.97))
)


def fraction_for_epoch(schedule: EigFractionSchedule, epoch: int) -> float:
    """Eigenvector fraction active at ``epoch``; past the last bound the last fraction holds."""
    return schedule.buckets[schedule.bucket_index(epoch)][1]


def _fmt(values) -> str:
    return "[" + ", ".join(format(float(v), ".17g") for v in np.ravel(values, order="F")) + "]"


def shape_model_to_text(model: ShapeModel) -> str:
    """Versioned JSON document; floats at 17 significant digits, eigenvectors column-major."""
    lines = [
        "{",
        f'  "format": "{FORMAT_NAME}",',
        f'  "version": {FORMAT_VERSION},',
        f'  "D": {model.dim},',
        f'  "K": {model.num_eigs},',
        f'  "num_training_samples": {model.num_training_samples},',
        f'  "mean_face": {_fmt(model.mean_face)},',
        f'  "eigenvalues": {_fmt(model.eigenvalues)},',
        f'  "eigenvectors": {_fmt(model.eigenvectors)}',
        "}",
    ]
    return "\n".join(lines) + "\n"


def shape_model_from_text(text: str, source: str | None = None) -> ShapeModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, source=source) from exc
    if doc.get("format") != FORMAT_NAME:
        raise ParseError(f"not a shape-model document (format={doc.get('format')!r})", source=source)
    if doc.get("version") != FORMAT_VERSION:
        raise ParseError(f"unsupported shape-model version {doc.get('version')!r}", source=source)
    try:
        d, k = int(doc["D"]), int(doc["K"])
        mean = np.array(doc["mean_face"], dtype=np.float64)
        lam = np.array(doc["eigenvalues"], dtype=np.float64)
        vecs = np.array(doc["eigenvectors"], dtype=np.float64)
        n = int(doc["num_training_samples"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed shape-model document: {exc}", source=source) from exc
    if mean.shape != (d,) or lam.shape != (k,) or vecs.shape != (d * k,):
        raise ParseError("array lengths do not match D and K", source=source)
    return ShapeModel(mean, vecs.reshape((d, k), order="F"), lam, n)


def save_shape_model(model: ShapeModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(shape_model_to_text(model))


def load_shape_model(path) -> ShapeModel:
    with open(path, encoding="utf-8") as fh:
        return shape_model_from_text(fh.read(), source=str(path))
