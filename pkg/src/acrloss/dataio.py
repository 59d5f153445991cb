"""Landmark annotation I/O, coordinate normalization and synthetic datasets.

``.pts`` files follow the 300W layout::

    version: 1
    n_points: 68
    {
    x y
    ...
    }
"""
from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import InsufficientDataError, InvalidInputError, ParseError
from .shape_model import ShapeModel, fit_shape_model

log = logging.getLogger(__name__)


@dataclass
class AnnotatedFace:
    image_id: str
    raw_points: np.ndarray  # P x 2, pixels
    image_width: float
    image_height: float

    def __post_init__(self):
        self.raw_points = np.asarray(self.raw_points, dtype=np.float64).reshape(-1, 2)
        if self.raw_points.shape[0] == 0:
            raise InvalidInputError(f"{self.image_id}: no landmark points")


def parse_pts(text, source: str | None = None) -> list[tuple[float, float]]:
    """Parse a ``.pts`` document (str or bytes). Blank lines and CRLF are tolerated."""
    if isinstance(text, (bytes, bytearray)):
        text = text.decode("utf-8-sig")
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(no, ln) for no, ln in lines if ln]
    it = iter(lines)

    def expect(what):
        try:
            return next(it)
        except StopIteration:
            raise ParseError(f"unexpected end of file, expected {what}", source=source) from None

    no, ln = expect("'version:' header")
    key, _, value = ln.partition(":")
    if key.strip().lower() != "version" or not value.strip():
        raise ParseError(f"expected 'version:' header, got {ln!r}", line=no, source=source)

    no, ln = expect("'n_points:' header")
    key, _, value = ln.partition(":")
    if key.strip().lower() != "n_points":
        raise ParseError(f"expected 'n_points:' header, got {ln!r}", line=no, source=source)
    try:
        n_points = int(value.strip())
    except ValueError:
        raise ParseError(f"n_points is not an integer: {value.strip()!r}", line=no, source=source) from None
    if n_points <= 0:
        raise ParseError(f"n_points must be positive, got {n_points}", line=no, source=source)

    no, ln = expect("'{'")
    if ln != "{":
        raise ParseError(f"expected '{{', got {ln!r}", line=no, source=source)

    points = []
    while True:
        no, ln = expect("'}'")
        if ln == "}":
            break
        parts = ln.split()
        if len(parts) != 2:
            raise ParseError(f"expected 2 coordinates, got {len(parts)}: {ln!r}", line=no, source=source)
        try:
            x, y = float(parts[0]), float(parts[1])
        except ValueError:
            raise ParseError(f"non-numeric coordinate in {ln!r}", line=no, source=source) from None
        if not (np.isfinite(x) and np.isfinite(y)):
            raise ParseError(f"non-finite coordinate in {ln!r}", line=no, source=source)
        points.append((x, y))
    if len(points) != n_points:
        raise ParseError(
            f"point count mismatch: header says n_points={n_points}, found {len(points)}",
            line=no, source=source,
        )
    for no, ln in it:
        raise ParseError(f"unexpected content after '}}': {ln!r}", line=no, source=source)
    return points


def serialize_pts(points, version: int = 1) -> str:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    body = "".join(f"{x:.6f} {y:.6f}\n" for x, y in pts)
    return f"version: {version}\nn_points: {len(pts)}\n{{\n{body}}}\n"


def read_pts(path) -> list[tuple[float, float]]:
    with open(path, "rb") as fh:
        return parse_pts(fh.read(), source=str(path))


def write_pts(points, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_pts(points))


@dataclass
class NormalizeStats:
    clipped: int = 0


def normalize(face: AnnotatedFace, stats: NormalizeStats | None = None) -> np.ndarray:
    """Divide by crop width/height and clip to [0, 1]; clipped coordinates are counted."""
    if not (face.image_width > 0 and face.image_height > 0):
        raise InvalidInputError(
            f"{face.image_id}: image size must be positive, got {face.image_width}x{face.image_height}"
        )
    scaled = face.raw_points / np.array([face.image_width, face.image_height])
    outside = int(np.count_nonzero((scaled < 0.0) | (scaled > 1.0)))
    if outside:
        log.warning("%s: %d coordinate(s) outside the crop were clipped", face.image_id, outside)
        if stats is not None:
            stats.clipped += outside
    return np.clip(scaled, 0.0, 1.0).ravel()


def read_manifest(path) -> list[AnnotatedFace]:
    """Read ``image_id,pts_path,width,height`` records; paths are relative to the manifest."""
    base = os.path.dirname(os.path.abspath(path))
    faces = []
    with open(path, encoding="utf-8", newline="") as fh:
        for no, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
                continue
            row = [c.strip() for c in row]
            if no == 1 and row[0] == "image_id":
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", line=no, source=str(path))
            image_id, pts_path, width, height = row
            try:
                w, h = float(width), float(height)
            except ValueError:
                raise ParseError(f"non-numeric image size {width!r}x{height!r}", line=no,
                                 source=str(path)) from None
            full = pts_path if os.path.isabs(pts_path) else os.path.join(base, pts_path)
            try:
                pts = read_pts(full)
            except OSError as exc:
                raise ParseError(f"cannot read {pts_path}: {exc.strerror}", line=no,
                                 source=str(path)) from exc
            faces.append(AnnotatedFace(image_id, np.array(pts), w, h))
    return faces


def load_manifest_samples(path) -> np.ndarray:
    faces = read_manifest(path)
    if not faces:
        raise InsufficientDataError(f"manifest {path} lists no faces")
    stats = NormalizeStats()
    rows = [normalize(f, stats) for f in faces]
    if len({r.shape for r in rows}) != 1:
        raise InvalidInputError(f"faces in {path} have differing landmark counts")
    return np.stack(rows)


# -- synthetic data -----------------------------------------------------------

def _loop(cx, cy, rx, ry, n_upper, n_lower):
    # left corner -> upper contour -> right corner -> lower contour (image y points down)
    t = np.linspace(np.pi, 0.0, n_upper)
    upper = np.stack([cx + rx * np.cos(t), cy - ry * np.sin(t)], 1)
    t = np.linspace(0.0, np.pi, n_lower + 2)[1:-1]
    lower = np.stack([cx + rx * np.cos(t), cy + ry * np.sin(t)], 1)
    return np.concatenate([upper, lower])


def face_template(n_points: int = 68) -> np.ndarray:
    """A frontal face in the unit square, ``n_points x 2``.

    68 points follow the 300W index layout (outer eye corners at 36 and 45);
    any other count is spread on an ellipse.
    """
    if n_points != 68:
        if n_points < 2:
            raise InvalidInputError("need at least 2 points")
        t = np.linspace(0.0, 2 * np.pi, n_points, endpoint=False)
        return np.stack([0.5 + 0.3 * np.cos(t), 0.5 + 0.35 * np.sin(t)], 1)
    t = np.linspace(np.pi, 0.0, 17)
    jaw = np.stack([0.5 + 0.31 * np.cos(t), 0.42 + 0.40 * np.sin(t)], 1)
    t = np.linspace(np.pi, 0.0, 5)
    brow_r = np.stack([0.36 + 0.10 * np.cos(t), 0.33 - 0.04 * np.sin(t)], 1)
    brow_l = brow_r + [0.28, 0.0]
    bridge = np.stack([np.full(4, 0.5), np.linspace(0.40, 0.56, 4)], 1)
    nostrils = np.stack([np.linspace(0.44, 0.56, 5), [0.60, 0.615, 0.62, 0.615, 0.60]], 1)
    eye_r = _loop(0.36, 0.42, 0.055, 0.02, 4, 2)
    eye_l = _loop(0.64, 0.42, 0.055, 0.02, 4, 2)
    mouth = _loop(0.5, 0.72, 0.11, 0.05, 7, 5)
    inner = _loop(0.5, 0.72, 0.07, 0.02, 5, 3)
    return np.concatenate([jaw, brow_r, brow_l, bridge, nostrils, eye_r, eye_l, mouth, inner])


def _deformation_modes(template: np.ndarray) -> list[np.ndarray]:
    """Displacement fields (P x 2) for pose and expression-like variation."""
    centre = template.mean(axis=0)
    rel = template - centre
    n = len(template)
    modes = [
        np.tile([1.0, 0.0], (n, 1)),                 # shift x
        np.tile([0.0, 1.0], (n, 1)),                 # shift y
        np.stack([-rel[:, 1], rel[:, 0]], 1),         # in-plane rotation
        rel * [1.0, 0.0],                             # horizontal squash (yaw-like)
        rel * [0.0, 1.0],                             # vertical stretch (pitch-like)
    ]
    if n == 68:
        mouth_open = np.zeros_like(template)
        lower = [i for i in range(48, 68) if template[i, 1] > 0.72] + list(range(5, 12))
        mouth_open[lower, 1] = 1.0
        brows = np.zeros_like(template)
        brows[17:27, 1] = -1.0
        smile = np.zeros_like(template)
        smile[[48, 60], 0], smile[[54, 64], 0] = -1.0, 1.0
        smile[[48, 54, 60, 64], 1] = -0.5
        modes += [mouth_open, brows, smile]
    return modes


def base_shape_model(n_points: int = 68, num_samples: int = 400, seed: int = 0,
                     amplitude: float = 0.04) -> ShapeModel:
    """Shape model fitted to clean, randomly deformed copies of :func:`face_template`."""
    rng = np.random.default_rng(seed)
    template = face_template(n_points)
    modes = np.stack([m.ravel() for m in _deformation_modes(template)])
    modes /= np.linalg.norm(modes, axis=1, keepdims=True) / np.sqrt(n_points)
    coeffs = rng.uniform(-amplitude, amplitude, size=(num_samples, len(modes)))
    return fit_shape_model(template.ravel() + coeffs @ modes)


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    num_samples: int
    noise_scale_per_point: tuple[float, ...]
    occlusion_fraction: float = 0.0
    occlusion_scale: float = 0.1
    feature_noise: float = 0.0
    mixing: str = "random"  # or "identity"
    mixing_seed: int = 0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "noise_scale_per_point",
                           tuple(float(s) for s in self.noise_scale_per_point))
        if self.num_samples < 1:
            raise InvalidInputError("num_samples must be >= 1")
        if any(not (s >= 0) for s in self.noise_scale_per_point):
            raise InvalidInputError("noise scales must be >= 0")
        if not 0.0 <= self.occlusion_fraction < 1.0:
            raise InvalidInputError("occlusion_fraction must be in [0, 1)")
        if self.occlusion_scale < 0 or self.feature_noise < 0:
            raise InvalidInputError("noise scales must be >= 0")
        if self.mixing not in ("random", "identity"):
            raise InvalidInputError(f"unknown mixing {self.mixing!r}")


@dataclass
class Dataset:
    features: np.ndarray  # N x F
    targets: np.ndarray  # N x D
    clean: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return self.targets.shape[0]

    def __iter__(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        return iter(zip(self.features, self.targets))

    def subset(self, idx) -> "Dataset":
        clean = None if self.clean is None else self.clean[idx]
        return Dataset(self.features[idx], self.targets[idx], clean)


def hard_point_scales(n_points: int, hard_fraction: float, hard_scale: float,
                      easy_scale: float, seed: int = 0) -> tuple[float, ...]:
    """Per-point noise scales with a seeded random subset of hard points."""
    rng = np.random.default_rng(seed)
    n_hard = int(round(hard_fraction * n_points))
    scales = np.full(n_points, float(easy_scale))
    scales[rng.choice(n_points, size=n_hard, replace=False)] = hard_scale
    return tuple(scales.tolist())


def mixing_matrix(dim: int, kind: str = "random", seed: int = 0) -> np.ndarray:
    if kind == "identity":
        return np.eye(dim)
    q, r = np.linalg.qr(np.random.default_rng(seed).standard_normal((dim, dim)))
    return q * np.sign(np.diag(r))


def generate_synthetic(model: ShapeModel, spec: SyntheticDatasetSpec) -> Dataset:
    """Draw faces from ``model`` and corrupt them into a regression problem.

    Targets are ``mean + V b`` with ``b_i ~ U(-2 sqrt(l_i), 2 sqrt(l_i))``, plus
    per-point Gaussian noise and, with probability ``occlusion_fraction`` per
    point, an extra occlusion displacement; they are clipped to [0, 1].
    Features are the clean faces (centred at 0.5) passed through a fixed
    orthogonal mixing matrix plus optional noise. Output depends only on
    ``(model, spec)``.
    """
    d = model.dim
    scales = np.asarray(spec.noise_scale_per_point)
    if scales.shape[0] * 2 != d:
        raise InvalidInputError(
            f"{scales.shape[0]} noise scales given for a model with {d // 2} points"
        )
    rng = np.random.default_rng(spec.seed)
    n = spec.num_samples
    half = 2.0 * np.sqrt(np.maximum(model.eigenvalues, 0.0))
    b = rng.uniform(-1.0, 1.0, size=(n, model.num_eigs)) * half
    clean = model.mean_face + b @ model.eigenvectors.T
    noise = rng.standard_normal((n, d)) * np.repeat(scales, 2)
    occluded = np.repeat(rng.random((n, d // 2)) < spec.occlusion_fraction, 2, axis=1)
    noise += occluded * rng.standard_normal((n, d)) * spec.occlusion_scale
    targets = np.clip(clean + noise, 0.0, 1.0)
    mix = mixing_matrix(d, spec.mixing, spec.mixing_seed)
    if spec.mixing == "identity":
        features = clean @ mix.T
    else:
        features = (clean - 0.5) @ mix.T
    if spec.feature_noise > 0:
        features = features + rng.standard_normal(features.shape) * spec.feature_noise
    return Dataset(features, targets, clean)
