"""Per-coordinate hardness weights from a face and its Smooth-Face."""
from __future__ import annotations

import numpy as np

from .errors import InvalidInputError

DEGENERATE_MAX = 1e-12


def hardness_weights(face, smooth, mode: str = "element") -> np.ndarray:
    """Distance to the Smooth-Face, normalized by the largest such distance.

    ``mode="element"`` uses per-coordinate absolute differences. ``mode="point"``
    uses the Euclidean distance of each (x, y) pair and assigns it to both
    coordinates of the point. When the largest distance is below 1e-12 every
    weight is 0.

    Also accepts ``N x D`` arrays, normalizing each row independently.
    """
    face = np.asarray(face, dtype=np.float64)
    smooth = np.asarray(smooth, dtype=np.float64)
    if face.shape != smooth.shape:
        raise InvalidInputError(f"face {face.shape} and smooth {smooth.shape} differ in shape")
    if face.ndim not in (1, 2):
        raise InvalidInputError(f"expected a vector or a batch of vectors, got shape {face.shape}")
    if not (np.all(np.isfinite(face)) and np.all(np.isfinite(smooth))):
        raise InvalidInputError("hardness inputs must be finite")
    diff = np.abs(smooth - face)
    if mode == "point":
        if face.shape[-1] % 2:
            raise InvalidInputError("point mode needs an even number of coordinates")
        pairs = diff.reshape(diff.shape[:-1] + (-1, 2))
        dist = np.hypot(pairs[..., 0], pairs[..., 1])
        diff = np.repeat(dist, 2, axis=-1)
    elif mode != "element":
        raise InvalidInputError(f"unknown hardness mode {mode!r}")
    peak = diff.max(axis=-1, keepdims=True)
    safe = np.where(peak < DEGENERATE_MAX, 1.0, peak)
    phi = np.where(peak < DEGENERATE_MAX, 0.0, diff / safe)
    return phi
