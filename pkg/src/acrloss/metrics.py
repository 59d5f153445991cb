"""Face-alignment evaluation: point error, NME, failure rate, CED and AUC."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateGeometryError, InsufficientDataError, InvalidInputError

FAILURE_THRESHOLD = 0.1
CED_POINTS = 1000

# 0-based outer eye corners
OUTER_EYE_CORNERS = {
    "300w_68": (36, 45),
    "cofw_29": (8, 9),
}
# 0-based eye contours, used for inter-pupil normalization
EYE_CONTOURS = {
    "300w_68": (tuple(range(36, 42)), tuple(range(42, 48))),
}


@dataclass
class ErrorRecord:
    image_id: str
    per_image_error: float


@dataclass
class EvalSummary:
    nme: float
    fr: float
    auc: float
    ced: list[tuple[float, float]] = field(repr=False)
    records: list[ErrorRecord] = field(default_factory=list, repr=False)


def _points(face) -> np.ndarray:
    arr = np.asarray(face, dtype=np.float64)
    if arr.ndim != 1 or arr.size % 2:
        raise InvalidInputError(f"expected an even-length coordinate vector, got shape {arr.shape}")
    return arr.reshape(-1, 2)


def mean_point_error(gt, pred) -> float:
    """Average Euclidean distance between corresponding (x, y) points."""
    g, p = _points(gt), _points(pred)
    if g.shape != p.shape:
        raise InvalidInputError(f"ground truth {g.shape} and prediction {p.shape} differ")
    return float(np.mean(np.hypot(*(p - g).T)))


def normalization_factor(gt, left_idx: int, right_idx: int) -> float:
    """Distance between two landmark points, e.g. the outer eye corners."""
    pts = _points(gt)
    n = pts.shape[0]
    if left_idx == right_idx:
        raise InvalidInputError("normalization points must be distinct")
    for i in (left_idx, right_idx):
        if not 0 <= i < n:
            raise InvalidInputError(f"point index {i} out of range for {n} points")
    dist = float(np.hypot(*(pts[left_idx] - pts[right_idx])))
    if dist <= 1e-9:
        raise DegenerateGeometryError(f"points {left_idx} and {right_idx} coincide")
    return dist


def inter_pupil_factor(gt, left_eye: Sequence[int], right_eye: Sequence[int]) -> float:
    """Distance between eye centres, each the mean of that eye's landmarks."""
    pts = _points(gt)
    try:
        left = pts[list(left_eye)].mean(axis=0)
        right = pts[list(right_eye)].mean(axis=0)
    except IndexError as exc:
        raise InvalidInputError(f"eye landmark index out of range: {exc}") from exc
    dist = float(np.hypot(*(left - right)))
    if dist <= 1e-9:
        raise DegenerateGeometryError("eye centres coincide")
    return dist


def ced_curve(errors, max_error: float = FAILURE_THRESHOLD, num: int = CED_POINTS):
    """Fraction of errors ``<= t`` at ``num`` evenly spaced thresholds on [0, max_error]."""
    errs = np.sort(np.asarray(errors, dtype=np.float64))
    thresholds = np.linspace(0.0, max_error, num)
    fractions = np.searchsorted(errs, thresholds, side="right") / errs.size
    return thresholds, fractions


def summarize(errors, ids: Iterable[str] | None = None) -> EvalSummary:
    """NME / FR / CED / AUC from per-image normalized errors."""
    errs = np.asarray(errors, dtype=np.float64)
    if errs.size == 0:
        raise InsufficientDataError("no images to evaluate")
    if np.any(~np.isfinite(errs)) or np.any(errs < 0):
        raise InvalidInputError("per-image errors must be finite and non-negative")
    thresholds, fractions = ced_curve(errs)
    # thresholds[-1] is exactly FAILURE_THRESHOLD, so this is the failure fraction
    fr = float(1.0 - fractions[-1])
    auc = float(np.trapezoid(fractions, thresholds) / FAILURE_THRESHOLD)
    ids = list(ids) if ids is not None else [str(i) for i in range(errs.size)]
    return EvalSummary(
        nme=float(errs.mean()),
        fr=fr,
        auc=auc,
        ced=list(zip(thresholds.tolist(), fractions.tolist())),
        records=[ErrorRecord(i, float(e)) for i, e in zip(ids, errs)],
    )


def evaluate(records) -> EvalSummary:
    """Evaluate ``(gt, pred, norm_factor)`` triples (an optional leading image id is allowed)."""
    records = list(records)
    if not records:
        raise InsufficientDataError("no images to evaluate")
    ids, errors = [], []
    for i, rec in enumerate(records):
        if len(rec) == 4:
            image_id, gt, pred, norm = rec
        else:
            (gt, pred, norm), image_id = rec, str(i)
        if not norm > 0:
            raise InvalidInputError(f"normalization factor must be > 0 for image {image_id}")
        ids.append(str(image_id))
        errors.append(mean_point_error(gt, pred) / norm)
    return summarize(errors, ids)


def normalized_errors(gts, preds, normalization: str = "inter-ocular",
                      convention: str = "300w_68", eye_indices=None) -> np.ndarray:
    """Per-image normalized mean point error for ``N x D`` arrays (vectorised)."""
    gts = np.asarray(gts, dtype=np.float64)
    preds = np.asarray(preds, dtype=np.float64)
    if gts.shape != preds.shape or gts.ndim != 2 or gts.shape[1] % 2:
        raise InvalidInputError(f"gts {gts.shape} and preds {preds.shape} must be equal N x D arrays")
    n = gts.shape[0]
    g = gts.reshape(n, -1, 2)
    me = np.hypot(*(preds.reshape(n, -1, 2) - g).transpose(2, 0, 1)).mean(axis=1)
    if normalization == "none":
        return me
    if normalization == "inter-ocular":
        left, right = eye_indices if eye_indices is not None else OUTER_EYE_CORNERS[convention]
        for i in (left, right):
            if not 0 <= i < g.shape[1]:
                raise InvalidInputError(f"point index {i} out of range for {g.shape[1]} points")
        a, b = g[:, left], g[:, right]
    elif normalization == "inter-pupil":
        left, right = eye_indices if eye_indices is not None else EYE_CONTOURS[convention]
        a, b = g[:, list(left)].mean(axis=1), g[:, list(right)].mean(axis=1)
    else:
        raise InvalidInputError(f"unknown normalization {normalization!r}")
    norm = np.hypot(*(a - b).T)
    if np.any(norm <= 1e-9):
        raise DegenerateGeometryError("normalization points coincide in at least one image")
    return me / norm


def evaluate_arrays(gts, preds, normalization: str = "inter-ocular",
                    convention: str = "300w_68", eye_indices=None, ids=None) -> EvalSummary:
    """Evaluate ``N x D`` arrays, normalizing each image by its own factor."""
    return summarize(normalized_errors(gts, preds, normalization, convention, eye_indices), ids)


def image_norm(gt, normalization: str = "inter-ocular", convention: str = "300w_68",
               eye_indices=None) -> float:
    if normalization == "inter-ocular":
        left, right = eye_indices if eye_indices is not None else OUTER_EYE_CORNERS[convention]
        return normalization_factor(gt, left, right)
    if normalization == "inter-pupil":
        left, right = eye_indices if eye_indices is not None else EYE_CONTOURS[convention]
        return inter_pupil_factor(gt, left, right)
    if normalization == "none":
        return 1.0
    raise InvalidInputError(f"unknown normalization {normalization!r}")


def write_ced_csv(summary: EvalSummary, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("threshold,fraction\n")
        for t, f in summary.ced:
            fh.write(f"{t:.17g},{f:.17g}\n")


def summary_csv_text(summary: EvalSummary, header: bool = True) -> str:
    row = f"{summary.nme:.17g},{summary.fr:.17g},{summary.auc:.17g}\n"
    return ("nme,fr,auc\n" + row) if header else row


def write_summary_csv(summary: EvalSummary, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(summary_csv_text(summary))


def ced_svg(summary: EvalSummary, width: int = 480, height: int = 320, label: str = "") -> str:
    """Minimal standalone SVG polyline of the CED curve."""
    pad = 40
    w, h = width - 2 * pad, height - 2 * pad
    pts = " ".join(
        f"{pad + t / FAILURE_THRESHOLD * w:.2f},{pad + (1.0 - f) * h:.2f}" for t, f in summary.ced
    )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">\n'
        f'<rect x="{pad}" y="{pad}" width="{w}" height="{h}" fill="none" stroke="#888"/>\n'
        f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>\n'
        f'<text x="{pad}" y="{pad - 10}" font-size="12">CED {label} '
        f"NME={summary.nme:.4f} FR={summary.fr:.4f} AUC={summary.auc:.4f}</text>\n"
        f'<text x="{pad}" y="{height - 10}" font-size="11">normalized error 0 .. {FAILURE_THRESHOLD}</text>\n'
        "</svg>\n"
    )
