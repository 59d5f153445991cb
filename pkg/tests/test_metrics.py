import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from acrloss.errors import DegenerateGeometryError, InsufficientDataError, InvalidInputError
from acrloss.metrics import (
    ced_svg,
    evaluate,
    evaluate_arrays,
    inter_pupil_factor,
    mean_point_error,
    normalization_factor,
    normalized_errors,
    summarize,
    write_ced_csv,
    write_summary_csv,
)


def brute_mean_error(gt, pred):
    total = 0.0
    for i in range(0, len(gt), 2):
        total += math.sqrt((pred[i] - gt[i]) ** 2 + (pred[i + 1] - gt[i + 1]) ** 2)
    return total / (len(gt) // 2)


def exact_auc(errors, limit=0.1):
    # integral of the empirical CDF over [0, limit] is mean(max(0, limit - e))
    return sum(max(0.0, limit - e) for e in errors) / len(errors) / limit


def test_mean_point_error_examples(rng):
    gt = rng.uniform(size=10)
    assert mean_point_error(gt, gt) == 0.0
    shifted = gt + np.tile([0.03, 0.04], 5)
    assert mean_point_error(gt, shifted) == pytest.approx(0.05, abs=1e-15)
    pred = rng.uniform(size=10)
    assert mean_point_error(gt, pred) == pytest.approx(brute_mean_error(gt, pred), abs=1e-12)
    with pytest.raises(InvalidInputError):
        mean_point_error(gt, gt[:8])


def test_normalization_factor_examples():
    assert normalization_factor([0.3, 0.5, 0.7, 0.5], 0, 1) == pytest.approx(0.4)
    assert normalization_factor([0.0, 0.0, 0.3, 0.4], 0, 1) == pytest.approx(0.5)
    with pytest.raises(DegenerateGeometryError):
        normalization_factor([0.2, 0.2, 0.2, 0.2], 0, 1)
    with pytest.raises(InvalidInputError):
        normalization_factor([0.2, 0.2, 0.3, 0.2], 0, 5)


def test_300w_outer_eye_corners():
    from acrloss.dataio import face_template

    face = face_template(68)
    # outer corners are the extreme eye points
    eyes = face[36:48, 0]
    assert face[36, 0] == eyes.min() and face[45, 0] == eyes.max()
    assert evaluate_arrays([face.ravel()], [face.ravel()]).nme == 0.0
    norm = normalization_factor(face.ravel(), 36, 45)
    assert norm == pytest.approx(np.hypot(*(face[36] - face[45])))


def test_inter_pupil():
    gt = np.array([0, 0, 0.2, 0, 1, 0, 1.2, 0], dtype=float)
    assert inter_pupil_factor(gt, [0, 1], [2, 3]) == pytest.approx(1.0)


def test_evaluate_perfect():
    gts = [np.array([0.1, 0.2, 0.5, 0.2, 0.3, 0.6])] * 3
    s = evaluate([(g, g, 0.4) for g in gts])
    assert (s.nme, s.fr, s.auc) == (0.0, 0.0, 1.0)


def test_evaluate_two_images():
    gt = np.zeros(4)
    s = evaluate([(gt, gt + np.tile([0.05, 0], 2), 1.0), (gt, gt + np.tile([0, 0.15], 2), 1.0)])
    assert s.nme == pytest.approx(0.10)
    assert s.fr == 0.5


def test_evaluate_empty_and_bad_norm():
    with pytest.raises(InsufficientDataError):
        evaluate([])
    with pytest.raises(InvalidInputError):
        evaluate([(np.zeros(4), np.zeros(4), 0.0)])


def test_auc_against_exact_integral_and_fine_grid(rng):
    errors = rng.uniform(0, 0.15, 300)
    s = summarize(errors)
    assert s.auc == pytest.approx(exact_auc(errors), abs=1e-3)
    grid = np.linspace(0, 0.1, 100_001)
    cdf = (errors[None, :] <= grid[:, None]).mean(axis=1)
    assert s.auc == pytest.approx(np.trapezoid(cdf, grid) / 0.1, abs=1e-3)


@given(st.lists(st.floats(0, 0.5), min_size=1, max_size=80))
def test_ced_properties(errors):
    s = summarize(errors)
    fractions = [f for _, f in s.ced]
    thresholds = [t for t, _ in s.ced]
    assert len(s.ced) == 1000 and thresholds[0] == 0.0 and thresholds[-1] == 0.1
    assert all(b >= a for a, b in zip(fractions, fractions[1:]))
    assert fractions[-1] <= 1.0
    assert s.fr == 1.0 - fractions[-1]
    assert s.fr == pytest.approx(sum(e > 0.1 for e in errors) / len(errors), abs=1e-12)
    assert 0.0 <= s.auc <= 1.0


@given(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3), st.floats(0.2, 5.0))
def test_nme_translation_and_scale_invariance(dx, dy, scale):
    rng = np.random.default_rng(3)
    gts = rng.uniform(0.2, 0.8, size=(6, 136))
    preds = gts + rng.normal(scale=0.01, size=gts.shape)
    base = normalized_errors(gts, preds)
    shift = np.tile([dx, dy], 68)
    np.testing.assert_allclose(normalized_errors(gts + shift, preds + shift), base, rtol=1e-9)
    np.testing.assert_allclose(normalized_errors(gts * scale, preds * scale), base, rtol=1e-9)


def test_vectorised_matches_loop(rng):
    gts = rng.uniform(0.2, 0.8, size=(20, 136))
    preds = gts + rng.normal(scale=0.02, size=gts.shape)
    fast = normalized_errors(gts, preds)
    slow = [brute_mean_error(g, p) / normalization_factor(g, 36, 45) for g, p in zip(gts, preds)]
    np.testing.assert_allclose(fast, slow, rtol=1e-12)
    ip = normalized_errors(gts, preds, "inter-pupil")
    slow_ip = [brute_mean_error(g, p) / inter_pupil_factor(g, range(36, 42), range(42, 48))
               for g, p in zip(gts, preds)]
    np.testing.assert_allclose(ip, slow_ip, rtol=1e-12)


def test_csv_outputs(tmp_path, rng):
    s = summarize(rng.uniform(0, 0.2, 50))
    write_ced_csv(s, tmp_path / "ced.csv")
    write_summary_csv(s, tmp_path / "summary.csv")
    lines = (tmp_path / "ced.csv").read_text().splitlines()
    assert lines[0] == "threshold,fraction" and len(lines) == 1001
    summary = (tmp_path / "summary.csv").read_text().splitlines()
    assert summary[0] == "nme,fr,auc"
    assert [float(v) for v in summary[1].split(",")] == [s.nme, s.fr, s.auc]
    assert ced_svg(s).startswith("<svg")
