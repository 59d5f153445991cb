import csv
import os

import numpy as np
import pytest

from acrloss.cli import main, parse_lambdas
from acrloss.dataio import write_pts
from acrloss.errors import ConfigError
from acrloss.shape_model import load_shape_model
from acrloss.trainer import RegressorModel, save_regressor

SMALL = """\
label = small
num_train = 60
num_test = 30
epochs = 3
hidden_dim = 8
batch_size = 16
seed = 2
"""


def write_config(tmp_path, text=SMALL, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


# -- fit-model ------------------------------------------------------------------

def test_fit_model_two_sample_manifest(tmp_path, capsys):
    write_pts([(10, 20), (30, 40), (50, 60)], tmp_path / "a.pts")
    write_pts([(20, 30), (40, 50), (60, 70)], tmp_path / "b.pts")
    (tmp_path / "faces.csv").write_text("image_id,pts_path,width,height\na,a.pts,100,100\nb,b.pts,100,100\n")
    out = tmp_path / "out"
    code = main(["fit-model", "--manifest", str(tmp_path / "faces.csv"), "--out", str(out)])
    assert code == 0
    model = load_shape_model(out / "shape_model.txt")
    assert model.dim == 6
    assert np.sum(model.eigenvalues > 1e-12) == 1
    assert "D=6 K=1" in capsys.readouterr().out


def test_fit_model_empty_manifest(tmp_path, capsys):
    (tmp_path / "empty.csv").write_text("image_id,pts_path,width,height\n")
    code = main(["fit-model", "--manifest", str(tmp_path / "empty.csv"), "--out", str(tmp_path)])
    assert code == 5
    assert "no faces" in capsys.readouterr().err


def test_fit_model_bad_pts_is_parse_error(tmp_path, data_dir):
    (tmp_path / "m.csv").write_text(f"x,{os.path.join(data_dir, 'count_mismatch.pts')},224,224\n")
    assert main(["fit-model", "--manifest", str(tmp_path / "m.csv"), "--out", str(tmp_path)]) == 3


def test_fit_model_missing_manifest_is_io_error(tmp_path):
    assert main(["fit-model", "--manifest", str(tmp_path / "nope.csv"), "--out", str(tmp_path)]) == 6


def test_fit_model_synthetic_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path)
    for d in ("a", "b"):
        assert main(["fit-model", "--config", cfg, "--seed", "7", "--out", str(tmp_path / d)]) == 0
    assert read_bytes(tmp_path / "a" / "shape_model.txt") == read_bytes(tmp_path / "b" / "shape_model.txt")


# -- train ----------------------------------------------------------------------

def test_train_writes_outputs_and_compares_losses(tmp_path):
    cfg = write_config(tmp_path)
    summaries = {}
    for loss in ("acr", "l2"):
        out = tmp_path / loss
        assert main(["train", "--config", cfg, "--loss", loss, "--out", str(out)]) == 0
        for name in ("trace.csv", "model.txt", "summary.csv", "shape_model.txt"):
            assert (out / name).exists()
        rows = read_rows(out / "summary.csv")
        assert rows[0] == ["nme", "fr", "auc"]
        summaries[loss] = [float(v) for v in rows[1]]
        trace = read_rows(out / "trace.csv")
        assert trace[0] == ["epoch", "train_loss", "eval_nme", "active_fraction"]
        assert len(trace) == 4
    assert summaries["acr"] != summaries["l2"]


def test_train_rerun_identical(tmp_path):
    cfg = write_config(tmp_path)
    for d in ("a", "b"):
        assert main(["train", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    for name in ("trace.csv", "summary.csv", "model.txt"):
        assert read_bytes(tmp_path / "a" / name) == read_bytes(tmp_path / "b" / name)


def test_train_epochs_zero_is_config_error(tmp_path, capsys):
    cfg = write_config(tmp_path, SMALL.replace("epochs = 3", "epochs = 0"))
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "epochs" in capsys.readouterr().err
    assert not (tmp_path / "o" / "trace.csv").exists()


def test_config_reports_all_problems(tmp_path, capsys):
    cfg = write_config(tmp_path, SMALL + "lambda = -1\nmixing = swirl\nfavourite_colour = red\n")
    assert main(["train", "--config", cfg]) == 2
    err = capsys.readouterr().err
    for needle in ("lambda", "mixing", "favourite_colour"):
        assert needle in err


def test_bad_lambda_flag_is_config_error(tmp_path):
    assert main(["train", "--config", write_config(tmp_path), "--lambda", "0"]) == 2


def test_exit_codes_are_distinct():
    from acrloss.errors import InvalidInputError, NumericalError, ParseError

    codes = [ConfigError("x").exit_code, ParseError("x").exit_code,
             NumericalError("x").exit_code, InvalidInputError("x").exit_code]
    assert len(set(codes)) == 4 and 0 not in codes


# -- ablate-lambda --------------------------------------------------------------

def test_parse_lambdas():
    assert parse_lambdas("1,2,3,4,5,10") == [1, 2, 3, 4, 5, 10]
    assert parse_lambdas("10, 1") == [1, 10]
    with pytest.raises(ConfigError):
        parse_lambdas("1,-2")
    with pytest.raises(ConfigError):
        parse_lambdas("")


def test_ablate_single_lambda(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["ablate-lambda", "--config", cfg, "--lambdas", "4", "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "lambda_sweep.csv")
    assert rows[0] == ["lambda", "nme_train", "nme_test"]
    assert len(rows) == 2 and float(rows[1][0]) == 4.0


def test_ablate_duplicates_dropped(tmp_path, caplog):
    cfg = write_config(tmp_path)
    with caplog.at_level("WARNING", logger="acrloss"):
        assert main(["ablate-lambda", "--config", cfg, "--lambdas", "5,2,5", "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "lambda_sweep.csv")
    assert [float(r[0]) for r in rows[1:]] == [2.0, 5.0]
    assert "duplicate" in caplog.text


# -- eval -----------------------------------------------------------------------

PERFECT = """\
label = perfect
num_train = 10
num_test = 40
hard_noise = 0
easy_noise = 0
occlusion_fraction = 0
mixing = identity
"""


def test_eval_perfect_predictions(tmp_path):
    cfg = write_config(tmp_path, PERFECT)
    model = RegressorModel("linear", {"W": np.eye(136), "b": np.zeros(136)}, 136, 136)
    save_regressor(model, tmp_path / "model.txt")
    out = tmp_path / "eval"
    assert main(["eval", "--config", cfg, "--model", str(tmp_path / "model.txt"),
                 "--out", str(out), "--svg"]) == 0
    nme, fr, auc = (float(v) for v in read_rows(out / "summary.csv")[1])
    assert nme == 0.0 and fr == 0.0 and auc == 1.0
    ced = read_rows(out / "ced.csv")
    assert ced[0] == ["threshold", "fraction"]
    assert len(ced) == 1001
    assert float(ced[1][0]) == 0.0 and float(ced[-1][0]) == 0.1
    assert (out / "ced.svg").read_text().startswith("<svg")


def test_eval_trained_model_ced_monotone(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "t")]) == 0
    assert main(["eval", "--config", cfg, "--model", str(tmp_path / "t" / "model.txt"),
                 "--out", str(tmp_path / "e")]) == 0
    fractions = [float(r[1]) for r in read_rows(tmp_path / "e" / "ced.csv")[1:]]
    assert all(b >= a for a, b in zip(fractions, fractions[1:]))
    assert read_bytes(tmp_path / "t" / "summary.csv") == read_bytes(tmp_path / "e" / "summary.csv")


def test_eval_dimension_mismatch(tmp_path, capsys):
    cfg = write_config(tmp_path)
    model = RegressorModel("linear", {"W": np.zeros((10, 10)), "b": np.zeros(10)}, 10, 10)
    save_regressor(model, tmp_path / "model.txt")
    assert main(["eval", "--config", cfg, "--model", str(tmp_path / "model.txt"), "--out", str(tmp_path)]) == 5
    assert "10" in capsys.readouterr().err
