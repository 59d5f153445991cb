"""Command-line harness: fit-model, train, ablate-lambda, eval.

Exit codes: 0 success, 2 configuration error, 3 parse error, 4 numerical
error, 5 invalid or insufficient data, 6 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

from . import config as config_mod
from .errors import AcrError, ConfigError, InvalidInputError
from .metrics import ced_svg, evaluate_arrays, write_ced_csv, write_summary_csv
from .shape_model import fit_shape_model, save_shape_model
from .trainer import forward, init_regressor, load_regressor, save_regressor, train

log = logging.getLogger("acrloss")

EXIT_IO = 6


def _out_dir(args, cfg) -> str:
    out = args.out or (cfg.out_dir if cfg is not None else None)
    if not out:
        out = os.path.join("out", cfg.label if cfg is not None else "shape_model")
    os.makedirs(out, exist_ok=True)
    return out


def _load(args) -> config_mod.ExperimentConfig:
    cfg = config_mod.load_config(args.config) if args.config else config_mod.ExperimentConfig()
    return config_mod.with_overrides(
        cfg,
        seed=getattr(args, "seed", None),
        loss_kind=getattr(args, "loss", None),
        lam=getattr(args, "lam", None),
    )


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def run_experiment(cfg: config_mod.ExperimentConfig):
    """Train on the synthetic train split; returns (trace, train set, test set, fitted shape model)."""
    train_set, test_set, _ = config_mod.build_datasets(cfg)
    shape = fit_shape_model(train_set.targets)
    init = init_regressor(cfg.architecture, train_set.features.shape[1], train_set.targets.shape[1],
                          cfg.hidden_dim, seed=cfg.train.seed)
    trace = train(train_set, init, cfg.train, shape, eval_set=test_set)
    return trace, train_set, test_set, shape


def _evaluate(cfg, model, dataset):
    pred = forward(model, dataset.features)
    return evaluate_arrays(dataset.targets, pred, cfg.train.normalization,
                           eye_indices=cfg.train.eye_indices)


def cmd_fit_model(args) -> int:
    if args.manifest:
        from .dataio import load_manifest_samples

        samples = load_manifest_samples(args.manifest)
        cfg = None
    else:
        cfg = _load(args)
        samples = config_mod.build_datasets(cfg)[0].targets
    model = fit_shape_model(samples)
    out = _out_dir(args, cfg)
    path = os.path.join(out, "shape_model.txt")
    save_shape_model(model, path)
    top = ", ".join(f"{v:.6g}" for v in model.eigenvalues[:5])
    print(f"D={model.dim} K={model.num_eigs} top eigenvalues: [{top}]")
    print(f"wrote {path}")
    return 0


def cmd_train(args) -> int:
    cfg = _load(args)
    out = _out_dir(args, cfg)
    trace, _, test_set, shape = run_experiment(cfg)
    summary = _evaluate(cfg, trace.model, test_set)
    _write(os.path.join(out, "trace.csv"), trace.to_csv())
    save_regressor(trace.model, os.path.join(out, "model.txt"))
    save_shape_model(shape, os.path.join(out, "shape_model.txt"))
    write_summary_csv(summary, os.path.join(out, "summary.csv"))
    print(f"{cfg.label} loss={cfg.train.loss_kind} lambda={cfg.train.lam:g} seed={cfg.train.seed}: "
          f"NME={summary.nme:.6f} FR={summary.fr:.4f} AUC={summary.auc:.4f}")
    return 0


def parse_lambdas(text: str) -> list[float]:
    values = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            lam = float(item)
        except ValueError:
            raise ConfigError(f"bad lambda value {item!r}") from None
        if not lam > 0:
            raise ConfigError(f"lambda values must be positive, got {lam}")
        values.append(lam)
    if not values:
        raise ConfigError("empty lambda list")
    unique = sorted(set(values))
    if len(unique) != len(values):
        log.warning("duplicate lambda values dropped: %s -> %s", values, unique)
    return unique


def ablate_lambda(cfg, lambdas) -> list[tuple[float, float, float]]:
    rows = []
    for lam in lambdas:
        run_cfg = replace(cfg, train=replace(cfg.train, lam=lam, loss_kind="acr"))
        trace, train_set, test_set, _ = run_experiment(run_cfg)
        nme_train = _evaluate(run_cfg, trace.model, train_set).nme
        nme_test = _evaluate(run_cfg, trace.model, test_set).nme
        rows.append((lam, nme_train, nme_test))
        print(f"lambda={lam:g}: train NME={nme_train:.6f} test NME={nme_test:.6f}")
    return rows


def cmd_ablate_lambda(args) -> int:
    cfg = _load(args)
    lambdas = parse_lambdas(args.lambdas)
    out = _out_dir(args, cfg)
    rows = ablate_lambda(cfg, lambdas)
    text = "lambda,nme_train,nme_test\n" + "".join(f"{l:.17g},{a:.17g},{b:.17g}\n" for l, a, b in rows)
    path = os.path.join(out, "lambda_sweep.csv")
    _write(path, text)
    print(f"wrote {path}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load(args)
    model = load_regressor(args.model)
    _, test_set, _ = config_mod.build_datasets(cfg)
    if model.input_dim != test_set.features.shape[1] or model.output_dim != test_set.targets.shape[1]:
        raise InvalidInputError(
            f"model maps {model.input_dim} -> {model.output_dim} but the dataset has "
            f"{test_set.features.shape[1]} features and {test_set.targets.shape[1]} coordinates"
        )
    summary = _evaluate(cfg, model, test_set)
    out = _out_dir(args, cfg)
    write_summary_csv(summary, os.path.join(out, "summary.csv"))
    write_ced_csv(summary, os.path.join(out, "ced.csv"))
    if args.svg:
        _write(os.path.join(out, "ced.svg"), ced_svg(summary, label=cfg.label))
    print(f"NME={summary.nme:.6f} FR={summary.fr:.4f} AUC={summary.auc:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acrloss", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, training=True):
        p.add_argument("--config", help="key = value experiment config")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        if training:
            p.add_argument("--loss", choices=("acr", "l2"))
            p.add_argument("--lambda", dest="lam", type=float)

    p = sub.add_parser("fit-model", help="fit and save a statistical shape model")
    common(p, training=False)
    p.add_argument("--manifest", help="image_id,pts_path,width,height manifest")
    p.set_defaults(func=cmd_fit_model)

    p = sub.add_parser("train", help="train a regressor and write trace/model/summary")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate-lambda", help="sweep the ACR lambda hyperparameter")
    common(p)
    p.add_argument("--lambdas", default="1,2,3,4,5,10")
    p.set_defaults(func=cmd_ablate_lambda)

    p = sub.add_parser("eval", help="evaluate a saved regressor on the test split")
    common(p)
    p.add_argument("--model", required=True, help="regressor snapshot (model.txt)")
    p.add_argument("--svg", action="store_true", help="also write ced.svg")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except AcrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
