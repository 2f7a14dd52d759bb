"""
Batch command-line interface: synth, standardize, train, predict, eval, gridsearch, diagnose, export
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional

from scipy.linalg import LinAlgError

from adasim.adapt import assemble_joint_system
from adasim.core import OmegaParams
from adasim.data import (
    SynthConfig,
    export_adapted,
    format_float,
    load_dataset_dir,
    load_model,
    read_predictions,
    save_dataset,
    save_model,
    standardize,
    synth_generate,
    write_metrics,
    write_predictions,
    write_selection_report,
    write_training_log,
)
from adasim.errors import NumericalError, ValidationError
from adasim.learn import TrainConfig, train
from adasim.modelselect import EIG_MAX_PREFERRED, EIG_MIN_BAND, GridSpec, select_omega
from adasim.utils.util import load_yaml_config, set_up_logging
from adasim.zsr import evaluate, predict_batch, trial_average

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    """Report usage errors as validation failures so they map to exit code 1"""

    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _overrides(args: argparse.Namespace, mapping: Dict[str, str]) -> Dict:
    """Options given on the command line, keyed by config field"""
    return {field: getattr(args, dest) for dest, field in mapping.items() if getattr(args, dest) is not None}


def _parse_omega(args: argparse.Namespace) -> OmegaParams:
    if args.omega is not None:
        return OmegaParams.parse(args.omega)
    parts = [part.strip() for part in args.omega_exp.split(",")]
    try:
        exponents = [float(part) for part in parts]
    except ValueError as e:
        raise ValidationError(f"--omega-exp needs four numbers, got '{args.omega_exp}'") from e
    return OmegaParams.from_exponents(exponents)


TRAIN_OPTIONS = {
    "lam": "lam",
    "outer_iters": "outer_iters",
    "inner_iters": "inner_iters",
    "step_size": "step_size",
    "pd_margin": "pd_margin",
    "seed": "seed",
    "batch_size": "batch_size",
}


def _train_config(args: argparse.Namespace) -> TrainConfig:
    options = load_yaml_config(args.config) if args.config else {}
    options.update(_overrides(args, TRAIN_OPTIONS))
    return TrainConfig.from_dict(options)


def _add_train_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda", dest="lam", type=float, help="regularization constant (default 1)")
    parser.add_argument("--outer-iters", type=int, help="latent re-estimation rounds")
    parser.add_argument("--inner-iters", type=int, help="subgradient steps per round")
    parser.add_argument("--step-size", type=float, help="initial step size (default 0.1 / data scale)")
    parser.add_argument("--pd-margin", type=float, help="slack kept below the diagonal dominance bound")
    parser.add_argument("--batch-size", type=int, help="instances sampled per step (default full batch)")
    parser.add_argument("--seed", type=int, help="random seed")
    parser.add_argument("--config", help="YAML file with training options")


def command_synth(args: argparse.Namespace) -> None:
    options = load_yaml_config(args.config) if args.config else {}
    options.update(_overrides(args, {
        "ds": "d_s",
        "dt": "d_t",
        "per_class": "instances_per_class",
        "noise": "feature_noise",
        "spread": "intra_class_spread",
        "map_noise": "map_noise",
        "scale": "attribute_scale",
        "seed": "seed",
        "unseen": "n_unseen",
    }))
    if args.classes is not None:
        options["n_seen"] = args.classes - options.get("n_unseen", SynthConfig.n_unseen)
    dataset = synth_generate(SynthConfig.from_dict(options))
    save_dataset(dataset, args.out)


def command_standardize(args: argparse.Namespace) -> None:
    dataset = standardize(load_dataset_dir(args.data), args.mode)
    save_dataset(dataset, args.out)


def command_train(args: argparse.Namespace) -> None:
    omega = _parse_omega(args)
    config = _train_config(args)
    dataset = load_dataset_dir(args.data)
    logger.info(f"Training with omega={omega.as_tuple()} and options {config.to_dict()}")
    model, state = train(dataset, omega, config)
    save_model(model, args.out)
    log_path = args.log or f"{args.out}.log.tsv"
    write_training_log(state, log_path)
    logger.info(f"Final objective {state.best_trace[-1][1]:.6g}; training log written to {log_path}")


def command_predict(args: argparse.Namespace) -> None:
    model = load_model(args.model)
    dataset = load_dataset_dir(args.data)
    model.check_dims(dataset.d_t, dataset.d_s)
    unseen = dataset.unseen_classes()
    if not unseen:
        raise ValidationError("the dataset split has no unseen classes to predict")
    results = predict_batch(
        model, unseen, dataset.test_instances(), scorer=args.scorer, allow_indefinite=args.allow_indefinite
    )
    write_predictions(results, args.out)


def command_eval(args: argparse.Namespace) -> None:
    dataset = load_dataset_dir(args.data)
    truth = {x.id: x.label for x in dataset.instances}
    reports = [evaluate(read_predictions(path), truth) for path in args.pred]
    report = reports[0] if len(reports) == 1 else trial_average(reports)
    write_metrics(report, args.out)
    logger.info(f"Accuracy {report.accuracy:.4f} over {report.n_instances} predictions")


def command_gridsearch(args: argparse.Namespace) -> None:
    dataset = load_dataset_dir(args.data)
    grid = GridSpec(args.lo, args.hi, args.base)
    report = select_omega(
        dataset,
        grid=grid,
        train_config=_train_config(args),
        k=args.folds,
        prefilter=not args.no_prefilter,
        n_jobs=args.workers,
    )
    write_selection_report(report, args.out)


def command_diagnose(args: argparse.Namespace) -> None:
    model = load_model(args.model)
    system = assemble_joint_system(model.W, model.omega)
    lines = [
        ("delta_w", format_float(system.delta_w)),
        ("eig_min", format_float(system.eig_min)),
        ("eig_max", format_float(system.eig_max)),
        ("is_pd", str(system.is_pd).lower()),
        ("is_diag_dominant", str(system.is_diag_dominant).lower()),
        ("eig_min_in_band", str(EIG_MIN_BAND[0] < system.eig_min <= EIG_MIN_BAND[1]).lower()),
        ("eig_max_in_preferred_band", str(EIG_MAX_PREFERRED[0] < system.eig_max <= EIG_MAX_PREFERRED[1]).lower()),
        ("approximate", str(system.approximate).lower()),
    ]
    text = "".join(f"{key}\t{value}\n" for key, value in lines)
    print(text, end="")
    if args.out:
        Path(args.out).write_text(text, encoding='utf-8')


def command_export(args: argparse.Namespace) -> None:
    export_adapted(load_model(args.model), load_dataset_dir(args.data), args.class_id, args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adasim", description="Zero-shot recognition with an adaptive bilinear similarity")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="generate a synthetic dataset")
    synth.add_argument("--classes", type=int, help="total number of classes")
    synth.add_argument("--unseen", type=int, help="number of unseen classes")
    synth.add_argument("--ds", type=int, help="attribute dimension")
    synth.add_argument("--dt", type=int, help="feature dimension")
    synth.add_argument("--per-class", type=int, help="instances per class")
    synth.add_argument("--noise", type=float, help="per-instance feature noise")
    synth.add_argument("--spread", type=float, help="intra-class spread")
    synth.add_argument("--map-noise", type=float, help="per-class perturbation of the linear map")
    synth.add_argument("--scale", type=float, help="attribute scale")
    synth.add_argument("--seed", type=int, help="random seed")
    synth.add_argument("--config", help="YAML file with generator options")
    synth.add_argument("--out", required=True, help="output directory")
    synth.set_defaults(handler=command_synth)

    std = commands.add_parser("standardize", help="normalize a dataset with seen-class statistics")
    std.add_argument("--data", required=True)
    std.add_argument("--mode", choices=["none", "zscore-target", "unit-norm-both"], default="none")
    std.add_argument("--out", required=True)
    std.set_defaults(handler=command_standardize)

    train_cmd = commands.add_parser("train", help="train W on the seen classes")
    train_cmd.add_argument("--data", required=True)
    omega = train_cmd.add_mutually_exclusive_group(required=True)
    omega.add_argument("--omega", help="w1,w2,w3,w4")
    omega.add_argument("--omega-exp", help="e1,e2,e3,e4 with w_i = 10**e_i")
    _add_train_options(train_cmd)
    train_cmd.add_argument("--log", help="training log path (default <out>.log.tsv)")
    train_cmd.add_argument("--out", required=True)
    train_cmd.set_defaults(handler=command_train)

    predict = commands.add_parser("predict", help="predict unseen-class instances")
    predict.add_argument("--model", required=True)
    predict.add_argument("--data", required=True)
    predict.add_argument("--scorer", choices=["adaptive", "bilinear"], default="adaptive")
    predict.add_argument("--allow-indefinite", action="store_true", help="use the pseudo-inverse when H is not PD")
    predict.add_argument("--out", required=True)
    predict.set_defaults(handler=command_predict)

    eval_cmd = commands.add_parser("eval", help="accuracy and per-class precision/recall")
    eval_cmd.add_argument("--pred", required=True, action="append", help="prediction file, repeat for trials")
    eval_cmd.add_argument("--data", required=True)
    eval_cmd.add_argument("--out", required=True)
    eval_cmd.set_defaults(handler=command_eval)

    grid = commands.add_parser("gridsearch", help="select omega by class-disjoint cross-validation")
    grid.add_argument("--data", required=True)
    grid.add_argument("--lo", type=int, default=-5)
    grid.add_argument("--hi", type=int, default=5)
    grid.add_argument("--base", type=float, default=10.0)
    grid.add_argument("--folds", type=int, default=4)
    grid.add_argument("--workers", type=int, default=1)
    grid.add_argument("--no-prefilter", action="store_true", help="evaluate every candidate")
    _add_train_options(grid)
    grid.add_argument("--out", required=True)
    grid.set_defaults(handler=command_gridsearch)

    diagnose = commands.add_parser("diagnose", help="definiteness diagnostics of a stored model")
    diagnose.add_argument("--model", required=True)
    diagnose.add_argument("--out")
    diagnose.set_defaults(handler=command_diagnose)

    export = commands.add_parser("export", help="export adapted features against one class")
    export.add_argument("--model", required=True)
    export.add_argument("--data", required=True)
    export.add_argument("--class", dest="class_id", type=int, required=True)
    export.add_argument("--out", required=True)
    export.set_defaults(handler=command_export)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    verbose = False
    try:
        args = build_parser().parse_args(argv)
        verbose = args.verbose
        set_up_logging(logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO)
        args.handler(args)
        return EXIT_OK
    except ValidationError as e:
        logger.error(str(e), exc_info=verbose)
        return EXIT_VALIDATION
    except OSError as e:
        logger.error(str(e), exc_info=verbose)
        return EXIT_IO
    except (NumericalError, LinAlgError) as e:
        logger.error(str(e), exc_info=verbose)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
