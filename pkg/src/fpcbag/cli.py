"""Command-line entry point: ``fpcbag <command> [options]``.

Commands
  simulate   scenario Monte Carlo study, writes the error tables
  realdata   repeated random splits of a long-format CSV
  generate   write one simulated dataset as long CSV
  fpca       fit an FPCA and write its summary, eigenvalues and functions
  train      fit a bagged ensemble (and its calibration) and save it
  predict    score curves with a saved ensemble

Options may also come from ``--config FILE``, either JSON or ``key = value``
lines; keys are option names with dashes or underscores. Options given on
the command line take precedence over the file.
"""

from __future__ import annotations

import argparse
import configparser
import json
import pickle
import sys
import time
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .classifiers import ClassifierKind, ForestSettings, GbmSettings
from .data import CsvSchema, load_long_csv, write_long_csv
from .ensemble import (
    CalibrationMode,
    aggregate_from_proba,
    bayesian_from_proba,
    bootstrap_fit,
    calibrate,
    majority_from_votes,
    oob_weighted_from_votes,
    votes_from_proba,
    write_summary,
)
from .errors import FpcbagError
from .experiment import ALL_CLASSIFIERS, ALL_RULES, ExperimentConfig, RealDataSource, emit_outputs, run_experiment
from .fpca import FpcaConfig, dump_model, fit_fpca
from .simulate import generate, scenario

MODEL_FORMAT = "fpcbag-ensemble-1"


class UsageError(Exception):
    pass


def _csv_list(text: str) -> list[str]:
    return [part.strip() for part in str(text).split(",") if part.strip()]


def _int_pair(text: str) -> tuple[int, int]:
    parts = _csv_list(text)
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}")
    return int(parts[0]), int(parts[1])


def _float_pair(text: str) -> tuple[float, float]:
    parts = _csv_list(text)
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}")
    return float(parts[0]), float(parts[1])


def _add_fpca_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("FPCA")
    g.add_argument("--n-grid", type=int, default=51)
    g.add_argument("--mean-bandwidth", type=float, help="absolute; default is a fraction of the domain")
    g.add_argument("--cov-bandwidth", type=float)
    g.add_argument("--noise-bandwidth", type=float)
    g.add_argument("--mean-bandwidth-frac", type=float, default=FpcaConfig.mean_bandwidth_frac)
    g.add_argument("--cov-bandwidth-frac", type=float, default=FpcaConfig.cov_bandwidth_frac)
    g.add_argument("--pve", type=float, default=0.99, help="variance share that selects K")
    g.add_argument("--k-min", type=int)
    g.add_argument("--k-max", type=int)


def _add_schema_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("CSV columns")
    g.add_argument("--id-col", default="id")
    g.add_argument("--time-col", default="time")
    g.add_argument("--value-col", default="value")
    g.add_argument("--label-col", default="label")
    g.add_argument("--domain", type=_float_pair, help="LO,HI; default is the observed time range")


def _add_experiment_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("experiment")
    g.add_argument("--classifiers", default=",".join(k.value for k in ALL_CLASSIFIERS))
    g.add_argument("--rules", default=",".join(r.value for r in ALL_RULES))
    g.add_argument("--reps", type=int, default=100)
    g.add_argument("--B", dest="B", type=int, default=100, help="bootstrap replicas")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--calibration-mode", default=CalibrationMode.ALL_REPLICAS.value,
                   choices=[m.value for m in CalibrationMode])
    g.add_argument("--prior-scale0", type=float, default=10.0)
    g.add_argument("--prior-scale1", type=float, default=2.5)
    g.add_argument("--single-k-min", type=int, help="K bounds for the Single rule only")
    g.add_argument("--single-k-max", type=int)
    g.add_argument("--rf-trees", type=int, default=ForestSettings.n_trees)
    g.add_argument("--gbm-folds", type=int, default=GbmSettings.n_folds)
    g.add_argument("--max-failure-fraction", type=float, default=0.10)
    g.add_argument("--quiet", action="store_true")
    _add_fpca_options(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fpcbag", description="Bagged classifiers for sparse functional data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("simulate", help="scenario Monte Carlo study")
    p.add_argument("--config", help="JSON or key = value file")
    p.add_argument("--scenario", type=int, required=True)
    p.add_argument("--n-train", type=int, help="training curves per repetition (scenario default 200)")
    p.add_argument("--n-test", type=int, default=100)
    _add_experiment_options(p)

    p = sub.add_parser("realdata", help="repeated random splits of a CSV dataset")
    p.add_argument("--config", help="JSON or key = value file")
    p.add_argument("--data", required=True)
    p.add_argument("--train-fraction", type=float, required=True)
    p.add_argument("--sparsify", type=_int_pair, help="LO,HI observations kept per curve")
    _add_schema_options(p)
    _add_experiment_options(p)

    p = sub.add_parser("generate", help="write one simulated dataset")
    p.add_argument("--config", help="JSON or key = value file")
    p.add_argument("--scenario", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, help="number of curves (default 200)")
    p.add_argument("--out", required=True, help="CSV path")

    p = sub.add_parser("fpca", help="fit an FPCA and dump it")
    p.add_argument("--config", help="JSON or key = value file")
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="output path (default stdout)")
    _add_schema_options(p)
    _add_fpca_options(p)

    p = sub.add_parser("train", help="fit and save a bagged ensemble")
    p.add_argument("--config", help="JSON or key = value file")
    p.add_argument("--data", required=True, help="labeled long CSV")
    p.add_argument("--classifier", required=True)
    p.add_argument("--B", dest="B", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--calibration-mode", default=CalibrationMode.ALL_REPLICAS.value,
                   choices=[m.value for m in CalibrationMode])
    p.add_argument("--prior-scale0", type=float, default=10.0)
    p.add_argument("--prior-scale1", type=float, default=2.5)
    p.add_argument("--out", required=True, help="model file")
    p.add_argument("--summary", help="also write per-replica diagnostics CSV here")
    _add_schema_options(p)
    _add_fpca_options(p)

    p = sub.add_parser("predict", help="score curves with a saved ensemble")
    p.add_argument("--config", help="JSON or key = value file")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", help="CSV path (default stdout)")
    _add_schema_options(p)
    return parser


def _read_config(path: str) -> dict[str, str]:
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".json") or text.lstrip().startswith("{"):
        raw = json.loads(text)
        if not isinstance(raw, dict):
            raise UsageError(f"{path}: expected a JSON object")
        return {str(k): v for k, v in raw.items()}
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    if not text.lstrip().startswith("["):
        text = "[fpcbag]\n" + text
    cp.read_string(text, source=path)
    out: dict[str, str] = {}
    for section in cp.sections():
        out.update(cp[section])
    return out


def _config_path(argv: Sequence[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    """Parse ``argv`` with config-file values installed as defaults."""
    cfg_path = _config_path(argv)
    command = next((tok for tok in argv if tok in COMMANDS), None)
    if cfg_path is None or command is None:
        return parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[command]  # noqa: SLF001
    actions = {a.dest: a for a in sub._actions}  # noqa: SLF001
    defaults = {}
    for key, value in _read_config(cfg_path).items():
        dest = key.replace("-", "_")
        if dest == "b":
            dest = "B"
        if dest not in actions or dest in ("config", "help"):
            raise UsageError(f"{cfg_path}: unknown key {key!r} for {command}")
        action = actions[dest]
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        if isinstance(action, argparse._StoreTrueAction):  # noqa: SLF001
            value = value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            value = action.type(str(value))
        defaults[dest] = value
        action.required = False
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _fpca_config(args, k_min=None, k_max=None) -> FpcaConfig:
    return FpcaConfig(
        n_grid=args.n_grid,
        mean_bandwidth=args.mean_bandwidth,
        cov_bandwidth=args.cov_bandwidth,
        noise_bandwidth=args.noise_bandwidth,
        mean_bandwidth_frac=args.mean_bandwidth_frac,
        cov_bandwidth_frac=args.cov_bandwidth_frac,
        pve_threshold=args.pve,
        k_min=args.k_min if k_min is None else k_min,
        k_max=args.k_max if k_max is None else k_max,
    )


def _schema(args) -> CsvSchema:
    return CsvSchema(args.id_col, args.time_col, args.value_col, args.label_col)


def _experiment_config(args, **source) -> ExperimentConfig:
    fpca = _fpca_config(args)
    single = None
    if args.single_k_min is not None or args.single_k_max is not None:
        single = _fpca_config(args, args.single_k_min, args.single_k_max)
    return ExperimentConfig(
        classifiers=tuple(_csv_list(args.classifiers)),
        rules=tuple(_csv_list(args.rules)),
        repetitions=args.reps,
        B=args.B,
        fpca=fpca,
        single_fpca=single,
        calibration_mode=args.calibration_mode,
        prior_scale0=args.prior_scale0,
        prior_scale1=args.prior_scale1,
        forest=ForestSettings(n_trees=args.rf_trees),
        gbm=GbmSettings(n_folds=args.gbm_folds),
        seed=args.seed,
        workers=args.workers,
        max_failure_fraction=args.max_failure_fraction,
        **source,
    )


def _run_and_emit(config: ExperimentConfig, args) -> int:
    start = time.perf_counter()
    done = [0]

    def progress(res):
        done[0] += 1
        if not args.quiet:
            status = "failed" if res.failure else "ok"
            print(
                f"[{done[0]}/{config.repetitions}] rep {res.rep + 1} {status} "
                f"({time.perf_counter() - start:.0f}s)",
                file=sys.stderr,
            )

    table = run_experiment(config, progress)
    paths = emit_outputs(table, args.out)
    if table.failures:
        print(f"{len(table.failures)} repetition(s) failed; see {paths['failures']}", file=sys.stderr)
    if not args.quiet:
        mean, sd = table.mean(), table.sd()
        width = max(len(k.value) for k in table.classifiers)
        print(f"{'':{width}}  " + "  ".join(f"{r.value:>16}" for r in table.rules))
        for i, kind in enumerate(table.classifiers):
            cells = "  ".join(f"{mean[i, j]:7.2f} ({sd[i, j]:5.2f})" for j in range(len(table.rules)))
            print(f"{kind.value:{width}}  {cells}")
    return 0


def cmd_simulate(args) -> int:
    config = _experiment_config(args, scenario=args.scenario, real_data=None)
    config = replace(config, n_train=args.n_train, n_test=args.n_test)
    return _run_and_emit(config, args)


def cmd_realdata(args) -> int:
    src = RealDataSource(
        path=args.data,
        train_fraction=args.train_fraction,
        sparsify_range=args.sparsify,
        schema=_schema(args),
        domain=args.domain,
    )
    return _run_and_emit(_experiment_config(args, scenario=None, real_data=src), args)


def cmd_generate(args) -> int:
    cfg = scenario(args.scenario).with_seed(args.seed)
    if args.n is not None:
        cfg = replace(cfg, n=args.n)
    write_long_csv(generate(cfg), args.out)
    return 0


def cmd_fpca(args) -> int:
    data = load_long_csv(args.data, _schema(args), args.domain)
    model = fit_fpca(data, _fpca_config(args))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            dump_model(model, fh)
    else:
        dump_model(model, sys.stdout)
    return 0


def cmd_train(args) -> int:
    data = load_long_csv(args.data, _schema(args), args.domain)
    kind = ClassifierKind.parse(args.classifier)
    ens = bootstrap_fit(data, kind, args.B, _fpca_config(args), None, args.seed)
    calib = calibrate(ens, args.calibration_mode, args.prior_scale0, args.prior_scale1)
    with open(args.out, "wb") as fh:
        pickle.dump({"format": MODEL_FORMAT, "ensemble": ens, "calibration": calib}, fh)
    if args.summary:
        with open(args.summary, "w", encoding="utf-8") as fh:
            write_summary(ens, fh, calib)
    if not ens.oob_coverage:
        print("warning: some training curves are never out of bag", file=sys.stderr)
    return 0


def cmd_predict(args) -> int:
    with open(args.model, "rb") as fh:
        bundle = pickle.load(fh)
    if not isinstance(bundle, dict) or bundle.get("format") != MODEL_FORMAT:
        raise UsageError(f"{args.model} is not a saved ensemble")
    ens, calib = bundle["ensemble"], bundle["calibration"]
    data = load_long_csv(args.data, _schema(args), args.domain)
    proba = ens.replica_proba(data)
    votes = votes_from_proba(proba)
    p_bar = aggregate_from_proba(proba)
    pi, bayes = bayesian_from_proba(proba, calib)
    majority = majority_from_votes(votes)
    oob = oob_weighted_from_votes(votes, ens.oob_errors)
    lines = ["id,aggregate_proba,majority,oobweight,bayesian_proba,bayesian"]
    for j, c in enumerate(data):
        lines.append(f"{c.id},{float(p_bar[j])!r},{majority[j]},{oob[j]},{float(pi[j])!r},{bayes[j]}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "realdata": cmd_realdata,
    "generate": cmd_generate,
    "fpca": cmd_fpca,
    "train": cmd_train,
    "predict": cmd_predict,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"fpcbag: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, json.JSONDecodeError, configparser.Error) as exc:
        print(f"fpcbag: error: config: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"fpcbag: error: {exc}", file=sys.stderr)
        return 2
    except (FpcbagError, ValueError, OSError) as exc:
        print(f"fpcbag: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
