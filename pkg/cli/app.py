"""
Command-line interface: generate, fit, estimate-dim, cv, two-stage and bench.

Every verb prints one JSON document on stdout; logs and progress go to
stderr. Settings are layered: flag, then the --config (bench: --spec) JSON
file, then built-in defaults.
"""

import argparse
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from bench.experiment import MODELS, TASKS, ExperimentRunner, ExperimentSpec
from bench.reports import format_table, to_json, write_report
from config import ConfigManager, config_manager
from lab.generators import CircleManifoldConfig, SwissRollConfig, gen_circle_manifold, gen_swiss_roll
from processing.bandwidth import BandwidthPrior, McmcConfig, run_chain
from processing.cv_select import CvConfig, cross_validate
from processing.dataset import Dataset, ResponseScaling, load_csv, save_csv, split, write_table
from processing.estimator import FitResult, TruncationLevel, estimate
from processing.intrinsic_dim import estimate_dimension
from processing.two_stage import EigenmapConfig, two_stage_fit
from utils.logger import logger
from utils.validators import (
    NumericalError,
    ValidationError,
    validate_int_range,
    validate_output_path,
)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

GENERATE_DEFAULTS = {"manifold": None, "n": None, "seed": 0, "ambient": None, "noise": 0.1,
                     "harmonics": 3, "spacing": "equal", "truth": "cos", "out": None}
MCMC_DEFAULTS = {"preset": None, "iters": None, "burnin": None, "proposal_sd": None,
                 "infer_noise": False, "noise_var": 0.01, "response_scaling": "standardize",
                 "a0": 1.0, "b0": 1.0, "thin": 10, "draws_per_a": 1, "tau": None, "seed": 0,
                 "workers": None}
FIT_DEFAULTS = {**MCMC_DEFAULTS, "train": None, "dim": "auto", "k": None, "query": None,
                "out": None, "chain_out": None, "standardize": False}
ESTIMATE_DIM_DEFAULTS = {"data": None, "k": None, "queries": None, "single_query": False,
                         "seed": 0, "out": None}
CV_DEFAULTS = {**MCMC_DEFAULTS, "data": None, "dmax": 20, "test_frac": 0.5, "splits": 1,
               "refit_all": False, "out": None}
TWO_STAGE_DEFAULTS = {**MCMC_DEFAULTS, "train": None, "dtilde": 2, "prior_dim": None,
                      "neighbors": None, "heat": None, "test_frac": None, "out": None, "embedding_out": None}

# ExperimentSpec keys reachable from bench flags
BENCH_FLAG_KEYS = {"task": "task", "sizes": "sample_sizes", "replicates": "replicates",
                   "model": "model", "seed": "seed", "out": "out_path", "ambient": "ambient_dim",
                   "noise": "noise_sd", "fixed_dim": "fixed_dim", "dmax": "d_max",
                   "total_size": "total_size", "dtilde": "d_tilde", "prior_dim": "prior_dim",
                   "neighbors": "n_neighbors", "workers": "workers", "thin": "thin", "draws_per_a": "draws_per_a",
                   "a0": "a0", "b0": "b0"}


class ProgressReporter:
    """Single-line progress on stderr with percentage and ETA."""

    def __init__(self, stream=None, enabled: bool = True):
        self.stream = stream or sys.stderr
        self.enabled = enabled
        self.status = "Ready"

    def start(self, status: str = "Running..."):
        self.status = status
        self.update(0.0)

    def update(self, progress: float, eta_text: str = ""):
        if not self.enabled:
            return
        line = f"\r{self.status} {int(progress * 100):3d}% {eta_text}".rstrip()
        self.stream.write(line.ljust(60))
        self.stream.flush()

    def finish(self, status: str = "Complete!"):
        if not self.enabled:
            return
        self.stream.write(f"\r{status}".ljust(60) + "\n")
        self.stream.flush()

    def on_status(self, level: str, message: str):
        """Logger status callback; a SUCCESS line becomes the final label."""
        if level == "SUCCESS":
            self.status = message


# Argument parsing

def _dim_arg(value: str):
    if value == "auto":
        return value
    try:
        return int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--dim must be a positive integer or 'auto', got: {value!r}")


def _heat_arg(value: str):
    if value == "binary":
        return value
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--heat must be a number or 'binary', got: {value!r}")


def _sizes_arg(value: str) -> List[int]:
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--sizes must be comma-separated integers, got: {value!r}")


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with defaults for this verb's flags")
    p.add_argument("--verbose", action="store_true", help="debug logging on stderr")
    p.add_argument("--quiet", action="store_true", help="warnings and errors only")
    p.add_argument("--log-file", action="store_true", help="also log to ~/.manigp/logs")


def _add_mcmc(p: argparse.ArgumentParser):
    p.add_argument("--preset", help="sampler preset: paper, desk or smoke")
    p.add_argument("--iters", type=int, help="MCMC iterations")
    p.add_argument("--burnin", type=int, help="burn-in iterations")
    p.add_argument("--proposal-sd", type=float, help="random-walk sd on log a")
    p.add_argument("--infer-noise", action="store_true", default=None,
                   help="sample the noise variance under an inverse-Gamma(1, 1) prior")
    p.add_argument("--noise-var", type=float, help="fixed noise variance (default 0.01)")
    p.add_argument("--response-scaling", choices=ResponseScaling.MODES)
    p.add_argument("--a0", type=float, help="Gamma shape of A^d")
    p.add_argument("--b0", type=float, help="Gamma rate of A^d")
    p.add_argument("--thin", type=int, help="use every thin-th bandwidth draw")
    p.add_argument("--draws-per-a", type=int, help="function draws per retained bandwidth")
    p.add_argument("--tau", type=float, help="truncation level (default 2 max|y|)")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, help="threads for independent GP fits")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="manigp",
        description="Gaussian process regression that adapts to manifold-supported predictors.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("generate", help="write a synthetic manifold dataset")
    _add_common(p)
    p.add_argument("--manifold", choices=("swiss-roll", "circle"))
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--ambient", type=int, help="ambient dimension (swiss-roll 100, circle 20)")
    p.add_argument("--noise", type=float, help="noise sd (default 0.1)")
    p.add_argument("--harmonics", type=int, help="circle embedding harmonics")
    p.add_argument("--spacing", choices=("equal", "uniform"))
    p.add_argument("--truth", choices=("cos", "sin"))
    p.add_argument("--out")

    p = sub.add_parser("fit", help="truncated GP estimate")
    _add_common(p)
    _add_mcmc(p)
    p.add_argument("--train")
    p.add_argument("--dim", type=_dim_arg, help="prior dimension exponent or 'auto'")
    p.add_argument("--k", type=int, help="neighbors for --dim auto")
    p.add_argument("--query", help="CSV of query rows (dataset format, y ignored)")
    p.add_argument("--out")
    p.add_argument("--chain-out", help="CSV dump of the bandwidth chain")
    p.add_argument("--standardize", action="store_true", default=None,
                   help="center and scale predictor columns first")

    p = sub.add_parser("estimate-dim", help="nearest-neighbor intrinsic dimension")
    _add_common(p)
    p.add_argument("--data")
    p.add_argument("--k", type=int)
    p.add_argument("--queries", type=int, help="number of query rows (default min(n, 100))")
    p.add_argument("--single-query", action="store_true", default=None, help="use row 0 only")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = sub.add_parser("cv", help="select the prior dimension by holdout MSPE")
    _add_common(p)
    _add_mcmc(p)
    p.add_argument("--data")
    p.add_argument("--dmax", type=int)
    p.add_argument("--test-frac", type=float)
    p.add_argument("--splits", type=int, help="average MSPE over this many splits")
    p.add_argument("--refit-all", action="store_true", default=None,
                   help="refit the selected dimension on all rows")
    p.add_argument("--out", help="JSON file for the selected fit")

    p = sub.add_parser("two-stage", help="Laplacian eigenmap then GP")
    _add_common(p)
    _add_mcmc(p)
    p.add_argument("--train")
    p.add_argument("--dtilde", type=int)
    p.add_argument("--prior-dim", type=int, help="prior dimension exponent (default: dtilde)")
    p.add_argument("--neighbors", type=int)
    p.add_argument("--heat", type=_heat_arg, help="heat-kernel t, or 'binary'")
    p.add_argument("--test-frac", type=float, help="hold out rows and score them")
    p.add_argument("--out")
    p.add_argument("--embedding-out", help="CSV dump of the embedding")

    p = sub.add_parser("bench", help="run a simulation study")
    _add_common(p)
    p.add_argument("--task", choices=TASKS)
    p.add_argument("--spec", help="JSON experiment spec")
    p.add_argument("--sizes", type=_sizes_arg, help="comma-separated sample sizes")
    p.add_argument("--replicates", type=int)
    p.add_argument("--model", choices=MODELS)
    p.add_argument("--seed", type=int)
    p.add_argument("--ambient", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--fixed-dim", type=int)
    p.add_argument("--dmax", type=int)
    p.add_argument("--total-size", type=int)
    p.add_argument("--dtilde", type=int)
    p.add_argument("--prior-dim", type=int, help="2gp prior dimension exponent (default: true dimension)")
    p.add_argument("--neighbors", type=int)
    p.add_argument("--preset")
    p.add_argument("--iters", type=int)
    p.add_argument("--burnin", type=int)
    p.add_argument("--infer-noise", action="store_true", default=None)
    p.add_argument("--thin", type=int)
    p.add_argument("--draws-per-a", type=int)
    p.add_argument("--a0", type=float)
    p.add_argument("--b0", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--allow-partial", action="store_true", default=None,
                   help="record failed cells instead of aborting")
    p.add_argument("--out")
    return parser


# Helpers

def _settings(args: argparse.Namespace, defaults: Dict[str, Any]) -> Dict[str, Any]:
    flags = {k: v for k, v in vars(args).items() if k in defaults}
    file_values = ConfigManager.load_spec_file(args.config) if args.config else {}
    return ConfigManager.merge(defaults, file_values, flags)


def _require(values: Dict[str, Any], *names: str):
    for name in names:
        if values.get(name) is None:
            raise ValidationError(f"--{name.replace('_', '-')} is required")


def _workers(values: Dict[str, Any]) -> int:
    return validate_int_range(values.get("workers") or config_manager.config.workers, "workers", 1)


def _mcmc_config(values: Dict[str, Any]) -> McmcConfig:
    name = values.get("preset") or config_manager.config.default_preset
    preset = config_manager.get_preset(name)
    if preset is None:
        raise ValidationError(f"Unknown preset: {name!r}")
    return McmcConfig(
        n_iter=values["iters"] if values.get("iters") is not None else preset.n_iter,
        burn_in=values["burnin"] if values.get("burnin") is not None else preset.burn_in,
        proposal_sd=values.get("proposal_sd") or preset.proposal_sd,
        infer_noise=bool(values.get("infer_noise")),
        noise_var=values.get("noise_var") or 0.01,
        seed=int(values.get("seed") or 0),
        response_scaling=values.get("response_scaling") or "standardize",
    )


def _emit(document: dict, out_path: Optional[str] = None) -> None:
    text = to_json(document, config_manager.config.report_precision)
    if out_path:
        out = validate_output_path(out_path, (".json",))
        with open(out, 'w', encoding='utf-8', newline='\n') as f:
            f.write(text + "\n")
    sys.stdout.write(text + "\n")


def _fit_with_prior(ds: Dataset, prior: BandwidthPrior, values: Dict[str, Any],
                    query: Optional[np.ndarray]) -> FitResult:
    mcmc = _mcmc_config(values)
    chain = run_chain(ds, prior, mcmc)
    logger.info(f"Chain done: mean a={chain.summary().mean_a:.4g}, accept={chain.accept_rate:.2f}")
    if values.get("chain_out"):
        chain.save_csv(values["chain_out"])
    tau = TruncationLevel(values["tau"]) if values.get("tau") else TruncationLevel.from_responses(ds.responses)
    return estimate(ds, chain, query, tau, values["draws_per_a"], values["thin"], mcmc.seed, _workers(values))


# Verbs

def cmd_generate(args: argparse.Namespace) -> int:
    values = _settings(args, GENERATE_DEFAULTS)
    _require(values, "manifold", "n", "out")
    if values["manifold"] == "swiss-roll":
        data = gen_swiss_roll(SwissRollConfig(values["n"], values["ambient"] or 100,
                                              values["noise"], values["seed"]))
    else:
        data = gen_circle_manifold(CircleManifoldConfig(
            values["n"], values["ambient"] or 20, values["harmonics"], values["noise"],
            values["seed"], values["spacing"], values["truth"],
        ))
    out = save_csv(data.dataset, values["out"])
    latent_out = Path(out).with_suffix(".latent.csv")
    write_table(latent_out, list(data.latent_names) + ["f0"],
                np.column_stack([data.latent, data.f0_at_points]))
    logger.success(f"Wrote {data.dataset.n} rows to {out}")
    _emit({"out": str(out), "latent": str(latent_out), "n": data.dataset.n,
           "ambient_dim": data.dataset.dim, "seed": values["seed"]})
    return EXIT_OK


def cmd_estimate_dim(args: argparse.Namespace) -> int:
    values = _settings(args, ESTIMATE_DIM_DEFAULTS)
    _require(values, "data")
    ds = load_csv(values["data"])
    est = estimate_dimension(ds.predictors, k=values["k"], n_queries=values["queries"],
                             seed=values["seed"], single_query=bool(values["single_query"]))
    _emit(est.to_dict(), values["out"])
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    values = _settings(args, FIT_DEFAULTS)
    _require(values, "train")
    ds = load_csv(values["train"])
    if values["standardize"]:
        ds = ds.standardized()
    query = None
    if values["query"]:
        query = load_csv(values["query"]).predictors
        if query.shape[1] != ds.dim:
            raise ValidationError(f"Query file has {query.shape[1]} predictors, training data has {ds.dim}")

    dim = values["dim"]
    if dim == "auto":
        est = estimate_dimension(ds.predictors, k=values["k"], seed=values["seed"])
        logger.info(f"Estimated intrinsic dimension {est.d_hat_raw:.3f} -> d={est.d_hat_rounded}")
        dim = est.d_hat_rounded
    prior = BandwidthPrior(values["a0"], values["b0"], dim)

    fit = _fit_with_prior(ds, prior, values, query)
    _emit({**fit.to_dict(), "dim": prior.d}, values["out"])
    return EXIT_OK


def cmd_cv(args: argparse.Namespace) -> int:
    values = _settings(args, CV_DEFAULTS)
    _require(values, "data")
    ds = load_csv(values["data"])
    cfg = CvConfig(
        d_max=values["dmax"], test_fraction=values["test_frac"], mcmc=_mcmc_config(values),
        tau=TruncationLevel(values["tau"]) if values.get("tau") else None,
        a0=values["a0"], b0=values["b0"], seed=values["seed"], n_splits=values["splits"],
        refit_all=bool(values["refit_all"]), thin=values["thin"],
        draws_per_a=values["draws_per_a"], workers=_workers(values),
    )
    result = cross_validate(ds, cfg)
    if values["out"]:
        document = {**result.final_fit.to_dict(), "dim": result.selected_dim}
        out = validate_output_path(values["out"], (".json",))
        with open(out, 'w', encoding='utf-8', newline='\n') as f:
            f.write(to_json(document, config_manager.config.report_precision) + "\n")
    _emit(result.to_dict())
    return EXIT_OK


def cmd_two_stage(args: argparse.Namespace) -> int:
    values = _settings(args, TWO_STAGE_DEFAULTS)
    _require(values, "train")
    ds = load_csv(values["train"])
    emap = EigenmapConfig(n_neighbors=values["neighbors"], d_tilde=values["dtilde"],
                          heat_bandwidth=values["heat"], seed=values["seed"])
    prior = BandwidthPrior(values["a0"], values["b0"], values["prior_dim"] or values["dtilde"])
    holdout = split(ds, values["test_frac"], values["seed"]) if values["test_frac"] else None
    tau = TruncationLevel(values["tau"]) if values.get("tau") else None

    fit, embedding = two_stage_fit(ds, emap, prior, _mcmc_config(values), tau=tau, holdout=holdout,
                                   thin=values["thin"], draws_per_a=values["draws_per_a"],
                                   workers=_workers(values))
    if values["embedding_out"]:
        embedding.save_csv(values["embedding_out"])

    document = {**fit.to_dict(), "embedding": embedding.diagnostics()}
    if holdout is not None:
        test_y = ds.responses[list(holdout.test_idx)]
        document["test_idx"] = list(holdout.test_idx)
        document["mspe"] = float(np.mean((fit.estimate_at_query - test_y) ** 2))
    _emit(document, values["out"])
    return EXIT_OK


def _bench_spec(args: argparse.Namespace) -> ExperimentSpec:
    file_values = ConfigManager.load_spec_file(args.spec) if args.spec else {}
    if args.config:
        file_values = {**ConfigManager.load_spec_file(args.config), **file_values}
    flags = {spec_key: getattr(args, flag) for flag, spec_key in BENCH_FLAG_KEYS.items()}
    flags["allow_partial"] = args.allow_partial or None
    values = ConfigManager.merge({}, file_values, flags)
    if "out" in values and "out_path" not in values:
        values["out_path"] = values.pop("out")

    mcmc = values.get("mcmc") or {}
    if not isinstance(mcmc, dict):
        raise ValidationError(f"mcmc must be a JSON object, got: {mcmc!r}")
    mcmc = dict(mcmc)
    if not mcmc or args.preset:
        preset_values = {"preset": args.preset, "seed": values.get("seed", 0)}
        mcmc = asdict(_mcmc_config(preset_values))
    for flag, key in (("iters", "n_iter"), ("burnin", "burn_in"), ("infer_noise", "infer_noise")):
        if getattr(args, flag) is not None:
            mcmc[key] = getattr(args, flag)
    values["mcmc"] = mcmc
    _require(values, "task", "sample_sizes")
    return ExperimentSpec.from_dict(values)


def cmd_bench(args: argparse.Namespace) -> int:
    spec = _bench_spec(args)
    progress = ProgressReporter(enabled=not args.quiet)
    runner = ExperimentRunner(spec)
    progress.start(f"{spec.task}")
    logger.set_status_callback(progress.on_status)
    try:
        report = runner.run(progress.update)
    finally:
        logger.set_status_callback(None)
    progress.finish(progress.status)
    if report is None:
        return EXIT_NUMERICAL

    precision = config_manager.config.report_precision
    if spec.out_path:
        paths = write_report(report, spec.out_path, precision)
        logger.info(f"Report written to {paths['json']} (cells: {paths['cells']})")
    sys.stderr.write(format_table(report) + "\n")
    sys.stdout.write(to_json(report.to_dict(), precision) + "\n")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "generate": cmd_generate,
    "fit": cmd_fit,
    "estimate-dim": cmd_estimate_dim,
    "cv": cmd_cv,
    "two-stage": cmd_two_stage,
    "bench": cmd_bench,
}


def _configure_logging(args: argparse.Namespace):
    if args.verbose:
        logger.set_level("DEBUG")
    elif args.quiet:
        logger.set_level("WARNING")
    else:
        logger.set_level(config_manager.config.log_level)
    if args.log_file or config_manager.config.log_to_file:
        logger.enable_file_logging()


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one verb; returns the process exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args)
    try:
        return COMMANDS[args.verb](args)
    except ValidationError as e:
        logger.error(str(e))
        return EXIT_INVALID
    except NumericalError as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
