"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
"""
import argparse
import math
import os
import sys

import numpy as np

from ..engine import NumericalAbort, run_gcosamp
from ..io import read_mask_csv, read_matrix_csv, write_matrix_csv
from ..models import CombinedModel
from ..operators import (DenseOperator, SubsampledFourierOperator, full_mask, radial_mask,
                         sample_laplace_noise, scale_noise_to_ratio, variable_density_mask)
from ..sacosamp import run_sacosamp
from ..theory import bound_report, mc_mean_width, verify_gordon, verify_projected_contraction
from .config import (ConfigError, get_float, get_int, load_config, model_from_section, parse_pairs,
                     settings_from_section)
from .experiments import (image_config_from_sections, run_image_experiment, run_vanishing_noise,
                          vanishing_config_from_sections)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EMPTY = {"problem": {}, "model": {}, "settings": {}, "experiment": {}}


def _sections(args):
    sections = load_config(args.config) if getattr(args, "config", None) else {k: {} for k in EMPTY}
    if getattr(args, "model", None):
        sections["model"].update(parse_pairs(args.model))
    return sections


# -- recover -----------------------------------------------------------------------


def build_measurement(problem, n):
    kind = problem.get("operator", "gaussian")
    seed = get_int(problem, "seed", 0)
    if kind == "gaussian":
        m = get_int(problem, "m")
        return DenseOperator(np.random.default_rng(seed).standard_normal((m, n)), kind="gaussian-random")
    if kind == "matrix":
        return DenseOperator(read_matrix_csv(problem["matrix_file"]))
    if kind == "fourier":
        h, w = get_int(problem, "image_height"), get_int(problem, "image_width")
        if h * w != n:
            raise ConfigError(f"image {h}x{w} does not match model dimension {n}")
        pattern = problem.get("mask", "variable-density")
        if pattern == "full":
            mask = full_mask(h, w)
        elif pattern == "radial":
            mask = radial_mask(h, w, get_int(problem, "lines"))
        elif pattern == "variable-density":
            mask = variable_density_mask(h, w, get_float(problem, "fraction"), seed,
                                         get_float(problem, "decay", 2.0))
        elif pattern == "file":
            mask = read_mask_csv(problem["mask_file"])
        else:
            raise ConfigError(f"unknown mask {pattern!r}")
        return SubsampledFourierOperator(mask)
    raise ConfigError(f"unknown operator {kind!r}")


def _recover(args):
    sections = _sections(args)
    problem = sections["problem"]
    model = model_from_section(sections["model"])
    settings = settings_from_section(sections["settings"])
    A = build_measurement(problem, model.n)
    seed = get_int(problem, "seed", 0)
    rng = np.random.default_rng([seed, 1])
    truth = None
    if "measurements_file" in problem:
        y = read_matrix_csv(problem["measurements_file"]).ravel()
    else:
        if "signal_file" in problem:
            truth = read_matrix_csv(problem["signal_file"]).ravel()
        else:
            truth = model.random_signal(rng)
        Ax = A.apply(truth)
        ratio = get_float(problem, "noise_ratio", 0.0)
        y = Ax
        if ratio > 0:
            y = Ax + scale_noise_to_ratio(sample_laplace_noise(A.rows, 1.0, seed + 1), Ax, ratio)
    if y.shape != (A.rows,):
        raise ConfigError(f"{y.size} measurements for an operator with {A.rows} rows")

    if isinstance(model, CombinedModel) and problem.get("solver", "gcosamp") == "sacosamp":
        syn, ana = model.parts
        res = run_sacosamp(A, y, syn.D, ana.Omega, syn.k, ana.ell, problem.get("ls_mode", "unified"), settings)
        estimate, trace = res.x, res.trace
        residual = trace.records[-1].residual_norm
    else:
        trace = run_gcosamp(A, y, model, settings, truth=truth)
        estimate, residual = trace.estimate, trace.records[-1].residual_norm
    if args.trace:
        trace.write_csv(args.trace)
    if args.estimate:
        write_matrix_csv(args.estimate, estimate[:, None])
    rel = math.nan if truth is None else float(np.linalg.norm(estimate - truth) / max(np.linalg.norm(truth), 1e-300))
    print("halt,iterations,residual_norm,relative_error")
    print(f"{trace.halt_reason},{trace.iterations},{residual!r},{rel!r}")


# -- theory -----------------------------------------------------------------------------


def _bound(args):
    report = bound_report(args.m, args.w4, args.w3, args.eta, args.m0)
    sys.stdout.write(report.to_csv())


def _meanwidth(args):
    model = model_from_section(_sections(args)["model"])
    est = mc_mean_width(model, args.order, args.samples, args.seed, C=args.C, delta=args.delta)
    sys.stdout.write(est.to_csv())


def _verify(args):
    model = model_from_section(_sections(args)["model"])
    if args.check == "gordon":
        res = verify_gordon(model, args.order, args.m, args.eta, args.trials, args.seed)
    else:
        res = verify_projected_contraction(model, args.order, args.m, args.mu, args.eta, args.trials, args.seed)
    print("check,pass_rate,floor,passes,trials,width,bound")
    print(f"{args.check},{res.pass_rate!r},{res.floor!r},{res.passes},{res.trials},{res.width!r},{res.bound!r}")


# -- experiments --------------------------------------------------------------------------


def _exp(args):
    sections = _sections(args)
    if args.experiment == "vanishing-noise":
        try:
            cfg = vanishing_config_from_sections(sections)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        result = run_vanishing_noise(cfg)
        result.write_csv(args.out)
        print("slope,slope_halfwidth,intercept,failures,fit_points")
        print(f"{result.slope!r},{result.slope_halfwidth!r},{result.intercept!r},"
              f"{result.failures},{result.meta['fit_points']}")
    else:
        try:
            cfg = image_config_from_sections(sections)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        os.makedirs(args.out, exist_ok=True)
        result = run_image_experiment(cfg, args.out)
        sys.stdout.write(result.to_csv())


def build_parser():
    parser = argparse.ArgumentParser(prog="gcosamp", description="Greedy recovery over unions of subspaces.")
    sub = parser.add_subparsers(dest="command", required=True)

    def model_args(p):
        p.add_argument("--config", help="config file with a [model] section")
        p.add_argument("--model", nargs="*", metavar="KEY=VALUE", help="model keys, override the config")

    p = sub.add_parser("recover", help="single recovery run from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--trace", help="write the iteration trace CSV here")
    p.add_argument("--estimate", help="write the estimate as a CSV column here")
    p.set_defaults(func=_recover)

    p = sub.add_parser("bound", help="recovery bound report")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--w4", type=float, default=0.0)
    p.add_argument("--w3", type=float, default=None)
    p.add_argument("--eta", type=float, default=3.0)
    p.add_argument("--m0", type=float, default=None)
    p.set_defaults(func=_bound)

    p = sub.add_parser("meanwidth", help="Monte-Carlo Gaussian mean width of a model")
    model_args(p)
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--C", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=None)
    p.set_defaults(func=_meanwidth)

    p = sub.add_parser("verify", help="Monte-Carlo check of the Gaussian-matrix lemmas")
    p.add_argument("check", choices=("gordon", "contraction"))
    model_args(p)
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--eta", type=float, default=3.0)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_verify)

    p = sub.add_parser("exp", help="run an experiment")
    p.add_argument("experiment", choices=("vanishing-noise", "image"))
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="CSV path (vanishing-noise) or directory (image)")
    p.set_defaults(func=_exp)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:  # ConfigError and ShapeError included
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
