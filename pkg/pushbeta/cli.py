import argparse
import contextlib
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import IO, Any

import numpy as np

from . import runlog
from .config import ensure_dirs, get_paths
from .distribution import (
    GENERATOR_NAME,
    cdf,
    entropy_neg_log,
    expected_logs,
    mean_variance,
    pdf,
    quantile,
    sample,
)
from .fitting import FitConfig, FitError, default_init, fit_mle
from .inference import (
    BinarySample,
    ModelVariant,
    kl_divergence,
    kl_profile,
    posterior,
    predictive_probability,
    simulate_consistency,
    survey_posterior,
)
from .params import Direction, ParameterError, PushBetaParams
from .quadrature import LogIntegralRequest, QuadratureConfig, QuadratureError, QuadratureMode, log_integral
from .settings import NumericSettings, load_settings, save_settings
from .shape import NoUniqueModeError, classify_shape, hdr, mode


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def _fmt(value: Any) -> str:
    if isinstance(value, bool) or value is None:
        return json.dumps(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.10g}"
    return str(value)


def _clean(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_clean(v) for v in value.tolist()]
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return _fmt(value)
        return float(f"{value:.10g}")
    return str(value)


def _emit_record(args: argparse.Namespace, record: dict[str, Any]) -> None:
    out = args.out
    if args.format == "json":
        out.write(json.dumps(_clean(record), ensure_ascii=False) + "\n")
    elif args.format == "csv":
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(list(record))
        writer.writerow([_fmt(v) if not isinstance(v, (dict, list, tuple)) else json.dumps(_clean(v)) for v in record.values()])
    else:
        for key, value in record.items():
            text = json.dumps(_clean(value)) if isinstance(value, (dict, list, tuple)) else _fmt(value)
            out.write(f"{key}: {text}\n")


def _emit_table(args: argparse.Namespace, columns: list[str], rows: list[list[Any]], value_only: bool = False) -> None:
    out = args.out
    if args.format == "json":
        out.write(json.dumps([_clean(dict(zip(columns, row))) for row in rows], ensure_ascii=False) + "\n")
    elif args.format == "plain" and value_only:
        for row in rows:
            out.write(_fmt(row[-1]) + "\n")
    else:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _floats(raw: str, name: str) -> list[float]:
    try:
        values = [float(part) for part in str(raw).split(",") if part.strip()]
    except ValueError as exc:
        raise ParameterError(f"--{name} expects comma-separated numbers, got {raw!r}") from exc
    if not values:
        raise ParameterError(f"--{name} needs at least one value")
    return values


def _ints(raw: str, name: str) -> list[int]:
    values = _floats(raw, name)
    if any(int(v) != v for v in values):
        raise ParameterError(f"--{name} expects integers, got {raw!r}")
    return [int(v) for v in values]


def _settings() -> NumericSettings:
    paths = get_paths()
    ensure_dirs(paths)
    return load_settings(paths)


def _quadrature(args: argparse.Namespace) -> QuadratureConfig:
    stored = _settings()
    node_count = args.intvals if getattr(args, "intvals", None) is not None else stored.node_count
    method = args.method if getattr(args, "method", None) is not None else stored.method
    return QuadratureConfig(node_count=node_count, mode=QuadratureMode(method))


def _single(raw: str, name: str) -> float:
    values = _floats(raw, name)
    if len(values) != 1:
        raise ParameterError(f"--{name} takes a single value for this command")
    return values[0]


def _params(args: argparse.Namespace, gamma: float | None = None) -> PushBetaParams:
    if gamma is None:
        gamma = _single(args.intensity, "intensity")
    direction = Direction.RIGHT if args.right else Direction.LEFT
    return PushBetaParams(args.shape1, args.shape2, gamma, args.proportion, direction)


def cmd_pdf(args: argparse.Namespace) -> int:
    params = _params(args)
    config = _quadrature(args)
    xs = _floats(args.x, "x")
    values = np.atleast_1d(pdf(np.array(xs), params, log_scale=args.log, config=config))
    column = "log_density" if args.log else "density"
    _emit_table(args, ["x", column], [[x, v] for x, v in zip(xs, values)], value_only=True)
    return 0


def cmd_cdf(args: argparse.Namespace) -> int:
    params = _params(args)
    config = _quadrature(args)
    xs = _floats(args.x, "x")
    values = np.atleast_1d(cdf(np.array(xs), params, lower_tail=args.lower_tail, log_scale=args.log, config=config))
    column = ("log_" if args.log else "") + ("lower" if args.lower_tail else "upper")
    _emit_table(args, ["x", column], [[x, v] for x, v in zip(xs, values)], value_only=True)
    return 0


def cmd_quantile(args: argparse.Namespace) -> int:
    params = _params(args)
    config = _quadrature(args)
    ps = _floats(args.p, "p")
    values = np.atleast_1d(quantile(np.array(ps), params, lower_tail=args.lower_tail, log_p=args.log, config=config))
    _emit_table(args, ["p", "quantile"], [[p, v] for p, v in zip(ps, values)], value_only=True)
    return 0


def cmd_sample(args: argparse.Namespace) -> int:
    params = _params(args)
    config = _quadrature(args)
    if args.n < 0:
        raise ParameterError(f"--n must be nonnegative, got {args.n}")
    draws = sample(args.n, params, seed=args.seed, config=config)
    if args.format == "json":
        _emit_record(
            args,
            {"generator": GENERATOR_NAME, "seed": args.seed, "params": params.as_dict(), "values": draws.tolist()},
        )
    else:
        _emit_table(args, ["value"], [[v] for v in draws], value_only=True)
    return 0


def cmd_moments(args: argparse.Namespace) -> int:
    params = _params(args)
    config = _quadrature(args)
    mean, variance = mean_variance(params, config)
    record: dict[str, Any] = {"mean": mean, "variance": variance}
    if args.include_sd:
        record["sd"] = math.sqrt(variance)
    if args.include_logs:
        record.update(expected_logs(params, config).as_dict())
        record["entropy"] = entropy_neg_log(params, config)
    _emit_record(args, record)
    return 0


def cmd_scale(args: argparse.Namespace) -> int:
    params = _params(args)
    config = _quadrature(args)
    rows = []
    for r in _floats(args.r, "r"):
        value = log_integral(LogIntegralRequest(r, params), config)
        rows.append([r, value if args.log else math.exp(value)])
    _emit_table(args, ["r", "log_integral" if args.log else "integral"], rows, value_only=True)
    return 0


def cmd_shape(args: argparse.Namespace) -> int:
    params = _params(args)
    report = classify_shape(params)
    record = report.as_dict()
    try:
        record["mode"] = mode(params)
    except NoUniqueModeError:
        record["mode"] = None
    _emit_record(args, record)
    return 0


def cmd_hdr(args: argparse.Namespace) -> int:
    params = _params(args)
    region = hdr(args.cover_prob, params, _quadrature(args))
    _emit_record(args, region.as_dict())
    return 0


def _variant(raw: str) -> ModelVariant:
    try:
        return ModelVariant(raw)
    except ValueError as exc:
        raise ParameterError(f"unknown model variant {raw!r}") from exc


def cmd_posterior(args: argparse.Namespace) -> int:
    config = _quadrature(args)
    gamma = _single(args.intensity, "intensity")
    if args.survey_yes is not None or args.survey_no is not None:
        if args.survey_yes is None or args.survey_no is None:
            raise ParameterError("--survey-yes and --survey-no go together")
        variant = ModelVariant.ABSENCE_CONJUNCTION
        prior = PushBetaParams(args.shape1, args.shape2, gamma, args.proportion, Direction.RIGHT)
        post = survey_posterior(args.survey_yes, args.survey_no, args.proportion, prior)
    else:
        if args.n is None or args.sum is None:
            raise ParameterError("posterior needs --n and --sum (or --survey-yes/--survey-no)")
        variant = _variant(args.variant)
        direction = Direction.RIGHT if args.right else variant.direction
        prior = PushBetaParams(args.shape1, args.shape2, gamma, args.proportion, direction)
        post = posterior(prior, BinarySample(args.n, args.sum), variant)

    mean, variance = mean_variance(post, config)
    try:
        post_mode: float | None = mode(post)
    except NoUniqueModeError:
        post_mode = None
    region = hdr(args.cover_prob, post, config)
    _emit_record(
        args,
        {
            "variant": variant.value,
            "posterior": post.as_dict(),
            "mean": mean,
            "sd": math.sqrt(variance),
            "mode": post_mode,
            "hdr": [list(pair) for pair in region.intervals],
            "cover_prob": args.cover_prob,
            "predictive_probability": predictive_probability(post, variant, config),
        },
    )
    return 0


def cmd_kl(args: argparse.Namespace) -> int:
    variant = _variant(args.variant)
    if args.theta is not None:
        rows = [
            [t, kl_divergence(args.theta0, args.phi0, t, args.phi, args.n, variant)]
            for t in _floats(args.theta, "theta")
        ]
        _emit_table(args, ["theta", "kl"], rows, value_only=True)
        return 0
    profile = kl_profile(args.theta0, args.phi0, args.phi, args.n, variant, grid_size=args.grid_size)
    if args.format == "csv":
        _emit_table(args, ["theta", "kl"], [list(pair) for pair in profile.curve])
    else:
        _emit_record(args, profile.as_dict())
    return 0


def cmd_consistency(args: argparse.Namespace) -> int:
    variant = _variant(args.variant)
    prior = PushBetaParams(args.shape1, args.shape2, float(args.intensity), args.phi, variant.direction)
    records = simulate_consistency(
        args.theta0,
        args.phi0,
        args.phi,
        variant,
        prior,
        _ints(args.schedule, "schedule"),
        args.replications,
        args.seed,
        workers=args.workers,
        config=_quadrature(args),
    )
    columns = ["replication", "n", "post_mean", "post_sd", "theta_star", "abs_err"]
    if args.format == "plain":
        args.format = "csv"
    _emit_table(args, columns, [[r.as_dict()[c] for c in columns] for r in records])
    return 0


def _read_data(args: argparse.Namespace) -> list[float]:
    if args.input in (None, "-"):
        text = args.stdin.read()
    else:
        try:
            text = Path(args.input).read_text(encoding="utf-8")
        except OSError as exc:
            raise ParameterError(f"cannot read {args.input}: {exc}") from exc
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            values.append(float(line))
        except ValueError as exc:
            raise ParameterError(f"line {lineno}: not a number: {line!r}") from exc
    if not values:
        raise ParameterError("no data values given")
    return values


def cmd_fit(args: argparse.Namespace) -> int:
    data = _read_data(args)
    stored = _settings()
    fit_config = stored.fit_config(fix_phi=args.fix_phi)
    if args.max_iterations is not None or args.gradient_tolerance is not None:
        fit_config = FitConfig(
            max_iterations=args.max_iterations or fit_config.max_iterations,
            gradient_tolerance=args.gradient_tolerance or fit_config.gradient_tolerance,
            fix_phi=args.fix_phi,
        )
    init = None
    if args.shape1 is not None and args.shape2 is not None:
        init = PushBetaParams(
            args.shape1,
            args.shape2,
            float(args.intensity),
            args.fix_phi if args.fix_phi is not None else args.proportion,
            Direction.RIGHT if args.right else Direction.LEFT,
        )
    elif args.right:
        init = default_init(data, Direction.RIGHT, args.fix_phi)
    result = fit_mle(data, init, fit_config, _quadrature(args))
    record = result.as_dict()
    record["n"] = len(data)
    if args.format == "plain":
        args.format = "json"
    _emit_record(args, record)
    return 0


def cmd_density_curve(args: argparse.Namespace) -> int:
    if args.points < 2:
        raise ParameterError(f"--points must be at least 2, got {args.points}")
    config = _quadrature(args)
    gammas = _floats(args.intensity, "intensity")
    xs = np.linspace(0.0, 1.0, args.points)
    columns = ["x"] + [f"gamma={g:g}" for g in gammas]
    curves = [np.atleast_1d(pdf(xs, _params(args, gamma=g), config=config)) for g in gammas]
    rows = [[x, *(curve[i] for curve in curves)] for i, x in enumerate(xs)]
    if args.format == "plain":
        args.format = "csv"
    _emit_table(args, columns, rows)
    return 0


def cmd_settings(args: argparse.Namespace) -> int:
    paths = get_paths()
    current = load_settings(paths)
    changes = {
        "node_count": args.intvals,
        "method": args.method,
        "gradient_tolerance": args.gradient_tolerance,
        "max_iterations": args.max_iterations,
    }
    changes = {k: v for k, v in changes.items() if v is not None}
    if changes:
        fields = current.as_dict()
        fields.update(changes)
        current = NumericSettings(**fields)
        current.quadrature_config()
        current.fit_config()
        save_settings(paths, current)
    record = current.as_dict()
    record["settings_file"] = str(paths.settings_file)
    record["saved"] = bool(changes)
    _emit_record(args, record)
    return 0


def _add_output(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=["plain", "json", "csv"], default="plain")


def _add_numeric(p: argparse.ArgumentParser) -> None:
    p.add_argument("--intvals", type=int, default=None, help="Quantile nodes for the midpoint quadrature")
    p.add_argument("--method", choices=[m.value for m in QuadratureMode], default=None)


def _add_params(p: argparse.ArgumentParser, required: bool = True, default_shapes: float | None = None) -> None:
    p.add_argument("--shape1", type=float, required=required, default=default_shapes, help="alpha")
    p.add_argument("--shape2", type=float, required=required, default=default_shapes, help="beta")
    p.add_argument("--intensity", default="0", help="gamma (push intensity)")
    p.add_argument("--proportion", type=float, default=0.0, help="phi (push proportion)")
    p.add_argument("--right", action="store_true", help="Right push (left is the default)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pushbeta", description="Pushed beta distribution toolkit")
    parser.add_argument("--verbose", action="store_true", help="Log JSON events to stderr")
    parser.add_argument("--log-file", default=None, help="Append JSON events to this file")
    sub = parser.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    p = sub.add_parser("pdf", aliases=["dpushbeta"], help="Density")
    _add_params(p)
    p.add_argument("--x", required=True, help="Point(s), comma-separated")
    p.add_argument("--log", action="store_true", help="Log density")
    _add_numeric(p)
    _add_output(p)
    p.set_defaults(func=cmd_pdf)

    p = sub.add_parser("cdf", aliases=["ppushbeta"], help="Distribution function")
    _add_params(p)
    p.add_argument("--x", required=True, help="Point(s), comma-separated")
    p.add_argument("--lower-tail", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--log", action="store_true", help="Log probability")
    _add_numeric(p)
    _add_output(p)
    p.set_defaults(func=cmd_cdf)

    p = sub.add_parser("quantile", aliases=["qpushbeta"], help="Quantile function")
    _add_params(p)
    p.add_argument("--p", required=True, help="Probability(ies), comma-separated")
    p.add_argument("--lower-tail", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--log", action="store_true", help="Probabilities are given on the log scale")
    _add_numeric(p)
    _add_output(p)
    p.set_defaults(func=cmd_quantile)

    p = sub.add_parser("sample", aliases=["rpushbeta"], help="Random generation")
    _add_params(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    _add_numeric(p)
    _add_output(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("moments", aliases=["moments.dpushbeta"], help="Mean and variance")
    _add_params(p)
    p.add_argument("--include-sd", action="store_true")
    p.add_argument("--include-logs", action="store_true", help="Also report expected logs and entropy")
    _add_numeric(p)
    _add_output(p)
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("scale", aliases=["scale.pushbeta"], help="Log integral of the kernel over [0, r]")
    _add_params(p)
    p.add_argument("--r", default="1", help="Upper limit(s), comma-separated")
    p.add_argument("--log", action=argparse.BooleanOptionalAction, default=True)
    _add_numeric(p)
    _add_output(p)
    p.set_defaults(func=cmd_scale)

    p = sub.add_parser("shape", help="Shape classification and critical points")
    _add_params(p)
    _add_output(p)
    p.set_defaults(func=cmd_shape)

    p = sub.add_parser("hdr", aliases=["HDR.pushbeta"], help="Highest density region")
    _add_params(p)
    p.add_argument("--cover-prob", type=float, required=True)
    _add_numeric(p)
    _add_output(p)
    p.set_defaults(func=cmd_hdr)

    p = sub.add_parser("posterior", help="Conjugate posterior for contaminated binary data")
    _add_params(p, required=False, default_shapes=1.0)
    p.add_argument("--variant", choices=[v.value for v in ModelVariant], default=ModelVariant.PRIMARY_CONJUNCTION.value)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--sum", type=int, default=None)
    p.add_argument("--survey-yes", type=int, default=None)
    p.add_argument("--survey-no", type=int, default=None)
    p.add_argument("--cover-prob", type=float, default=0.95)
    _add_numeric(p)
    _add_output(p)
    p.set_defaults(func=cmd_posterior)

    p = sub.add_parser("kl", help="KL divergence profile and its clamped minimiser")
    p.add_argument("--theta0", type=float, required=True)
    p.add_argument("--phi0", type=float, required=True)
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--theta", default=None, help="Evaluate at these theta values instead of a profile")
    p.add_argument("--variant", choices=[v.value for v in ModelVariant], default=ModelVariant.PRIMARY_CONJUNCTION.value)
    p.add_argument("--grid-size", type=int, default=101)
    _add_output(p)
    p.set_defaults(func=cmd_kl)

    p = sub.add_parser("consistency", help="Monte Carlo posterior trajectories (CSV)")
    p.add_argument("--theta0", type=float, required=True)
    p.add_argument("--phi0", type=float, required=True)
    p.add_argument("--phi", type=float, required=True)
    p.add_argument("--variant", choices=[v.value for v in ModelVariant], default=ModelVariant.PRIMARY_CONJUNCTION.value)
    p.add_argument("--shape1", type=float, default=1.0)
    p.add_argument("--shape2", type=float, default=1.0)
    p.add_argument("--intensity", type=float, default=0.0)
    p.add_argument("--schedule", default="100,1000,10000")
    p.add_argument("--replications", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    _add_numeric(p)
    _add_output(p)
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("fit", help="Maximum likelihood fit of newline-delimited data")
    p.add_argument("--input", default="-", help="Data file ('-' for stdin)")
    p.add_argument("--shape1", type=float, default=None, help="Initial alpha")
    p.add_argument("--shape2", type=float, default=None, help="Initial beta")
    p.add_argument("--intensity", type=float, default=0.5, help="Initial gamma")
    p.add_argument("--proportion", type=float, default=0.5, help="Initial phi")
    p.add_argument("--right", action="store_true")
    p.add_argument("--fix-phi", type=float, default=None)
    p.add_argument("--max-iterations", type=int, default=None)
    p.add_argument("--gradient-tolerance", type=float, default=None)
    _add_numeric(p)
    _add_output(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("density-curve", help="Density on a grid, one column per intensity (CSV)")
    _add_params(p)
    p.add_argument("--points", type=int, default=401)
    _add_numeric(p)
    _add_output(p)
    p.set_defaults(func=cmd_density_curve)

    p = sub.add_parser("settings", help="Show or save numeric defaults")
    p.add_argument("--intvals", type=int, default=None)
    p.add_argument("--method", choices=[m.value for m in QuadratureMode], default=None)
    p.add_argument("--gradient-tolerance", type=float, default=None)
    p.add_argument("--max-iterations", type=int, default=None)
    _add_output(p)
    p.set_defaults(func=cmd_settings)

    return parser


def run(
    argv: list[str],
    stdin: IO[str] | None = None,
    stdout: IO[str] | None = None,
    stderr: IO[str] | None = None,
) -> int:
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr

    parser = build_parser()
    try:
        with contextlib.redirect_stdout(stdout):
            args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"pushbeta: {exc}", file=stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)

    log_file = args.log_file or os.environ.get("PUSHBETA_LOG")
    runlog.configure(stream=stderr if args.verbose else None, log_file=log_file, level=logging.DEBUG if args.verbose else logging.INFO)
    args.out = stdout
    args.stdin = stdin
    try:
        return int(args.func(args))
    except ParameterError as exc:
        print(f"pushbeta: {exc}", file=stderr)
        return 2
    except (QuadratureError, FitError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"pushbeta: {exc}", file=stderr)
        return 1


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
