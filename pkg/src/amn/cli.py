"""Command-line entry point ``amn``.

Exit codes: 0 on success (a non-normable verdict is still a success), 1 when an
internal invariant or a verification check fails, 2 on malformed input.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from amn import report
from amn.asymptote import _workers
from amn.space import ZOO, SpecError, as_vector, parse_spec

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"{text!r} must be positive")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive_real(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"{text!r} is not a number") from None
    if not (math.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError(f"{text!r} must be a positive finite number")
    return value


def _config(args) -> report.AnalysisConfig:
    if args.n_max < 2:
        raise InputError("--n-max must be at least 2")
    return report.AnalysisConfig(
        seed=args.seed, samples=args.samples, n_max=args.n_max, quad=args.quad,
        tol_null=args.tol_null, lambda_max_exp=args.lambda_max_exp,
    )


def _parse_point(space, text: str) -> np.ndarray:
    try:
        coords = [float(t) for t in text.split(",")]
    except ValueError:
        raise InputError(f"malformed point {text!r}") from None
    if not all(math.isfinite(c) for c in coords):
        raise InputError("point coordinates must be finite")
    try:
        return as_vector(space, coords)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _write(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def cmd_zoo_list(args) -> int:
    for name in sorted(ZOO):
        allowed, defaults, description = ZOO[name]
        query = "&".join(f"{k}={v}" for k, v in sorted(defaults.items()))
        spec = f"zoo:{name}" + (f"?{query}" if query else "")
        space = parse_spec(spec)
        summary = space.analytic.summary if space.analytic else "no closed form"
        print(f"zoo:{name}\tparams: {', '.join(sorted(allowed))} (+ jitter)"
              f"\tdefaults: {query or '-'}\t{description}\tground truth: {summary}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    space = parse_spec(args.spec)
    doc = report.analyze(space, _config(args))
    text = report.dumps_report(doc)
    if report.dumps_report(report.loads_report(text)) != text:
        raise report.InvariantError("report does not round-trip")
    _write(text, args.out)
    return EXIT_OK


def cmd_norm_eval(args) -> int:
    space = parse_spec(args.spec)
    x = _parse_point(space, args.point)
    est = report.norm_estimate(space, x, _config(args))
    _write(f"value {est.value!r}\nupper_envelope {est.upper_envelope!r}\n"
           f"last_gap {est.last_gap!r}\n", args.out)
    return EXIT_OK


def cmd_convergence(args) -> int:
    space = parse_spec(args.spec)
    x = _parse_point(space, args.point)
    est = report.norm_estimate(space, x, _config(args))
    _write(report.convergence_csv(est), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    space = parse_spec(args.spec)
    checks = report.verify(space, _config(args))
    width = max(len(c.name) for c in checks)
    lines = [f"{'check'.ljust(width)}  status  value        threshold    detail"]
    for c in checks:
        value = "-" if c.value is None else f"{c.value:.4g}"
        threshold = "-" if c.threshold is None else f"{c.threshold:.4g}"
        lines.append(f"{c.name.ljust(width)}  {'PASS' if c.passed else 'FAIL'}    "
                     f"{value:<11}  {threshold:<11}  {c.detail}".rstrip())
    failed = [c.name for c in checks if not c.passed]
    lines.append(f"FAILED: {', '.join(failed)}" if failed else "all checks passed")
    _write("\n".join(lines) + "\n", args.out)
    return EXIT_FAIL if failed else EXIT_OK


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=_seed, default=42)
    p.add_argument("--samples", type=_positive_int, default=1000)
    p.add_argument("--n-max", type=_positive_int, default=2**20)
    p.add_argument("--quad", type=_positive_int, default=64)
    p.add_argument("--tol-null", type=_positive_real, default=1e-3,
                   help="null-space tolerance relative to the typical seminorm value")
    p.add_argument("--lambda-max-exp", type=_positive_int, default=10)
    p.add_argument("--out", default=None, help="output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    zoo = sub.add_parser("zoo", help="built-in test spaces")
    zoo_sub = zoo.add_subparsers(dest="zoo_command", required=True)
    zoo_sub.add_parser("list", help="list zoo spaces").set_defaults(func=cmd_zoo_list)

    p = sub.add_parser("analyze", help="run the pipeline and write a JSON report")
    p.add_argument("spec")
    _common(p)
    p.set_defaults(func=cmd_analyze)

    norm = sub.add_parser("norm", help="evaluate the extracted seminorm")
    norm_sub = norm.add_subparsers(dest="norm_command", required=True)
    p = norm_sub.add_parser("eval", help="estimate the seminorm at a point")
    p.add_argument("spec")
    p.add_argument("--point", required=True)
    _common(p)
    p.set_defaults(func=cmd_norm_eval)

    p = sub.add_parser("convergence", help="write the limit sequence as CSV")
    p.add_argument("spec")
    p.add_argument("--point", required=True)
    _common(p)
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("verify", help="run the verification suite")
    p.add_argument("spec")
    _common(p)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        _workers()
        return args.func(args)
    except (SpecError, InputError) as exc:
        print(f"amn: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        if "AMN_THREADS" in str(exc):
            print(f"amn: error: {exc}", file=sys.stderr)
            return EXIT_INPUT
        print(f"amn: invariant failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (AssertionError, report.InvariantError) as exc:
        print(f"amn: invariant failure: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
