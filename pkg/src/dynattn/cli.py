"""Command-line entry point: ``dynattn {verify,bench,run,gen,hmv-check}``.

Exit codes: 0 success, 1 verification/check failure, 2 usage or config error.
``DATN_RTOL`` overrides the default relative tolerance.
"""
from __future__ import annotations

import argparse
import os
import sys

from . import bench, hmv, trace
from .structure import DEFAULT_RTOL

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _default_rtol():
    raw = os.environ.get("DATN_RTOL")
    if raw is None:
        return DEFAULT_RTOL
    try:
        return float(raw)
    except ValueError:
        return None


def _mix(text):
    try:
        parts = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"mix must be three comma-separated reals, got {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("mix needs exactly three values: pK,pV,pQ")
    return tuple(parts)


def build_parser():
    parser = argparse.ArgumentParser(prog="dynattn", description=__doc__.splitlines()[0])
    parser.add_argument("--verbose", action="store_true", help="human-readable notes on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def dims(p, n=16, d=4, a=0.5):
        p.add_argument("--n", type=int, default=n)
        p.add_argument("--d", type=int, default=d)
        p.add_argument("--a", type=float, default=a, help="threshold exponent in (0, 1]")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("verify", help="replay a random trace on both engines and compare")
    dims(p)
    p.add_argument("--ops", type=int, default=200)
    p.add_argument("--rtol", type=float, default=None)
    p.add_argument("--mix", type=_mix, default=(0.4, 0.3, 0.3))
    p.add_argument("--value-scale", type=float, default=0.5)

    p = sub.add_parser("bench", help="time lazy updates against full recomputation (CSV)")
    dims(p, n=256, d=32)
    p.add_argument("--ops", type=int, default=200)
    p.add_argument("--mix", type=_mix, default=(0.4, 0.3, 0.3))
    p.add_argument("--count-ops", action="store_true", help="also report arithmetic-op counts")
    p.add_argument("--out", help="write CSV here instead of stdout")

    p = sub.add_parser("run", help="replay a trace file and write the answers")
    p.add_argument("trace")
    p.add_argument("--out", help="answers file (default stdout)")
    p.add_argument("--engine", choices=("dynattn", "oracle"), default="dynattn")

    p = sub.add_parser("gen", help="generate a random trace and its matrices")
    dims(p)
    p.add_argument("--ops", type=int, default=200)
    p.add_argument("--mix", type=_mix, default=(0.4, 0.3, 0.3))
    p.add_argument("--value-scale", type=float, default=0.5)
    p.add_argument("--format", choices=("text", "csv"), default="text",
                   help="matrix files: DATN1 binary (text) or CSV")
    p.add_argument("--out", required=True, help="trace file path; matrices go next to it")

    p = sub.add_parser("hmv-check", help="check both reductions against the boolean oracle")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--cases", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--a", type=float, default=0.5)
    p.add_argument("--mode", choices=("both",) + hmv.MODES, default="both")
    return parser


def _validate(parser, args):
    if hasattr(args, "a") and not (0 < args.a <= 1):
        parser.error(f"--a must lie in (0, 1], got {args.a!r}")
    for name in ("n", "d"):
        if hasattr(args, name) and getattr(args, name) < 1:
            parser.error(f"--{name} must be >= 1")
    if getattr(args, "ops", 0) < 0:
        parser.error("--ops must be >= 0")
    if getattr(args, "seed", 0) < 0 or getattr(args, "seed", 0) >= 2 ** 64:
        parser.error("--seed must be an unsigned 64-bit integer")
    if args.command == "verify":
        if args.rtol is None:
            args.rtol = _default_rtol()
            if args.rtol is None:
                parser.error("DATN_RTOL must be a real number")
        if not args.rtol > 0:
            parser.error("rtol must be positive")
    if args.command == "hmv-check":
        if not (0 < args.tau <= 1):
            parser.error(f"--tau must lie in (0, 1], got {args.tau!r}")
        if not (1 <= args.n <= hmv.MAX_N):
            parser.error(f"--n must lie in [1, {hmv.MAX_N}]")
        if args.cases < 1:
            parser.error("--cases must be >= 1")


def cmd_verify(args):
    try:
        tr = trace.generate(args.n, args.d, args.a, args.ops, mix=args.mix,
                            value_scale=args.value_scale, seed=args.seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    fast = trace.replay(tr, "dynattn")
    ref = trace.replay(tr, "oracle")
    worst = 0.0
    for x, y in zip(fast, ref):
        err = abs(x - y) / abs(y) if y != 0 else abs(x - y)
        worst = max(worst, float(err))
    ok = worst <= args.rtol
    print(f"verified={'true' if ok else 'false'} max_abs_rel_err={worst!r} queries={len(ref)}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_bench(args):
    try:
        lines, results = bench.run_bench(args.n, args.d, args.a, ops=args.ops, seed=args.seed,
                                         mix=args.mix, instrument=args.count_ops)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = "\n".join([bench.CSV_HEADER] + lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"amortized_update_speedup={bench.speedup(results):.3f}", file=sys.stderr)
    if args.count_ops:
        r = results["dynattn"]
        print(f"ops engine=dynattn mults={r['mults']} adds={r['adds']}", file=sys.stderr)
    return EXIT_OK


def cmd_run(args):
    try:
        tr = trace.load(args.trace)
    except trace.TraceParseError as exc:
        print(f"error: {args.trace}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        answers = trace.replay(tr, args.engine)
    except trace.ReplayError as exc:
        print(f"error: overflow at op {exc.op_index}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    text = trace.format_answers(answers)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_gen(args):
    ext = ".csv" if args.format == "csv" else ".datn"
    try:
        tr = trace.generate(args.n, args.d, args.a, args.ops, mix=args.mix,
                            value_scale=args.value_scale, seed=args.seed, matrix_ext=ext)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    trace.save(tr, args.out)
    if args.verbose:
        print(f"wrote {args.out} with {len(tr.ops)} ops", file=sys.stderr)
    return EXIT_OK


def cmd_hmv_check(args):
    modes = hmv.MODES if args.mode == "both" else (args.mode,)
    failed = 0
    for mode in modes:
        report = hmv.check_reduction(args.n, args.tau, args.seed, args.cases, mode, a=args.a)
        for rec in report.records:
            print(rec)
        print(report.summary())
        failed += report.failed
        if report.counterexample is not None and args.verbose:
            ce = report.counterexample
            print(f"first counterexample ({mode}):\nM={ce.M.tolist()}\nP={ce.P.tolist()}\nV={ce.V.tolist()}",
                  file=sys.stderr)
    return EXIT_OK if failed == 0 else EXIT_FAIL


COMMANDS = {"verify": cmd_verify, "bench": cmd_bench, "run": cmd_run, "gen": cmd_gen,
            "hmv-check": cmd_hmv_check}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(parser, args)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
