"""``probsparse`` command line: ``bench`` and ``verify`` subcommands."""

from __future__ import annotations

import argparse
import logging
import sys

from .bench import BenchConfig, run_bench, summarize, write_csv, write_report, render_report
from .numeric import ConfigError

MODE_CHOICES = {"dense": ("dense",), "probsparse": ("prob-sparse",), "both": ("dense", "prob-sparse")}
SCOPE_CHOICES = {"attention": "attention-module", "encoder": "encoder"}


def _seq_lens(text):
    try:
        lens = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not lens or min(lens) < 1:
        raise argparse.ArgumentTypeError("sequence lengths must be positive")
    if len(set(lens)) != len(lens):
        raise argparse.ArgumentTypeError("sequence lengths must be distinct")
    return lens


def build_parser():
    parser = argparse.ArgumentParser(prog="probsparse", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bench", help="time dense vs prob-sparse attention across sequence lengths")
    b.add_argument("--mode", choices=sorted(MODE_CHOICES), default="both")
    b.add_argument("--scope", choices=sorted(SCOPE_CHOICES), default="attention")
    b.add_argument("--seq-lens", type=_seq_lens, default=(512, 1024, 2048, 4096))
    b.add_argument("--d-model", type=int, default=256)
    b.add_argument("--heads", type=int, default=4)
    b.add_argument("--layers", type=int, default=16)
    b.add_argument("--r-sparse", type=float, default=0.5)
    b.add_argument("--r-sample", type=float, default=1.0)
    b.add_argument("--n-share", type=int, default=4)
    b.add_argument("--trials", type=int, default=5)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default="bench.csv", help="CSV output path")
    b.add_argument("--report", default="bench.md", help="markdown summary path")

    v = sub.add_parser("verify", help="run the oracle and invariant property suite")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--instances", type=int, default=1000)
    return parser


def _bench_config(args, parser):
    if args.trials < 1:
        parser.error("--trials must be >= 1")
    if args.heads < 1 or args.d_model < 1 or args.d_model % args.heads:
        parser.error(f"--d-model {args.d_model} must be a positive multiple of --heads {args.heads}")
    if args.layers < 0:
        parser.error("--layers must be >= 0")
    if not 0.0 < args.r_sparse <= 1.0:
        parser.error("--r-sparse must be in (0, 1]")
    if not args.r_sample > 0.0:
        parser.error("--r-sample must be positive")
    if args.n_share < 1:
        parser.error("--n-share must be >= 1")
    try:
        return BenchConfig(
            modes=MODE_CHOICES[args.mode], scope=SCOPE_CHOICES[args.scope], seq_lens=args.seq_lens,
            d_model=args.d_model, heads=args.heads, layers=args.layers, r_sparse=args.r_sparse,
            r_sample=args.r_sample, n_share=args.n_share, trials=args.trials, seed=args.seed,
        )
    except ConfigError as exc:
        parser.error(str(exc))


def cmd_bench(args, parser) -> int:
    cfg = _bench_config(args, parser)
    # fail on an unwritable destination before spending minutes on the sweep
    for path in (args.out, args.report):
        try:
            open(path, "a").close()
        except OSError as exc:
            print(f"probsparse bench: cannot write {path}: {exc.strerror}", file=sys.stderr)
            return 1
    records = run_bench(cfg)
    summary = summarize(records)
    try:
        write_csv(records, args.out)
        write_report(summary, args.report, cfg)
    except OSError as exc:
        print(f"probsparse bench: {exc}", file=sys.stderr)
        return 1
    print(render_report(summary, cfg))
    print(f"wrote {len(records)} rows to {args.out}, summary to {args.report}")
    return 0


def cmd_verify(args, parser) -> int:
    from .verify import verify_suite

    if args.instances < 1:
        parser.error("--instances must be >= 1")
    report = verify_suite(seed=args.seed, instances=args.instances)
    return 0 if report.passed else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "bench":
        return cmd_bench(args, parser)
    return cmd_verify(args, parser)


if __name__ == "__main__":
    sys.exit(main())
