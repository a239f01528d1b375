"""Command line entry point: ``tensortrain bench`` and ``tensortrain all``."""
from __future__ import annotations

import argparse
import logging
import sys

from .bench import OPS, BenchConfig, render_report, run_bench, run_table
from .exceptions import InfeasibleConfigError

log = logging.getLogger(__name__)


def _threads(value):
    if value == "auto":
        return None
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("threads must be >= 1 or 'auto'")
    return n


def _common(p):
    p.add_argument("--d", type=int, default=10, help="number of TT cores")
    p.add_argument("--n", type=int, default=10, help="mode size")
    p.add_argument("--rank", type=int, default=10)
    p.add_argument("--inflated-rank", type=int, default=100,
                   help="rank of the inputs to round/project")
    p.add_argument("--repeats", type=int, default=30)
    p.add_argument("--warmup", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_threads, default=None,
                   help="BLAS threads, or 'auto' (default)")
    p.add_argument("--max-time", type=float, default=10.0,
                   help="stop repeating after this many seconds per benchmark")
    p.add_argument("--memory-limit-mb", type=float, default=4096.0)
    p.add_argument("--format", choices=("markdown", "csv", "json"), default="markdown")
    p.add_argument("--out", help="write the report here instead of stdout")


def build_parser():
    parser = argparse.ArgumentParser(prog="tensortrain",
                                     description="TT operation benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)
    bench = sub.add_parser("bench", help="time a single operation")
    bench.add_argument("--op", choices=OPS, required=True)
    bench.add_argument("--batch-size", type=int, default=100)
    _common(bench)
    table = sub.add_parser("all", help="the six-op table for batch sizes 1 and 100")
    _common(table)
    return parser


def _config(args, op, batch_size):
    return BenchConfig(op=op, d=args.d, n=args.n, rank=args.rank,
                       inflated_rank=args.inflated_rank, batch_size=batch_size,
                       repeats=args.repeats, warmup=args.warmup, seed=args.seed,
                       threads=args.threads, max_time=args.max_time,
                       memory_limit_mb=args.memory_limit_mb)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        if args.command == "bench":
            report = run_bench(_config(args, args.op, args.batch_size))
        else:
            report = run_table(_config(args, "matvec", 1))
        text = render_report(report, args.format)
    except InfeasibleConfigError as exc:
        print(f"infeasible configuration: {exc}", file=sys.stderr)
        return 2
    except Exception:
        log.exception("benchmark failed")
        return 1
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
