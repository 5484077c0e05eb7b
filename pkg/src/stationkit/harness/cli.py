"""Command-line entry point: ``stationkit {solve,chain-bench,grid-bench,verify}``."""

import argparse
import os
import sys
import time
from dataclasses import asdict

from ..errors import AlgorithmFailure, ContractViolation, InvalidArgument, ResourceLimitError
from ..gridpath import GRID_CSV_HEADER, failure_surface, grid_bench_rows, lower_bound_q_scale
from . import records
from .chainbench import BASELINES, BENCH_HEADER, ChainBenchConfig, run_chain_bench, summarize
from .solve import FUNCS, SolveConfig, run_solve
from .suites import SUITES, run_suites

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_RESOURCE = 3
EXIT_CONTRACT = 4
EXIT_VERIFY = 5


def cmd_solve(args):
    cfg = SolveConfig(func=args.func, d=args.d, k=args.k, eps=args.eps, lipschitz=args.lipschitz,
                      seed=args.seed, mode=args.mode, chain_parts=args.chain_parts)
    summary, trace, ledger = run_solve(cfg)
    rows = trace.rows()
    records.write_csv(os.path.join(args.out, "trace.csv"), "trace", trace.header(), rows)
    records.write_csv(os.path.join(args.out, "rounds.csv"), "rounds",
                      ["round", "batch_size", "cumulative_queries"], ledger.rows())
    records.write_json(os.path.join(args.out, "summary.json"), "solve-summary", summary)
    print(f"solve {cfg.func} d={cfg.d} k={cfg.k} eps={cfg.eps:g}: |grad| = {summary['grad_norm']:.3e}, "
          f"{summary['rounds']} rounds, {summary['total_queries']} queries")
    return EXIT_OK if summary["ok"] else EXIT_VERIFY


def cmd_chain_bench(args):
    cfg = ChainBenchConfig(d=args.d, d0=args.d0, rounds=args.rounds, batch=args.batch,
                           trials=args.trials, seed=args.seed,
                           baselines=tuple(args.baseline or BASELINES))
    start = time.perf_counter()
    results, rows = run_chain_bench(cfg)
    stats = summarize(results)
    records.write_csv(os.path.join(args.out, "chain_bench.csv"), "chain-bench", BENCH_HEADER, rows)
    records.write_json(os.path.join(args.out, "chain_bench.json"), "chain-bench-summary",
                       {"config": asdict(cfg), "baselines": stats,
                        "wall_time_s": time.perf_counter() - start})
    ok = True
    for name, s in stats.items():
        print(f"{name}: index <= 2t in {s['within_2t']}/{s['trials']} trials, "
              f"min grad norm at index <= r: {s['min_grad_norm_low_index']:.3f}")
        ok &= s["fraction_within_2t"] >= 0.95 and s["grad_floor_ok"]
    return EXIT_OK if ok else EXIT_VERIFY


def _int_list(text):
    return [int(v) for v in text.split(",") if v]


def cmd_grid_bench(args):
    ks = _int_list(args.ks)
    if args.qs:
        qs = _int_list(args.qs)
    else:
        qs = sorted({max(1, round(lower_bound_q_scale(args.n, args.grid_d, k))) for k in ks})
    seeds = list(range(args.seed, args.seed + args.trials))
    start = time.perf_counter()
    rows = grid_bench_rows(args.n, args.grid_d, ks, qs, seeds, args.strategy)
    surface = failure_surface(rows)
    records.write_csv(os.path.join(args.out, "grid_bench.csv"), "grid-bench", GRID_CSV_HEADER, rows)
    records.write_json(os.path.join(args.out, "grid_bench.json"), "grid-bench-summary",
                       {"config": {"n": args.n, "d": args.grid_d, "ks": ks, "qs": qs, "seeds": len(seeds),
                                   "strategy": args.strategy},
                        "surface": surface, "reference_failure_probability": 7 / 40,
                        "wall_time_s": time.perf_counter() - start})
    for cell in surface:
        print(f"k={cell['k']} q={cell['q']}: failure rate {cell['failure_rate']:.3f} "
              f"[{cell['ci_low']:.3f}, {cell['ci_high']:.3f}] over {cell['trials']} paths")
    return EXIT_OK


def cmd_verify(args):
    report = run_suites(args.suite or None)
    failed = []
    for suite, checks in report.items():
        ok = all(passed for _, passed, _ in checks)
        print(f"[{'PASS' if ok else 'FAIL'}] {suite}")
        for name, passed, detail in checks:
            if not passed or args.verbose:
                print(f"    {'ok ' if passed else 'BAD'} {name}" + (f" ({detail})" if detail else ""))
        if not ok:
            failed.append(suite)
    if failed:
        print("failed suites: " + ", ".join(failed))
        return EXIT_VERIFY
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="stationkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run the k-round trapping search on a builtin objective")
    p.add_argument("--func", choices=FUNCS, default="quadratic")
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--eps", type=float, default=1e-2)
    p.add_argument("--lipschitz", type=float, default=1.0)
    p.add_argument("--mode", choices=("cube", "free"), default="cube")
    p.add_argument("--chain-parts", type=int, default=3, help="number of parts for --func chain")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out/solve")
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("chain-bench", help="track revealed chain links under batched baselines")
    p.add_argument("--d", type=int, default=4096)
    p.add_argument("--d0", type=int, default=256)
    p.add_argument("--rounds", type=int, default=20)
    p.add_argument("--batch", type=int, default=1000)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--baseline", action="append", choices=BASELINES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out/chain-bench")
    p.set_defaults(handler=cmd_chain_bench)

    p = sub.add_parser("grid-bench", help="failure rates of round-limited path search")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--d", dest="grid_d", type=int, default=2)
    p.add_argument("--k", dest="ks", default="2", help="comma-separated round budgets")
    p.add_argument("--q", dest="qs", default="", help="comma-separated per-round budgets")
    p.add_argument("--strategy", choices=("frontier", "exhaustive", "random"), default="frontier")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out/grid-bench")
    p.set_defaults(handler=cmd_grid_bench)

    p = sub.add_parser("verify", help="run the self-check suites")
    p.add_argument("--suite", action="append", choices=sorted(SUITES))
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(handler=cmd_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except InvalidArgument as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (ContractViolation, AlgorithmFailure) as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
