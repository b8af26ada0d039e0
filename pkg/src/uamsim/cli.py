"""Command line front end: run scenarios, compute metrics, export regions."""

from __future__ import annotations

import argparse
import concurrent.futures
import os
import sys

from . import harness
from . import scheduler as sched
from .scheduler import GainBox


def _load_scenario(ref: str, **overrides) -> harness.Scenario:
    if os.path.exists(ref):
        return harness.Scenario.from_json(ref, **overrides)
    return harness.preset(ref, **overrides)


def _run_one(ref: str, out_dir: str, seed, duration) -> dict:
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if duration is not None:
        overrides["duration"] = duration
    sc = _load_scenario(ref, **overrides)
    log = harness.run(sc)
    os.makedirs(out_dir, exist_ok=True)
    base = os.path.join(out_dir, sc.name)
    log.write_csv(base + "_log.csv")
    log.write_events_csv(base + "_events.csv")
    if log.n_samples:
        m = harness.metrics(log)
        with open(base + "_metrics.txt", "w") as fh:
            fh.write(harness.metrics_text(m))
    else:
        m = {}
    return m


def cmd_run(args) -> int:
    m = _run_one(args.scenario, args.out, args.seed, args.duration)
    for line in harness.metrics_text(m).splitlines() if m else []:
        print(line)
    print(f"wrote logs to {args.out}")
    return 0


def cmd_metrics(args) -> int:
    log = harness.RunLog.read_csv(args.log, args.events)
    print(harness.metrics_text(harness.metrics(log, args.settle_window)), end="")
    return 0


def cmd_bench(args) -> int:
    res = harness.bench_scheduler(args.N, reps=args.reps)
    os.makedirs(args.out, exist_ok=True)
    harness.write_bench_csv(res, os.path.join(args.out, "bench_scheduler.csv"))
    for N, tg, te in res["rows"]:
        print(f"N={N:4d}  grid={tg * 1e3:9.3f} ms  explicit={te * 1e3:9.3f} ms  "
              f"speedup={tg / te:8.1f}x")
    print(f"grid scaling exponent: {res['grid_exponent']:.3f}")
    return 0


def cmd_region_export(args) -> int:
    box = GainBox(args.k_f_min, args.k_f_max, args.b_f_min, args.b_f_max)
    os.makedirs(args.out, exist_ok=True)
    for cond in (sched.NS1, sched.NS2, sched.NS3):
        reg = sched.region_explicit(cond, args.k_p, args.k_d, args.k_e,
                                    args.b_e, args.m_t, box)
        harness.write_region_csv(reg, os.path.join(args.out, f"{cond}_polygon.csv"))
        bm = sched.region_grid(cond, args.k_p, args.k_d, args.k_e, args.b_e,
                               args.m_t, box, args.N)
        harness.write_bitmap_csv(bm, os.path.join(args.out, f"{cond}_grid.csv"))
        print(f"{cond}: area={reg.area:.4f} vertices={len(reg.vertices)} "
              f"grid_hits={int(bm.sum())}")
    return 0


def cmd_sweep(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as ex:
        futs = {ex.submit(_run_one, s, args.out, args.seed, args.duration): s
                for s in args.scenarios}
        for fut in concurrent.futures.as_completed(futs):
            name = futs[fut]
            m = fut.result()
            rms = m.get("force_rms", float("nan"))
            print(f"{name}: force_rms={rms}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uamsim",
                                description="aerial-manipulator contact "
                                            "motion/force control simulator")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("run", help="run one scenario and write CSV logs")
    q.add_argument("scenario", help="preset name or scenario JSON path")
    q.add_argument("--out", default="out")
    q.add_argument("--seed", type=int, default=None)
    q.add_argument("--duration", type=float, default=None)
    q.set_defaults(func=cmd_run)

    q = sub.add_parser("metrics", help="recompute metrics from a log CSV")
    q.add_argument("log")
    q.add_argument("--events", default=None)
    q.add_argument("--settle-window", type=float, default=3.0)
    q.set_defaults(func=cmd_metrics)

    q = sub.add_parser("bench-scheduler", help="grid vs explicit region timing")
    q.add_argument("--N", type=int, nargs="+", default=[125, 175])
    q.add_argument("--reps", type=int, default=20)
    q.add_argument("--out", default="out")
    q.set_defaults(func=cmd_bench)

    q = sub.add_parser("region-export", help="dump gain regions as CSV")
    q.add_argument("--k-e", type=float, default=200.0)
    q.add_argument("--b-e", type=float, default=0.5)
    q.add_argument("--m-t", type=float, default=4.0)
    q.add_argument("--k-p", type=float, default=23.5)
    q.add_argument("--k-d", type=float, default=19.5)
    q.add_argument("--N", type=int, default=125)
    q.add_argument("--k-f-min", type=float, default=0.1)
    q.add_argument("--k-f-max", type=float, default=1.0)
    q.add_argument("--b-f-min", type=float, default=10.0)
    q.add_argument("--b-f-max", type=float, default=40.0)
    q.add_argument("--out", default="out")
    q.set_defaults(func=cmd_region_export)

    q = sub.add_parser("sweep", help="run several scenarios in parallel")
    q.add_argument("scenarios", nargs="+")
    q.add_argument("--out", default="out")
    q.add_argument("--jobs", type=int, default=None)
    q.add_argument("--seed", type=int, default=None)
    q.add_argument("--duration", type=float, default=None)
    q.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
