"""Command-line interface: plan run / compare / check / fit-mlp.

Exit codes: 0 success, 1 error, 2 constraint violation detected while
stop-on-collision is active.
"""

import argparse
import json
import os
import sys

from . import checks
from .dynamics import BicycleParams, fit_bicycle_mlp, save_weights
from .harness import ScenarioError, compare_runs, load_run, load_scenario, run_scenario, write_run


def _cmd_run(args):
    scenario = load_scenario(args.scenario)
    trace = run_scenario(scenario, mode=args.mode, seed=args.seed,
                         keep_plans=args.plans)
    write_run(trace, args.out, timing_in_trace=args.timing_in_trace)
    summary = trace.summary
    m = summary["metrics"]
    print(f"scenario {summary['scenario']} mode {summary['mode']} seed {summary['seed']}: "
          f"{summary['n_steps']} steps, termination {summary['termination']}")
    print(f"  min OV distance {m['min_ov_distance']}, min boundary margin "
          f"{m['min_boundary_margin']:.3f}, violations {m['violations']['total']}")
    print(f"  wrote {os.path.join(args.out, 'trace.csv')}")
    if summary["termination"] == "collision":
        return 2
    return 0


def _cmd_compare(args):
    report = compare_runs(load_run(args.dir_a), load_run(args.dir_b))
    with open(args.out, "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
        fh.write("\n")
    runs = report["runs"]
    print(f"scenario {report['scenario']}: aligned {report['aligned_steps']} steps")
    if report["truncation_note"]:
        print(f"  note: {report['truncation_note']}")
    for tag in ("a", "b"):
        r = runs[tag]
        print(f"  [{tag}] mode {r['mode']} seed {r['seed']}: violations "
              f"{r['violations']['total']}, min OV dist {r['min_ov_distance']}, "
              f"collision step {r['collision_step']}")
    print(f"  wrote {args.out}")
    return 0


def _cmd_check(args):
    ok = checks.run_checks(args.suite)
    return 0 if ok else 1


def _cmd_fit_mlp(args):
    params = BicycleParams(wheelbase=args.wheelbase, dt=args.dt)
    model = fit_bicycle_mlp(params, seed=args.seed)
    save_weights(model, args.out)
    print(f"wrote {args.out} ({model.in_dim} -> "
          f"{' -> '.join(str(d) for d in model.layer_dims[1:])})")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="plan", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario and write its trace")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--mode", choices=("enkts", "enks"), default="enkts")
    p_run.add_argument("--plans", action="store_true",
                       help="also write per-step plan_k<k>.csv files")
    p_run.add_argument("--timing-in-trace", action="store_true",
                       help="write measured wall_ms into trace.csv "
                            "(breaks byte-reproducibility)")
    p_run.set_defaults(fn=_cmd_run)

    p_cmp = sub.add_parser("compare", help="compare two run directories")
    p_cmp.add_argument("dir_a")
    p_cmp.add_argument("dir_b")
    p_cmp.add_argument("--out", required=True)
    p_cmp.set_defaults(fn=_cmd_compare)

    p_chk = sub.add_parser("check", help="run the built-in oracle suites")
    p_chk.add_argument("--suite", action="append",
                       choices=sorted(checks.SUITES), default=None)
    p_chk.set_defaults(fn=_cmd_check)

    p_fit = sub.add_parser("fit-mlp", help="generate synthetic network weights")
    p_fit.add_argument("--out", required=True)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--wheelbase", type=float, default=2.7)
    p_fit.add_argument("--dt", type=float, default=0.1)
    p_fit.set_defaults(fn=_cmd_fit_mlp)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ScenarioError, FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
