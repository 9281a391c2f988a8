import argparse
import json
import logging
import sys

from views.command_views import cmd_benchmark, cmd_calibrate, cmd_evaluate, cmd_simulate, cmd_track


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tracker_app",
        description="Drone camera multi-object tracking with directional measurements.",
    )
    parser.add_argument("--verbose", action="store_true", help="log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help):
        p.add_argument("--config", default=None, help="run configuration JSON (default config/config.json)")
        p.add_argument("--out", required=True, help=out_help)

    def filter_flags(p):
        p.add_argument("--mode", choices=["pmbm", "tpmbm"], default=None)
        p.add_argument("--lscan", type=int, default=None, help="L-scan window length")
        p.add_argument("--iplf-iters", type=int, default=None, help="maximum IPLF iterations")
        p.add_argument("--likelihood", choices=["l0", "l1"], default=None)

    p = sub.add_parser("simulate", help="simulate a scenario and write detection and truth files")
    common(p, "output directory")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("track", help="run the filter over a detection frame file")
    p.add_argument("data", help="detection frame file (JSONL)")
    common(p, "output directory")
    filter_flags(p)

    p = sub.add_parser("calibrate", help="estimate pd, kappa and clutter rate from annotated frames")
    p.add_argument("data", help="detection frame file (JSONL)")
    p.add_argument("truth", help="ground-truth file (JSONL)")
    p.add_argument("--out", required=True, help="calibration report (JSON)")
    p.add_argument("--max-rounds", type=int, default=50)

    p = sub.add_parser("evaluate", help="per-step GOSPA and RMS-GOSPA of an estimate file")
    p.add_argument("truth", help="ground-truth file (JSONL)")
    p.add_argument("estimates", help="trajectory estimate file (JSON)")
    common(p, "output directory")
    p.add_argument("--gospa-c", type=float, default=None)
    p.add_argument("--gospa-p", type=float, default=None)

    p = sub.add_parser("benchmark", help="Monte-Carlo comparison of filter variants")
    common(p, "output directory")
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--gospa-c", type=float, default=None)
    p.add_argument("--gospa-p", type=float, default=None)
    return parser


def _overrides(args):
    names = ("mode", "lscan", "iplf_iters", "likelihood", "gospa_c", "gospa_p", "seed")
    return {n: getattr(args, n) for n in names if getattr(args, n, None) is not None}


def run_command(args, logger):
    """
    Dispatches the parsed command line to its view.

    Returns:
        dict: The view response {"response", "exit_code"}.
    """
    match args.command:
        case "simulate":
            return cmd_simulate(args.config, args.out, logger, _overrides(args))
        case "track":
            return cmd_track(args.data, args.config, args.out, logger, _overrides(args))
        case "calibrate":
            return cmd_calibrate(args.data, args.truth, args.out, logger, max_rounds=args.max_rounds)
        case "evaluate":
            return cmd_evaluate(args.truth, args.estimates, args.out, logger, args.config, _overrides(args))
        case "benchmark":
            return cmd_benchmark(args.config, args.out, logger, args.runs, args.threads, _overrides(args))
    return {"response": f"unknown command {args.command}", "exit_code": 2}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARN,
        format=f"%(asctime)s.%(msecs)03d %(levelname)s:%(message)s",
        datefmt="%d-%b-%y %H:%M:%S",
    )
    logger = logging.getLogger(__name__)
    result = run_command(args, logger)
    if result["exit_code"] == 0:
        print(json.dumps(result["response"], indent=2))
    else:
        print(result["response"], file=sys.stderr)
    return result["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
