"""``stochepi`` command line.

    stochepi simulate  --config C --out DIR [--seed S]
    stochepi observe   --config C --hidden DIR/hidden.csv --out DIR [--seed S]
    stochepi fit       --config C --observed DIR/observed.csv --out DIR [--chains K] [--threads K]
    stochepi diagnose  --run DIR [--truth beta=2,gamma=1]
    stochepi reproduce SCENARIO_ID --out DIR [--seed S] [--chains K] [--threads K]
"""

import argparse
import logging
import sys

from . import pipeline
from .config import load_config, scenario_ids
from .exceptions import StochEpiError, TuningError

EXIT_ERROR = 2
EXIT_TUNING = 3


def _u64(text):
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _truth(text):
    out = {}
    for item in text.split(","):
        key, sep, value = item.partition("=")
        if not sep:
            raise argparse.ArgumentTypeError(f"expected name=value, got {item!r}")
        out[key.strip()] = float(value)
    return out


def build_parser():
    p = argparse.ArgumentParser(prog="stochepi", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="scenario JSON file")
        sp.add_argument("--seed", type=_u64, help="override the configured master seed")
        sp.add_argument("--out", required=True, help="output directory")

    common(sub.add_parser("simulate", help="write hidden.csv"))
    sp = sub.add_parser("observe", help="write observed.csv from hidden.csv")
    common(sp)
    sp.add_argument("--hidden", required=True)
    sp = sub.add_parser("fit", help="run the configured sampler")
    common(sp)
    sp.add_argument("--observed", required=True)
    sp.add_argument("--chains", type=_positive)
    sp.add_argument("--threads", type=_positive, default=1)
    sp = sub.add_parser("diagnose", help="write summary.json and bands.csv for a run")
    sp.add_argument("--run", required=True, help="run directory written by fit")
    sp.add_argument("--truth", type=_truth, help="true values, e.g. beta=2,gamma=1")
    sp = sub.add_parser("reproduce", help="full pipeline for a bundled scenario")
    sp.add_argument("scenario", help=f"one of: {', '.join(scenario_ids())}")
    common(sp, config=False)
    sp.add_argument("--chains", type=_positive)
    sp.add_argument("--threads", type=_positive, default=1)
    return p


def _config(args):
    config = load_config(args.config)
    return config if args.seed is None else config.with_seed(args.seed)


def run(args):
    if args.command == "simulate":
        print(pipeline.cmd_simulate(_config(args), args.out))
    elif args.command == "observe":
        print(pipeline.cmd_observe(_config(args), args.hidden, args.out))
    elif args.command == "fit":
        print(pipeline.cmd_fit(_config(args), args.observed, args.out, args.threads, args.chains))
    elif args.command == "diagnose":
        summary = pipeline.cmd_diagnose(args.run, args.truth)
        for name, stats in summary["parameters"].items():
            print(f"{name}: mean {stats['mean']:.4g}, "
                  f"95% HPD ({stats['hpd_low']:.4g}, {stats['hpd_high']:.4g})")
    else:
        results = pipeline.reproduce(args.scenario, args.out, args.seed, args.threads, args.chains)
        for label, summary in results.items():
            means = ", ".join(f"{k}={v['mean']:.4g}" for k, v in summary["parameters"].items())
            print(f"{args.scenario}{'' if label is None else ' ' + label}: {means}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except TuningError as err:
        print(f"stochepi: tuning failed: {err}", file=sys.stderr)
        return EXIT_TUNING
    except (StochEpiError, ValueError, OSError) as err:
        print(f"stochepi: {err}", file=sys.stderr)
        return EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
