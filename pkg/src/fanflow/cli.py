"""``fanflow`` command line.

Precedence: command-line flags override ``--config`` file keys, which
override the built-in defaults (theta 0.05, n_min 10, tau_u 25, retention
horizons 2,3, state horizon 3).
"""
from __future__ import annotations

import argparse
import sys

from .errors import FanflowError
from .pipeline import COMMANDS, RunConfig, read_config_file, run


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="plain-text 'key = value' configuration file")
    p.add_argument("--events", help="event log (.jsonl or .csv)")
    p.add_argument("--roster", help="creator roster CSV")
    p.add_argument("--from", dest="from", metavar="YYYY-MM", help="first month of the window")
    p.add_argument("--to", dest="to", metavar="YYYY-MM", help="last month of the window")
    p.add_argument("--theta", type=float, help="Simpson threshold (default 0.05)")
    p.add_argument("--n-min", dest="n_min", type=int, help="minimum shared viewers (default 10)")
    p.add_argument("--tau-u", dest="tau_u", type=int, help="minimum unique chatters per node (default 25)")
    p.add_argument("--horizon", type=int, help="state-flow horizon in months (default 3)")
    p.add_argument("--retention-horizons", dest="retention_horizons",
                   help="comma-separated retention horizons (default 2,3)")
    p.add_argument("--origin-months", dest="origin_months",
                   help="origin months for flows, e.g. 2023-01,2023-04 or 2023-01:2023-06")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", help="random seed (synth)")
    p.add_argument("--threads", type=int, help="worker threads; results do not depend on it")
    p.add_argument("--format", choices=("csv", "json"), help="table output format")
    p.add_argument("--alpha", type=float, help="Shapiro-Wilk gate level (default 0.05)")
    p.add_argument("--unified-subthreshold", dest="unified_subthreshold", action="store_const",
                   const=True, help="sum every monthly Simpson value into the unified graph")
    p.add_argument("--set", dest="extra", action="append", default=[], metavar="KEY=VALUE",
                   help="any other configuration key, e.g. synth.agency.recapture=0.4")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fanflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()
    helps = {
        "ingest": "parse, validate and deduplicate events",
        "panel": "retention table and creator commitment metrics",
        "states": "Same/Retain/Cross/Drop flow tables and Sankey JSON",
        "network": "monthly and unified overlap edge lists",
        "metrics": "per-month segment graph metrics and unified node metrics",
        "stats": "Agency vs Independent tests",
        "synth": "generate a synthetic corpus",
        "report": "run the whole pipeline",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items()
             if k not in ("command", "config", "extra") and v is not None}
    try:
        extra = {}
        for item in args.extra:
            if "=" not in item:
                raise FanflowError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            extra[k.strip()] = v.strip()
        file_values = read_config_file(args.config) if args.config else {}
        config = RunConfig.resolve(file_values, extra, flags)
        files = run(args.command, config)
    except (FanflowError, OSError) as exc:
        print(f"fanflow {args.command}: error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(files)} file(s) to {config.out}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
