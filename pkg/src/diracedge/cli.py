"""Command-line entry point: ``diracedge <subcommand> --config PATH [--out DIR] [--eps E] [--seed N]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness
from .errors import DiracEdgeError
from .scenario import bundled_scenarios, load_scenario

STAGES = ("simulate", "extract", "transport", "pipeline", "chart")


def build_parser():
    p = argparse.ArgumentParser(prog="diracedge", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in STAGES:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True,
                        help=f"scenario YAML or bundled name ({', '.join(bundled_scenarios())})")
        sp.add_argument("--out", default=None, help="output root (default: scenario output.dir)")
        sp.add_argument("--eps", type=float, default=None, help="run a single eps instead of the list")
        sp.add_argument("--seed", type=int, default=0)
    v = sub.add_parser("validate")
    v.add_argument("--config", default=None, help="optional scenario, checked for validity")
    v.add_argument("--out", default=None, help="write validate.json here")
    v.add_argument("--eps", type=float, default=None)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--fault", choices=["lambda_sign"], default=None, help="inject a known fault")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "validate":
            if args.config:
                load_scenario(args.config, args.eps)
            res = harness.run_validate(fault=args.fault)
            for c in res["checks"]:
                print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['value']:.3e} (tol {c['tol']:.0e})")
            if args.out:
                from pathlib import Path
                from .io import write_json
                write_json(Path(args.out) / "validate.json", res)
            return 0 if res["passed"] else 1
        scn = load_scenario(args.config, args.eps)
        out = args.out or scn.doc["output"]["dir"]
        if args.command == "chart":
            res = harness.run_chart(scn, out)
            print(json.dumps({k: res[k] for k in ("assumption1", "assumption2", "kappa_max",
                                                  "tube_halfwidth")}, default=float))
            return 0
        fn = {"simulate": harness.run_simulate, "extract": harness.run_extract,
              "transport": harness.run_transport, "pipeline": harness.run_pipeline}[args.command]
        res = fn(scn, out, seed=args.seed)
        if isinstance(res, dict):
            print(json.dumps(res, indent=1, default=float))
        else:
            for d in res:
                print(d)
        return 0
    except DiracEdgeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
