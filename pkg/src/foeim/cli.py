"""Command-line runner for the numerical studies.

Verbs:
  run       --config <json> --out <dir>     execute a study, write a report
  compare   --report <dir> --golden <id>    check a report against a golden table
  plotdata  --report <dir>                  emit plot-ready long-format CSVs

Exit codes: 0 on success / all golden rows passing, 1 on any golden failure,
2 on configuration errors.  The environment variable FOEIM_WORKERS caps the
number of worker threads used for test-grid sweeps.
"""

from __future__ import annotations

import argparse
import sys

from .mesh import ConfigurationError
from .studies import (ExperimentConfig, run_experiment, compare_report,
                      emit_plotdata)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="foeim",
        description="Reduced-basis studies with first-order empirical "
                    "interpolation")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="execute a study from a JSON config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)

    p_cmp = sub.add_parser("compare", help="compare a report against a golden table")
    p_cmp.add_argument("--report", required=True)
    p_cmp.add_argument("--golden", required=True)

    p_plot = sub.add_parser("plotdata", help="emit plot-ready CSVs from a report")
    p_plot.add_argument("--report", required=True)

    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses exit code 2 for usage errors already
        return int(exc.code or 0)

    try:
        if args.verb == "run":
            cfg = ExperimentConfig.from_json(args.config)
            out = run_experiment(cfg, args.out)
            print(f"report written to {out}")
            return 0
        if args.verb == "compare":
            results = compare_report(args.report, args.golden)
            failed = 0
            for res in results:
                row = res.get("row")
                label = (f"N={row['N']} M={row['M']} {row['method']}"
                         if row else "(report)")
                if res["passed"]:
                    print(f"PASS {label} measured={res['measured']:.3e}")
                else:
                    failed += 1
                    print(f"FAIL {label}: {res['reason']}")
            print(f"{len(results) - failed}/{len(results)} rows passed")
            return 1 if failed else 0
        if args.verb == "plotdata":
            files = emit_plotdata(args.report)
            for f in files:
                print(f)
            return 0
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
