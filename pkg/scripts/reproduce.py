"""Run the acceptance checks and print one PASS/FAIL line each.

    python scripts/reproduce.py [--quick] [--only g2 beta] [--seed N] [--csv out.csv]
"""

import argparse
import sys

from hgpw.io import write_csv
from hgpw.reproduce import ACCEPTANCE_RUNS, DEFAULT_SEED, run_all


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=DEFAULT_SEED)
    ap.add_argument("--quick", action="store_true", help="reduced statistics (smoke test only)")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--only", nargs="*", choices=[n for n, _ in ACCEPTANCE_RUNS])
    ap.add_argument("--csv", help="also write the results table here")
    args = ap.parse_args()
    results = run_all(args.seed, args.quick, args.workers, args.only)
    for r in results:
        print(f"{'PASS' if r['passed'] else 'FAIL'} {r['name']}: {r['summary']} ({r['runtime_s']:.1f} s)")
    if args.csv:
        write_csv(args.csv, ["criterion", "passed", "runtime_s", "summary"],
                  ([r["name"], int(r["passed"]), r["runtime_s"], r["summary"]] for r in results))
    return 0 if all(r["passed"] for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
