"""Run acceptance criteria 1-12 and print one PASS/FAIL line each.

    python3 scripts/run_acceptance.py [--profile quick] [--threads 4] [--json report.json]

Criterion 13 (thread-count determinism) is covered by tests/test_acceptance.py.
"""
import argparse
import json
import sys
import time

from hjsing.checks import PROFILES, run_suite


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--profile", choices=sorted(PROFILES), default="full")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="write the per-criterion metrics here")
    args = ap.parse_args()

    start = time.perf_counter()
    results = run_suite(PROFILES[args.profile], args.seed, args.threads, log=print)
    print(f"{sum(r.passed for r in results)}/{len(results)} passed in {time.perf_counter() - start:.1f}s")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump([r.to_dict() for r in results], fh, indent=1, sort_keys=True, default=str)
    return 0 if all(r.passed for r in results) else 1


if __name__ == "__main__":
    sys.exit(main())
