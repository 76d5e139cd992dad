"""Run every acceptance suite at full size and print one line per criterion.

    python scripts/run_acceptance.py [--json results.json] [suite ...]
"""

import argparse
import json

from rgspectra import suites
from rgspectra.cli import dumps


def main():
    p = argparse.ArgumentParser()
    p.add_argument("names", nargs="*", default=list(suites.ACCEPTANCE))
    p.add_argument("--json", help="write metrics here")
    a = p.parse_args()
    results = []
    for name in a.names:
        out = getattr(suites, name)()
        for r in out if isinstance(out, tuple) else (out,):
            print(r.line(), flush=True)
            results.append(r)
    if a.json:
        with open(a.json, "w") as fh:
            fh.write(dumps([{"name": r.name, "passed": r.passed, "metrics": r.metrics} for r in results]) + "\n")
    raise SystemExit(0 if all(r.passed for r in results) else 1)


if __name__ == "__main__":
    main()
