#!/usr/bin/env python3
"""Run every bundled theory through its designated verification battery.

Prints one line per (theory, check) and exits nonzero if anything that should
pass fails.  Equivalent to `fieldcov verify <name> --all` over all fixtures.
"""

import sys

from fieldcov.cli import DESIGNATED, _run_check
from fieldcov.theory import builtin_theory


class Args:
    samples = 100
    seed = 42
    tol = None


def main() -> int:
    failures = 0
    for name, checks in DESIGNATED.items():
        spec = builtin_theory(name)
        for check in checks:
            report = _run_check(check, spec, Args)
            mark = "ok " if report.passed else "FAIL"
            print(f"{mark}  {name:17s} {report.check:26s} worst {report.worst:.3e}")
            failures += 0 if report.passed else 1
    print(f"\n{failures} unexpected failure(s)")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
