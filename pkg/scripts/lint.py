#!/usr/bin/env python
"""
Run formatting, lint and type checks for retinakit.

With ``--fix`` the formatters rewrite files instead of only checking them.
"""

import argparse
import os
import subprocess
import sys
from typing import List, NamedTuple, Optional, Sequence, Tuple

SOURCES = ["retinakit", "tests", "scripts"]


class Check(NamedTuple):
    name: str
    command: List[str]
    fix: Optional[List[str]] = None


CHECKS = [
    Check("black", ["black", "--check", *SOURCES], ["black", *SOURCES]),
    Check("isort", ["isort", "--check", *SOURCES], ["isort", *SOURCES]),
    Check("flake8", ["flake8", *SOURCES]),
    Check("mypy", ["mypy", "retinakit"]),
]


def run_command(command: List[str]) -> Tuple[int, str]:
    """Run a command and return its exit code and combined output."""
    process = subprocess.run(command, stdout=subprocess.PIPE, stderr=subprocess.STDOUT, text=True)
    return process.returncode, process.stdout


def run_check(check: Check, fix: bool) -> bool:
    command = check.fix if fix and check.fix else check.command
    print(f"Running {check.name}...")
    code, output = run_command(command)
    if code == 0:
        print(f"{check.name} passed")
        return True
    print(f"{check.name} failed with code {code}:")
    print(output)
    if check.fix and not fix:
        print(f"To fix, run: {' '.join(check.fix)}")
    return False


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--fix", action="store_true", help="let black and isort rewrite files")
    parser.add_argument(
        "--only", choices=[c.name for c in CHECKS], action="append", help="run selected checks"
    )
    args = parser.parse_args(argv)

    os.chdir(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
    selected = [c for c in CHECKS if not args.only or c.name in args.only]
    failed = [c.name for c in selected if not run_check(c, args.fix)]
    if failed:
        print(f"\nFailed: {', '.join(failed)}")
        return 1
    print("\nAll checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
