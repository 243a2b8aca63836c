#!/usr/bin/env python3
"""Refresh the golden records under tests/golden/ from the sample corpus.

Runs the attack and combined pipelines in-process against the builtin
oracle with default parameters and copies the resulting records.csv
files. Output is parallelism-invariant, so any --jobs value produces
the same bytes; the acceptance suite re-runs these commands and
compares byte-for-byte.
"""
from __future__ import annotations

import shutil
import sys
import tempfile
from pathlib import Path

from wmadv.cli import main

ROOT = Path(__file__).resolve().parent.parent
GOLDEN = ROOT / "tests" / "golden"


def run(argv: list[str]) -> None:
    code = main(argv)
    if code != 0:
        raise SystemExit(f"command failed with exit {code}: {argv}")


def regenerate() -> int:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    base = [
        "--dataset", str(ROOT / "corpus" / "hosts"),
        "--manifest", str(ROOT / "corpus" / "hosts" / "labels.csv"),
        "--wm-root", str(ROOT / "corpus" / "watermarks"),
        "--jobs", "1",
    ]
    with tempfile.TemporaryDirectory() as tmp:
        for algo in ("dct", "dwt"):
            out = Path(tmp) / algo
            run(["attack", "--algo", algo, "--out-dir", str(out), *base])
            shutil.copy(out / "records.csv", GOLDEN / f"records_{algo}.csv")
            print(f"wrote tests/golden/records_{algo}.csv")
        out = Path(tmp) / "combined"
        run(["combined", "--out-dir", str(out), *base])
        shutil.copy(out / "records.csv", GOLDEN / "records_combined.csv")
        print("wrote tests/golden/records_combined.csv")
    return 0


if __name__ == "__main__":
    sys.exit(regenerate())
