#!/usr/bin/env python3
"""Run every curated demo in sequence, writing trace CSVs to scripts/traces/."""
import pathlib
import sys

from pairprox.cli import main

if __name__ == "__main__":
    out = str(pathlib.Path(__file__).resolve().parent / "traces")
    worst = 0
    for name in ("example-1", "example-2", "least-squares", "dca-divergence"):
        print(f"=== demo {name} ===")
        worst = max(worst, main(["demo", name, "--out", out]))
        print()
    sys.exit(worst)
