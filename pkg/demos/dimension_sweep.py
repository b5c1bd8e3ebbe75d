#! /usr/bin/env python3
"""Density at the true state versus the naive guess, across dimensions.

A reduced version of the table workflow: a few realizations per dimension,
with the estimate at Y_N and at Z_N/(gamma T). The naive point ignores the
signal dynamics, so it usually carries less mass. The same rows can be
produced from the command line with ``zakai table``.
"""

import math
import sys

from zakai.cli import run_table
from zakai.config import parse_config

cfg = parse_config(
    """
[estimator]
M = 20000
seed = 2024
chunk_size = 4096

[table]
dims = 1, 2, 5
realizations = 3
"""
)

rows = run_table(cfg, log=sys.stdout)

print()
print(f"{'d':>3} {'log10 X(Y_N)/X(2Z_N)':>22} {'avg s':>7}")
for r in rows:
    gap = math.log10(r["X_Y_N"]) - math.log10(r["X_2Z_N"]) if r["X_2Z_N"] > 0 else math.inf
    print(f"{r['d']:>3} {gap:22.2f} {r['avg_runtime_s']:7.2f}")
