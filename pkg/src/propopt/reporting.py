"""Report formatting and artifact bookkeeping.

Aggregate numbers follow the convention of rounding the mean to at most the
first significant digit of the standard error, printed as ``mean(se-digit)``,
e.g. 0.246 with SE 0.002 -> "0.246(2)", 8.2e-3 with SE 7e-4 -> "8.2(7)e-3".
"""

from __future__ import annotations

import csv
import json
import math
import os


def format_mean_se(mean: float, se: float) -> str:
    """Render mean with the standard error's first significant digit."""
    if not math.isfinite(mean):
        return str(mean)
    if not math.isfinite(se) or se <= 0.0:
        return f"{mean:g}"
    se_exp = math.floor(math.log10(se))
    se_digit = int(round(se / 10.0 ** se_exp))
    if se_digit == 10:  # rounding pushed into the next decade
        se_digit = 1
        se_exp += 1
    if mean != 0.0:
        mean_exp = math.floor(math.log10(abs(mean)))
    else:
        mean_exp = 0
    # Use scientific style when the mean itself is small or large.
    if mean_exp < -2 or mean_exp > 4:
        scaled = mean / 10.0 ** mean_exp
        decimals = max(mean_exp - se_exp, 0)
        return f"{scaled:.{decimals}f}({se_digit})e{mean_exp}"
    decimals = max(-se_exp, 0)
    return f"{mean:.{decimals}f}({se_digit})"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


class RunManifest:
    """Collects every artifact a run produces; one manifest per run."""

    def __init__(self, out_dir):
        self.out_dir = out_dir
        self.artifacts = []
        self.failure = None

    def path(self, name: str) -> str:
        full = os.path.join(self.out_dir, name)
        self.artifacts.append(name)
        return full

    def record_failure(self, message: str):
        self.failure = message

    def write(self):
        payload = {"artifacts": sorted(set(self.artifacts))}
        if self.failure is not None:
            payload["failure"] = self.failure
        write_json(os.path.join(self.out_dir, "manifest.json"), payload)
