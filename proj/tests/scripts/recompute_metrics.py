#!/usr/bin/env python3
"""Recompute RMSE/MAE/MAPE/R^2 from predictions.csv and compare with metrics.json.

Usage: recompute_metrics.py predictions.csv metrics.json [--tol 1e-9] [--min-denominator 1]
Exit 0 when every metric agrees within tolerance.
"""
import argparse
import csv
import json
import math
import sys


def recompute(rows, min_den):
    actual = [float(r["actual_pci"]) for r in rows]
    pred = [float(r["predicted_pci"]) for r in rows]
    n = len(actual)
    err = [p - a for a, p in zip(actual, pred)]
    out = {
        "n": n,
        "mae": sum(abs(e) for e in err) / n,
        "rmse": math.sqrt(sum(e * e for e in err) / n),
    }
    kept = [(a, p) for a, p in zip(actual, pred) if a >= min_den]
    out["mape"] = 100.0 * sum(abs((a - p) / a) for a, p in kept) / len(kept) if kept else None
    mean = sum(actual) / n
    ss_tot = sum((a - mean) ** 2 for a in actual)
    ss_res = sum(e * e for e in err)
    out["r2"] = 1.0 - ss_res / ss_tot if ss_tot > 0 else None
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("predictions")
    ap.add_argument("metrics")
    ap.add_argument("--tol", type=float, default=1e-9)
    ap.add_argument("--min-denominator", type=float, default=1.0)
    args = ap.parse_args()
    with open(args.predictions, newline="") as f:
        rows = list(csv.DictReader(f))
    with open(args.metrics) as f:
        reported = json.load(f)
    mine = recompute(rows, args.min_denominator)
    ok = True
    for key in ("n", "mae", "rmse", "mape", "r2"):
        a, b = mine[key], reported.get(key)
        if a is None or b is None:
            same = a is None and b is None
        else:
            same = abs(a - b) <= args.tol * max(1.0, abs(a))
        print(f"{key}: recomputed={a} reported={b} {'ok' if same else 'MISMATCH'}")
        ok = ok and same
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
