#!/usr/bin/env python3
"""Variability and ADC sweeps on the bundled digits BNN.

    python scripts/run_trends.py --out out/trends --workers 4

Writes two sweeps (``variability.csv`` and ``adc.csv`` plus their summaries)
and prints the condensed tables.  Both sweeps use I_hrs = 5 uA and
I_lrs = 30 uA on 256x256 arrays.
"""
import argparse
import os
from pathlib import Path

import numpy as np

from xbarsim import dse

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"


def common(args):
    return dict(
        model=str(DATA / "digits_bnn.json"),
        dataset=str(DATA / "digits_test.xbt"),
        samples=args.samples,
        currents=[[5.0, 30.0]],
        seed=args.seed,
    )


def run(cfg, out: Path, workers: int):
    rows = dse.run_sweep(cfg, workers)
    dse.write_results(rows, out)
    points, windows = dse.summarize(rows)
    dse.write_summary(points, windows, out.with_suffix(""))
    dse.write_plot_data(points, out.with_suffix(".plot.json"))
    return points, windows


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", type=Path, default=Path("out/trends"))
    ap.add_argument("--workers", type=int, default=int(os.environ.get("XBARSIM_WORKERS", 1)))
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--samples", type=int, default=None)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    bnn = ["bnn-i", "bnn-ii", "bnn-iii+cells", "bnn-iv+cells", "bnn-v", "bnn-vi+cells", "bnn-vi+cycles"]

    var = dse.SweepConfig(
        mappings=bnn, sigma_hrs=[0.0, 2.0, 5.0, 10.0], trials=args.trials, **common(args)
    )
    points, _ = run(var, args.out / "variability.csv", args.workers)
    print("mean accuracy vs sigma_hrs (uA)")
    print(f"{'mapping':<16}" + "".join(f"{s:>9}" for s in var.sigma_hrs))
    for m in bnn:
        accs = [p.mean_accuracy for p in points if p.mapping == m]
        print(f"{m:<16}" + "".join(f"{a:9.4f}" for a in accs))

    alphas = [round(a, 2) for a in np.arange(0.05, 1.0001, 0.05)]
    adc = dse.SweepConfig(mappings=bnn, adc_bits=[2, 3, 4, 5, 6], alpha=alphas, trials=1, **common(args))
    _, windows = run(adc, args.out / "adc.csv", args.workers)
    print("\nalpha range keeping accuracy within 1 pp of the ideal baseline")
    print(f"{'mapping':<16}{'bits':>5}{'alpha_lo':>10}{'alpha_hi':>10}{'best':>8}{'acc':>9}")
    for w in windows:
        print(f"{w.mapping:<16}{w.adc_bits:>5}{w.alpha_lo:10.2f}{w.alpha_hi:10.2f}{w.best_alpha:8.2f}{w.best_accuracy:9.4f}")


if __name__ == "__main__":
    main()
