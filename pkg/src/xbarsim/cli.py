"""Command-line entry points.

    xbarsim infer MODEL DATASET --mapping bnn-vi [crossbar flags]
    xbarsim sweep CONFIG --out results.csv [--workers N]
    xbarsim verify-model MODEL
    xbarsim mapping-info [NAME ...]

Results go to stdout (or the requested files); diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

from . import dse
from .errors import XbarError
from .mapping import MappingScheme, all_schemes, describe_analog
from .nn import host_accuracy, load_dataset, load_model, run_inference
from .xbar import AdcConfig, AdcMode, CrossbarConfig

WORKERS_ENV = "XBARSIM_WORKERS"


def _bits(s: str):
    return None if s.lower() in ("inf", "infinite") else int(s)


def _default_workers() -> int:
    v = os.environ.get(WORKERS_ENV)
    if v is None:
        return 1
    try:
        return max(1, int(v))
    except ValueError:
        raise XbarError(f"{WORKERS_ENV}={v!r} is not an integer") from None


def _add_crossbar_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("crossbar")
    g.add_argument("--rows", type=int, default=256, help="physical rows per crossbar (default: 256)")
    g.add_argument("--cols", type=int, default=256, help="physical columns per crossbar (default: 256)")
    g.add_argument("--i-hrs", type=float, default=5.0, help="mean HRS read current in uA (default: 5)")
    g.add_argument("--i-lrs", type=float, default=10.0, help="mean LRS read current in uA (default: 10)")
    g.add_argument("--sigma-hrs", type=float, default=0.0, help="HRS current std-dev in uA (default: 0)")
    g.add_argument("--sigma-lrs", type=float, default=0.0, help="LRS current std-dev in uA (default: 0)")
    g.add_argument("--adc-bits", type=_bits, default=None, help="ADC resolution in bits or 'inf' (default: inf)")
    g.add_argument("--alpha", type=float, default=1.0, help="ADC clipping factor in (0, 1] (default: 1)")
    g.add_argument(
        "--adc-mode", choices=[m.value for m in AdcMode], default=AdcMode.DIFFERENTIAL.value,
        help="ADC input range for single-ended reads (default: differential)",
    )
    g.add_argument("--m-int", type=int, default=None, help="tile rows (default: largest that fits)")
    g.add_argument("--n-int", type=int, default=None, help="tile columns (default: largest that fits)")
    g.add_argument("--seed", type=int, default=0, help="variability seed (default: 0)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="xbarsim", description="Functional RRAM crossbar simulator for BNN/TNN inference.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="run one inference pass and print accuracy")
    p.add_argument("model", help="model manifest (.json)")
    p.add_argument("dataset", help="tensor file with inputs and labels")
    p.add_argument("--mapping", required=True, help="mapping name, e.g. bnn-vi+cells")
    p.add_argument("--samples", type=int, default=None, help="use the first N samples (default: all)")
    p.add_argument("--batch-size", type=int, default=None, help="inference batch size (default: whole set)")
    p.add_argument("--host-first-layer", action="store_true", help="run the first crossbar layer on the host")
    _add_crossbar_flags(p)

    p = sub.add_parser("sweep", help="run a parameter sweep from a YAML config")
    p.add_argument("config", help="sweep config (.yaml)")
    p.add_argument("--out", default="results.csv", help="result CSV (default: results.csv)")
    p.add_argument(
        "--workers", type=int, default=None, help=f"worker processes (default: ${WORKERS_ENV} or 1)"
    )
    p.add_argument("--no-summary", action="store_true", help="skip the summary CSVs")
    p.add_argument("--plot-data", default=None, help="also write vega-lite data records to this JSON file")
    p.add_argument("--point", type=int, default=None, help="recompute only this point index (needs --trial)")
    p.add_argument("--trial", type=int, default=None, help="trial index for --point")

    p = sub.add_parser("verify-model", help="load and validate a model file")
    p.add_argument("model", help="model manifest (.json)")
    p.add_argument("--host-first-layer", action="store_true", help="allow a real-valued first crossbar layer input")

    p = sub.add_parser("mapping-info", help="print static parameters of mappings")
    p.add_argument("names", nargs="*", help="mapping names (default: all)")
    p.add_argument("--rows", type=int, default=256, help="rows for the max-tile column (default: 256)")
    p.add_argument("--cols", type=int, default=256, help="columns for the max-tile column (default: 256)")
    return ap


def cmd_infer(args) -> int:
    scheme = MappingScheme.from_name(args.mapping)
    cfg = CrossbarConfig(
        args.rows, args.cols, args.i_hrs, args.i_lrs, args.sigma_hrs, args.sigma_lrs,
        AdcConfig(args.adc_bits, args.alpha, AdcMode(args.adc_mode)), args.seed,
    )
    model = load_model(args.model)
    x, y = load_dataset(args.dataset)
    if args.samples is not None:
        x, y = x[: args.samples], y[: args.samples]
    res = run_inference(model, x, y, scheme, cfg, args.m_int, args.n_int, args.batch_size, args.host_first_layer)
    base = host_accuracy(model, x, y, args.host_first_layer)
    print(f"mapping     {scheme.name}")
    print(f"samples     {len(y)}")
    print(f"accuracy    {res.accuracy:.6f}")
    print(f"baseline    {base:.6f}")
    print(f"writes      {res.writes}")
    print(f"mvms        {res.mvms}")
    print(f"crossbars   {res.crossbars}")
    print(f"seed        {args.seed}")
    return 0


def cmd_sweep(args) -> int:
    cfg = dse.SweepConfig.load(args.config)
    if args.point is not None or args.trial is not None:
        if args.point is None or args.trial is None:
            raise XbarError("--point and --trial must be given together")
        row = dse.run_row(cfg, args.point, args.trial)
        dse.write_results([row], sys.stdout)
        return 0 if row.status == "ok" else 1
    workers = args.workers if args.workers is not None else _default_workers()
    out = Path(args.out)
    n = len(cfg.points()) * cfg.trials
    logging.info("sweep: %d points x %d trials, %d worker(s)", len(cfg.points()), cfg.trials, workers)

    # Rows are streamed to a partial file in completion order; the final CSV is canonical.
    partial = out.with_name(out.name + ".partial")
    with open(partial, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(dse.COLUMNS)

        def on_row(r):
            w.writerow([dse.format_value(getattr(r, c)) for c in dse.COLUMNS])
            f.flush()
            logging.info("row %d/%d: point %d trial %d acc %.4f", on_row.k + 1, n, r.point, r.trial, r.accuracy)
            on_row.k += 1

        on_row.k = 0
        rows = dse.run_sweep(cfg, workers, on_row)
    dse.write_results(rows, out)
    partial.unlink()
    dse.write_timings(rows, out.with_name(out.stem + ".timing.csv"))
    written = [out]
    if not args.no_summary:
        points, windows = dse.summarize(rows)
        written += dse.write_summary(points, windows, out.with_suffix(""))
        if args.plot_data:
            dse.write_plot_data(points, args.plot_data)
            written.append(Path(args.plot_data))
    failed = sum(r.status != "ok" for r in rows)
    for p in written:
        print(p)
    if failed:
        print(f"xbarsim: {failed} of {len(rows)} rows failed", file=sys.stderr)
        return 1
    return 0


def cmd_verify_model(args) -> int:
    model = load_model(args.model)
    shapes = model.validate(args.host_first_layer)
    print(f"{args.model}: ok ({model.alphabet}, input {tuple(model.input_shape)})")
    for i, (layer, shape) in enumerate(zip(model.layers, shapes)):
        xb = " [crossbar]" if i in model.crossbar_layers else ""
        print(f"  {i:3d} {type(layer).__name__:<12} -> {shape}{xb}")
    return 0


def cmd_mapping_info(args) -> int:
    schemes = [MappingScheme.from_name(n) for n in args.names] if args.names else all_schemes()
    header = ["mapping", "cycles", "cells/weight", "max_tile", "analog_correction", "digital_correction"]
    rows = []
    for s in schemes:
        mi, ni = s.max_tile(args.rows, args.cols)
        rows.append([s.name, str(s.cycles), str(s.cells_per_weight), f"{mi}x{ni}", describe_analog(s), s.definition.digital.value])
    widths = [max(len(r[k]) for r in rows + [header]) for k in range(len(header))]
    for r in [header] + rows:
        print("  ".join(c.ljust(wd) for c, wd in zip(r, widths)).rstrip())
    return 0


COMMANDS = {"infer": cmd_infer, "sweep": cmd_sweep, "verify-model": cmd_verify_model, "mapping-info": cmd_mapping_info}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (XbarError, ValueError, OSError) as e:
        print(f"xbarsim {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
