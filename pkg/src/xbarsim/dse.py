"""Grid sweeps over mapping, ADC and cell parameters.

Every (point, trial) row is seeded from ``(base_seed, point, trial)`` alone,
so a row can be recomputed in isolation and the result table does not depend
on the worker count or completion order.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
import yaml

from .errors import ConfigError, EmptyInput, XbarError
from .mapping import MappingScheme
from .nn.engine import host_accuracy, run_inference
from .nn.io import load_dataset, load_model
from .xbar import AdcConfig, CrossbarConfig

log = logging.getLogger(__name__)


def _parse_bits(b):
    if b is None or (isinstance(b, str) and b.strip().lower() in ("inf", "infinite", "none")):
        return None
    if isinstance(b, float) and math.isinf(b):
        return None
    if isinstance(b, str) and b.strip().isdigit():
        b = int(b)
    if isinstance(b, bool) or not isinstance(b, int) or b < 1:
        raise ConfigError(f"ADC resolution must be a positive integer or 'inf', got {b!r}")
    return b


def bits_label(b: int | None) -> str:
    return "inf" if b is None else str(b)


@dataclass
class SweepConfig:
    model: str
    dataset: str
    mappings: list[str]
    adc_bits: list = field(default_factory=lambda: [None])
    alpha: list[float] = field(default_factory=lambda: [1.0])
    sigma_lrs: list[float] = field(default_factory=lambda: [0.0])
    sigma_hrs: list[float] = field(default_factory=lambda: [0.0])
    currents: list[tuple[float, float]] = field(default_factory=lambda: [(5.0, 10.0)])
    samples: int | None = None
    trials: int = 1
    seed: int = 0
    rows: int = 256
    cols: int = 256
    m_int: int | None = None
    n_int: int | None = None
    host_first_layer: bool = False

    def __post_init__(self):
        self.adc_bits = [_parse_bits(b) for b in self.adc_bits]
        self.currents = [tuple(float(c) for c in pair) for pair in self.currents]
        self.validate()

    def validate(self):
        for name in ("mappings", "adc_bits", "alpha", "sigma_lrs", "sigma_hrs", "currents"):
            if not getattr(self, name):
                raise ConfigError(f"sweep axis {name!r} must not be empty")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.samples is not None and self.samples < 1:
            raise ConfigError(f"samples must be >= 1, got {self.samples}")
        for name in self.mappings:
            try:
                MappingScheme.from_name(name)
            except XbarError as e:
                raise ConfigError(str(e)) from None
        for a in self.alpha:
            AdcConfig(None, a)
        for pair in self.currents:
            if len(pair) != 2:
                raise ConfigError(f"currents entries are (i_hrs, i_lrs) pairs, got {pair}")
        for sl, sh, (ih, il) in itertools.product(self.sigma_lrs, self.sigma_hrs, self.currents):
            CrossbarConfig(self.rows, self.cols, ih, il, sh, sl)
        for name in self.mappings:
            s = MappingScheme.from_name(name)
            mi, ni = s.max_tile(self.rows, self.cols)
            if mi < 1 or ni < 1 or (self.m_int or 1) > mi or (self.n_int or 1) > ni:
                raise ConfigError(f"tile {self.m_int}x{self.n_int} does not fit {self.rows}x{self.cols} under {name}")

    @classmethod
    def from_dict(cls, d: dict) -> "SweepConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        missing = {"model", "dataset", "mappings"} - set(d)
        if missing:
            raise ConfigError(f"missing config keys: {', '.join(sorted(missing))}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def load(cls, path) -> "SweepConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"{path}: no such config file")
        try:
            d = yaml.safe_load(path.read_text())
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: {e}") from None
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: config must be a mapping")
        return cls.from_dict(d)

    def points(self) -> list["Point"]:
        grid = itertools.product(self.mappings, self.adc_bits, self.alpha, self.sigma_lrs, self.sigma_hrs, self.currents)
        return [Point(k, m, b, float(a), float(sl), float(sh), ih, il) for k, (m, b, a, sl, sh, (ih, il)) in enumerate(grid)]


@dataclass(frozen=True)
class Point:
    index: int
    mapping: str
    adc_bits: int | None
    alpha: float
    sigma_lrs: float
    sigma_hrs: float
    i_hrs: float
    i_lrs: float


def row_seed(base_seed: int, point: int, trial: int) -> int:
    return int(np.random.SeedSequence([base_seed, point, trial]).generate_state(1, np.uint64)[0])


@dataclass
class ResultRow:
    point: int
    trial: int
    mapping: str
    adc_bits: str
    alpha: float
    sigma_lrs: float
    sigma_hrs: float
    i_hrs: float
    i_lrs: float
    seed: int
    samples: int
    accuracy: float
    baseline_accuracy: float
    writes: int
    mvms: int
    status: str = "ok"
    wall_time: float = field(default=0.0, compare=False)


COLUMNS = [f.name for f in fields(ResultRow) if f.name != "wall_time"]


class _Context:
    """Model and data shared by all rows of one sweep (loaded once per process)."""

    def __init__(self, cfg: SweepConfig):
        self.cfg = cfg
        self.model = load_model(cfg.model)
        x, y = load_dataset(cfg.dataset)
        if cfg.samples is not None:
            x, y = x[: cfg.samples], y[: cfg.samples]
        self.x, self.y = x, y
        self.baseline = host_accuracy(self.model, x, y, cfg.host_first_layer)


def _row(ctx: _Context, p: Point, trial: int) -> ResultRow:
    cfg = ctx.cfg
    seed = row_seed(cfg.seed, p.index, trial)
    row = ResultRow(
        p.index, trial, p.mapping, bits_label(p.adc_bits), p.alpha, p.sigma_lrs, p.sigma_hrs,
        p.i_hrs, p.i_lrs, seed, len(ctx.y), math.nan, ctx.baseline, 0, 0,
    )
    t0 = time.perf_counter()
    try:
        xcfg = CrossbarConfig(
            cfg.rows, cfg.cols, p.i_hrs, p.i_lrs, p.sigma_hrs, p.sigma_lrs, AdcConfig(p.adc_bits, p.alpha), seed
        )
        res = run_inference(
            ctx.model, ctx.x, ctx.y, MappingScheme.from_name(p.mapping), xcfg,
            cfg.m_int, cfg.n_int, host_first_layer=cfg.host_first_layer,
        )
        row.accuracy, row.writes, row.mvms = res.accuracy, res.writes, res.mvms
    except Exception as e:  # a failing point must not stop the sweep
        log.warning("point %d trial %d failed: %s", p.index, trial, e)
        row.status = f"error: {type(e).__name__}: {e}".replace("\n", " ")
    row.wall_time = time.perf_counter() - t0
    return row


def run_row(cfg: SweepConfig, point: int, trial: int) -> ResultRow:
    """Recompute a single row of the sweep in isolation."""
    pts = cfg.points()
    if not (0 <= point < len(pts)) or not (0 <= trial < cfg.trials):
        raise ConfigError(f"no row (point={point}, trial={trial}) in a {len(pts)}-point x {cfg.trials}-trial sweep")
    return _row(_Context(cfg), pts[point], trial)


_worker_ctx: _Context | None = None


def _init_worker(cfg: SweepConfig):
    global _worker_ctx
    _worker_ctx = _Context(cfg)


def _work(p: Point, trial: int) -> ResultRow:
    return _row(_worker_ctx, p, trial)


def run_sweep(
    cfg: SweepConfig, workers: int = 1, on_row: Callable[[ResultRow], None] | None = None
) -> list[ResultRow]:
    """Evaluate every point x trial; rows go to ``on_row`` as they finish.

    The returned list is in canonical (point, trial) order.
    """
    cfg.validate()
    tasks = [(p, t) for p in cfg.points() for t in range(cfg.trials)]
    rows = []
    # Loading here surfaces missing or malformed inputs before any work starts.
    ctx = _Context(cfg)
    if workers <= 1:
        for p, t in tasks:
            r = _row(ctx, p, t)
            rows.append(r)
            if on_row:
                on_row(r)
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(cfg,)) as ex:
            futs = [ex.submit(_work, p, t) for p, t in tasks]
            for fut in as_completed(futs):
                r = fut.result()
                rows.append(r)
                if on_row:
                    on_row(r)
    rows.sort(key=lambda r: (r.point, r.trial))
    return rows


def format_value(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_results(rows: Iterable[ResultRow], out) -> None:
    """CSV in :data:`COLUMNS` order; ``out`` is a path or text stream."""
    if isinstance(out, (str, Path)):
        with open(out, "w", newline="") as f:
            write_results(rows, f)
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        d = asdict(r)
        w.writerow([format_value(d[c]) for c in COLUMNS])


def write_timings(rows: Iterable[ResultRow], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["point", "trial", "wall_time"])
        for r in rows:
            w.writerow([r.point, r.trial, f"{r.wall_time:.6f}"])


def read_results(path) -> list[ResultRow]:
    types = {f.name: f.type for f in fields(ResultRow)}
    conv = {"int": int, "float": float, "str": str}
    rows = []
    with open(path, newline="") as f:
        for rec in csv.DictReader(f):
            rows.append(ResultRow(**{k: conv[types[k]](v) for k, v in rec.items()}))
    return rows


def results_csv(rows) -> str:
    buf = io.StringIO()
    write_results(rows, buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Summaries

_KEY = ("mapping", "adc_bits", "alpha", "sigma_lrs", "sigma_hrs", "i_hrs", "i_lrs")


@dataclass
class PointSummary:
    point: int
    mapping: str
    adc_bits: str
    alpha: float
    sigma_lrs: float
    sigma_hrs: float
    i_hrs: float
    i_lrs: float
    trials: int
    failed: int
    mean_accuracy: float
    min_accuracy: float
    max_accuracy: float
    baseline_accuracy: float


@dataclass
class AlphaWindow:
    mapping: str
    adc_bits: str
    sigma_lrs: float
    sigma_hrs: float
    i_hrs: float
    i_lrs: float
    alpha_lo: float  # nan when no alpha stays within tolerance
    alpha_hi: float
    alphas_within: int
    best_alpha: float
    best_accuracy: float
    baseline_accuracy: float


def summarize(rows: list[ResultRow], tolerance: float = 0.01) -> tuple[list[PointSummary], list[AlphaWindow]]:
    """Per-point accuracy statistics and, per (mapping, B, cell params), the
    widest contiguous alpha range whose mean accuracy drops by at most
    ``tolerance`` (absolute) from the host baseline."""
    if not rows:
        raise EmptyInput("cannot summarize an empty result table")
    by_point: dict[int, list[ResultRow]] = {}
    for r in rows:
        by_point.setdefault(r.point, []).append(r)
    points = []
    for idx in sorted(by_point):
        rs = by_point[idx]
        ok = [r.accuracy for r in rs if r.status == "ok"]
        first = rs[0]
        stats = (float(np.mean(ok)), float(min(ok)), float(max(ok))) if ok else (math.nan,) * 3
        points.append(
            PointSummary(idx, *(getattr(first, k) for k in _KEY), len(rs), len(rs) - len(ok), *stats, first.baseline_accuracy)
        )

    groups: dict[tuple, list[PointSummary]] = {}
    for p in points:
        key = (p.mapping, p.adc_bits, p.sigma_lrs, p.sigma_hrs, p.i_hrs, p.i_lrs)
        groups.setdefault(key, []).append(p)
    windows = []
    for key, ps in groups.items():
        ps = sorted(ps, key=lambda p: p.alpha)
        good = [not math.isnan(p.mean_accuracy) and p.baseline_accuracy - p.mean_accuracy <= tolerance + 1e-12 for p in ps]
        best_run, run_start = (0, -1, -1), None
        for k, g in enumerate(good + [False]):
            if g and run_start is None:
                run_start = k
            elif not g and run_start is not None:
                if k - run_start > best_run[0]:
                    best_run = (k - run_start, run_start, k - 1)
                run_start = None
        valid = [p for p in ps if not math.isnan(p.mean_accuracy)]
        best = max(valid, key=lambda p: p.mean_accuracy) if valid else None
        n, lo, hi = best_run
        windows.append(
            AlphaWindow(
                *key,
                ps[lo].alpha if n else math.nan,
                ps[hi].alpha if n else math.nan,
                sum(good),
                best.alpha if best else math.nan,
                best.mean_accuracy if best else math.nan,
                ps[0].baseline_accuracy,
            )
        )
    return points, windows


def _write_dataclasses(items, path) -> None:
    items = list(items)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        names = [f.name for f in fields(items[0])] if items else []
        w.writerow(names)
        for it in items:
            d = asdict(it)
            w.writerow([format_value(d[n]) for n in names])


def write_summary(points, windows, prefix) -> list[Path]:
    """``<prefix>.points.csv`` and ``<prefix>.alpha.csv``."""
    prefix = Path(prefix)
    a, b = prefix.with_name(prefix.name + ".points.csv"), prefix.with_name(prefix.name + ".alpha.csv")
    _write_dataclasses(points, a)
    _write_dataclasses(windows, b)
    return [a, b]


def write_plot_data(points, path) -> None:
    """Records usable as an inline vega-lite ``data.values`` array."""
    recs = [{k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in asdict(p).items()} for p in points]
    Path(path).write_text(json.dumps({"values": recs}, indent=1) + "\n")
