"""Analog model of a single binary RRAM crossbar.

Everything is expressed in cell read currents (microamperes).  A cell in LRS
conducts ``i_lrs``, a cell in HRS conducts ``i_hrs``; conductances and the
read voltage never appear explicitly because every mapping identity reduces
to these two current levels.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ShapeError, TileTooLarge


class AdcMode(enum.Enum):
    DIFFERENTIAL = "differential"
    SINGLE_ENDED = "single-ended"


@dataclass(frozen=True)
class AdcConfig:
    """ADC resolution and clipping.

    ``resolution_bits=None`` means infinite resolution: no quantization, but
    the clip at ``alpha * i_max`` is still applied.
    """

    resolution_bits: int | None = None
    alpha: float = 1.0
    mode: AdcMode = AdcMode.DIFFERENTIAL

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.resolution_bits is not None:
            if int(self.resolution_bits) != self.resolution_bits or self.resolution_bits < 1:
                raise ConfigError(f"resolution_bits must be a positive integer or None, got {self.resolution_bits}")

    @property
    def ideal(self) -> bool:
        return self.resolution_bits is None and self.alpha == 1.0


@dataclass(frozen=True)
class CrossbarConfig:
    rows_c: int = 256
    cols_c: int = 256
    i_hrs: float = 5.0
    i_lrs: float = 10.0
    sigma_hrs: float = 0.0
    sigma_lrs: float = 0.0
    adc: AdcConfig = field(default_factory=AdcConfig)
    seed: int = 0

    def __post_init__(self):
        if self.rows_c < 1 or self.cols_c < 1:
            raise ConfigError(f"crossbar dims must be positive, got {self.rows_c}x{self.cols_c}")
        if not (0.0 < self.i_hrs < self.i_lrs):
            raise ConfigError(f"need 0 < i_hrs < i_lrs, got i_hrs={self.i_hrs}, i_lrs={self.i_lrs}")
        if self.sigma_hrs < 0 or self.sigma_lrs < 0:
            raise ConfigError("noise sigmas must be non-negative")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")

    @property
    def i_mm(self) -> float:
        return self.i_lrs - self.i_hrs


@dataclass
class AnalogTile:
    """Sampled read current of every cell of one physical array."""

    currents: np.ndarray
    rows_used: int
    cols_used: int

    def region(self, rows: slice, cols: slice) -> "AnalogTile":
        """View of a rectangular block; reads on it integrate only its own rows."""
        sub = self.currents[rows, cols]
        return AnalogTile(sub, sub.shape[0], sub.shape[1])


def program_cells(target, cfg: CrossbarConfig, rng: np.random.Generator) -> AnalogTile:
    """Program a binary target pattern into a fresh physical array.

    Cells outside ``target`` are set to HRS.  Every cell draws one sample from
    a normal distribution around its nominal level; negative draws are
    clamped to 0 since a read current cannot be negative.
    """
    target = np.asarray(target)
    if target.ndim != 2:
        raise ShapeError(f"target must be 2-D, got shape {target.shape}")
    r, c = target.shape
    if r > cfg.rows_c or c > cfg.cols_c:
        raise TileTooLarge(f"target {r}x{c} exceeds crossbar {cfg.rows_c}x{cfg.cols_c}")
    if target.size and not np.isin(target, (0, 1)).all():
        raise ShapeError("cell targets must be 0 or 1")

    full = np.zeros((cfg.rows_c, cfg.cols_c), dtype=bool)
    full[:r, :c] = target.astype(bool)
    mean = np.where(full, cfg.i_lrs, cfg.i_hrs)
    sigma = np.where(full, cfg.sigma_lrs, cfg.sigma_hrs)
    # Always draw, so the stream position does not depend on the sigmas.
    noise = rng.standard_normal(full.shape)
    currents = np.maximum(mean + sigma * noise, 0.0)
    return AnalogTile(currents, r, c)


def column_currents(tile: AnalogTile, drive) -> np.ndarray:
    """Kirchhoff sum of the driven rows per column.

    ``drive`` is a {0,1} vector of length ``rows_used`` or a batch of them
    (shape ``(..., rows_used)``).
    """
    drive = np.asarray(drive)
    if drive.shape[-1:] != (tile.rows_used,):
        raise ShapeError(f"drive length {drive.shape[-1:]} does not match {tile.rows_used} rows")
    active = tile.currents[: tile.rows_used, : tile.cols_used]
    return drive.astype(np.float64) @ active


def adc_step(i_max: float, adc: AdcConfig) -> float:
    """Quantizer step width; ``inf`` for an infinite-resolution converter."""
    if adc.resolution_bits is None:
        return math.inf
    span = 2.0 * i_max if adc.mode is AdcMode.DIFFERENTIAL else i_max
    return adc.alpha * span / 2.0 ** adc.resolution_bits


def adc_convert(x, i_max, adc: AdcConfig):
    """Clip and quantize a column current with a mid-rise quantizer.

    Differential: symmetric input range ``[-alpha*i_max, alpha*i_max]`` with
    ``2**B`` levels.  Single-ended: range ``[0, alpha*i_max]`` with ``2**B``
    levels.  At the rail the output sits half a step above the clip bound.
    """
    x = np.asarray(x, dtype=np.float64)
    i_max = np.asarray(i_max, dtype=np.float64)
    if np.any(i_max <= 0):
        raise ConfigError("i_max must be positive")
    bound = adc.alpha * i_max
    if adc.mode is AdcMode.DIFFERENTIAL:
        mag = np.minimum(np.abs(x), bound)
        sign = np.sign(x)
    else:
        mag = np.clip(x, 0.0, bound)
        sign = 1.0
    if adc.resolution_bits is None:
        out = sign * mag
    else:
        span = 2.0 * i_max if adc.mode is AdcMode.DIFFERENTIAL else i_max
        step = adc.alpha * span / 2.0 ** adc.resolution_bits
        out = sign * step * (np.floor(mag / step) + 0.5)
    return out if out.ndim else float(out)


def differential_read(tile_plus: AnalogTile, tile_minus: AnalogTile, drive, i_max, adc: AdcConfig):
    """Subtract paired columns in the analog domain, then convert."""
    if (tile_plus.rows_used, tile_plus.cols_used) != (tile_minus.rows_used, tile_minus.cols_used):
        raise ShapeError(
            f"unpaired columns: {tile_plus.rows_used}x{tile_plus.cols_used} vs "
            f"{tile_minus.rows_used}x{tile_minus.cols_used}"
        )
    if adc.mode is not AdcMode.DIFFERENTIAL:
        raise ConfigError("differential_read needs a differential ADC")
    diff = column_currents(tile_plus, drive) - column_currents(tile_minus, drive)
    return adc_convert(diff, i_max, adc)


def differential_i_max(n_rows: int, cfg: CrossbarConfig) -> float:
    return n_rows * cfg.i_mm


def single_ended_i_max(n_rows: int, cfg: CrossbarConfig) -> float:
    return n_rows * cfg.i_lrs


class Crossbar:
    """One physical array with its own RNG stream.

    Programming replaces the stored tile.  Reads never mutate state, so
    concurrent reads of a programmed array are safe.
    """

    def __init__(self, cfg: CrossbarConfig, seed=None):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed if seed is None else seed)
        self.tile: AnalogTile | None = None
        self.programmings = 0

    def program(self, target) -> AnalogTile:
        self.tile = program_cells(target, self.cfg, self.rng)
        self.programmings += 1
        return self.tile


class CrossbarPool:
    """Hands out physical crossbars with independent, reproducible RNG streams.

    The n-th allocated crossbar is seeded from ``(cfg.seed, n)``, so the whole
    pool is determined by the config seed and the allocation order.
    """

    def __init__(self, cfg: CrossbarConfig):
        self.cfg = cfg
        self._allocated = 0

    def allocate(self) -> Crossbar:
        seq = np.random.SeedSequence([self.cfg.seed, self._allocated])
        self._allocated += 1
        return Crossbar(self.cfg, seed=seq)

    @property
    def allocated(self) -> int:
        return self._allocated
