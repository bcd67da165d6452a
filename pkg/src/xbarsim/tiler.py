"""Functional interface: tiled ``write_matrix`` / ``mvm`` over logical integer matrices.

Logical matrix rows (outputs) map to physical columns and logical columns
(inputs) map to physical rows, so inputs drive the wordlines.  Every logical
tile owns one physical crossbar for the lifetime of its handle; a tile is
only reprogrammed when its content changes.
"""
from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, TileTooLarge
from .mapping import DigitalPlan, MappingScheme, encode_inputs, encode_weights, mvm_on_crossbar, program_plan
from .xbar import AdcConfig, Crossbar, CrossbarPool


@dataclass(frozen=True)
class Tile:
    row: int  # tile grid coordinates
    col: int
    rows: slice  # logical output range
    cols: slice  # logical input range

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.stop - self.rows.start, self.cols.stop - self.cols.start


@dataclass
class TileGrid:
    m: int
    n: int
    m_int: int
    n_int: int
    tiles: list[Tile] = field(default_factory=list)

    @classmethod
    def partition(cls, m: int, n: int, m_int: int, n_int: int) -> "TileGrid":
        if m_int < 1 or n_int < 1:
            raise ShapeError(f"tile dims must be positive, got {m_int}x{n_int}")
        grid = cls(m, n, m_int, n_int)
        for a, r0 in enumerate(range(0, m, m_int)):
            for b, c0 in enumerate(range(0, n, n_int)):
                grid.tiles.append(Tile(a, b, slice(r0, min(r0 + m_int, m)), slice(c0, min(c0 + n_int, n))))
        return grid

    @property
    def full_tiles(self) -> list[Tile]:
        return [t for t in self.tiles if t.shape == (self.m_int, self.n_int)]

    @property
    def edge_tiles(self) -> list[Tile]:
        return [t for t in self.tiles if t.shape != (self.m_int, self.n_int)]


@dataclass
class WriteStats:
    writes: int = 0
    mvms: int = 0

    @property
    def reuse_factor(self) -> float:
        return self.mvms / self.writes if self.writes else 0.0


def _digest(scheme: MappingScheme, block: np.ndarray) -> str:
    h = hashlib.sha1(scheme.name.encode())
    h.update(str(block.shape).encode())
    h.update(np.ascontiguousarray(block, dtype=np.int8).tobytes())
    return h.hexdigest()


class MatrixHandle:
    """A logical matrix written to crossbars; the target of ``mvm`` calls."""

    def __init__(self, scheme: MappingScheme, pool: CrossbarPool, m_int: int, n_int: int, adc: AdcConfig | None = None):
        cfg = pool.cfg
        if not scheme.fits(m_int, n_int, cfg.rows_c, cfg.cols_c):
            mi, ni = scheme.max_tile(cfg.rows_c, cfg.cols_c)
            raise TileTooLarge(
                f"{m_int}x{n_int} logical tile does not fit a {cfg.rows_c}x{cfg.cols_c} crossbar "
                f"under {scheme.name} (max {mi}x{ni})"
            )
        self.scheme = scheme
        self.pool = pool
        self.m_int = m_int
        self.n_int = n_int
        self.adc = adc
        self.grid: TileGrid | None = None
        self._plans: dict[tuple[int, int], DigitalPlan] = {}
        self._hashes: dict[tuple[int, int], str] = {}
        self._xbars: dict[tuple[int, int], Crossbar] = {}
        self._stats = WriteStats()
        self._lock = threading.Lock()

    @property
    def shape(self) -> tuple[int, int]:
        if self.grid is None:
            raise ShapeError("no matrix written to this handle")
        return self.grid.m, self.grid.n

    def write(self, matrix) -> int:
        """Partition, encode and program; returns the number of tiles programmed."""
        matrix = np.asarray(matrix)
        if matrix.ndim != 2:
            raise ShapeError(f"matrix must be 2-D, got shape {matrix.shape}")
        m, n = matrix.shape
        grid = TileGrid.partition(m, n, self.m_int, self.n_int)
        # Encode everything before touching hardware so a bad entry leaves the handle intact.
        plans = {(t.row, t.col): encode_weights(matrix[t.rows, t.cols], self.scheme) for t in grid.tiles}
        with self._lock:
            if self.grid is not None and (self.grid.m, self.grid.n) != (m, n):
                self._plans.clear()
                self._hashes.clear()
            programmed = 0
            for t in grid.tiles:
                key = (t.row, t.col)
                digest = _digest(self.scheme, matrix[t.rows, t.cols])
                if self._hashes.get(key) == digest:
                    continue
                xbar = self._xbars.get(key)
                if xbar is None:
                    xbar = self._xbars[key] = self.pool.allocate()
                program_plan(plans[key], xbar)
                self._plans[key] = plans[key]
                self._hashes[key] = digest
                programmed += 1
            self.grid = grid
            self._stats.writes += programmed
        return programmed

    def mvm(self, v, analog_correction: bool = True) -> np.ndarray:
        """``r = m @ v`` for one vector (n,) or a batch (batch, n)."""
        v = np.asarray(v)
        single = v.ndim == 1
        batch = v[None, :] if single else v
        m, n = self.shape
        if batch.ndim != 2 or batch.shape[1] != n:
            raise ShapeError(f"input shape {v.shape} does not match matrix with {n} columns")
        out = np.zeros((batch.shape[0], m), dtype=np.int64)
        with self._lock:
            for t in self.grid.tiles:
                key = (t.row, t.col)
                enc = encode_inputs(batch[:, t.cols], self.scheme)
                out[:, t.rows] += mvm_on_crossbar(
                    self._plans[key], enc, self._xbars[key], self.adc, analog_correction
                )
            self._stats.mvms += batch.shape[0] * len(self.grid.tiles) * self.scheme.cycles
        return out[0] if single else out

    def stats(self) -> WriteStats:
        return WriteStats(self._stats.writes, self._stats.mvms)

    @property
    def crossbars(self) -> int:
        return len(self._xbars)


def write_matrix(matrix, m_int: int, n_int: int, scheme: MappingScheme, pool: CrossbarPool, adc=None) -> MatrixHandle:
    handle = MatrixHandle(scheme, pool, m_int, n_int, adc)
    handle.write(matrix)
    return handle


def mvm(handle: MatrixHandle, v) -> np.ndarray:
    return handle.mvm(v)


def stats(handle: MatrixHandle) -> WriteStats:
    return handle.stats()
