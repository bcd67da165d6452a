"""Buffer-level offload API mirroring the C functional interface.

    int write_matrix(int *m, int m_int, int n_int);
    int mvm(int *r, int *v, int m_int, int n_int);

Matrices are flat row-major buffers (the n dimension is contiguous).  Both
calls return 0 on success and one of the ``ERR_*`` codes otherwise.  The
mapper splits the matrix into the largest tiles the physical array can hold
under the active mapping.
"""
from __future__ import annotations

import logging

import numpy as np

from .errors import EncodingError, ShapeError, TileTooLarge
from .mapping import MappingScheme
from .tiler import MatrixHandle
from .xbar import CrossbarConfig, CrossbarPool

log = logging.getLogger(__name__)

OK = 0
ERR_SHAPE = 1
ERR_ENCODING = 2
ERR_TILE_TOO_LARGE = 3
ERR_NO_MATRIX = 4


class FunctionalInterface:
    def __init__(self, scheme: MappingScheme, cfg: CrossbarConfig):
        self.scheme = scheme
        self.pool = CrossbarPool(cfg)
        mi, ni = scheme.max_tile(cfg.rows_c, cfg.cols_c)
        if mi < 1 or ni < 1:
            raise TileTooLarge(f"{scheme.name} does not fit a {cfg.rows_c}x{cfg.cols_c} crossbar")
        self.handle = MatrixHandle(scheme, self.pool, mi, ni)

    def write_matrix(self, m, m_int: int, n_int: int) -> int:
        buf = np.asarray(m)
        if m_int < 1 or n_int < 1 or buf.size != m_int * n_int:
            log.error("write_matrix: buffer of %d entries is not %dx%d", buf.size, m_int, n_int)
            return ERR_SHAPE
        try:
            self.handle.write(buf.reshape(m_int, n_int))
        except EncodingError as e:
            log.error("write_matrix: %s", e)
            return ERR_ENCODING
        return OK

    def mvm(self, r, v, m_int: int, n_int: int) -> int:
        if self.handle.grid is None:
            return ERR_NO_MATRIX
        if (m_int, n_int) != self.handle.shape or np.size(v) != n_int or np.size(r) != m_int:
            log.error("mvm: dims %dx%d do not match the written matrix %s", m_int, n_int, self.handle.shape)
            return ERR_SHAPE
        try:
            res = self.handle.mvm(np.asarray(v).reshape(n_int))
        except EncodingError as e:
            log.error("mvm: %s", e)
            return ERR_ENCODING
        except ShapeError as e:
            log.error("mvm: %s", e)
            return ERR_SHAPE
        r[...] = res
        return OK

    @property
    def stats(self):
        return self.handle.stats()
