"""Inference engine: host-side layers plus crossbar-offloaded dense/conv MVMs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ModelError, ShapeError
from ..mapping import MappingScheme
from ..tiler import MatrixHandle, write_matrix
from ..xbar import AdcConfig, CrossbarConfig, CrossbarPool
from .layers import (
    CROSSBAR_LAYERS,
    Affine,
    Flatten,
    MaxPool,
    QuantConv2D,
    QuantDense,
    Quantize,
    QuantizedModel,
)


def im2col(ifm: np.ndarray, layer: QuantConv2D) -> tuple[np.ndarray, tuple[int, int]]:
    """Unroll ``(B, H, W, C)`` patches into rows of length ``K_H*K_W*K_I``.

    Returns the ``(B*O_H*O_W, K_H*K_W*K_I)`` patch matrix and ``(O_H, O_W)``.
    """
    _, kh, kw, ki = layer.kernels.shape
    if ifm.ndim != 4 or ifm.shape[3] != ki:
        raise ShapeError(f"IFM shape {ifm.shape} does not match kernel with {ki} input channels")
    t, b, l, r = layer.pads(ifm.shape[1], ifm.shape[2])
    padded = np.pad(ifm, ((0, 0), (t, b), (l, r), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(1, 2))
    s = layer.stride
    win = win[:, ::s, ::s]  # (B, O_H, O_W, C, K_H, K_W)
    oh, ow = win.shape[1], win.shape[2]
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(-1, kh * kw * ki)
    return cols, (oh, ow)


def im2col_conv2d(ifm: np.ndarray, layer: QuantConv2D, handle) -> np.ndarray:
    """Convolution as one MVM per output pixel against the unrolled kernels.

    ``handle`` is anything with ``mvm(batch) -> (batch, K_O)``: a crossbar
    matrix handle or a host fallback.
    """
    cols, (oh, ow) = im2col(ifm, layer)
    out = handle.mvm(cols)
    return out.reshape(ifm.shape[0], oh, ow, layer.kernels.shape[0])


def maxpool(x: np.ndarray, layer: MaxPool) -> np.ndarray:
    win = np.lib.stride_tricks.sliding_window_view(x, (layer.window, layer.window), axis=(1, 2))
    return win[:, :: layer.step, :: layer.step].max(axis=(-2, -1))


class HostMatrix:
    """Exact host-side MVM; stands in for a crossbar handle."""

    def __init__(self, matrix: np.ndarray, exact: bool = True):
        self.matrix = matrix.astype(np.int64) if exact else matrix.astype(np.float64)
        self.exact = exact

    def mvm(self, v):
        v = np.asarray(v)
        if self.exact:
            return v.astype(np.int64) @ self.matrix.T
        return v.astype(np.float64) @ self.matrix.T


def forward(model: QuantizedModel, x: np.ndarray, handles: dict, host_first_layer: bool = False) -> np.ndarray:
    """Run all layers; ``handles`` maps crossbar layer index -> MVM provider."""
    first_xbar = model.crossbar_layers[0] if model.crossbar_layers else None
    h = np.asarray(x)
    for i, layer in enumerate(model.layers):
        if isinstance(layer, Quantize):
            if host_first_layer and first_xbar is not None and i < first_xbar:
                continue
            h = layer(h)
        elif isinstance(layer, Affine):
            h = h * layer.scale + layer.shift
        elif isinstance(layer, MaxPool):
            h = maxpool(h, layer)
        elif isinstance(layer, Flatten):
            h = h.reshape(h.shape[0], -1)
        elif isinstance(layer, QuantDense):
            h = handles[i].mvm(h)
        elif isinstance(layer, QuantConv2D):
            h = im2col_conv2d(h, layer, handles[i])
        else:
            raise ModelError(f"layer {i}: unsupported layer type {type(layer).__name__}")
    return h


def _check_input(model: QuantizedModel, x: np.ndarray):
    if tuple(x.shape[1:]) != tuple(model.input_shape):
        raise ShapeError(f"dataset samples have shape {x.shape[1:]}, model expects {tuple(model.input_shape)}")


def run_host(model: QuantizedModel, x, host_first_layer: bool = False) -> np.ndarray:
    """All-host execution with exact integer MVMs; returns the final outputs."""
    model.validate(host_first_layer)
    x = np.asarray(x)
    _check_input(model, x)
    handles = {}
    for k, i in enumerate(model.crossbar_layers):
        exact = not (host_first_layer and k == 0)
        handles[i] = HostMatrix(model.layers[i].matrix, exact)
    return forward(model, x, handles, host_first_layer)


@dataclass
class InferenceResult:
    predictions: np.ndarray
    accuracy: float
    writes: int
    mvms: int
    crossbars: int


def build_handles(
    model: QuantizedModel,
    scheme: MappingScheme,
    cfg: CrossbarConfig,
    m_int: int | None = None,
    n_int: int | None = None,
    host_first_layer: bool = False,
    adc: AdcConfig | None = None,
) -> dict:
    """Write every crossbar layer once; one handle per layer."""
    if model.alphabet == "ternary" and not scheme.kind.ternary:
        raise ModelError(f"ternary model cannot run on binary mapping {scheme.name}")
    pool = CrossbarPool(cfg)
    mi, ni = scheme.max_tile(cfg.rows_c, cfg.cols_c)
    m_int, n_int = m_int or mi, n_int or ni
    handles = {}
    for k, i in enumerate(model.crossbar_layers):
        if host_first_layer and k == 0:
            handles[i] = HostMatrix(model.layers[i].matrix, exact=False)
        else:
            handles[i] = write_matrix(model.layers[i].matrix, m_int, n_int, scheme, pool, adc)
    return handles


def predict(model, x, handles, host_first_layer=False, batch_size: int | None = None) -> np.ndarray:
    x = np.asarray(x)
    step = batch_size or max(len(x), 1)
    preds = [
        forward(model, x[s : s + step], handles, host_first_layer).reshape(len(x[s : s + step]), -1).argmax(axis=1)
        for s in range(0, len(x), step)
    ]
    return np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)


def run_inference(
    model: QuantizedModel,
    x,
    y,
    scheme: MappingScheme,
    cfg: CrossbarConfig,
    m_int: int | None = None,
    n_int: int | None = None,
    batch_size: int | None = None,
    host_first_layer: bool = False,
) -> InferenceResult:
    """Top-1 accuracy of ``model`` with every MVM offloaded to crossbars.

    Weights are written once before the first sample and stay programmed for
    the whole dataset.
    """
    model.validate(host_first_layer)
    x, y = np.asarray(x), np.asarray(y)
    _check_input(model, x)
    if len(x) != len(y):
        raise ShapeError(f"{len(x)} samples but {len(y)} labels")
    handles = build_handles(model, scheme, cfg, m_int, n_int, host_first_layer)
    preds = predict(model, x, handles, host_first_layer, batch_size)
    xbar = [h for h in handles.values() if isinstance(h, MatrixHandle)]
    return InferenceResult(
        predictions=preds,
        accuracy=float((preds == y).mean()) if len(y) else 0.0,
        writes=sum(h.stats().writes for h in xbar),
        mvms=sum(h.stats().mvms for h in xbar),
        crossbars=sum(h.crossbars for h in xbar),
    )


def host_accuracy(model: QuantizedModel, x, y, host_first_layer: bool = False) -> float:
    out = run_host(model, x, host_first_layer)
    preds = out.reshape(len(out), -1).argmax(axis=1)
    return float((preds == np.asarray(y)).mean()) if len(y) else 0.0
