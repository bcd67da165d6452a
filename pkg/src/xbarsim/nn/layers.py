"""Layer types, quantizers and shape rules of the quantized-model IR.

Tensors are channel-last: a feature map is ``(H, W, C)`` per sample and a
convolution kernel is ``(K_O, K_H, K_W, K_I)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ModelError

BINARY = (-1, 1)
TERNARY = (-1, 0, 1)


def sign_quantize(x):
    """+1 where ``x >= 0``, -1 elsewhere."""
    x = np.asarray(x)
    return np.where(x >= 0, 1, -1).astype(np.int8)


def ternary_quantize(x, delta_t: float):
    """+1 above ``delta_t``, -1 below ``-delta_t``, 0 in between (inclusive)."""
    if delta_t < 0:
        raise ValueError(f"ternary threshold must be non-negative, got {delta_t}")
    x = np.asarray(x)
    return np.where(x > delta_t, 1, np.where(x < -delta_t, -1, 0)).astype(np.int8)


@dataclass(frozen=True, eq=False)
class QuantDense:
    weights: np.ndarray  # (out_features, in_features)

    @property
    def out_features(self) -> int:
        return self.weights.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return self.weights


@dataclass(frozen=True, eq=False)
class QuantConv2D:
    kernels: np.ndarray  # (K_O, K_H, K_W, K_I)
    stride: int = 1
    padding: str | int = "valid"

    @property
    def matrix(self) -> np.ndarray:
        """Kernels unrolled to a ``K_O x (K_H*K_W*K_I)`` matrix, im2col order."""
        return self.kernels.reshape(self.kernels.shape[0], -1)

    def pads(self, h: int, w: int) -> tuple[int, int, int, int]:
        """(top, bottom, left, right) zero padding."""
        _, kh, kw, _ = self.kernels.shape
        if self.padding == "valid":
            return 0, 0, 0, 0
        if self.padding == "same":
            ph = max((math.ceil(h / self.stride) - 1) * self.stride + kh - h, 0)
            pw = max((math.ceil(w / self.stride) - 1) * self.stride + kw - w, 0)
            return ph // 2, ph - ph // 2, pw // 2, pw - pw // 2
        p = int(self.padding)
        return p, p, p, p


@dataclass(frozen=True)
class MaxPool:
    window: int
    stride: int | None = None

    @property
    def step(self) -> int:
        return self.stride or self.window


@dataclass(frozen=True, eq=False)
class Affine:
    scale: np.ndarray  # per channel (last axis)
    shift: np.ndarray


@dataclass(frozen=True)
class Quantize:
    mode: str = "sign"  # "sign" | "ternary"
    delta_t: float = 0.0

    def __call__(self, x):
        if self.mode == "sign":
            return sign_quantize(x)
        return ternary_quantize(x, self.delta_t)


@dataclass(frozen=True)
class Flatten:
    pass


Layer = QuantDense | QuantConv2D | MaxPool | Affine | Quantize | Flatten
CROSSBAR_LAYERS = (QuantDense, QuantConv2D)


def _fail(i: int, layer, msg: str):
    raise ModelError(f"layer {i} ({type(layer).__name__}): {msg}")


def output_shape(i: int, layer, shape: tuple[int, ...]) -> tuple[int, ...]:
    if isinstance(layer, QuantDense):
        if len(shape) != 1 or shape[0] != layer.weights.shape[1]:
            _fail(i, layer, f"expects a vector of {layer.weights.shape[1]} features, got shape {shape}")
        return (layer.out_features,)
    if isinstance(layer, QuantConv2D):
        ko, kh, kw, ki = layer.kernels.shape
        if len(shape) != 3 or shape[2] != ki:
            _fail(i, layer, f"expects (H, W, {ki}) feature maps, got shape {shape}")
        if layer.stride < 1:
            _fail(i, layer, f"stride must be positive, got {layer.stride}")
        t, b, l, r = layer.pads(shape[0], shape[1])
        oh = (shape[0] + t + b - kh) // layer.stride + 1
        ow = (shape[1] + l + r - kw) // layer.stride + 1
        if oh < 1 or ow < 1:
            _fail(i, layer, f"kernel {kh}x{kw} larger than padded input {shape}")
        return (oh, ow, ko)
    if isinstance(layer, MaxPool):
        if len(shape) != 3:
            _fail(i, layer, f"expects (H, W, C) feature maps, got shape {shape}")
        oh = (shape[0] - layer.window) // layer.step + 1
        ow = (shape[1] - layer.window) // layer.step + 1
        if layer.window < 1 or oh < 1 or ow < 1:
            _fail(i, layer, f"window {layer.window} does not fit input {shape}")
        return (oh, ow, shape[2])
    if isinstance(layer, Affine):
        c = shape[-1]
        if layer.scale.shape != (c,) or layer.shift.shape != (c,):
            _fail(i, layer, f"scale/shift must have {c} entries, got {layer.scale.shape}/{layer.shift.shape}")
        return shape
    if isinstance(layer, Quantize):
        if layer.mode not in ("sign", "ternary"):
            _fail(i, layer, f"unknown quantizer {layer.mode!r}")
        if layer.delta_t < 0:
            _fail(i, layer, "ternary threshold must be non-negative")
        return shape
    if isinstance(layer, Flatten):
        return (int(np.prod(shape)),)
    raise ModelError(f"layer {i}: unsupported layer type {type(layer).__name__}")


@dataclass
class QuantizedModel:
    input_shape: tuple[int, ...]
    layers: list = field(default_factory=list)
    alphabet: str = "binary"  # "binary" | "ternary"

    def validate(self, host_first_layer: bool = False) -> list[tuple[int, ...]]:
        """Check weights, operand domains and shape chaining.

        Returns the shape after each layer.  Crossbar layers must be fed by a
        quantizer (possibly through pooling/flatten); with ``host_first_layer``
        the first one may take real-valued input instead.
        """
        if self.alphabet not in ("binary", "ternary"):
            raise ModelError(f"unknown alphabet {self.alphabet!r}")
        allowed = BINARY if self.alphabet == "binary" else TERNARY
        shape = tuple(self.input_shape)
        shapes = []
        domain = "real"
        first = True
        for i, layer in enumerate(self.layers):
            if isinstance(layer, CROSSBAR_LAYERS):
                if domain != "quantized" and not (first and host_first_layer):
                    _fail(i, layer, f"input is {domain}-valued; insert a quantize layer before it")
                first = False
                domain = "integer"
                w = layer.matrix
                bad = ~np.isin(w, allowed)
                if bad.any():
                    full = layer.weights if isinstance(layer, QuantDense) else layer.kernels
                    idx = tuple(int(k) for k in np.argwhere(~np.isin(full, allowed))[0])
                    _fail(i, layer, f"weight {full[idx]} at index {idx} outside {self.alphabet} alphabet {list(allowed)}")
            if isinstance(layer, Quantize):
                if layer.mode == "ternary" and self.alphabet == "binary":
                    _fail(i, layer, "ternary quantizer in a binary model")
                domain = "quantized"
            elif isinstance(layer, Affine):
                domain = "real"
            shape = output_shape(i, layer, shape)
            shapes.append(shape)
        return shapes

    @property
    def crossbar_layers(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if isinstance(l, CROSSBAR_LAYERS)]
