"""Model manifest/weight-blob format and the binary tensor format for datasets.

Both formats are specified byte-for-byte in ``docs/formats.md``.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import ModelError
from .layers import Affine, Flatten, MaxPool, QuantConv2D, QuantDense, Quantize, QuantizedModel

FORMAT = "xbarsim-model"
VERSION = 1
ALIGN = 8

_DTYPES = {"int8": "<i1", "float32": "<f4"}


class ModelFormatError(ModelError):
    pass


class _Blob:
    def __init__(self):
        self.buf = bytearray()

    def add(self, arr: np.ndarray, dtype: str) -> dict:
        pad = (-len(self.buf)) % ALIGN
        self.buf += b"\0" * pad
        ref = {"offset": len(self.buf), "shape": list(arr.shape), "dtype": dtype}
        self.buf += np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes()
        return ref


def save_model(model: QuantizedModel, path, weights_name: str | None = None) -> Path:
    """Write ``path`` (JSON manifest) and its weight blob next to it."""
    path = Path(path)
    blob_path = path.with_name(weights_name or path.stem + ".bin")
    blob = _Blob()
    layers = []
    for layer in model.layers:
        if isinstance(layer, QuantDense):
            layers.append({"type": "quant_dense", "weights": blob.add(layer.weights, "int8")})
        elif isinstance(layer, QuantConv2D):
            layers.append(
                {
                    "type": "quant_conv2d",
                    "kernels": blob.add(layer.kernels, "int8"),
                    "stride": layer.stride,
                    "padding": layer.padding,
                }
            )
        elif isinstance(layer, MaxPool):
            layers.append({"type": "maxpool", "window": layer.window, "stride": layer.step})
        elif isinstance(layer, Affine):
            layers.append(
                {"type": "affine", "scale": blob.add(layer.scale, "float32"), "shift": blob.add(layer.shift, "float32")}
            )
        elif isinstance(layer, Quantize):
            entry = {"type": "quantize", "mode": layer.mode}
            if layer.mode == "ternary":
                entry["delta"] = layer.delta_t
            layers.append(entry)
        elif isinstance(layer, Flatten):
            layers.append({"type": "flatten"})
        else:
            raise ModelError(f"cannot serialize layer {type(layer).__name__}")
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "alphabet": model.alphabet,
        "input_shape": list(model.input_shape),
        "weights": blob_path.name,
        "layers": layers,
    }
    path.write_text(json.dumps(manifest, indent=1) + "\n")
    blob_path.write_bytes(bytes(blob.buf))
    return path


def _tensor(ref, blob: bytes, where: str) -> np.ndarray:
    try:
        offset, shape, dtype = int(ref["offset"]), [int(s) for s in ref["shape"]], ref["dtype"]
    except (KeyError, TypeError, ValueError):
        raise ModelFormatError(f"{where}: tensor reference needs offset, shape and dtype") from None
    if dtype not in _DTYPES:
        raise ModelFormatError(f"{where}: unsupported dtype {dtype!r}")
    dt = np.dtype(_DTYPES[dtype])
    count = int(np.prod(shape)) if shape else 1
    end = offset + count * dt.itemsize
    if offset < 0 or end > len(blob):
        raise ModelFormatError(f"{where}: bytes [{offset}, {end}) outside weight file of {len(blob)} bytes")
    return np.frombuffer(blob, dtype=dt, count=count, offset=offset).reshape(shape).copy()


def load_model(path) -> QuantizedModel:
    path = Path(path)
    if not path.is_file():
        raise ModelFormatError(f"{path}: no such model file")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    if not isinstance(manifest, dict) or manifest.get("format") != FORMAT:
        raise ModelFormatError(f"{path}: not a {FORMAT} manifest")
    if manifest.get("version") != VERSION:
        raise ModelFormatError(f"{path}: unsupported version {manifest.get('version')!r}")
    blob_path = path.with_name(str(manifest.get("weights", "")))
    if not blob_path.is_file():
        raise ModelFormatError(f"{path}: weight file {blob_path} not found")
    blob = blob_path.read_bytes()

    layers = []
    for i, entry in enumerate(manifest.get("layers", [])):
        kind = entry.get("type") if isinstance(entry, dict) else None
        where = f"{path}: layer {i} ({kind})"
        try:
            if kind == "quant_dense":
                w = _tensor(entry["weights"], blob, where)
                if w.ndim != 2:
                    raise ModelFormatError(f"{where}: weights must be 2-D, got shape {w.shape}")
                layers.append(QuantDense(w))
            elif kind == "quant_conv2d":
                k = _tensor(entry["kernels"], blob, where)
                if k.ndim != 4:
                    raise ModelFormatError(f"{where}: kernels must be 4-D, got shape {k.shape}")
                layers.append(QuantConv2D(k, int(entry.get("stride", 1)), entry.get("padding", "valid")))
            elif kind == "maxpool":
                layers.append(MaxPool(int(entry["window"]), entry.get("stride")))
            elif kind == "affine":
                layers.append(Affine(_tensor(entry["scale"], blob, where), _tensor(entry["shift"], blob, where)))
            elif kind == "quantize":
                layers.append(Quantize(entry.get("mode", "sign"), float(entry.get("delta", 0.0))))
            elif kind == "flatten":
                layers.append(Flatten())
            else:
                raise ModelFormatError(f"{where}: unknown layer type")
        except KeyError as e:
            raise ModelFormatError(f"{where}: missing field {e}") from None
    model = QuantizedModel(tuple(int(s) for s in manifest.get("input_shape", [])), layers, manifest.get("alphabet", "binary"))
    try:
        model.validate()
    except ModelError as e:
        raise ModelFormatError(f"{path}: {e}") from None
    return model


# ---------------------------------------------------------------------------
# Tensor files

MAGIC = b"XBT1"
_CODES = {0: "<u1", 1: "<i1", 2: "<i4", 3: "<f4", 4: "<f8", 5: "<i8"}
_CODE_OF = {np.dtype(v): k for k, v in _CODES.items()}
_HEADER = struct.Struct("<4sBBH")


def write_tensors(path, *arrays) -> None:
    with open(path, "wb") as f:
        for a in arrays:
            a = np.asarray(a)
            code = _CODE_OF.get(a.dtype.newbyteorder("<"))
            if code is None:
                raise ValueError(f"unsupported dtype {a.dtype}")
            f.write(_HEADER.pack(MAGIC, code, a.ndim, 0))
            f.write(struct.pack(f"<{a.ndim}I", *a.shape))
            f.write(np.ascontiguousarray(a, dtype=_CODES[code]).tobytes())


def read_tensors(path) -> list[np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise ModelFormatError(f"{path}: no such tensor file")
    data = path.read_bytes()
    out, pos = [], 0
    while pos < len(data):
        if pos + _HEADER.size > len(data):
            raise ModelFormatError(f"{path}: truncated header at byte {pos}")
        magic, code, ndim, _ = _HEADER.unpack_from(data, pos)
        if magic != MAGIC or code not in _CODES:
            raise ModelFormatError(f"{path}: bad tensor header at byte {pos}")
        pos += _HEADER.size
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        dt = np.dtype(_CODES[code])
        nbytes = int(np.prod(shape)) * dt.itemsize
        if pos + nbytes > len(data):
            raise ModelFormatError(f"{path}: tensor {len(out)} truncated")
        out.append(np.frombuffer(data, dtype=dt, count=int(np.prod(shape)), offset=pos).reshape(shape).copy())
        pos += nbytes
    return out


def save_dataset(path, x, y) -> None:
    write_tensors(path, x, np.asarray(y, dtype=np.int32))


def load_dataset(path) -> tuple[np.ndarray, np.ndarray]:
    tensors = read_tensors(path)
    if len(tensors) != 2:
        raise ModelFormatError(f"{path}: dataset needs exactly 2 tensors (inputs, labels), found {len(tensors)}")
    x, y = tensors
    if y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ModelFormatError(f"{path}: {x.shape[0]} inputs but labels of shape {y.shape}")
    return x, y.astype(np.int64)
