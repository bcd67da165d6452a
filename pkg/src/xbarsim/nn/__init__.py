from .engine import InferenceResult, host_accuracy, im2col_conv2d, run_host, run_inference
from .io import load_dataset, load_model, save_dataset, save_model
from .layers import (
    Affine,
    Flatten,
    MaxPool,
    QuantConv2D,
    QuantDense,
    Quantize,
    QuantizedModel,
    sign_quantize,
    ternary_quantize,
)
