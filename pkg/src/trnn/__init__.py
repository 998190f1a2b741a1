"""Tensor-on-tensor regression neural networks.

Encoder/decoder networks built from mode-wise Tucker layers around an
Einstein-contraction bottleneck, with closed-form backpropagation, a
PLS-equivalent linear special case, synthetic point-cloud generators, and a
replicated benchmark harness.
"""

from .tensor import DenseTensor, contraction, frobenius_norm, mode_n_product, tucker_reconstruct

__version__ = "0.1.0"

__all__ = [
    "DenseTensor",
    "contraction",
    "frobenius_norm",
    "mode_n_product",
    "tucker_reconstruct",
    "__version__",
]
