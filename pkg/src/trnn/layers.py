"""Forward-pass semantics of the network's layer types.

Layers transform only the non-sample modes: every input tensor carries the
sample index on mode 1, and the mode-wise factors of a Tucker layer act on
modes 2..N.  Each forward function returns exactly what backpropagation
later needs cached.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ShapeError
from .tensor import DenseTensor, as_array

ACTIVATIONS = ("relu", "identity")


def _check_factors(factors, kind: str) -> list[np.ndarray]:
    out = []
    for k, f in enumerate(factors, start=2):
        arr = np.asarray(f, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"mode-{k} factor must be a matrix, got order {arr.ndim}")
        if not np.all(np.isfinite(arr)):
            raise ShapeError(f"mode-{k} factor has non-finite entries")
        rows, cols = arr.shape
        if kind == "shrink" and rows > cols:
            raise ShapeError(
                f"shrinking mode-{k} factor must not grow the extent: {cols} -> {rows}"
            )
        if kind == "expand" and rows < cols:
            raise ShapeError(
                f"expanding mode-{k} factor must not shrink the extent: {cols} -> {rows}"
            )
        out.append(arr)
    if not out:
        raise ShapeError("a Tucker layer needs at least one mode factor")
    return out


@dataclass
class ShrinkTuckerLayer:
    """Encoder layer: factors[k] maps mode k+2 from P_in to P_out <= P_in."""

    factors: list[np.ndarray]

    def __post_init__(self):
        self.factors = _check_factors(self.factors, "shrink")

    @property
    def in_extents(self) -> tuple[int, ...]:
        return tuple(f.shape[1] for f in self.factors)

    @property
    def out_extents(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)


@dataclass
class ExpandTuckerLayer:
    """Decoder layer: factors[k] maps mode k+2 from Q_in to Q_out >= Q_in."""

    factors: list[np.ndarray]

    def __post_init__(self):
        self.factors = _check_factors(self.factors, "expand")

    @property
    def in_extents(self) -> tuple[int, ...]:
        return tuple(f.shape[1] for f in self.factors)

    @property
    def out_extents(self) -> tuple[int, ...]:
        return tuple(f.shape[0] for f in self.factors)


@dataclass
class ContractionLayer:
    """Bottleneck layer holding the core the encoder output is contracted with.

    The core's leading ``in_order`` extents match the encoder output's
    non-sample extents; the trailing extents fix the shape entering the
    decoder.  This is the one layer that may change tensor order.
    """

    core: DenseTensor
    in_order: int

    def __post_init__(self):
        if not isinstance(self.core, DenseTensor):
            self.core = DenseTensor(self.core)
        if not 1 <= self.in_order < self.core.order:
            raise ShapeError(
                f"contraction input order {self.in_order} invalid for core of "
                f"order {self.core.order}"
            )

    @property
    def in_extents(self) -> tuple[int, ...]:
        return self.core.shape[: self.in_order]

    @property
    def out_extents(self) -> tuple[int, ...]:
        return self.core.shape[self.in_order :]


@dataclass
class ForwardCache:
    """Everything one forward pass stores for the matching backward pass.

    ``x`` is the network input; ``r[n]``/``s[n]`` are the encoder layer n+1
    pre-/post-activations, ``z[0]`` the contraction output, ``z[n]`` decoder
    layer n's output (the last one being the prediction), and ``a[n]`` the
    activation applied to ``z[n]`` before decoder layer n+1.
    """

    x: DenseTensor
    r: list[DenseTensor] = field(default_factory=list)
    s: list[DenseTensor] = field(default_factory=list)
    z: list[DenseTensor] = field(default_factory=list)
    a: list[DenseTensor] = field(default_factory=list)

    @property
    def y_hat(self) -> DenseTensor:
        return self.z[-1]


def _tucker_apply(x: np.ndarray, factors: list[np.ndarray]) -> np.ndarray:
    # Fold of mode products over modes 2..N; mode 1 (samples) untouched.
    out = x
    for j, f in enumerate(factors):
        axis = j + 1
        out = np.moveaxis(np.tensordot(out, f, axes=(axis, 1)), -1, axis)
    return out


def _check_layer_input(x: np.ndarray, in_extents: tuple[int, ...], what: str):
    if x.ndim != len(in_extents) + 1:
        raise ShapeError(
            f"{what}: input order {x.ndim} does not match layer order "
            f"{len(in_extents) + 1}"
        )
    if x.shape[1:] != in_extents:
        raise ShapeError(
            f"{what}: input non-sample extents {x.shape[1:]} do not match "
            f"layer input extents {in_extents}"
        )


def shrink_tucker_forward(layer: ShrinkTuckerLayer, s_prev: DenseTensor) -> DenseTensor:
    """Apply the layer's mode factors to every non-sample mode of ``s_prev``."""
    x = as_array(s_prev)
    _check_layer_input(x, layer.in_extents, "shrink_tucker_forward")
    return DenseTensor._wrap(_tucker_apply(x, layer.factors))


def expand_tucker_forward(layer: ExpandTuckerLayer, a_prev: DenseTensor) -> DenseTensor:
    """Mirror of shrink_tucker_forward with growing extents."""
    x = as_array(a_prev)
    _check_layer_input(x, layer.in_extents, "expand_tucker_forward")
    return DenseTensor._wrap(_tucker_apply(x, layer.factors))


def relu_forward(t: DenseTensor) -> DenseTensor:
    """Elementwise max(t, 0)."""
    return DenseTensor._wrap(np.maximum(as_array(t), 0.0))


def apply_activation(t: DenseTensor, activation: str) -> DenseTensor:
    if activation == "relu":
        return relu_forward(t)
    if activation == "identity":
        return t
    raise ShapeError(f"unknown activation {activation!r}, expected one of {ACTIVATIONS}")


def contraction_forward(layer: ContractionLayer, s_last: DenseTensor) -> DenseTensor:
    """Contract each sample of ``s_last`` against the core.

    Sample i of the output is the full contraction of sample i of the input
    with the core's leading modes; the output's non-sample extents are the
    core's trailing extents, so the tensor order may change here.
    """
    x = as_array(s_last)
    _check_layer_input(x, layer.in_extents, "contraction_forward")
    core = layer.core.to_numpy()
    n = x.shape[0]
    p_size = int(np.prod(layer.in_extents, dtype=np.int64))
    out = x.reshape(n, p_size) @ core.reshape(p_size, -1)
    return DenseTensor._wrap(out.reshape((n,) + layer.out_extents))


def mse_loss(y_hat: DenseTensor, y: DenseTensor) -> float:
    """Mean squared error (1 / 2N) * ||y_hat - y||_F^2 over N samples."""
    ya, yb = as_array(y_hat), as_array(y)
    if ya.shape != yb.shape:
        raise ShapeError(f"mse_loss shapes differ: {ya.shape} vs {yb.shape}")
    n = ya.shape[0]
    diff = (ya - yb).reshape(-1)
    return float(diff @ diff) / (2.0 * n)


def frobenius_sq(y_hat: DenseTensor, y: DenseTensor) -> float:
    """||y_hat - y||_F^2, the unnormalized residual used by the linear baselines."""
    ya, yb = as_array(y_hat), as_array(y)
    if ya.shape != yb.shape:
        raise ShapeError(f"residual shapes differ: {ya.shape} vs {yb.shape}")
    diff = (ya - yb).reshape(-1)
    return float(diff @ diff)
