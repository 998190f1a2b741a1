"""Exact gradients of the training loss for every parameter and activation.

Factor gradients use the mode-k unfolding identity (matricize both the
outgoing gradient and the input with all other factors applied, then take
one matrix product) instead of the literal nested index sums; the two are
equal entry-for-entry and the test suite checks this against a brute-force
oracle on small shapes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeError
from .layers import (
    ContractionLayer,
    ExpandTuckerLayer,
    ShrinkTuckerLayer,
    ForwardCache,
)
from .tensor import DenseTensor, as_array


@dataclass
class GradientSet:
    """Loss gradients shaped exactly like the parameters they belong to."""

    d_encoder: list[list[np.ndarray]]
    d_core: DenseTensor
    d_decoder: list[list[np.ndarray]]

    def flat(self) -> list[np.ndarray]:
        """Gradients in canonical parameter order (encoder, core, decoder)."""
        out = [g for layer in self.d_encoder for g in layer]
        out.append(np.asarray(self.d_core.to_numpy()))
        out.extend(g for layer in self.d_decoder for g in layer)
        return out


def _unfold(arr: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(arr, axis, 0).reshape(arr.shape[axis], -1)


def _apply_all_but(x: np.ndarray, factors: list[np.ndarray], skip: int) -> np.ndarray:
    out = x
    for j, f in enumerate(factors):
        if j == skip:
            continue
        axis = j + 1
        out = np.moveaxis(np.tensordot(out, f, axes=(axis, 1)), -1, axis)
    return out


def _tucker_backward(g_out: np.ndarray, factors: list[np.ndarray], x_in: np.ndarray):
    """Shared gradient core of both Tucker layer types.

    Returns the gradient with respect to the layer input (before any
    activation masking) and the per-factor gradients.
    """
    if g_out.shape[1:] != tuple(f.shape[0] for f in factors):
        raise ShapeError(
            f"outgoing gradient extents {g_out.shape[1:]} do not match layer "
            f"output extents {tuple(f.shape[0] for f in factors)}"
        )
    if x_in.shape[1:] != tuple(f.shape[1] for f in factors):
        raise ShapeError(
            f"cached input extents {x_in.shape[1:]} do not match layer input "
            f"extents {tuple(f.shape[1] for f in factors)}"
        )
    d_factors = []
    for k in range(len(factors)):
        axis = k + 1
        partial = _apply_all_but(x_in, factors, skip=k)
        d_factors.append(_unfold(g_out, axis) @ _unfold(partial, axis).T)
    g_in = g_out
    for j, f in enumerate(factors):
        axis = j + 1
        g_in = np.moveaxis(np.tensordot(g_in, f, axes=(axis, 0)), -1, axis)
    return g_in, d_factors


def _relu_mask(g: np.ndarray, pre: np.ndarray) -> np.ndarray:
    # Subgradient convention: exactly-zero pre-activations pass gradient through.
    return g * (pre >= 0.0)


def loss_grad(y_hat: DenseTensor, y: DenseTensor) -> DenseTensor:
    """Gradient of the mean squared error at the network output: (1/N)(y_hat - y)."""
    ya, yb = as_array(y_hat), as_array(y)
    if ya.shape != yb.shape:
        raise ShapeError(f"loss_grad shapes differ: {ya.shape} vs {yb.shape}")
    return DenseTensor._wrap((ya - yb) / ya.shape[0])


def relu_backward(g: DenseTensor, pre_activation: DenseTensor) -> DenseTensor:
    """Route gradient through max(., 0) evaluated at ``pre_activation``."""
    ga, pa = as_array(g), as_array(pre_activation)
    if ga.shape != pa.shape:
        raise ShapeError(f"relu_backward shapes differ: {ga.shape} vs {pa.shape}")
    return DenseTensor._wrap(_relu_mask(ga, pa))


def expand_tucker_backward(
    g_out: DenseTensor,
    layer: ExpandTuckerLayer,
    z_prev: DenseTensor,
    a_prev: DenseTensor,
    activation: str = "relu",
):
    """Backward through one decoder layer.

    ``g_out`` is the loss gradient at the layer output; ``a_prev`` is the
    cached layer input and ``z_prev`` the pre-activation it came from.  The
    returned input gradient is with respect to ``z_prev``, i.e. the ReLU
    indicator on ``z_prev`` is already applied (skipped for identity
    activation).  Factor gradients always use ``a_prev``.
    """
    g, d_factors = _tucker_backward(
        as_array(g_out), layer.factors, as_array(a_prev)
    )
    if activation == "relu":
        g = _relu_mask(g, as_array(z_prev))
    return DenseTensor._wrap(g), d_factors


def shrink_tucker_backward(
    g_out: DenseTensor,
    layer: ShrinkTuckerLayer,
    r_prev: DenseTensor | None,
    s_prev: DenseTensor,
    activation: str = "relu",
):
    """Backward through one encoder layer.

    Mirrors expand_tucker_backward with the encoder's factors and caches.
    For the first layer ``r_prev`` is None (its input is the raw network
    input, not a ReLU output) and the indicator is omitted; the returned
    gradient is then with respect to the network input itself.
    """
    g, d_factors = _tucker_backward(
        as_array(g_out), layer.factors, as_array(s_prev)
    )
    if activation == "relu" and r_prev is not None:
        g = _relu_mask(g, as_array(r_prev))
    return DenseTensor._wrap(g), d_factors


def contraction_backward(
    g_out: DenseTensor, layer: ContractionLayer, s_last: DenseTensor
):
    """Backward through the bottleneck contraction.

    Returns the gradient with respect to the contraction input (one core
    contraction per sample, against the trailing modes this time) and the
    core gradient, which accumulates over the sample index.
    """
    g = as_array(g_out)
    s = as_array(s_last)
    if g.shape[1:] != layer.out_extents:
        raise ShapeError(
            f"outgoing gradient extents {g.shape[1:]} do not match core "
            f"output extents {layer.out_extents}"
        )
    if s.shape[1:] != layer.in_extents:
        raise ShapeError(
            f"cached input extents {s.shape[1:]} do not match core input "
            f"extents {layer.in_extents}"
        )
    if g.shape[0] != s.shape[0]:
        raise ShapeError(
            f"sample counts differ: gradient {g.shape[0]} vs cache {s.shape[0]}"
        )
    n = g.shape[0]
    p_size = int(np.prod(layer.in_extents, dtype=np.int64))
    core_mat = layer.core.to_numpy().reshape(p_size, -1)
    g_mat = g.reshape(n, -1)
    g_in = (g_mat @ core_mat.T).reshape(s.shape)
    d_core = (s.reshape(n, p_size).T @ g_mat).reshape(layer.core.shape)
    return DenseTensor._wrap(g_in), DenseTensor._wrap(d_core)


def full_backward(model, cache: ForwardCache, y: DenseTensor) -> GradientSet:
    """Chain all layer backwards from the loss back to every parameter.

    ``cache`` must come from a forward pass on the model's current
    parameters; shape inconsistencies are reported as stale-cache errors.
    """
    activation = model.spec.activation
    n_dec = len(model.decoder)
    if len(cache.z) != n_dec + 1 or len(cache.r) != len(model.encoder):
        raise ShapeError(
            "stale cache: layer counts do not match the model "
            f"(cache z={len(cache.z)}, r={len(cache.r)})"
        )

    g = loss_grad(cache.y_hat, y)
    d_decoder: list[list[np.ndarray]] = [[] for _ in range(n_dec)]
    for n in range(n_dec, 0, -1):
        g, d_factors = expand_tucker_backward(
            g, model.decoder[n - 1], cache.z[n - 1], cache.a[n - 1], activation
        )
        d_decoder[n - 1] = d_factors

    g, d_core = contraction_backward(g, model.contraction, cache.s[-1])

    n_enc = len(model.encoder)
    d_encoder: list[list[np.ndarray]] = [[] for _ in range(n_enc)]
    for n in range(n_enc, 0, -1):
        # Bridge through the ReLU between Tucker layer n and whatever consumed s_n.
        if activation == "relu":
            g = relu_backward(g, cache.r[n - 1])
        s_prev = cache.s[n - 2] if n >= 2 else cache.x
        g, d_factors = shrink_tucker_backward(
            g, model.encoder[n - 1], None, s_prev, "identity"
        )
        d_encoder[n - 1] = d_factors

    return GradientSet(d_encoder=d_encoder, d_core=d_core, d_decoder=d_decoder)
