"""Parameter update rules: mini-batch SGD and Adam over flat parameter lists.

Parameters and gradients travel as parallel lists of float64 arrays in the
model's canonical order.  Steps are pure: they return fresh arrays and only
advance the optimizer state they were handed.  Weight decay is a documented
extension (default 0) applied as a coupled L2 term, g + wd * theta.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, ShapeError

METHODS = ("sgd", "adam")


@dataclass
class OptimizerState:
    method: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown optimizer {self.method!r}, expected {METHODS}")
        # lr == 0 is allowed (freezes parameters and is useful as a control run).
        if self.learning_rate < 0:
            raise ConfigError(f"learning rate must be >= 0, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight decay must be >= 0, got {self.weight_decay}")

    @classmethod
    def create(cls, method: str, learning_rate: float, params, **kwargs):
        state = cls(method=method, learning_rate=learning_rate, **kwargs)
        if method == "adam":
            state.m = [np.zeros_like(p) for p in params]
            state.v = [np.zeros_like(p) for p in params]
        return state


def _check_pairing(params, grads, state: OptimizerState):
    if len(params) != len(grads):
        raise ShapeError(
            f"{len(params)} parameters but {len(grads)} gradients"
        )
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ShapeError(
                f"parameter {i} has shape {p.shape} but its gradient {g.shape}"
            )
    if state.method == "adam" and len(state.m) != len(params):
        raise ShapeError("optimizer state was created for a different parameter set")


def sgd_step(params, grads, state: OptimizerState) -> list[np.ndarray]:
    """One step of theta <- theta - lr * (g + wd * theta) per parameter."""
    _check_pairing(params, grads, state)
    lr, wd = state.learning_rate, state.weight_decay
    state.t += 1
    return [p - lr * (g + wd * p) for p, g in zip(params, grads)]


def adam_step(params, grads, state: OptimizerState) -> list[np.ndarray]:
    """Standard Adam with bias correction; moments live in the state."""
    _check_pairing(params, grads, state)
    lr, wd = state.learning_rate, state.weight_decay
    b1, b2, eps = state.beta1, state.beta2, state.eps
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    out = []
    for i, (p, g) in enumerate(zip(params, grads)):
        if wd:
            g = g + wd * p
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        out.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
    return out


def apply_step(params, grads, state: OptimizerState) -> list[np.ndarray]:
    if state.method == "sgd":
        return sgd_step(params, grads, state)
    return adam_step(params, grads, state)


def minibatch_iterate(n_samples: int, batch_size: int, seed: int) -> list[np.ndarray]:
    """Index batches for one epoch: a seeded uniform shuffle split into
    ceil(n / batch_size) batches, keeping the final short batch."""
    if n_samples < 1:
        raise ConfigError("cannot iterate over an empty dataset")
    if not 1 <= batch_size <= n_samples:
        raise ConfigError(
            f"batch size must be in [1, {n_samples}], got {batch_size}"
        )
    rng = np.random.default_rng(seed)
    return epoch_batches(n_samples, batch_size, rng)


def epoch_batches(n_samples: int, batch_size: int, rng) -> list[np.ndarray]:
    perm = rng.permutation(n_samples)
    return [perm[i : i + batch_size] for i in range(0, n_samples, batch_size)]
