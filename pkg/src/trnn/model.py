"""Network assembly, initialization, training loop, prediction, serialization.

A model bundle on disk is a directory holding ``manifest.json`` plus one dtf
file per parameter tensor (and per standardization statistic), so round
trips are bit-exact.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .backprop import full_backward
from .exceptions import ConfigError, DataFormatError, DivergenceError, ShapeError
from .layers import (
    ACTIVATIONS,
    ContractionLayer,
    ExpandTuckerLayer,
    ForwardCache,
    ShrinkTuckerLayer,
    apply_activation,
    contraction_forward,
    expand_tucker_forward,
    mse_loss,
    shrink_tucker_forward,
)
from .optimizer import OptimizerState, apply_step, epoch_batches
from .tensor import DenseTensor, as_array, read_dtf, write_dtf

BUNDLE_FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# Network specification
# ---------------------------------------------------------------------------

@dataclass
class NetworkSpec:
    """Declarative description of the layer sequence.

    ``encoder`` lists the per-mode extents after each encoder layer (mode-wise
    non-increasing, starting from ``input_shape``); ``decoder`` lists the
    extents after each decoder layer (non-decreasing, starting from
    ``bottleneck_out`` and ending exactly at ``output_shape``).  Shapes
    exclude the sample mode throughout.
    """

    input_shape: tuple[int, ...]
    output_shape: tuple[int, ...]
    encoder: list[tuple[int, ...]]
    bottleneck_out: tuple[int, ...]
    decoder: list[tuple[int, ...]]
    activation: str = "relu"

    def __post_init__(self):
        self.input_shape = tuple(int(e) for e in self.input_shape)
        self.output_shape = tuple(int(e) for e in self.output_shape)
        self.encoder = [tuple(int(e) for e in step) for step in self.encoder]
        self.bottleneck_out = tuple(int(e) for e in self.bottleneck_out)
        self.decoder = [tuple(int(e) for e in step) for step in self.decoder]
        if not self.input_shape or not self.output_shape:
            raise ConfigError("input and output shapes need at least one non-sample mode")
        if not self.encoder or not self.decoder:
            raise ConfigError("need at least one encoder and one decoder layer")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}")
        for name, shapes in (("encoder", [self.input_shape] + self.encoder),
                             ("decoder", [self.bottleneck_out] + self.decoder)):
            for step in shapes:
                if len(step) != len(shapes[0]):
                    raise ConfigError(f"{name} schedule entries must share the mode count")
                if any(e < 1 for e in step):
                    raise ConfigError(f"{name} schedule has an extent < 1: {step}")
            for prev, cur in zip(shapes, shapes[1:]):
                for p, c in zip(prev, cur):
                    if name == "encoder" and c > p:
                        raise ConfigError(
                            f"encoder schedule must be non-increasing per mode: {prev} -> {cur}"
                        )
                    if name == "decoder" and c < p:
                        raise ConfigError(
                            f"decoder schedule must be non-decreasing per mode: {prev} -> {cur}"
                        )
        if self.decoder[-1] != self.output_shape:
            raise ConfigError(
                f"decoder must end at the output shape {self.output_shape}, "
                f"got {self.decoder[-1]}"
            )

    @property
    def bottleneck_in(self) -> tuple[int, ...]:
        return self.encoder[-1]

    @property
    def core_shape(self) -> tuple[int, ...]:
        return self.bottleneck_in + self.bottleneck_out

    def encoder_factor_shapes(self) -> list[list[tuple[int, int]]]:
        shapes = []
        prev = self.input_shape
        for step in self.encoder:
            shapes.append([(c, p) for c, p in zip(step, prev)])
            prev = step
        return shapes

    def decoder_factor_shapes(self) -> list[list[tuple[int, int]]]:
        shapes = []
        prev = self.bottleneck_out
        for step in self.decoder:
            shapes.append([(c, p) for c, p in zip(step, prev)])
            prev = step
        return shapes

    def parameter_count(self) -> int:
        total = math.prod(self.core_shape)
        for layer in self.encoder_factor_shapes() + self.decoder_factor_shapes():
            total += sum(r * c for r, c in layer)
        return total

    def cache_shapes(self, n_samples: int) -> dict[str, list[tuple[int, ...]]]:
        """Predict every cached tensor's shape without running any data."""
        n = (n_samples,)
        return {
            "x": [n + self.input_shape],
            "r": [n + step for step in self.encoder],
            "s": [n + step for step in self.encoder],
            "z": [n + self.bottleneck_out] + [n + step for step in self.decoder],
            "a": [n + self.bottleneck_out] + [n + step for step in self.decoder[:-1]],
        }

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "output_shape": list(self.output_shape),
            "encoder": [list(s) for s in self.encoder],
            "bottleneck_out": list(self.bottleneck_out),
            "decoder": [list(s) for s in self.decoder],
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkSpec":
        keys = {"input_shape", "output_shape", "encoder", "bottleneck_out",
                "decoder", "activation"}
        unknown = set(data) - keys
        if unknown:
            raise ConfigError(f"unknown network spec keys: {sorted(unknown)}")
        missing = keys - set(data)
        if missing:
            raise ConfigError(f"missing network spec keys: {sorted(missing)}")
        return cls(**data)


def _geometric_path(start: int, end: int, steps: int) -> list[int]:
    # Rounded geometric interpolation from start to end in `steps` extents,
    # monotone by construction, landing exactly on `end`.
    path = []
    for i in range(1, steps + 1):
        frac = i / steps
        value = int(round(start ** (1.0 - frac) * end ** frac))
        value = max(min(start, end), min(max(start, end), value))
        path.append(value)
    path[-1] = end
    for i in range(len(path) - 2, -1, -1):  # enforce monotonicity after rounding
        if end <= start:
            path[i] = max(path[i], path[i + 1])
            path[i] = min(path[i], start)
        else:
            path[i] = min(path[i], path[i + 1])
            path[i] = max(path[i], start)
    return path


def default_bottleneck(extent: int) -> int:
    return max(2, math.ceil(extent / 8)) if extent > 1 else 1


def default_spec_for(
    input_shape,
    output_shape,
    n_encoder: int = 2,
    n_decoder: int = 2,
    activation: str = "relu",
    bottleneck_in=None,
    bottleneck_out=None,
) -> NetworkSpec:
    """Concrete default width schedule: geometric interpolation per mode
    between each data extent and a bottleneck of max(2, ceil(extent/8)).
    """
    input_shape = tuple(int(e) for e in input_shape)
    output_shape = tuple(int(e) for e in output_shape)
    b_in = tuple(bottleneck_in) if bottleneck_in else tuple(
        min(e, default_bottleneck(e)) for e in input_shape
    )
    b_out = tuple(bottleneck_out) if bottleneck_out else tuple(
        min(e, default_bottleneck(e)) for e in output_shape
    )
    enc_paths = [_geometric_path(e, b, n_encoder) for e, b in zip(input_shape, b_in)]
    dec_paths = [_geometric_path(b, e, n_decoder) for b, e in zip(b_out, output_shape)]
    encoder = [tuple(p[i] for p in enc_paths) for i in range(n_encoder)]
    decoder = [tuple(p[i] for p in dec_paths) for i in range(n_decoder)]
    return NetworkSpec(
        input_shape=input_shape,
        output_shape=output_shape,
        encoder=encoder,
        bottleneck_out=b_out,
        decoder=decoder,
        activation=activation,
    )


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------

@dataclass
class Standardizer:
    """Per-entry mean/std over the sample mode, with zero-variance guards."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, arr: np.ndarray) -> "Standardizer":
        mean = arr.mean(axis=0)
        std = arr.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)
        return cls(mean=mean, std=std)

    def apply(self, arr: np.ndarray) -> np.ndarray:
        return (arr - self.mean) / self.std

    def invert(self, arr: np.ndarray) -> np.ndarray:
        return arr * self.std + self.mean


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

@dataclass
class TrnnModel:
    spec: NetworkSpec
    encoder: list[ShrinkTuckerLayer]
    contraction: ContractionLayer
    decoder: list[ExpandTuckerLayer]
    init_seed: int
    x_stats: Standardizer | None = None
    y_stats: Standardizer | None = None

    def parameters(self) -> list[np.ndarray]:
        """All parameter arrays in canonical order (encoder, core, decoder)."""
        out = [f for layer in self.encoder for f in layer.factors]
        out.append(np.asarray(self.contraction.core.to_numpy()))
        out.extend(f for layer in self.decoder for f in layer.factors)
        return out

    def assign_parameters(self, params: list[np.ndarray]) -> None:
        """Replace all parameters, preserving the canonical order."""
        expected = len(self.parameters())
        if len(params) != expected:
            raise ShapeError(f"expected {expected} parameter arrays, got {len(params)}")
        # Copy on the way in: layers must never alias caller-owned buffers
        # (DenseTensor._wrap freezes the array it is handed).
        it = iter(params)
        encoder = [
            ShrinkTuckerLayer([np.array(next(it), dtype=np.float64) for _ in layer.factors])
            for layer in self.encoder
        ]
        core = DenseTensor._wrap(np.array(next(it), dtype=np.float64))
        decoder = [
            ExpandTuckerLayer([np.array(next(it), dtype=np.float64) for _ in layer.factors])
            for layer in self.decoder
        ]
        if core.shape != self.spec.core_shape:
            raise ShapeError(
                f"core shape {core.shape} does not match spec {self.spec.core_shape}"
            )
        self.encoder = encoder
        self.contraction = ContractionLayer(core, in_order=len(self.spec.bottleneck_in))
        self.decoder = decoder


def init_model(spec: NetworkSpec, seed: int) -> TrnnModel:
    """Deterministically initialize parameters i.i.d. uniform on (-b, b) with
    b = sqrt(6 / (fan_in + fan_out)); the core's fans are the products of its
    input and output extents."""
    rng = np.random.default_rng(seed)

    def glorot(rows, cols):
        b = math.sqrt(6.0 / (rows + cols))
        return rng.uniform(-b, b, size=(rows, cols))

    encoder = [
        ShrinkTuckerLayer([glorot(r, c) for r, c in layer])
        for layer in spec.encoder_factor_shapes()
    ]
    fan_in = math.prod(spec.bottleneck_in)
    fan_out = math.prod(spec.bottleneck_out)
    b = math.sqrt(6.0 / (fan_in + fan_out))
    core = DenseTensor._wrap(rng.uniform(-b, b, size=spec.core_shape))
    decoder = [
        ExpandTuckerLayer([glorot(r, c) for r, c in layer])
        for layer in spec.decoder_factor_shapes()
    ]
    return TrnnModel(
        spec=spec,
        encoder=encoder,
        contraction=ContractionLayer(core, in_order=len(spec.bottleneck_in)),
        decoder=decoder,
        init_seed=seed,
    )


def forward(model: TrnnModel, x: DenseTensor) -> tuple[DenseTensor, ForwardCache]:
    """Raw network forward pass (no standardization), returning the cache."""
    if not isinstance(x, DenseTensor):
        x = DenseTensor(x)
    if x.shape[1:] != model.spec.input_shape:
        raise ShapeError(
            f"input extents {x.shape[1:]} do not match the network input shape "
            f"{model.spec.input_shape}"
        )
    act = model.spec.activation
    cache = ForwardCache(x=x)
    s = x
    for layer in model.encoder:
        r = shrink_tucker_forward(layer, s)
        s = apply_activation(r, act)
        cache.r.append(r)
        cache.s.append(s)
    z = contraction_forward(model.contraction, s)
    cache.z.append(z)
    for layer in model.decoder:
        a = apply_activation(z, act)
        cache.a.append(a)
        z = expand_tucker_forward(layer, a)
        cache.z.append(z)
    return z, cache


def predict(model: TrnnModel, x) -> DenseTensor:
    """Standardize, run the forward chain, and undo standardization.

    Rejects empty batches; retains no cache.
    """
    arr = x.to_numpy() if isinstance(x, DenseTensor) else np.asarray(x, dtype=np.float64)
    if arr.ndim < 1 or arr.shape[0] < 1:
        raise ShapeError("predict needs at least one sample (got an empty batch)")
    if model.x_stats is not None:
        arr = model.x_stats.apply(arr)
    y_hat, _ = forward(model, DenseTensor(arr))
    if model.y_stats is not None:
        return DenseTensor._wrap(model.y_stats.invert(y_hat.to_numpy()))
    return y_hat


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 200
    tol: float = 1e-8
    patience: int = 20
    weight_decay: float = 0.0
    seed: int = 0
    standardize: bool = True

    def __post_init__(self):
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class TrainReport:
    losses: list[float]           # full-data loss per epoch; entry 0 is pre-training
    epochs_run: int
    seconds: float
    model: TrnnModel
    val_rmse: float | None = None


def train(model: TrnnModel, dataset, config: TrainConfig) -> TrainReport:
    """Mini-batch training with per-epoch full-data loss tracking.

    Bit-reproducible given (model init seed, config, dataset); wall-clock
    seconds are the only nondeterministic report field.
    """
    x = as_array(dataset.x)
    y = as_array(dataset.y)
    if x.shape[0] != y.shape[0]:
        raise ShapeError(f"X has {x.shape[0]} samples but Y has {y.shape[0]}")
    if x.shape[1:] != model.spec.input_shape or y.shape[1:] != model.spec.output_shape:
        raise ShapeError(
            f"dataset shapes {x.shape[1:]} -> {y.shape[1:]} do not match the "
            f"network spec {model.spec.input_shape} -> {model.spec.output_shape}"
        )
    n = x.shape[0]
    if config.standardize:
        model.x_stats = Standardizer.fit(x)
        model.y_stats = Standardizer.fit(y)
        x = model.x_stats.apply(x)
        y = model.y_stats.apply(y)
    else:
        model.x_stats = None
        model.y_stats = None

    x_t, y_t = DenseTensor._wrap(x), DenseTensor._wrap(y)
    batch_size = min(config.batch_size, n)
    params = model.parameters()
    state = OptimizerState.create(
        config.optimizer, config.learning_rate, params,
        weight_decay=config.weight_decay,
    )
    shuffle_rng = np.random.default_rng(config.seed)

    def full_loss() -> float:
        y_hat, _ = forward(model, x_t)
        return mse_loss(y_hat, y_t)

    start = time.perf_counter()
    losses = [full_loss()]
    if not np.isfinite(losses[0]):
        raise DivergenceError(0)
    best = losses[0]
    streak = 0
    epochs_run = 0
    for epoch in range(1, config.max_epochs + 1):
        for idx in epoch_batches(n, batch_size, shuffle_rng):
            xb = DenseTensor._wrap(np.ascontiguousarray(x[idx]))
            yb = DenseTensor._wrap(np.ascontiguousarray(y[idx]))
            _, cache = forward(model, xb)
            grads = full_backward(model, cache, yb)
            params = apply_step(params, grads.flat(), state)
            model.assign_parameters(params)
        loss = full_loss()
        if not np.isfinite(loss):
            raise DivergenceError(epoch)
        losses.append(loss)
        epochs_run = epoch
        if best - loss < config.tol * max(best, 1e-300):
            streak += 1
            if streak >= config.patience:
                break
        else:
            streak = 0
        best = min(best, loss)
    seconds = time.perf_counter() - start
    return TrainReport(losses=losses, epochs_run=epochs_run, seconds=seconds, model=model)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _param_names(spec: NetworkSpec) -> list[str]:
    names = []
    for i, step in enumerate(spec.encoder, start=1):
        names.extend(f"encoder{i}_mode{k}" for k in range(2, len(step) + 2))
    names.append("core")
    for i, step in enumerate(spec.decoder, start=1):
        names.extend(f"decoder{i}_mode{k}" for k in range(2, len(step) + 2))
    return names


def save_model(model: TrnnModel, path) -> None:
    """Write a model bundle: manifest.json plus one dtf file per tensor."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    names = _param_names(model.spec)
    params = model.parameters()
    manifest = {
        "format_version": BUNDLE_FORMAT_VERSION,
        "kind": "trnn",
        "spec": model.spec.to_dict(),
        "init_seed": model.init_seed,
        "standardize": model.x_stats is not None,
        "parameters": names,
    }
    for name, arr in zip(names, params):
        write_dtf(DenseTensor._wrap(np.ascontiguousarray(arr)), path / f"{name}.dtf")
    if model.x_stats is not None:
        for stat_name, arr in (
            ("x_mean", model.x_stats.mean), ("x_std", model.x_stats.std),
            ("y_mean", model.y_stats.mean), ("y_std", model.y_stats.std),
        ):
            write_dtf(DenseTensor._wrap(np.ascontiguousarray(arr)), path / f"{stat_name}.dtf")
    with open(path / "manifest.json", "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> TrnnModel:
    """Load a model bundle, validating version, kind, and every extent."""
    path = Path(path)
    try:
        with open(path / "manifest.json", encoding="ascii") as fh:
            manifest = json.load(fh)
    except FileNotFoundError as exc:
        raise DataFormatError(f"{path}: not a model bundle (no manifest.json)") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: corrupt manifest.json: {exc}") from exc
    if manifest.get("format_version") != BUNDLE_FORMAT_VERSION:
        raise DataFormatError(
            f"{path}: unsupported bundle format version "
            f"{manifest.get('format_version')!r} (expected {BUNDLE_FORMAT_VERSION})"
        )
    if manifest.get("kind") != "trnn":
        raise DataFormatError(f"{path}: bundle kind {manifest.get('kind')!r} is not 'trnn'")
    spec = NetworkSpec.from_dict(manifest["spec"])
    names = _param_names(spec)
    if manifest.get("parameters") != names:
        raise DataFormatError(f"{path}: manifest parameter list does not match the spec")
    model = init_model(spec, seed=int(manifest.get("init_seed", 0)))
    expected_shapes = [p.shape for p in model.parameters()]
    params = []
    for name, shape in zip(names, expected_shapes):
        tensor = read_dtf(path / f"{name}.dtf")
        if tensor.shape != shape:
            raise DataFormatError(
                f"{path}: parameter {name} has extents {tensor.shape}, expected {shape}"
            )
        params.append(np.array(tensor.to_numpy()))
    model.assign_parameters(params)
    if manifest.get("standardize"):
        stats = {}
        for stat_name in ("x_mean", "x_std", "y_mean", "y_std"):
            stats[stat_name] = np.array(read_dtf(path / f"{stat_name}.dtf").to_numpy())
        if stats["x_mean"].shape != spec.input_shape or stats["y_mean"].shape != spec.output_shape:
            raise DataFormatError(f"{path}: standardization statistics have wrong extents")
        model.x_stats = Standardizer(mean=stats["x_mean"], std=stats["x_std"])
        model.y_stats = Standardizer(mean=stats["y_mean"], std=stats["y_std"])
    return model


# ---------------------------------------------------------------------------
# Random small specs (gradient checking)
# ---------------------------------------------------------------------------

def random_small_spec(seed: int, activation: str = "relu") -> tuple[NetworkSpec, int]:
    """Sample a small two-layer-each spec (orders 2-4, extents <= 5, N <= 6)
    for gradient checking; returns (spec, n_samples)."""
    rng = np.random.default_rng(seed)
    in_modes = int(rng.integers(1, 4))    # input order 2..4 counting the sample mode
    out_modes = int(rng.integers(1, 4))
    # Bottleneck extents stay >= 2: a width-1 bottleneck lets one dead ReLU
    # zero out a whole sample, which puts later pre-activations exactly on
    # the kink and breaks finite-difference checking.
    input_shape = tuple(int(rng.integers(2, 6)) for _ in range(in_modes))
    output_shape = tuple(int(rng.integers(2, 6)) for _ in range(out_modes))
    b_in = tuple(int(rng.integers(2, min(e, 3) + 1)) for e in input_shape)
    b_out = tuple(int(rng.integers(2, min(e, 3) + 1)) for e in output_shape)
    mid_enc = tuple(int(rng.integers(b, e + 1)) for b, e in zip(b_in, input_shape))
    mid_dec = tuple(int(rng.integers(b, e + 1)) for b, e in zip(b_out, output_shape))
    spec = NetworkSpec(
        input_shape=input_shape,
        output_shape=output_shape,
        encoder=[mid_enc, b_in],
        bottleneck_out=b_out,
        decoder=[mid_dec, output_shape],
        activation=activation,
    )
    n_samples = int(rng.integers(2, 7))
    return spec, n_samples
