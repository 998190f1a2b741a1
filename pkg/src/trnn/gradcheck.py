"""Numerical verification of the analytic gradients.

The check is two-route by construction: the analytic side runs the layer
backward chain, the numerical side only ever calls the forward pass and the
loss, perturbing one parameter entry at a time with central differences.

Error metric: |analytic - numeric| / max(|analytic|, |numeric|, 1e-3).
The 1e-3 floor turns the measure into a scaled absolute error for tiny
gradients, which is what makes a 1e-6 tolerance attainable at all given
float64 finite-difference noise (~1e-11 absolute at h = 1e-5).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backprop import full_backward
from .exceptions import ConfigError
from .layers import mse_loss
from .model import NetworkSpec, TrnnModel, forward, init_model, random_small_spec
from .tensor import DenseTensor

MAX_CHECK_PARAMETERS = 10_000
REL_FLOOR = 1e-3
ACTIVATION_MARGIN = 1e-4  # regenerate data if any ReLU input is this close to 0


@dataclass
class GroupResult:
    name: str
    max_rel_error: float
    worst_entry: tuple  # (parameter index in group, flat entry index)


@dataclass
class GradCheckReport:
    groups: list[GroupResult]
    tolerance: float
    activation: str
    seed: int
    n_parameters: int

    @property
    def max_rel_error(self) -> float:
        return max(g.max_rel_error for g in self.groups)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def _loss_at(model: TrnnModel, params, x, y) -> float:
    model.assign_parameters(params)
    y_hat, _ = forward(model, x)
    return mse_loss(y_hat, y)


def finite_difference_grads(model: TrnnModel, x, y, h: float = 1e-5):
    """Central-difference gradients of the loss for every parameter entry."""
    baseline = [p.copy() for p in model.parameters()]
    work = [p.copy() for p in baseline]
    grads = []
    for which, p in enumerate(work):
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = _loss_at(model, work, x, y)
            flat[i] = orig - h
            down = _loss_at(model, work, x, y)
            flat[i] = orig
            g.reshape(-1)[i] = (up - down) / (2.0 * h)
        grads.append(g)
    model.assign_parameters(baseline)
    return grads


def _group_slices(model: TrnnModel):
    n_enc = sum(len(layer.factors) for layer in model.encoder)
    n_dec = sum(len(layer.factors) for layer in model.decoder)
    return [
        ("encoder_factors", 0, n_enc),
        ("core", n_enc, n_enc + 1),
        ("decoder_factors", n_enc + 1, n_enc + 1 + n_dec),
    ]


def gradient_check(
    model: TrnnModel, x: DenseTensor, y: DenseTensor,
    tolerance: float = 1e-4, h: float = 1e-5, corrupt: bool = False,
) -> GradCheckReport:
    """Compare full_backward against finite differences on the given batch."""
    n_parameters = sum(p.size for p in model.parameters())
    if n_parameters > MAX_CHECK_PARAMETERS:
        raise ConfigError(
            f"gradient check limited to {MAX_CHECK_PARAMETERS} parameters, "
            f"this model has {n_parameters}"
        )
    _, cache = forward(model, x)
    analytic = full_backward(model, cache, y).flat()
    if corrupt:  # negative-control hook used by the CLI self test
        analytic = [g.copy() for g in analytic]
        analytic[0].reshape(-1)[0] += 0.01
    numeric = finite_difference_grads(model, x, y, h=h)

    groups = []
    for name, lo, hi in _group_slices(model):
        worst = 0.0
        worst_entry = (lo, 0)
        for j in range(lo, hi):
            a, f = analytic[j].reshape(-1), numeric[j].reshape(-1)
            denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), REL_FLOOR)
            rel = np.abs(a - f) / denom
            i = int(np.argmax(rel))
            if rel[i] > worst:
                worst = float(rel[i])
                worst_entry = (j, i)
        groups.append(GroupResult(name=name, max_rel_error=worst, worst_entry=worst_entry))
    return GradCheckReport(
        groups=groups, tolerance=tolerance, activation=model.spec.activation,
        seed=model.init_seed, n_parameters=n_parameters,
    )


def _relu_inputs_well_separated(model: TrnnModel, x: DenseTensor) -> bool:
    if model.spec.activation != "relu":
        return True
    _, cache = forward(model, x)
    pre = [t.to_numpy() for t in cache.r] + [t.to_numpy() for t in cache.z[:-1]]
    return all(np.min(np.abs(p)) > ACTIVATION_MARGIN for p in pre)


def run_gradcheck(
    seed: int,
    activation: str = "relu",
    tolerance: float | None = None,
    spec: NetworkSpec | None = None,
    n_samples: int | None = None,
    h: float = 1e-5,
    corrupt: bool = False,
) -> GradCheckReport:
    """Gradient-check one randomly specified small network.

    Data points whose ReLU inputs sit within ACTIVATION_MARGIN of zero are
    rejected and redrawn (the loss is not differentiable at the kink, so a
    finite difference straddling it would report a spurious error).
    """
    if spec is None:
        spec, n_from_seed = random_small_spec(seed, activation=activation)
        n_samples = n_samples or n_from_seed
    else:
        spec = NetworkSpec(
            input_shape=spec.input_shape, output_shape=spec.output_shape,
            encoder=spec.encoder, bottleneck_out=spec.bottleneck_out,
            decoder=spec.decoder, activation=activation,
        )
        n_samples = n_samples or 4
    if tolerance is None:
        tolerance = 1e-4 if activation == "relu" else 1e-6
    model = init_model(spec, seed)
    for attempt in range(128):
        rng = np.random.default_rng((seed, attempt))
        x = DenseTensor(rng.standard_normal((n_samples,) + spec.input_shape))
        y = DenseTensor(rng.standard_normal((n_samples,) + spec.output_shape))
        if _relu_inputs_well_separated(model, x):
            return gradient_check(model, x, y, tolerance=tolerance, h=h, corrupt=corrupt)
    raise ConfigError(
        f"could not draw a batch with ReLU inputs clear of zero after 128 tries (seed {seed})"
    )


def format_report(report: GradCheckReport) -> str:
    lines = [
        f"gradient check: activation={report.activation} seed={report.seed} "
        f"parameters={report.n_parameters} tolerance={report.tolerance:g}"
    ]
    for g in report.groups:
        lines.append(f"  {g.name:<18} max relative error {g.max_rel_error:.3e}")
    lines.append(f"  overall {'PASS' if report.passed else 'FAIL'} "
                 f"(max {report.max_rel_error:.3e})")
    return "\n".join(lines)
