"""Linear and flattened baselines.

* SlTrnnModel: the single-layer, identity-activation special case of the
  network on matrix data, fitted by gradient descent on
  ||Y - X W B V^T||_F^2 through the regular model/optimizer machinery.
* PlsModel: classical partial least squares (iterative NIPALS with X and Y
  deflation), with the response-side loadings re-orthonormalized and the
  latent regression refit, so V^T V = I holds by construction.  Any PLS
  solution is then a feasible point of the SL-TRNN program, which is what
  the equivalence check exercises.
* FlatDenseBaseline: a plain fully connected ReLU network on row-major
  flattened tensors, trained with the same optimizer module.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .datagen import Dataset
from .exceptions import ConfigError, DataFormatError, DivergenceError, ShapeError
from .model import NetworkSpec, Standardizer, TrainConfig, init_model, train
from .optimizer import OptimizerState, apply_step, epoch_batches
from .tensor import DenseTensor, as_array, read_dtf, write_dtf

BUNDLE_FORMAT_VERSION = 1


def _as_matrix(a, name: str) -> np.ndarray:
    arr = as_array(a)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be a matrix (order 2), got order {arr.ndim}")
    return arr


def flatten_samples(t) -> np.ndarray:
    """Row-major flatten of all non-sample modes: (N, ...) -> (N, prod)."""
    arr = as_array(t)
    return np.ascontiguousarray(arr.reshape(arr.shape[0], -1))


# ---------------------------------------------------------------------------
# SL-TRNN
# ---------------------------------------------------------------------------

@dataclass
class SlTrnnModel:
    """Three-factor linear model Y ~ X W B V^T with a width-k bottleneck."""

    w: np.ndarray  # P x k
    b: np.ndarray  # k x k
    v: np.ndarray  # Q x k

    @property
    def k(self) -> int:
        return self.w.shape[1]

    def predict(self, x) -> np.ndarray:
        return _as_matrix(x, "X") @ self.w @ self.b @ self.v.T

    def objective(self, x, y) -> float:
        resid = _as_matrix(y, "Y") - self.predict(x)
        return float(np.sum(resid * resid))


@dataclass
class SlTrnnFitConfig:
    """Warm-restarted Adam: each phase is (learning rate, epochs), run in
    sequence on the same parameters; the best objective across random
    restarts wins."""

    phases: list[tuple[float, int]] = field(
        default_factory=lambda: [(0.05, 2000), (2e-3, 2000), (1e-4, 3000)]
    )
    restarts: int = 2
    seed: int = 0


def _check_k(k: int, n: int, p: int, q: int):
    if not 1 <= k <= min(n, p, q):
        raise ConfigError(
            f"component count k must be in [1, {min(n, p, q)}] "
            f"(min of N={n}, P={p}, Q={q}), got {k}"
        )


def fit_sl_trnn(x, y, k: int, config: SlTrnnFitConfig | None = None) -> SlTrnnModel:
    """Fit min ||Y - X W B V^T||_F^2 by gradient descent.

    The fitter reuses the network machinery: one shrinking layer (W^T), a
    k x k contraction core (B), one expanding layer (V), identity
    activation, no standardization.
    """
    x = _as_matrix(x, "X")
    y = _as_matrix(y, "Y")
    if x.shape[0] != y.shape[0]:
        raise ShapeError(f"X has {x.shape[0]} samples but Y has {y.shape[0]}")
    n, p = x.shape
    q = y.shape[1]
    _check_k(k, n, p, q)
    config = config or SlTrnnFitConfig()
    spec = NetworkSpec(
        input_shape=(p,), output_shape=(q,), encoder=[(k,)],
        bottleneck_out=(k,), decoder=[(q,)], activation="identity",
    )
    ds = Dataset(x=DenseTensor(x), y=DenseTensor(y))
    best_params, best_obj = None, np.inf
    for r in range(max(1, config.restarts)):
        model = init_model(spec, seed=config.seed + 7919 * r)
        for lr, epochs in config.phases:
            if epochs < 1:
                continue
            train(model, ds, TrainConfig(
                optimizer="adam", learning_rate=lr, batch_size=n,
                max_epochs=epochs, tol=1e-16, patience=100,
                standardize=False, seed=config.seed,
            ))
        u, core, v = model.parameters()
        candidate = SlTrnnModel(w=u.T.copy(), b=core.copy(), v=v.copy())
        obj = candidate.objective(x, y)
        if obj < best_obj:
            best_params, best_obj = candidate, obj
    return best_params


# ---------------------------------------------------------------------------
# PLS
# ---------------------------------------------------------------------------

@dataclass
class PlsModel:
    """Deflation-based PLS with orthonormal response loadings.

    ``w`` is the composite projection (scores T = X w on the original X),
    ``v`` the orthonormalized response loadings, ``b`` the latent regression
    minimizing ||Y v - X w b||_F^2.  Prediction is X w b v^T.
    """

    w: np.ndarray  # P x k
    v: np.ndarray  # Q x k, V^T V = I
    b: np.ndarray  # k x k
    k: int

    def predict(self, x) -> np.ndarray:
        return _as_matrix(x, "X") @ self.w @ self.b @ self.v.T

    def objective(self, x, y) -> float:
        resid = _as_matrix(y, "Y") - self.predict(x)
        return float(np.sum(resid * resid))


def fit_pls(x, y, k: int, max_iter: int = 500, tol: float = 1e-12) -> PlsModel:
    """Iterative NIPALS with X and Y deflation.

    Works on the matrices as given (no internal centering; center first if
    an intercept is wanted).  Columns with (numerically) zero norm are
    reported as errors since the weight updates divide by them.
    """
    x = _as_matrix(x, "X")
    y = _as_matrix(y, "Y")
    if x.shape[0] != y.shape[0]:
        raise ShapeError(f"X has {x.shape[0]} samples but Y has {y.shape[0]}")
    n, p = x.shape
    q = y.shape[1]
    _check_k(k, n, p, q)
    scale = max(np.linalg.norm(x), np.linalg.norm(y), 1e-300)
    for name, mat in (("X", x), ("Y", y)):
        dead = np.where(np.linalg.norm(mat, axis=0) <= 1e-12 * scale)[0]
        if dead.size:
            raise ConfigError(
                f"degenerate (zero-variance) {name} columns: {dead.tolist()}"
            )

    xr, yr = x.copy(), y.copy()
    weights, x_loadings, y_loadings = [], [], []
    for j in range(k):
        u = yr[:, int(np.argmax(np.linalg.norm(yr, axis=0)))]
        w = np.zeros(p)
        for _ in range(max_iter):
            w_new = xr.T @ u
            norm = np.linalg.norm(w_new)
            if norm <= 1e-300:
                raise ConfigError(
                    f"PLS component {j + 1} collapsed; effective rank < k"
                )
            w_new /= norm
            t = xr @ w_new
            tt = float(t @ t)
            if tt <= 1e-300:
                raise ConfigError(
                    f"PLS component {j + 1} collapsed; effective rank < k"
                )
            c = yr.T @ t / tt
            cc = float(c @ c)
            if cc <= 1e-300:
                raise ConfigError(
                    f"PLS component {j + 1} has no response covariance left"
                )
            u = yr @ c / cc
            if np.linalg.norm(w_new - w) < tol:
                w = w_new
                break
            w = w_new
        t = xr @ w
        tt = float(t @ t)
        p_load = xr.T @ t / tt
        c_load = yr.T @ t / tt
        xr = xr - np.outer(t, p_load)
        yr = yr - np.outer(t, c_load)
        weights.append(w)
        x_loadings.append(p_load)
        y_loadings.append(c_load)

    w_mat = np.column_stack(weights)
    p_mat = np.column_stack(x_loadings)
    c_mat = np.column_stack(y_loadings)
    # Composite projection: scores on the ORIGINAL X despite deflation.
    r_mat = w_mat @ np.linalg.inv(p_mat.T @ w_mat)
    v_mat, _ = np.linalg.qr(c_mat)
    scores = x @ r_mat
    b_mat, *_ = np.linalg.lstsq(scores, y @ v_mat, rcond=None)
    return PlsModel(w=r_mat, v=v_mat, b=b_mat, k=k)


@dataclass
class EquivalenceReport:
    sl_objective: float
    pls_objective: float
    tolerance: float
    y_norm_sq: float

    @property
    def holds(self) -> bool:
        # Multiplicative slack plus a tiny residual-scale absolute term so
        # exact-fit cases (both objectives ~ 0) compare sanely.
        bound = self.pls_objective * (1.0 + self.tolerance) + 1e-9 * self.y_norm_sq
        return self.sl_objective <= bound


def pls_equivalence_check(
    x, y, k: int,
    sl_config: SlTrnnFitConfig | None = None,
    tolerance: float = 1e-3,
) -> EquivalenceReport:
    """Fit both models on the same matrices and compare objectives.

    The PLS solution is a feasible point of the SL-TRNN program, so a
    converged SL-TRNN must reach an objective at least as low.
    """
    x = _as_matrix(x, "X")
    y = _as_matrix(y, "Y")
    pls = fit_pls(x, y, k)
    sl = fit_sl_trnn(x, y, k, sl_config)
    return EquivalenceReport(
        sl_objective=sl.objective(x, y),
        pls_objective=pls.objective(x, y),
        tolerance=tolerance,
        y_norm_sq=float(np.sum(y * y)),
    )


# ---------------------------------------------------------------------------
# Flat dense baseline
# ---------------------------------------------------------------------------

@dataclass
class FlatDenseBaseline:
    """Fully connected ReLU network on flattened tensors."""

    in_shape: tuple[int, ...]
    out_shape: tuple[int, ...]
    hidden_widths: list[int]
    weights: list[np.ndarray] = field(default_factory=list)   # (fan_in, fan_out)
    biases: list[np.ndarray] = field(default_factory=list)
    x_stats: Standardizer | None = None
    y_stats: Standardizer | None = None

    @property
    def widths(self) -> list[int]:
        return [math.prod(self.in_shape), *self.hidden_widths, math.prod(self.out_shape)]

    def parameter_count(self) -> int:
        w = self.widths
        return sum((w[i] + 1) * w[i + 1] for i in range(len(w) - 1))

    def _forward(self, h: np.ndarray) -> np.ndarray:
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if i < last:
                h = np.maximum(h, 0.0)
        return h

    def predict(self, x) -> np.ndarray:
        arr = as_array(x)
        if arr.shape[1:] != self.in_shape:
            raise ShapeError(
                f"input extents {arr.shape[1:]} do not match {self.in_shape}"
            )
        h = flatten_samples(arr)
        if self.x_stats is not None:
            h = self.x_stats.apply(h)
        out = self._forward(h)
        if self.y_stats is not None:
            out = self.y_stats.invert(out)
        return out.reshape((arr.shape[0],) + self.out_shape)


def dense_parameter_count(widths: list[int]) -> int:
    """Parameters of a dense net with the given full width list (biases included)."""
    return sum((widths[i] + 1) * widths[i + 1] for i in range(len(widths) - 1))


def _dense_backward(params, x, y, widths):
    """Loss (1/2N)||out - y||^2 plus gradients for the flat dense net."""
    n_layers = len(widths) - 1
    ws = params[0::2]
    bs = params[1::2]
    n = x.shape[0]
    hs = [x]
    h = x
    zs = []
    for i in range(n_layers):
        z = h @ ws[i] + bs[i]
        zs.append(z)
        h = np.maximum(z, 0.0) if i < n_layers - 1 else z
        hs.append(h)
    resid = hs[-1] - y
    loss = float(np.sum(resid * resid)) / (2.0 * n)
    g = resid / n
    grads = [None] * len(params)
    for i in range(n_layers - 1, -1, -1):
        grads[2 * i] = hs[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        if i > 0:
            g = (g @ ws[i].T) * (zs[i - 1] >= 0.0)
    return loss, grads


def fit_flat_dense(
    x, y, hidden_widths: list[int], config: TrainConfig | None = None,
) -> FlatDenseBaseline:
    """Train the flattened dense baseline with the shared optimizer module.

    An empty ``hidden_widths`` list gives a single affine layer, i.e. plain
    least squares fitted by gradient descent.
    """
    x_arr = as_array(x)
    y_arr = as_array(y)
    if x_arr.shape[0] != y_arr.shape[0]:
        raise ShapeError(f"X has {x_arr.shape[0]} samples but Y has {y_arr.shape[0]}")
    config = config or TrainConfig(learning_rate=1e-3, max_epochs=500)
    in_shape, out_shape = x_arr.shape[1:], y_arr.shape[1:]
    model = FlatDenseBaseline(
        in_shape=in_shape, out_shape=out_shape, hidden_widths=list(hidden_widths)
    )
    xf, yf = flatten_samples(x_arr), flatten_samples(y_arr)
    if config.standardize:
        model.x_stats = Standardizer.fit(xf)
        model.y_stats = Standardizer.fit(yf)
        xf = model.x_stats.apply(xf)
        yf = model.y_stats.apply(yf)
    widths = model.widths
    rng = np.random.default_rng(config.seed)
    params = []
    for fan_in, fan_out in zip(widths, widths[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    state = OptimizerState.create(
        config.optimizer, config.learning_rate, params,
        weight_decay=config.weight_decay,
    )
    n = xf.shape[0]
    batch_size = min(config.batch_size, n)
    shuffle_rng = np.random.default_rng(config.seed)
    best = np.inf
    streak = 0
    for epoch in range(config.max_epochs):
        for idx in epoch_batches(n, batch_size, shuffle_rng):
            _, grads = _dense_backward(params, xf[idx], yf[idx], widths)
            params = apply_step(params, grads, state)
        loss, _ = _dense_backward(params, xf, yf, widths)
        if not np.isfinite(loss):
            raise DivergenceError(epoch + 1)
        if best - loss < config.tol * max(best, 1e-300):
            streak += 1
            if streak >= config.patience:
                break
        else:
            streak = 0
        best = min(best, loss)
    model.weights = params[0::2]
    model.biases = params[1::2]
    return model


# ---------------------------------------------------------------------------
# Bundles
# ---------------------------------------------------------------------------

def save_baseline(model, path) -> None:
    """Persist a baseline in the shared bundle layout with a ``kind`` field."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    if isinstance(model, SlTrnnModel):
        manifest = {"kind": "sl_trnn", "k": model.k}
        tensors = {"W": model.w, "B": model.b, "V": model.v}
    elif isinstance(model, PlsModel):
        manifest = {"kind": "pls", "k": model.k}
        tensors = {"W": model.w, "B": model.b, "V": model.v}
    elif isinstance(model, FlatDenseBaseline):
        manifest = {
            "kind": "flat_dense",
            "in_shape": list(model.in_shape),
            "out_shape": list(model.out_shape),
            "hidden_widths": list(model.hidden_widths),
            "standardize": model.x_stats is not None,
        }
        tensors = {}
        for i, (w, b) in enumerate(zip(model.weights, model.biases)):
            tensors[f"W{i}"] = w
            tensors[f"b{i}"] = b
        if model.x_stats is not None:
            tensors.update(
                x_mean=model.x_stats.mean, x_std=model.x_stats.std,
                y_mean=model.y_stats.mean, y_std=model.y_stats.std,
            )
    else:
        raise ConfigError(f"cannot save baseline of type {type(model).__name__}")
    manifest["format_version"] = BUNDLE_FORMAT_VERSION
    manifest["tensors"] = sorted(tensors)
    for name, arr in tensors.items():
        write_dtf(DenseTensor(np.asarray(arr, dtype=np.float64)), path / f"{name}.dtf")
    with open(path / "manifest.json", "w", encoding="ascii") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_baseline(path):
    path = Path(path)
    try:
        with open(path / "manifest.json", encoding="ascii") as fh:
            manifest = json.load(fh)
    except FileNotFoundError as exc:
        raise DataFormatError(f"{path}: not a model bundle (no manifest.json)") from exc
    if manifest.get("format_version") != BUNDLE_FORMAT_VERSION:
        raise DataFormatError(
            f"{path}: unsupported bundle format version {manifest.get('format_version')!r}"
        )
    kind = manifest.get("kind")

    def tensor(name):
        return np.array(read_dtf(path / f"{name}.dtf").to_numpy())

    if kind in ("sl_trnn", "pls"):
        w, b, v = tensor("W"), tensor("B"), tensor("V")
        if kind == "sl_trnn":
            return SlTrnnModel(w=w, b=b, v=v)
        return PlsModel(w=w, v=v, b=b, k=int(manifest["k"]))
    if kind == "flat_dense":
        model = FlatDenseBaseline(
            in_shape=tuple(manifest["in_shape"]),
            out_shape=tuple(manifest["out_shape"]),
            hidden_widths=list(manifest["hidden_widths"]),
        )
        n_layers = len(model.widths) - 1
        model.weights = [tensor(f"W{i}") for i in range(n_layers)]
        model.biases = [tensor(f"b{i}") for i in range(n_layers)]
        if manifest.get("standardize"):
            model.x_stats = Standardizer(mean=tensor("x_mean"), std=tensor("x_std"))
            model.y_stats = Standardizer(mean=tensor("y_mean"), std=tensor("y_std"))
        return model
    raise DataFormatError(f"{path}: unknown baseline kind {kind!r}")
