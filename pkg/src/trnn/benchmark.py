"""Replicated benchmark sweeps over (N, sigma) cells with CSV/JSON export.

Seeding: replication r of cell (N, sigma) derives seeds as
SHA-256("{base_seed}:{generator}:{N}:{sigma!r}:{r}:{role}") truncated to 63
bits, with roles "train", "test", and "fit:<method>".  Everything except
wall-clock timings is therefore reproducible from the plan alone.

The error metric is the squared-norm ratio ||Y_hat - Y||_F^2 / ||Y||_F^2
(kept exactly in that form; despite the conventional name it is not a
root).
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import (
    SlTrnnFitConfig,
    fit_flat_dense,
    fit_pls,
    fit_sl_trnn,
    flatten_samples,
)
from .datagen import Dataset, gen_helicoid_dataset, gen_waterdrop_dataset
from .exceptions import ConfigError, ShapeError, TrnnError
from .model import TrainConfig, default_spec_for, init_model, predict, train
from .model import NetworkSpec
from .tensor import DenseTensor, as_array

METHODS = ("trnn", "sl_trnn", "pls", "flat_dense")


def rmse(y_hat, y) -> float:
    """Relative squared-error ratio ||y_hat - y||_F^2 / ||y||_F^2."""
    a, b = as_array(y_hat), as_array(y)
    if a.shape != b.shape:
        raise ShapeError(f"rmse shapes differ: {a.shape} vs {b.shape}")
    denom = float(np.sum(b * b))
    if denom <= 0.0:
        raise ConfigError("rmse reference tensor has zero norm")
    diff = (a - b).reshape(-1)
    return float(diff @ diff) / denom


def derive_seed(base_seed: int, generator: str, n: int, sigma: float, rep: int,
                role: str) -> int:
    key = f"{base_seed}:{generator}:{n}:{sigma!r}:{rep}:{role}"
    digest = hashlib.sha256(key.encode("ascii")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


@dataclass
class BenchmarkPlan:
    generator: str
    methods: list[str]
    n_grid: list[int]
    sigma_grid: list[float]
    replications: int = 20
    test_size: int = 200
    grid_i: int = 20
    grid_j: int = 20
    base_seed: int = 0
    method_configs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.generator not in ("waterdrop", "helicoid"):
            raise ConfigError(f"unknown generator {self.generator!r}")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}, expected one of {METHODS}")
        if not self.methods:
            raise ConfigError("plan needs at least one method")
        if not self.n_grid or not self.sigma_grid:
            raise ConfigError("plan grids must be non-empty")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.test_size < 1:
            raise ConfigError("test size must be >= 1")
        for m in self.method_configs:
            if m not in METHODS:
                raise ConfigError(f"method config for unknown method {m!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "BenchmarkPlan":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown benchmark plan keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class MetricsRecord:
    method: str
    generator: str
    n: int
    sigma: float
    rep: int
    seed: int
    rmse: float
    train_seconds: float

    def sort_key(self):
        return (self.generator, self.method, self.n, self.sigma, self.rep)


@dataclass
class FailureRecord:
    method: str
    generator: str
    n: int
    sigma: float
    rep: int
    error: str


@dataclass
class BenchmarkResult:
    records: list[MetricsRecord]
    failures: list[FailureRecord]


# ---------------------------------------------------------------------------
# Method adapters
# ---------------------------------------------------------------------------

@dataclass
class _CenteredLinear:
    """Wrap a no-intercept linear fitter with mean removal on both sides."""

    inner: object
    x_mean: np.ndarray
    y_mean: np.ndarray
    out_shape: tuple[int, ...]

    def predict(self, x) -> np.ndarray:
        xf = flatten_samples(x) - self.x_mean
        out = self.inner.predict(xf) + self.y_mean
        return out.reshape((out.shape[0],) + self.out_shape)


@dataclass
class _TrnnPredictor:
    model: object

    def predict(self, x):
        return predict(self.model, x).to_numpy()


def default_trnn_layout(generator: str) -> dict:
    """Width schedules tuned for the two synthetic families at desk scale."""
    if generator == "waterdrop":
        return {
            "encoder": [[4], [4]],
            "bottleneck_out": [4, 4, 2],
            "decoder": [[10, 10, 2], [-1, -1, 2]],  # -1: fill with the data extent
        }
    return {
        "encoder": [[4, 12], [4, 8]],
        "bottleneck_out": [2, 5, 5],
        "decoder": [[2, 10, 10], [2, -1, -1]],
    }


def _resolve_layout(layout: dict, in_shape, out_shape) -> NetworkSpec:
    def fill(step, ref):
        return tuple(r if e == -1 else e for e, r in zip(step, ref))

    encoder = [fill(s, in_shape) for s in layout["encoder"]]
    decoder = [fill(s, out_shape) for s in layout["decoder"]]
    return NetworkSpec(
        input_shape=in_shape, output_shape=out_shape, encoder=encoder,
        bottleneck_out=tuple(layout["bottleneck_out"]), decoder=decoder,
        activation=layout.get("activation", "relu"),
    )


def _fit_trnn(train_ds: Dataset, cfg: dict, seed: int, generator: str):
    in_shape = train_ds.x.shape[1:]
    out_shape = train_ds.y.shape[1:]
    layout = cfg.get("layout")
    if layout is not None:
        spec = _resolve_layout(layout, in_shape, out_shape)
    elif cfg.get("auto_spec"):
        spec = default_spec_for(in_shape, out_shape)
    else:
        spec = _resolve_layout(default_trnn_layout(generator), in_shape, out_shape)
    train_cfg = TrainConfig(
        optimizer=cfg.get("optimizer", "adam"),
        learning_rate=cfg.get("learning_rate", 2e-3),
        batch_size=cfg.get("batch_size", 32),
        max_epochs=cfg.get("max_epochs", 400),
        tol=cfg.get("tol", 1e-8),
        patience=cfg.get("patience", 30),
        seed=seed,
        standardize=True,
    )
    model = init_model(spec, seed=seed)
    train(model, train_ds, train_cfg)
    return _TrnnPredictor(model)


def _fit_linear(train_ds: Dataset, cfg: dict, seed: int, kind: str):
    xf = flatten_samples(train_ds.x)
    yf = flatten_samples(train_ds.y)
    x_mean = xf.mean(axis=0)
    y_mean = yf.mean(axis=0)
    xc, yc = xf - x_mean, yf - y_mean
    k_max = min(xc.shape[0], xc.shape[1], yc.shape[1])
    k = min(int(cfg.get("k", 8)), k_max)
    if kind == "pls":
        inner = fit_pls(xc, yc, k)
    else:
        sl_cfg = SlTrnnFitConfig(
            phases=cfg.get("phases", [(0.05, 1500), (2e-3, 1500)]),
            restarts=cfg.get("restarts", 1),
            seed=seed,
        )
        inner = fit_sl_trnn(xc, yc, k, sl_cfg)
    return _CenteredLinear(inner=inner, x_mean=x_mean, y_mean=y_mean,
                           out_shape=train_ds.y.shape[1:])


@dataclass
class _FlatDensePredictor:
    model: object
    out_shape: tuple[int, ...]

    def predict(self, x):
        return self.model.predict(x)


def _fit_flat_dense(train_ds: Dataset, cfg: dict, seed: int):
    train_cfg = TrainConfig(
        optimizer=cfg.get("optimizer", "adam"),
        learning_rate=cfg.get("learning_rate", 1e-3),
        batch_size=cfg.get("batch_size", 32),
        max_epochs=cfg.get("max_epochs", 400),
        tol=cfg.get("tol", 1e-8),
        patience=cfg.get("patience", 30),
        seed=seed,
        standardize=True,
    )
    model = fit_flat_dense(
        train_ds.x, train_ds.y, hidden_widths=cfg.get("hidden_widths", [256]),
        config=train_cfg,
    )
    return _FlatDensePredictor(model, train_ds.y.shape[1:])


def fit_method(method: str, train_ds: Dataset, cfg: dict, seed: int, generator: str):
    if method == "trnn":
        return _fit_trnn(train_ds, cfg, seed, generator)
    if method in ("sl_trnn", "pls"):
        return _fit_linear(train_ds, cfg, seed, method)
    if method == "flat_dense":
        return _fit_flat_dense(train_ds, cfg, seed)
    raise ConfigError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# Sweep driver
# ---------------------------------------------------------------------------

def _generate(generator: str, n: int, sigma: float, grid_i: int, grid_j: int,
              seed: int) -> Dataset:
    if generator == "waterdrop":
        return gen_waterdrop_dataset(n, sigma, grid_i, grid_j, seed)
    return gen_helicoid_dataset(n, sigma, grid_i, grid_j, seed)


def _run_task(args):
    plan, n, sigma, rep = args
    train_seed = derive_seed(plan.base_seed, plan.generator, n, sigma, rep, "train")
    test_seed = derive_seed(plan.base_seed, plan.generator, n, sigma, rep, "test")
    train_ds = _generate(plan.generator, n, sigma, plan.grid_i, plan.grid_j, train_seed)
    test_ds = _generate(plan.generator, plan.test_size, sigma, plan.grid_i,
                        plan.grid_j, test_seed)
    records, failures = [], []
    for method in plan.methods:
        cfg = plan.method_configs.get(method, {})
        fit_seed = derive_seed(plan.base_seed, plan.generator, n, sigma, rep,
                               f"fit:{method}")
        try:
            start = time.perf_counter()
            predictor = fit_method(method, train_ds, cfg, fit_seed, plan.generator)
            seconds = time.perf_counter() - start
            value = rmse(predictor.predict(test_ds.x), test_ds.y)
            records.append(MetricsRecord(
                method=method, generator=plan.generator, n=n, sigma=sigma,
                rep=rep, seed=fit_seed, rmse=value, train_seconds=seconds,
            ))
        except TrnnError as exc:
            failures.append(FailureRecord(
                method=method, generator=plan.generator, n=n, sigma=sigma,
                rep=rep, error=f"{type(exc).__name__}: {exc}",
            ))
    return records, failures


def run_benchmark(plan: BenchmarkPlan, jobs: int = 1) -> BenchmarkResult:
    """Run every (cell, replication) and collect one record per method.

    Replications are independent; with ``jobs > 1`` they run in a process
    pool, and records are merged in a fixed key order so parallelism never
    changes the output.
    """
    tasks = [
        (plan, n, sigma, rep)
        for n in plan.n_grid
        for sigma in plan.sigma_grid
        for rep in range(plan.replications)
    ]
    records: list[MetricsRecord] = []
    failures: list[FailureRecord] = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for recs, fails in pool.map(_run_task, tasks):
                records.extend(recs)
                failures.extend(fails)
    else:
        for task in tasks:
            recs, fails = _run_task(task)
            records.extend(recs)
            failures.extend(fails)
    records.sort(key=MetricsRecord.sort_key)
    failures.sort(key=lambda f: (f.generator, f.method, f.n, f.sigma, f.rep))
    return BenchmarkResult(records=records, failures=failures)


# ---------------------------------------------------------------------------
# Summaries and export
# ---------------------------------------------------------------------------

@dataclass
class CellSummary:
    method: str
    generator: str
    n: int
    sigma: float
    count: int
    rmse_median: float
    rmse_q1: float
    rmse_q3: float
    rmse_std: float
    seconds_median: float


def summarize(records: list[MetricsRecord]) -> list[CellSummary]:
    """Per-cell medians, quartiles (linear interpolation), and stds."""
    if not records:
        raise ConfigError("cannot summarize an empty record list")
    cells: dict = {}
    for rec in records:
        cells.setdefault((rec.method, rec.generator, rec.n, rec.sigma), []).append(rec)
    out = []
    for (method, generator, n, sigma), recs in sorted(cells.items()):
        values = np.array([r.rmse for r in recs])
        secs = np.array([r.train_seconds for r in recs])
        out.append(CellSummary(
            method=method, generator=generator, n=n, sigma=sigma,
            count=len(recs),
            rmse_median=float(np.median(values)),
            rmse_q1=float(np.percentile(values, 25)),
            rmse_q3=float(np.percentile(values, 75)),
            rmse_std=float(np.std(values)),
            seconds_median=float(np.median(secs)),
        ))
    return out


CSV_HEADER = "method,generator,N,sigma,rep,seed,rmse,train_seconds"


def export_csv(records: list[MetricsRecord], path, include_timings: bool = True) -> None:
    """One row per record in fixed key order.

    ``include_timings=False`` zeroes the time column, making the file
    bit-identical across reruns of the same plan.
    """
    lines = [CSV_HEADER]
    for rec in sorted(records, key=MetricsRecord.sort_key):
        seconds = rec.train_seconds if include_timings else 0.0
        lines.append(
            f"{rec.method},{rec.generator},{rec.n},{rec.sigma!r},{rec.rep},"
            f"{rec.seed},{rec.rmse!r},{seconds!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def read_csv(path) -> list[MetricsRecord]:
    lines = Path(path).read_text(encoding="ascii").strip().split("\n")
    if lines[0] != CSV_HEADER:
        raise ConfigError(f"{path}: unexpected CSV header {lines[0]!r}")
    records = []
    for line in lines[1:]:
        method, generator, n, sigma, rep, seed, value, seconds = line.split(",")
        records.append(MetricsRecord(
            method=method, generator=generator, n=int(n), sigma=float(sigma),
            rep=int(rep), seed=int(seed), rmse=float(value),
            train_seconds=float(seconds),
        ))
    return records


def export_summary_json(summaries: list[CellSummary], path,
                        failures: list[FailureRecord] | None = None) -> None:
    payload = {
        "cells": [vars(s) for s in summaries],
        "failures": [vars(f) for f in (failures or [])],
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def median_table(summaries: list[CellSummary]) -> str:
    """Methods x cells table of median rmse values."""
    cells = sorted({(s.n, s.sigma) for s in summaries})
    methods = sorted({s.method for s in summaries})
    lookup = {(s.method, s.n, s.sigma): s.rmse_median for s in summaries}
    header = "method".ljust(12) + "".join(
        f"N={n},s={sigma}".rjust(18) for n, sigma in cells
    )
    lines = [header]
    for m in methods:
        row = m.ljust(12)
        for n, sigma in cells:
            value = lookup.get((m, n, sigma))
            row += (f"{value:.4g}".rjust(18) if value is not None else "-".rjust(18))
        lines.append(row)
    return "\n".join(lines)
