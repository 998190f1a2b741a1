"""Seeded synthetic point-cloud generators: water drops and helicoids.

Both families evaluate a closed-form surface on an inclusive 1..I x 1..J
grid (phi_i = -pi + 2*pi*i/I and z_j = j/J for the water drop; r_i = i/I and
z_j = j/J for the helicoid), so the grids end exactly at phi = pi, z = 1,
r = 1.  Gaussian noise is added to the response tensor only; predictors are
the exact control values (switchable via ``x_sigma``).

Randomness: numpy's PCG64 generator seeded per dataset, normal draws via the
generator's ziggurat sampler.  Draw order is fixed (controls, then response
noise, then optional predictor noise), so a (generator, seed, sigma, n,
grid) tuple regenerates a dataset bit-exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, DataFormatError
from .tensor import DenseTensor, read_dtf, write_dtf

DATASET_FORMAT_VERSION = 1
GENERATORS = ("waterdrop", "helicoid")


def _check_grid(grid_i: int, grid_j: int):
    if grid_i < 2 or grid_j < 2:
        raise ConfigError(f"grid extents must be >= 2, got ({grid_i}, {grid_j})")


@dataclass
class WaterDropParams:
    """Controls: base radius a > 0, horizontal pattern b, vertical pattern c,
    quadratic side curvature d (b, c, d >= 0; zero switches a feature off)."""

    a: float
    b: float
    c: float
    d: float
    grid_i: int = 50
    grid_j: int = 50
    sigma: float = 0.0

    def __post_init__(self):
        if self.a <= 0:
            raise ConfigError("water-drop base radius a must be positive")
        for name in "bcd":
            if getattr(self, name) < 0:
                raise ConfigError(f"water-drop control {name} must be >= 0")
        _check_grid(self.grid_i, self.grid_j)
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")


@dataclass
class HelicoidParams:
    """Controls: base arm length c1 > 0, arm-length amplitude c2 (0 <= c2 < c1,
    zero gives constant arms), arm-angle periodicity alpha, arm-length
    periodicity beta."""

    c1: float
    c2: float
    alpha: float
    beta: float
    grid_i: int = 50
    grid_j: int = 50
    sigma: float = 0.0

    def __post_init__(self):
        if not 0 <= self.c2 < self.c1:
            raise ConfigError(
                f"helicoid controls need 0 <= c2 < c1, got c1={self.c1}, c2={self.c2}"
            )
        _check_grid(self.grid_i, self.grid_j)
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")


@dataclass
class DatasetMeta:
    generator: str
    seed: int
    sigma: float
    n: int
    grid_i: int
    grid_j: int
    controls: np.ndarray  # one row of control variables per sample
    x_sigma: float = 0.0


@dataclass
class Dataset:
    x: DenseTensor
    y: DenseTensor
    meta: DatasetMeta | None = None

    def __post_init__(self):
        if self.x.shape[0] != self.y.shape[0]:
            raise ConfigError(
                f"X has {self.x.shape[0]} samples but Y has {self.y.shape[0]}"
            )

    @property
    def n(self) -> int:
        return self.x.shape[0]


# ---------------------------------------------------------------------------
# Closed-form surfaces
# ---------------------------------------------------------------------------

def waterdrop_xy(phi: float, z: float, a: float, b: float, c: float, d: float):
    """Cartesian (x, y) of one water-drop surface point."""
    radius = a * (1.0 + math.cos(b * phi)) * (1.0 + math.sin(c * math.pi * z)) + (
        d * (-z * z + z)
    )
    return radius * math.cos(phi), radius * math.sin(phi)


def helicoid_xy(r: float, z: float, c1: float, c2: float, alpha: float, beta: float):
    """Cartesian (x, y) of one helicoid arm point."""
    arm = (c1 + c2 * math.cos(beta * z)) * r
    return arm * math.cos(alpha * z), arm * math.sin(alpha * z)


def _waterdrop_grid(a, b, c, d, grid_i, grid_j) -> np.ndarray:
    i = np.arange(1, grid_i + 1)
    j = np.arange(1, grid_j + 1)
    phi = (-np.pi + 2.0 * np.pi * i / grid_i)[:, None]
    z = (j / grid_j)[None, :]
    radius = a * (1.0 + np.cos(b * phi)) * (1.0 + np.sin(c * np.pi * z)) + d * (-z * z + z)
    return np.stack([radius * np.cos(phi), radius * np.sin(phi)], axis=-1)


def _helicoid_grid(c1, c2, alpha, beta, grid_i, grid_j) -> np.ndarray:
    i = np.arange(1, grid_i + 1)
    j = np.arange(1, grid_j + 1)
    r = (i / grid_i)[:, None]
    z = (j / grid_j)[None, :]
    arm = (c1 + c2 * np.cos(beta * z)) * r
    return np.stack([arm * np.cos(alpha * z), arm * np.sin(alpha * z)], axis=0)


def waterdrop_surface(p: WaterDropParams) -> DenseTensor:
    """Noise-free water-drop point cloud of shape (I, J, 2), channels (x, y)."""
    return DenseTensor._wrap(_waterdrop_grid(p.a, p.b, p.c, p.d, p.grid_i, p.grid_j))


def helicoid_surface(p: HelicoidParams) -> DenseTensor:
    """Noise-free helicoid point cloud of shape (2, I, J), channels (x, y)."""
    return DenseTensor._wrap(
        _helicoid_grid(p.c1, p.c2, p.alpha, p.beta, p.grid_i, p.grid_j)
    )


# ---------------------------------------------------------------------------
# Dataset generators
# ---------------------------------------------------------------------------

def gen_waterdrop_dataset(
    n: int, sigma: float, grid_i: int = 50, grid_j: int = 50, seed: int = 0,
    x_sigma: float = 0.0,
) -> Dataset:
    """Sample controls (a, b, c, d) = (U1, 0.5*U2, U3, U4) with U ~ Uniform(1, 2)
    i.i.d., build noisy surfaces: X is (n, 4), Y is (n, I, J, 2)."""
    if n < 1:
        raise ConfigError("need at least one sample")
    _check_grid(grid_i, grid_j)
    if sigma < 0 or x_sigma < 0:
        raise ConfigError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    controls = rng.uniform(1.0, 2.0, size=(n, 4)) * np.array([1.0, 0.5, 1.0, 1.0])
    y = np.empty((n, grid_i, grid_j, 2))
    for k in range(n):
        a, b, c, d = controls[k]
        y[k] = _waterdrop_grid(a, b, c, d, grid_i, grid_j)
    if sigma > 0:
        y += rng.normal(0.0, sigma, size=y.shape)
    x = controls.copy()
    if x_sigma > 0:
        x += rng.normal(0.0, x_sigma, size=x.shape)
    meta = DatasetMeta(
        generator="waterdrop", seed=seed, sigma=sigma, n=n,
        grid_i=grid_i, grid_j=grid_j, controls=controls, x_sigma=x_sigma,
    )
    return Dataset(x=DenseTensor._wrap(x), y=DenseTensor._wrap(y), meta=meta)


def gen_helicoid_dataset(
    n: int, sigma: float, grid_i: int = 50, grid_j: int = 50, seed: int = 0,
    x_sigma: float = 0.0,
) -> Dataset:
    """Sample controls (c1, c2, alpha, beta) = (5*U1, 2*U2, 3*U3, 4*U4) with
    U ~ Uniform(0.5, 1.5) i.i.d.

    X is (n, 4, J): rows 1-2 replicate c1 and c2 across the z-grid, rows 3-4
    are the profile predictors cos(alpha*z_j) and cos(beta*z_j); Y is
    (n, 2, I, J).  The sampled controls are used as-is (the distributions
    allow the occasional draw with c2 >= c1, which still evaluates fine).
    """
    if n < 1:
        raise ConfigError("need at least one sample")
    _check_grid(grid_i, grid_j)
    if sigma < 0 or x_sigma < 0:
        raise ConfigError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    controls = rng.uniform(0.5, 1.5, size=(n, 4)) * np.array([5.0, 2.0, 3.0, 4.0])
    z = np.arange(1, grid_j + 1) / grid_j
    x = np.empty((n, 4, grid_j))
    y = np.empty((n, 2, grid_i, grid_j))
    for k in range(n):
        c1, c2, alpha, beta = controls[k]
        x[k, 0] = c1
        x[k, 1] = c2
        x[k, 2] = np.cos(alpha * z)
        x[k, 3] = np.cos(beta * z)
        y[k] = _helicoid_grid(c1, c2, alpha, beta, grid_i, grid_j)
    if sigma > 0:
        y += rng.normal(0.0, sigma, size=y.shape)
    if x_sigma > 0:
        x += rng.normal(0.0, x_sigma, size=x.shape)
    meta = DatasetMeta(
        generator="helicoid", seed=seed, sigma=sigma, n=n,
        grid_i=grid_i, grid_j=grid_j, controls=controls, x_sigma=x_sigma,
    )
    return Dataset(x=DenseTensor._wrap(x), y=DenseTensor._wrap(y), meta=meta)


def regenerate(meta: DatasetMeta) -> Dataset:
    """Rebuild a dataset bit-exactly from its metadata."""
    if meta.generator == "waterdrop":
        return gen_waterdrop_dataset(
            meta.n, meta.sigma, meta.grid_i, meta.grid_j, meta.seed, meta.x_sigma
        )
    if meta.generator == "helicoid":
        return gen_helicoid_dataset(
            meta.n, meta.sigma, meta.grid_i, meta.grid_j, meta.seed, meta.x_sigma
        )
    raise ConfigError(f"cannot regenerate datasets of kind {meta.generator!r}")


# ---------------------------------------------------------------------------
# On-disk bundles
# ---------------------------------------------------------------------------

def save_dataset(ds: Dataset, path) -> None:
    """Write X.dtf, Y.dtf and meta.json into a directory."""
    if ds.meta is None:
        raise ConfigError("cannot save a dataset without metadata")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    write_dtf(ds.x, path / "X.dtf")
    write_dtf(ds.y, path / "Y.dtf")
    meta = {
        "format_version": DATASET_FORMAT_VERSION,
        "generator": ds.meta.generator,
        "seed": ds.meta.seed,
        "sigma": ds.meta.sigma,
        "n": ds.meta.n,
        "grid_i": ds.meta.grid_i,
        "grid_j": ds.meta.grid_j,
        "x_sigma": ds.meta.x_sigma,
        "controls": ds.meta.controls.tolist(),
    }
    with open(path / "meta.json", "w", encoding="ascii") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(path) -> Dataset:
    path = Path(path)
    try:
        with open(path / "meta.json", encoding="ascii") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise DataFormatError(f"{path}: not a dataset bundle (no meta.json)") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: corrupt meta.json: {exc}") from exc
    if raw.get("format_version") != DATASET_FORMAT_VERSION:
        raise DataFormatError(
            f"{path}: unsupported dataset format version {raw.get('format_version')!r}"
        )
    x = read_dtf(path / "X.dtf")
    y = read_dtf(path / "Y.dtf")
    meta = DatasetMeta(
        generator=raw["generator"], seed=int(raw["seed"]), sigma=float(raw["sigma"]),
        n=int(raw["n"]), grid_i=int(raw["grid_i"]), grid_j=int(raw["grid_j"]),
        controls=np.asarray(raw["controls"], dtype=np.float64),
        x_sigma=float(raw.get("x_sigma", 0.0)),
    )
    if x.shape[0] != meta.n or y.shape[0] != meta.n:
        raise DataFormatError(f"{path}: sample counts disagree with metadata")
    return Dataset(x=x, y=y, meta=meta)
