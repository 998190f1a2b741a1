"""Synthetic surface generators: analytic symmetries, an independently coded
scalar oracle, sampling distributions, and bit-exact reproducibility."""

import math

import numpy as np
import pytest

from trnn.datagen import (
    Dataset,
    HelicoidParams,
    WaterDropParams,
    gen_helicoid_dataset,
    gen_waterdrop_dataset,
    helicoid_surface,
    helicoid_xy,
    load_dataset,
    regenerate,
    save_dataset,
    waterdrop_surface,
    waterdrop_xy,
)
from trnn.exceptions import ConfigError


# Independent oracle: the same closed forms, coded separately with scalar math.
def oracle_waterdrop(phi, z, a, b, c, d):
    rad = a * (1 + math.cos(b * phi)) * (1 + math.sin(c * math.pi * z))
    rad += d * (z - z ** 2)
    return rad * math.cos(phi), rad * math.sin(phi)


def oracle_helicoid(r, z, c1, c2, alpha, beta):
    arm = (c1 + c2 * math.cos(beta * z)) * r
    return arm * math.cos(alpha * z), arm * math.sin(alpha * z)


class TestWaterDropSurface:
    def test_origin_point(self):
        x, y = waterdrop_xy(0.0, 0.0, a=1.3, b=1.0, c=1.0, d=1.0)
        assert x == pytest.approx(2 * 1.3)
        assert y == 0.0

    def test_rotational_symmetry_when_b_and_d_zero(self):
        p = WaterDropParams(a=1.5, b=0.0, c=1.2, d=0.0, grid_i=8, grid_j=6)
        surf = waterdrop_surface(p).to_numpy()
        radius_sq = surf[..., 0] ** 2 + surf[..., 1] ** 2
        for j in range(p.grid_j):
            np.testing.assert_allclose(radius_sq[:, j], radius_sq[0, j], rtol=1e-12)
        z = (np.arange(1, p.grid_j + 1)) / p.grid_j
        expected = (2 * p.a * (1 + np.sin(p.c * np.pi * z))) ** 2
        np.testing.assert_allclose(radius_sq[0], expected, rtol=1e-12)

    def test_full_grid_matches_scalar_oracle(self):
        p = WaterDropParams(a=1.0, b=1.0, c=1.0, d=1.0, grid_i=4, grid_j=4)
        surf = waterdrop_surface(p).to_numpy()
        assert surf.shape == (4, 4, 2)
        for i in range(1, 5):
            for j in range(1, 5):
                phi = -math.pi + 2 * math.pi * i / 4
                z = j / 4
                x, y = oracle_waterdrop(phi, z, 1.0, 1.0, 1.0, 1.0)
                assert surf[i - 1, j - 1, 0] == pytest.approx(x, abs=1e-14)
                assert surf[i - 1, j - 1, 1] == pytest.approx(y, abs=1e-14)

    def test_invalid_params(self):
        with pytest.raises(ConfigError, match="positive"):
            WaterDropParams(a=0.0, b=1.0, c=1.0, d=1.0)
        with pytest.raises(ConfigError, match="grid"):
            WaterDropParams(a=1.0, b=1.0, c=1.0, d=1.0, grid_i=1)


class TestHelicoidSurface:
    def test_zero_height_arm(self):
        x, y = helicoid_xy(0.7, 0.0, c1=5.0, c2=2.0, alpha=3.0, beta=4.0)
        assert x == pytest.approx((5.0 + 2.0) * 0.7)
        assert y == 0.0

    def test_constant_arm_when_c2_zero(self):
        p = HelicoidParams(c1=4.0, c2=0.0, alpha=2.5, beta=3.0, grid_i=6, grid_j=8)
        surf = helicoid_surface(p).to_numpy()
        r = np.arange(1, 7) / 6
        arm_sq = surf[0] ** 2 + surf[1] ** 2
        np.testing.assert_allclose(arm_sq, np.outer((4.0 * r) ** 2, np.ones(8)),
                                   rtol=1e-12)

    def test_full_grid_matches_scalar_oracle(self):
        p = HelicoidParams(c1=5.0, c2=2.0, alpha=3.0, beta=4.0, grid_i=5, grid_j=3)
        surf = helicoid_surface(p).to_numpy()
        assert surf.shape == (2, 5, 3)
        for i in range(1, 6):
            for j in range(1, 4):
                x, y = oracle_helicoid(i / 5, j / 3, 5.0, 2.0, 3.0, 4.0)
                assert surf[0, i - 1, j - 1] == pytest.approx(x, abs=1e-14)
                assert surf[1, i - 1, j - 1] == pytest.approx(y, abs=1e-14)

    def test_invalid_params(self):
        with pytest.raises(ConfigError, match="c2 < c1"):
            HelicoidParams(c1=2.0, c2=2.5, alpha=1.0, beta=1.0)


class TestWaterDropDataset:
    def test_noiseless_equals_stacked_surfaces(self):
        ds = gen_waterdrop_dataset(n=4, sigma=0.0, grid_i=6, grid_j=6, seed=3)
        for k in range(4):
            a, b, c, d = ds.meta.controls[k]
            p = WaterDropParams(a=a, b=b, c=c, d=d, grid_i=6, grid_j=6)
            np.testing.assert_array_equal(
                ds.y.to_numpy()[k], waterdrop_surface(p).to_numpy()
            )

    def test_control_ranges(self):
        ds = gen_waterdrop_dataset(n=500, sigma=0.0, grid_i=2, grid_j=2, seed=1)
        x = ds.x.to_numpy()
        assert np.all((x[:, 0] > 1) & (x[:, 0] < 2))
        assert np.all((x[:, 1] > 0.5) & (x[:, 1] < 1))
        assert np.all((x[:, 2] > 1) & (x[:, 2] < 2))
        assert np.all((x[:, 3] > 1) & (x[:, 3] < 2))

    def test_noise_std_matches_sigma(self):
        # 50 * 32 * 32 * 2 > 1e5 draws: the empirical std lands within 5%.
        sigma = 0.37
        noisy = gen_waterdrop_dataset(n=50, sigma=sigma, grid_i=32, grid_j=32, seed=9)
        clean = gen_waterdrop_dataset(n=50, sigma=0.0, grid_i=32, grid_j=32, seed=9)
        resid = noisy.y.to_numpy() - clean.y.to_numpy()
        assert abs(resid.std() - sigma) < 0.05 * sigma
        # predictors stay exact
        np.testing.assert_array_equal(noisy.x.to_numpy(), clean.x.to_numpy())

    def test_bit_reproducible(self):
        a = gen_waterdrop_dataset(n=5, sigma=0.2, grid_i=4, grid_j=4, seed=11)
        b = gen_waterdrop_dataset(n=5, sigma=0.2, grid_i=4, grid_j=4, seed=11)
        assert a.x == b.x and a.y == b.y


class TestHelicoidDataset:
    def test_replicated_scalar_rows(self):
        ds = gen_helicoid_dataset(n=3, sigma=0.0, grid_i=4, grid_j=10, seed=5)
        x = ds.x.to_numpy()
        for k in range(3):
            c1, c2, alpha, beta = ds.meta.controls[k]
            np.testing.assert_array_equal(x[k, 0], np.full(10, c1))
            np.testing.assert_array_equal(x[k, 1], np.full(10, c2))
            z = np.arange(1, 11) / 10
            np.testing.assert_allclose(x[k, 2], np.cos(alpha * z), rtol=1e-15)
            np.testing.assert_allclose(x[k, 3], np.cos(beta * z), rtol=1e-15)

    def test_control_ranges(self):
        ds = gen_helicoid_dataset(n=500, sigma=0.0, grid_i=2, grid_j=2, seed=2)
        c = ds.meta.controls
        assert np.all((c[:, 0] > 2.5) & (c[:, 0] < 7.5))
        assert np.all((c[:, 1] > 1.0) & (c[:, 1] < 3.0))
        assert np.all((c[:, 2] > 1.5) & (c[:, 2] < 4.5))
        assert np.all((c[:, 3] > 2.0) & (c[:, 3] < 6.0))

    def test_shapes(self):
        ds = gen_helicoid_dataset(n=5, sigma=0.1, grid_i=7, grid_j=9, seed=0)
        assert ds.x.shape == (5, 4, 9)
        assert ds.y.shape == (5, 2, 7, 9)


class TestDatasetBundles:
    def test_save_load_round_trip(self, tmp_path):
        ds = gen_waterdrop_dataset(n=6, sigma=0.1, grid_i=5, grid_j=5, seed=21)
        save_dataset(ds, tmp_path / "ds")
        back = load_dataset(tmp_path / "ds")
        assert back.x == ds.x and back.y == ds.y
        assert back.meta.generator == "waterdrop"
        assert back.meta.seed == 21

    def test_regenerate_from_metadata_bit_exact(self, tmp_path):
        for gen, fn in (("waterdrop", gen_waterdrop_dataset),
                        ("helicoid", gen_helicoid_dataset)):
            ds = fn(n=4, sigma=0.3, grid_i=6, grid_j=6, seed=33)
            save_dataset(ds, tmp_path / gen)
            back = load_dataset(tmp_path / gen)
            regen = regenerate(back.meta)
            assert regen.x == ds.x and regen.y == ds.y

    def test_sample_count_mismatch_rejected(self):
        from trnn.tensor import DenseTensor

        with pytest.raises(ConfigError, match="samples"):
            Dataset(x=DenseTensor.zeros((3, 2)), y=DenseTensor.zeros((4, 2)))
