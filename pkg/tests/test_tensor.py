"""Tensor-core operator tests against brute-force nested-loop oracles."""

import itertools
import math

import numpy as np
import pytest

from trnn.exceptions import DataFormatError, ShapeError
from trnn.tensor import (
    DenseTensor,
    contraction,
    frobenius_norm,
    mode_n_product,
    read_dtf,
    tucker_reconstruct,
    write_dtf,
)


# ---------------------------------------------------------------------------
# Independent oracles: literal index-formula implementations, pure Python.
# ---------------------------------------------------------------------------

def oracle_mode_n_product(x: np.ndarray, m: np.ndarray, n: int) -> np.ndarray:
    axis = n - 1
    out_shape = list(x.shape)
    out_shape[axis] = m.shape[0]
    out = np.zeros(out_shape)
    for idx in np.ndindex(*out_shape):
        acc = 0.0
        for i_n in range(x.shape[axis]):
            src = list(idx)
            src[axis] = i_n
            acc += x[tuple(src)] * m[idx[axis], i_n]
        out[idx] = acc
    return out


def oracle_contraction(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    out_shape = c.shape[x.ndim:]
    out = np.zeros(out_shape)
    for q in np.ndindex(*out_shape):
        acc = 0.0
        for p in np.ndindex(*x.shape):
            acc += x[p] * c[p + q]
        out[q] = acc
    return out


def oracle_tucker(core: np.ndarray, factors) -> np.ndarray:
    out = core
    for k, u in enumerate(factors, start=1):
        out = oracle_mode_n_product(out, np.asarray(u, dtype=float), k)
    return out


def rng_tensor(rng, shape):
    return DenseTensor(rng.standard_normal(shape))


# ---------------------------------------------------------------------------
# frobenius_norm
# ---------------------------------------------------------------------------

class TestFrobeniusNorm:
    def test_zero_tensor(self):
        for shape in [(1,), (3,), (2, 2), (2, 3, 4)]:
            assert frobenius_norm(DenseTensor.zeros(shape)) == 0.0

    def test_all_ones_2x2(self):
        assert frobenius_norm(DenseTensor(np.ones((2, 2)))) == pytest.approx(2.0)

    def test_direct_summation(self):
        t = DenseTensor(np.arange(1.0, 7.0).reshape(2, 3))
        assert frobenius_norm(t) == pytest.approx(math.sqrt(91.0), rel=1e-15)

    def test_squared_norm_equals_self_contraction(self):
        # ||t||^2 == contraction of t with itself viewed as a (shape, 1) core
        rng = np.random.default_rng(7)
        for shape in [(3,), (2, 4), (2, 3, 2)]:
            t = rng_tensor(rng, shape)
            core = DenseTensor(t.to_numpy().reshape(shape + (1,)))
            value = contraction(t, core).data[0]
            np.testing.assert_allclose(value, frobenius_norm(t) ** 2, rtol=1e-12)


# ---------------------------------------------------------------------------
# mode_n_product
# ---------------------------------------------------------------------------

class TestModeNProduct:
    def test_identity_is_identity_map(self):
        rng = np.random.default_rng(0)
        t = rng_tensor(rng, (2, 3, 4))
        for n in (1, 2, 3):
            out = mode_n_product(t, np.eye(t.shape[n - 1]), n)
            assert np.array_equal(out.to_numpy(), t.to_numpy())

    def test_row_sum_example(self):
        t = DenseTensor([[1.0, 2.0], [3.0, 4.0]])
        out = mode_n_product(t, np.array([[1.0, 1.0]]), 1)
        assert out.shape == (1, 2)
        np.testing.assert_allclose(out.to_numpy(), [[4.0, 6.0]])

    def test_shape_rule(self):
        rng = np.random.default_rng(1)
        t = rng_tensor(rng, (2, 3, 4))
        out = mode_n_product(t, rng.standard_normal((5, 3)), 2)
        assert out.shape == (2, 5, 4)

    def test_shape_mismatch_names_mode_and_extents(self):
        t = DenseTensor.zeros((2, 3))
        with pytest.raises(ShapeError, match="mode-2"):
            mode_n_product(t, np.zeros((4, 5)), 2)
        with pytest.raises(ShapeError, match="mode 4"):
            mode_n_product(t, np.zeros((2, 2)), 4)

    def test_distinct_modes_commute(self):
        rng = np.random.default_rng(2)
        t = rng_tensor(rng, (3, 4, 2))
        a = rng.standard_normal((2, 3))
        b = rng.standard_normal((5, 4))
        ab = mode_n_product(mode_n_product(t, a, 1), b, 2)
        ba = mode_n_product(mode_n_product(t, b, 2), a, 1)
        np.testing.assert_allclose(ab.to_numpy(), ba.to_numpy(), rtol=1e-12)

    def test_exhaustive_small_shapes_match_oracle(self):
        # Every shape of order <= 3 with extents <= 4 (all have <= 64 entries),
        # plus order-4 shapes with extents <= 2; matrices J x I_n for J <= 3.
        rng = np.random.default_rng(3)
        shapes = [
            s
            for order in (1, 2, 3)
            for s in itertools.product(range(1, 5), repeat=order)
        ]
        shapes += list(itertools.product(range(1, 3), repeat=4))
        for shape in shapes:
            x = rng.standard_normal(shape)
            for n in range(1, len(shape) + 1):
                j = int(rng.integers(1, 4))
                m = rng.standard_normal((j, shape[n - 1]))
                got = mode_n_product(DenseTensor(x), m, n).to_numpy()
                np.testing.assert_allclose(
                    got, oracle_mode_n_product(x, m, n), rtol=1e-12, atol=1e-12
                )


# ---------------------------------------------------------------------------
# contraction
# ---------------------------------------------------------------------------

class TestContraction:
    def test_selector_core_copies_one_entry(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(5)
        core = np.zeros((5, 3))
        core[2, 1] = 1.0
        out = contraction(DenseTensor(x), DenseTensor(core)).to_numpy()
        expected = np.zeros(3)
        expected[1] = x[2]
        np.testing.assert_allclose(out, expected)

    def test_hand_computed_example(self):
        x = DenseTensor([[1.0, 2.0], [3.0, 4.0]])
        c = DenseTensor(np.array([[[1.0], [0.0]], [[0.0], [1.0]]]))
        out = contraction(x, c)
        assert out.shape == (1,)
        assert out.data[0] == pytest.approx(5.0)

    def test_shape_rule(self):
        rng = np.random.default_rng(5)
        x = rng_tensor(rng, (2, 3))
        c = rng_tensor(rng, (2, 3, 4, 5))
        assert contraction(x, c).shape == (4, 5)

    def test_order_and_extent_errors(self):
        x = DenseTensor.zeros((2, 3))
        with pytest.raises(ShapeError, match="higher order"):
            contraction(x, DenseTensor.zeros((2, 3)))
        with pytest.raises(ShapeError, match="leading core extents"):
            contraction(x, DenseTensor.zeros((3, 2, 4)))

    def test_bilinear_in_both_arguments(self):
        rng = np.random.default_rng(6)
        x1, x2 = rng.standard_normal((2, 3)), rng.standard_normal((2, 3))
        c1, c2 = rng.standard_normal((2, 3, 4)), rng.standard_normal((2, 3, 4))
        a, b = 1.7, -0.3
        lhs = contraction(DenseTensor(a * x1 + b * x2), DenseTensor(c1)).to_numpy()
        rhs = a * contraction(DenseTensor(x1), DenseTensor(c1)).to_numpy() + (
            b * contraction(DenseTensor(x2), DenseTensor(c1)).to_numpy()
        )
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12)
        lhs = contraction(DenseTensor(x1), DenseTensor(a * c1 + b * c2)).to_numpy()
        rhs = a * contraction(DenseTensor(x1), DenseTensor(c1)).to_numpy() + (
            b * contraction(DenseTensor(x1), DenseTensor(c2)).to_numpy()
        )
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12)

    def test_exhaustive_small_shapes_match_oracle(self):
        # All input shapes of order <= 2 with extents <= 4 against cores that
        # append 1 or 2 trailing modes with extents <= 3 (cores <= 144 entries).
        rng = np.random.default_rng(8)
        x_shapes = [
            s
            for order in (1, 2)
            for s in itertools.product(range(1, 5), repeat=order)
        ]
        q_shapes = [
            s
            for order in (1, 2)
            for s in itertools.product(range(1, 4), repeat=order)
        ]
        for xs in x_shapes:
            x = rng.standard_normal(xs)
            for qs in q_shapes:
                c = rng.standard_normal(xs + qs)
                got = contraction(DenseTensor(x), DenseTensor(c)).to_numpy()
                np.testing.assert_allclose(
                    got, oracle_contraction(x, c), rtol=1e-12, atol=1e-12
                )


# ---------------------------------------------------------------------------
# tucker_reconstruct
# ---------------------------------------------------------------------------

class TestTuckerReconstruct:
    def test_identity_factors(self):
        rng = np.random.default_rng(9)
        core = rng_tensor(rng, (2, 3, 2))
        out = tucker_reconstruct(core, [np.eye(2), np.eye(3), np.eye(2)])
        assert np.array_equal(out.to_numpy(), core.to_numpy())

    def test_outer_product_example(self):
        core = DenseTensor([[2.0]])
        u1 = np.array([[1.0], [2.0]])
        u2 = np.array([[1.0], [1.0]])
        out = tucker_reconstruct(core, [u1, u2])
        np.testing.assert_allclose(out.to_numpy(), [[2.0, 2.0], [4.0, 4.0]])

    def test_mode_order_does_not_matter(self):
        rng = np.random.default_rng(10)
        core = rng.standard_normal((2, 2, 2))
        factors = [rng.standard_normal((4, 2)) for _ in range(3)]
        full = tucker_reconstruct(DenseTensor(core), factors).to_numpy()
        for perm in itertools.permutations(range(3)):
            out = DenseTensor(core)
            for k in perm:
                out = mode_n_product(out, factors[k], k + 1)
            np.testing.assert_allclose(out.to_numpy(), full, rtol=1e-12)

    def test_factor_count_mismatch(self):
        with pytest.raises(ShapeError, match="one factor per mode"):
            tucker_reconstruct(DenseTensor.zeros((2, 2)), [np.eye(2)])

    def test_small_shapes_match_oracle(self):
        rng = np.random.default_rng(11)
        core_shapes = [
            s
            for order in (1, 2, 3)
            for s in itertools.product(range(1, 4), repeat=order)
        ]
        for cs in core_shapes:
            core = rng.standard_normal(cs)
            factors = [rng.standard_normal((int(rng.integers(1, 5)), r)) for r in cs]
            got = tucker_reconstruct(DenseTensor(core), factors).to_numpy()
            np.testing.assert_allclose(
                got, oracle_tucker(core, factors), rtol=1e-12, atol=1e-12
            )


# ---------------------------------------------------------------------------
# DenseTensor invariants and dtf round trips
# ---------------------------------------------------------------------------

class TestDenseTensor:
    def test_rejects_non_finite(self):
        with pytest.raises(ShapeError, match="finite"):
            DenseTensor([1.0, np.nan])
        with pytest.raises(ShapeError, match="finite"):
            DenseTensor([np.inf])

    def test_data_is_flat_row_major(self):
        t = DenseTensor([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(t.data, [1.0, 2.0, 3.0, 4.0])
        assert t.size == 4 and t.order == 2

    def test_immutable(self):
        t = DenseTensor([[1.0, 2.0], [3.0, 4.0]])
        with pytest.raises(ValueError):
            t.to_numpy()[0, 0] = 9.0


class TestDtfFormat:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(12)
        t = rng_tensor(rng, (3, 4, 2))
        path = tmp_path / "t.dtf"
        write_dtf(t, path)
        back = read_dtf(path)
        assert back.shape == t.shape
        assert np.array_equal(back.to_numpy(), t.to_numpy())

    def test_header_contents(self, tmp_path):
        path = tmp_path / "t.dtf"
        write_dtf(DenseTensor.zeros((2, 3)), path)
        header = path.read_bytes().split(b"\n", 1)[0]
        assert header == b"DTF1 2 2 3"

    def test_rejects_truncated_payload(self, tmp_path):
        path = tmp_path / "t.dtf"
        write_dtf(DenseTensor.zeros((2, 3)), path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-8])
        with pytest.raises(DataFormatError, match="payload"):
            read_dtf(path)

    def test_rejects_trailing_garbage(self, tmp_path):
        path = tmp_path / "t.dtf"
        write_dtf(DenseTensor.zeros((2,)), path)
        path.write_bytes(path.read_bytes() + b"\x00" * 8)
        with pytest.raises(DataFormatError, match="payload"):
            read_dtf(path)

    def test_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "t.dtf"
        path.write_bytes(b"DTX1 1 2\n" + b"\x00" * 16)
        with pytest.raises(DataFormatError, match="magic"):
            read_dtf(path)
