"""Dense N-order tensor value type and the multilinear operators built on it.

Conventions used throughout the package:

* storage is a flat float64 buffer in row-major (C) order with an explicit
  shape vector; the last index varies fastest;
* modes are numbered 1..N in every public signature, so "mode 1" is the
  first axis (the sample axis in network code);
* all operations are pure and return fresh tensors; a ``DenseTensor`` is
  immutable once constructed.
"""

from __future__ import annotations

import math

import numpy as np

from .exceptions import DataFormatError, ShapeError

DTF_MAGIC = "DTF1"


class DenseTensor:
    """Immutable dense real tensor with explicit shape and row-major storage.

    Parameters
    ----------
    array : array-like
        Anything ``np.asarray`` accepts.  Copied to a C-ordered float64
        buffer.  Must have order >= 1, every extent >= 1, and only finite
        entries.
    """

    __slots__ = ("_array",)

    def __init__(self, array):
        arr = np.array(array, dtype=np.float64, order="C", copy=True)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if arr.size == 0:
            raise ShapeError(f"tensor extents must all be >= 1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ShapeError("tensor entries must be finite (no NaN/Inf)")
        arr.flags.writeable = False
        object.__setattr__(self, "_array", arr)

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "DenseTensor":
        # Trusted constructor for library-produced results: skips validation,
        # avoids the copy when the buffer is already owned and C-ordered.
        if not (arr.flags.c_contiguous and arr.dtype == np.float64):
            arr = np.ascontiguousarray(arr, dtype=np.float64)
        obj = object.__new__(cls)
        arr.flags.writeable = False
        object.__setattr__(obj, "_array", arr)
        return obj

    @classmethod
    def zeros(cls, shape) -> "DenseTensor":
        return cls._wrap(np.zeros(shape, dtype=np.float64))

    @property
    def shape(self) -> tuple[int, ...]:
        return self._array.shape

    @property
    def order(self) -> int:
        return self._array.ndim

    @property
    def size(self) -> int:
        return self._array.size

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the entries (read-only)."""
        return self._array.reshape(-1)

    def to_numpy(self) -> np.ndarray:
        """Read-only ndarray view of the tensor."""
        return self._array

    def __eq__(self, other) -> bool:
        if not isinstance(other, DenseTensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._array, other._array)

    def __hash__(self):  # immutable but not hashable by content
        return id(self)

    def __repr__(self) -> str:
        return f"DenseTensor(shape={self.shape})"


def as_array(t) -> np.ndarray:
    """Accept a DenseTensor or array-like, return a float64 ndarray."""
    if isinstance(t, DenseTensor):
        return t.to_numpy()
    return np.asarray(t, dtype=np.float64)


def frobenius_norm(t: DenseTensor) -> float:
    """Square root of the sum of squared entries."""
    return float(np.linalg.norm(as_array(t).reshape(-1)))


def mode_n_product(t: DenseTensor, m, n: int) -> DenseTensor:
    """Multiply ``t`` along mode ``n`` (1-based) by the matrix ``m``.

    ``m`` has shape (J, I_n) where I_n is the extent of ``t`` at mode ``n``;
    the result replaces that extent by J and leaves every other mode alone.
    Entry (i_1..j..i_N) is the sum over i_n of t[i_1..i_n..i_N] * m[j, i_n].
    """
    x = as_array(t)
    mat = np.asarray(m, dtype=np.float64)
    if mat.ndim != 2:
        raise ShapeError(f"mode-{n} factor must be a matrix, got order {mat.ndim}")
    if not 1 <= n <= x.ndim:
        raise ShapeError(f"mode {n} out of range for order-{x.ndim} tensor")
    axis = n - 1
    if mat.shape[1] != x.shape[axis]:
        raise ShapeError(
            f"mode-{n} extent {x.shape[axis]} does not match factor column count "
            f"{mat.shape[1]} (factor shape {mat.shape})"
        )
    out = np.moveaxis(np.tensordot(x, mat, axes=(axis, 1)), -1, axis)
    return DenseTensor._wrap(out)


def contraction(x: DenseTensor, c: DenseTensor) -> DenseTensor:
    """Einstein contraction of ``x`` against the leading modes of ``c``.

    With ``x`` of order l and ``c`` of order l+d whose first l extents equal
    the extents of ``x``, the result has the trailing d extents of ``c``:
    every shared index is summed out.
    """
    xa, ca = as_array(x), as_array(c)
    if ca.ndim <= xa.ndim:
        raise ShapeError(
            f"contraction core must have higher order than the input: "
            f"got orders {ca.ndim} and {xa.ndim}"
        )
    lead = ca.shape[: xa.ndim]
    if lead != xa.shape:
        raise ShapeError(
            f"leading core extents {lead} do not match input extents {xa.shape}"
        )
    out_shape = ca.shape[xa.ndim :]
    out = xa.reshape(1, -1) @ ca.reshape(xa.size, -1)
    return DenseTensor._wrap(out.reshape(out_shape))


def tucker_reconstruct(core: DenseTensor, factors) -> DenseTensor:
    """Multilinear product core x_1 U_1 x_2 U_2 ... x_N U_N.

    ``factors[k]`` has shape (I_k, r_k) with r_k the core extent at mode k+1.
    """
    ca = as_array(core)
    factors = list(factors)
    if len(factors) != ca.ndim:
        raise ShapeError(
            f"need one factor per mode: core order {ca.ndim}, got {len(factors)}"
        )
    out = DenseTensor._wrap(ca)
    for k, u in enumerate(factors, start=1):
        out = mode_n_product(out, u, k)
    return out


def write_dtf(t: DenseTensor, path) -> None:
    """Write a tensor in the dtf format.

    Layout: ASCII header line ``DTF1 <order> <extent_1> ... <extent_N>``
    followed by the little-endian float64 payload in row-major order.
    """
    arr = as_array(t)
    header = " ".join([DTF_MAGIC, str(arr.ndim)] + [str(e) for e in arr.shape])
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_dtf(path) -> DenseTensor:
    """Read a dtf file, rejecting malformed headers and payload-size mismatches."""
    with open(path, "rb") as fh:
        raw = fh.read()
    nl = raw.find(b"\n")
    if nl < 0:
        raise DataFormatError(f"{path}: missing dtf header line")
    try:
        fields = raw[:nl].decode("ascii").split()
    except UnicodeDecodeError as exc:
        raise DataFormatError(f"{path}: non-ASCII dtf header") from exc
    if not fields or fields[0] != DTF_MAGIC:
        raise DataFormatError(f"{path}: bad magic, expected {DTF_MAGIC}")
    try:
        order = int(fields[1])
        extents = tuple(int(e) for e in fields[2:])
    except (IndexError, ValueError) as exc:
        raise DataFormatError(f"{path}: malformed dtf header") from exc
    if order < 1 or len(extents) != order or any(e < 1 for e in extents):
        raise DataFormatError(f"{path}: inconsistent dtf header {fields}")
    payload = raw[nl + 1 :]
    expected = 8 * math.prod(extents)
    if len(payload) != expected:
        raise DataFormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected} "
            f"for extents {extents}"
        )
    arr = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(extents)
    return DenseTensor(arr)
