"""Orthonormal Haar wavelets on dyadic grids.

Coefficient ordering for a length-``n`` signal (``n`` a power of two) is
the usual coarse-to-fine layout, 1-based:

* index 1 is the constant (DC) row ``1/sqrt(n)``;
* index ``j = 2**level + shift + 1`` is the wavelet at ``level`` in
  ``[0, log2 n)`` and ``shift`` in ``[0, 2**level)``.  Its support is the
  block of width ``w = n / 2**level`` starting at cell ``shift * w``; it is
  ``+1/sqrt(w)`` on the first half of the block and ``-1/sqrt(w)`` on the
  second half.

Multi-dimensional transforms are separable: the 1-D transform is applied
along every axis, so each coefficient is indexed by a tuple of 1-D
indices and flattened row-major (last axis fastest).
"""

from __future__ import annotations

import math

import numpy as np

_SQRT_HALF = math.sqrt(0.5)


def is_dyadic(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_pow2(n: int) -> int:
    if n < 1:
        raise ValueError(f"length must be >= 1, got {n}")
    return 1 << (int(n) - 1).bit_length()


def padded_ranges(ranges) -> tuple[int, ...]:
    return tuple(next_pow2(r) for r in ranges)


def _check_dyadic(n: int) -> None:
    if not is_dyadic(n):
        raise ValueError(f"length {n} is not a power of two")


def haar_index(j: int) -> tuple[int, int]:
    """Split a 1-based wavelet index ``j >= 2`` into ``(level, shift)``."""
    if j < 2:
        raise ValueError("index 1 is the DC row and has no (level, shift)")
    level = (j - 1).bit_length() - 1
    return level, j - 1 - (1 << level)


def haar_flat_index(level: int, shift: int) -> int:
    return (1 << level) + shift + 1


def haar_matrix(n: int) -> np.ndarray:
    """Dense ``n x n`` Haar matrix; reference use only (``n <= 4096``)."""
    _check_dyadic(n)
    if n > 4096:
        raise ValueError("dense Haar matrix is limited to n <= 4096")
    psi = np.zeros((n, n))
    psi[0, :] = 1.0 / math.sqrt(n)
    for j in range(2, n + 1):
        level, shift = haar_index(j)
        w = n >> level
        start = shift * w
        v = 1.0 / math.sqrt(w)
        psi[j - 1, start : start + w // 2] = v
        psi[j - 1, start + w // 2 : start + w] = -v
    return psi


def fwt(x, axis: int = -1) -> np.ndarray:
    """Forward orthonormal Haar transform along ``axis`` in ``O(n)``."""
    a = np.moveaxis(np.asarray(x, dtype=float), axis, -1)
    n = a.shape[-1]
    _check_dyadic(n)
    out = np.empty_like(a)
    hi = n
    while hi > 1:
        even = a[..., 0::2]
        odd = a[..., 1::2]
        out[..., hi // 2 : hi] = (even - odd) * _SQRT_HALF
        a = (even + odd) * _SQRT_HALF
        hi //= 2
    out[..., 0:1] = a
    return np.moveaxis(out, -1, axis)


def ifwt(alpha, axis: int = -1) -> np.ndarray:
    """Inverse of :func:`fwt`."""
    c = np.moveaxis(np.asarray(alpha, dtype=float), axis, -1)
    n = c.shape[-1]
    _check_dyadic(n)
    a = c[..., 0:1]
    lo = 1
    while lo < n:
        d = c[..., lo : 2 * lo]
        nxt = np.empty(c.shape[:-1] + (2 * lo,))
        nxt[..., 0::2] = (a + d) * _SQRT_HALF
        nxt[..., 1::2] = (a - d) * _SQRT_HALF
        a = nxt
        lo *= 2
    return np.moveaxis(a, -1, axis)


def fwt_nd(x) -> np.ndarray:
    """Separable Haar transform over every axis of ``x``."""
    out = np.asarray(x, dtype=float)
    for axis in range(out.ndim):
        out = fwt(out, axis=axis)
    return out


def ifwt_nd(alpha) -> np.ndarray:
    out = np.asarray(alpha, dtype=float)
    for axis in range(out.ndim):
        out = ifwt(out, axis=axis)
    return out


def haar_matrix_nd(padded) -> np.ndarray:
    """Kronecker product of 1-D Haar matrices (row-major vectorization)."""
    m = np.ones((1, 1))
    for n in padded:
        m = np.kron(m, haar_matrix(n))
    return m


def range_basis_dot_1d(lo, hi, j, n: int) -> np.ndarray:
    """``<1_[lo,hi], psi_j>`` for 1-based inclusive intervals, vectorized.

    ``lo``, ``hi`` and ``j`` broadcast against each other.
    """
    lo = np.asarray(lo, dtype=np.int64)
    hi = np.asarray(hi, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    # frexp exponent is the exact bit length for integers below 2**53
    level = np.frexp(np.maximum(j - 1, 1).astype(float))[1].astype(np.int64) - 1
    shift = j - 1 - (np.int64(1) << level)
    w = n >> level
    start = shift * w  # 0-based first cell of the support
    mid = start + w // 2
    end = start + w
    # convert interval to half-open 0-based [lo-1, hi)
    a = lo - 1
    b = hi
    first = np.clip(np.minimum(b, mid) - np.maximum(a, start), 0, None)
    second = np.clip(np.minimum(b, end) - np.maximum(a, mid), 0, None)
    wavelet = (first - second) / np.sqrt(w)
    dc = (hi - lo + 1) / math.sqrt(n)
    return np.where(j == 1, dc, wavelet)


def unravel_coefficient(flat_index, padded) -> tuple[np.ndarray, ...]:
    """Split 1-based flat coefficient indices into per-axis 1-based indices."""
    idx = np.unravel_index(np.asarray(flat_index, dtype=np.int64) - 1, tuple(padded))
    return tuple(np.asarray(i, dtype=np.int64) + 1 for i in idx)


def range_basis_dot(lows, highs, flat_index, padded) -> np.ndarray:
    """Inner products between range indicators and separable Haar atoms.

    ``lows``/``highs`` have shape ``(N, d)``; ``flat_index`` has shape
    ``(K,)``.  Returns an ``(N, K)`` matrix.  Each entry is the product of
    the per-dimension 1-D inner products, so the cost is ``O(N K d)``.
    """
    lows = np.atleast_2d(np.asarray(lows, dtype=np.int64))
    highs = np.atleast_2d(np.asarray(highs, dtype=np.int64))
    per_axis = unravel_coefficient(np.atleast_1d(flat_index), padded)
    out = np.ones((lows.shape[0], per_axis[0].shape[0]))
    for axis, n in enumerate(padded):
        out *= range_basis_dot_1d(
            lows[:, axis, None], highs[:, axis, None], per_axis[axis][None, :], n
        )
    return out


def weighted_query_sum(lows, highs, weights, padded) -> np.ndarray:
    """Dense tensor ``sum_i weights[i] * 1_{q_i}`` on the padded grid.

    Built with a d-dimensional difference array and one cumulative sum per
    axis, so the cost is ``O(N 2^d + prod(padded))``.
    """
    lows = np.asarray(lows, dtype=np.int64)
    highs = np.asarray(highs, dtype=np.int64)
    weights = np.asarray(weights, dtype=float)
    d = len(padded)
    diff = np.zeros(tuple(n + 1 for n in padded))
    for corner in range(2**d):
        idx = []
        sign = 1.0
        for axis in range(d):
            if corner >> axis & 1:
                idx.append(highs[:, axis])
                sign = -sign
            else:
                idx.append(lows[:, axis] - 1)
        np.add.at(diff, tuple(idx), sign * weights)
    for axis in range(d):
        diff = np.cumsum(diff, axis=axis)
    return diff[tuple(slice(0, n) for n in padded)]


def count_pieces(x, rtol: float = 1e-9) -> int:
    """Number of maximal constant runs in a 1-D signal (with tolerance)."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return 0
    scale = max(1.0, float(np.max(np.abs(x))))
    return 1 + int(np.count_nonzero(np.abs(np.diff(x)) > rtol * scale))
