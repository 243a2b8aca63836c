"""Independent reference implementations used only by the test suite.

Everything here is written for obviousness, not speed: explicit matrix
products, O(n^4) double sums, per-pixel loops. The production code must
agree with these within the tolerances asserted by the tests; nothing in
src/ may import this module.
"""

from __future__ import annotations

import math

import numpy as np


def haar_analysis_matrix(n: int) -> np.ndarray:
    """Single-level orthonormal Haar analysis matrix, shape (n, n).

    Rows 0..n/2-1 average adjacent pairs, rows n/2..n-1 difference them,
    both scaled by 1/sqrt(2).
    """
    assert n % 2 == 0
    w = np.zeros((n, n))
    s = 1.0 / math.sqrt(2.0)
    for i in range(n // 2):
        w[i, 2 * i] = s
        w[i, 2 * i + 1] = s
        w[n // 2 + i, 2 * i] = s
        w[n // 2 + i, 2 * i + 1] = -s
    return w


def haar_pyramid_matrix_form(plane: np.ndarray, levels: int):
    """Multilevel Haar pyramid via explicit matrix products.

    Returns (ll, details) with details[k] = (lh, hl, hh) for level k+1,
    finest first. Row index is vertical; the left factor W acts on rows,
    so the low-vertical/high-horizontal quadrant is the lh band.
    """
    ll = np.asarray(plane, dtype=np.float64)
    details = []
    for _ in range(levels):
        n = ll.shape[0]
        assert ll.shape == (n, n) and n % 2 == 0
        w = haar_analysis_matrix(n)
        y = w @ ll @ w.T
        m = n // 2
        details.append((y[:m, m:], y[m:, :m], y[m:, m:]))
        ll = y[:m, :m]
    return ll, details


def haar_reconstruct_matrix_form(ll: np.ndarray, details) -> np.ndarray:
    """Inverse of haar_pyramid_matrix_form (synthesis = transpose)."""
    plane = np.asarray(ll, dtype=np.float64)
    for lh, hl, hh in reversed(details):
        m = plane.shape[0]
        y = np.empty((2 * m, 2 * m))
        y[:m, :m] = plane
        y[:m, m:] = lh
        y[m:, :m] = hl
        y[m:, m:] = hh
        w = haar_analysis_matrix(2 * m)
        plane = w.T @ y @ w
    return plane


def dct2_double_sum(plane: np.ndarray) -> np.ndarray:
    """Orthonormal 2-d DCT-II straight from the textbook double sum."""
    plane = np.asarray(plane, dtype=np.float64)
    m, n = plane.shape
    out = np.zeros((m, n))
    for u in range(m):
        au = math.sqrt(1.0 / m) if u == 0 else math.sqrt(2.0 / m)
        for v in range(n):
            av = math.sqrt(1.0 / n) if v == 0 else math.sqrt(2.0 / n)
            acc = 0.0
            for x in range(m):
                cu = math.cos((2 * x + 1) * u * math.pi / (2 * m))
                for y in range(n):
                    cv = math.cos((2 * y + 1) * v * math.pi / (2 * n))
                    acc += plane[x, y] * cu * cv
            out[u, v] = au * av * acc
    return out


def idct2_double_sum(coeffs: np.ndarray) -> np.ndarray:
    """Orthonormal 2-d inverse DCT (type III) as an explicit double sum."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    m, n = coeffs.shape
    out = np.zeros((m, n))
    for x in range(m):
        for y in range(n):
            acc = 0.0
            for u in range(m):
                au = math.sqrt(1.0 / m) if u == 0 else math.sqrt(2.0 / m)
                cu = math.cos((2 * x + 1) * u * math.pi / (2 * m))
                for v in range(n):
                    av = math.sqrt(1.0 / n) if v == 0 else math.sqrt(2.0 / n)
                    cv = math.cos((2 * y + 1) * v * math.pi / (2 * n))
                    acc += au * av * coeffs[u, v] * cu * cv
            out[x, y] = acc
    return out


def bilinear_resize_loop(plane: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Per-pixel bilinear resize with half-pixel centers and edge clamping."""
    plane = np.asarray(plane, dtype=np.float64)
    in_h, in_w = plane.shape
    out = np.zeros((out_h, out_w))
    for oy in range(out_h):
        sy = min(max((oy + 0.5) * in_h / out_h - 0.5, 0.0), in_h - 1.0)
        y0 = int(math.floor(sy))
        y1 = min(y0 + 1, in_h - 1)
        wy = sy - y0
        for ox in range(out_w):
            sx = min(max((ox + 0.5) * in_w / out_w - 0.5, 0.0), in_w - 1.0)
            x0 = int(math.floor(sx))
            x1 = min(x0 + 1, in_w - 1)
            wx = sx - x0
            top = plane[y0, x0] * (1 - wx) + plane[y0, x1] * wx
            bot = plane[y1, x0] * (1 - wx) + plane[y1, x1] * wx
            out[oy, ox] = top * (1 - wy) + bot * wy
    return out


def sobel_magnitude_loop(plane: np.ndarray) -> np.ndarray:
    """3x3 Sobel gradient magnitude with edge-replicated borders."""
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    kx = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]]
    ky = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]]
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            gx = 0.0
            gy = 0.0
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    yy = min(max(y + dy, 0), h - 1)
                    xx = min(max(x + dx, 0), w - 1)
                    gx += kx[dy + 1][dx + 1] * plane[yy, xx]
                    gy += ky[dy + 1][dx + 1] * plane[yy, xx]
            out[y, x] = math.hypot(gx, gy)
    return out


def dwt_constant_output(c_host: float, c_wm: float, strength: float, times: int, sign: float) -> float:
    """Closed-form pixel value after wavelet embedding of constant images.

    A constant watermark plane of value c has first-level approximation
    2c; the host's third-level approximation is 8*c_host and the inverse
    transform of a constant pyramid divides by 8.
    """
    return c_host + sign * times * strength * (2.0 * c_wm) / 8.0
