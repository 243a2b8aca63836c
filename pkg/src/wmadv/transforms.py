"""Orthonormal 2-D transforms: multilevel Haar wavelet and DCT-II/III.

Both transforms use the orthonormal normalization so energy is preserved
and the inverse is the transpose. For the Haar analysis step each 2x2
block [[a, b], [c, d]] maps to

    ll = (a + b + c + d) / 2      lh = (a - b + c - d) / 2
    hl = (a + b - c - d) / 2      hh = (a - b - c + d) / 2

so a constant plane of value c has ll == 2c per level (DC gain 2). The
pyramid recurses on ll only. The DCT pair delegates to scipy's pocketfft
(type II forward, type III inverse, norm="ortho").
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as _fft

from .errors import DimensionError

__all__ = ["WaveletPyramid", "dwt2", "idwt2", "dct2", "idct2"]


@dataclass(frozen=True)
class WaveletPyramid:
    """Multilevel 2-D Haar decomposition.

    details[k] holds the (lh, hl, hh) bands of level k+1, finest first;
    ll is the approximation band of the deepest level. Band dimensions at
    level k are the input's divided by 2**k.
    """

    levels: int
    ll: np.ndarray
    details: tuple[tuple[np.ndarray, np.ndarray, np.ndarray], ...]

    def with_ll(self, ll: np.ndarray) -> "WaveletPyramid":
        """Copy of the pyramid with the approximation band replaced."""
        ll = np.asarray(ll, dtype=np.float64)
        if ll.shape != self.ll.shape:
            raise DimensionError(f"ll shape {ll.shape} != {self.ll.shape}")
        return WaveletPyramid(self.levels, ll, self.details)


def _haar_step(plane: np.ndarray):
    a = plane[0::2, 0::2]
    b = plane[0::2, 1::2]
    c = plane[1::2, 0::2]
    d = plane[1::2, 1::2]
    ll = (a + b + c + d) * 0.5
    lh = (a - b + c - d) * 0.5
    hl = (a + b - c - d) * 0.5
    hh = (a - b - c + d) * 0.5
    return ll, lh, hl, hh


def _haar_step_inv(ll, lh, hl, hh) -> np.ndarray:
    h, w = ll.shape
    out = np.empty((2 * h, 2 * w), dtype=np.float64)
    out[0::2, 0::2] = (ll + lh + hl + hh) * 0.5
    out[0::2, 1::2] = (ll - lh + hl - hh) * 0.5
    out[1::2, 0::2] = (ll + lh - hl - hh) * 0.5
    out[1::2, 1::2] = (ll - lh - hl + hh) * 0.5
    return out


def dwt2(plane: np.ndarray, levels: int) -> WaveletPyramid:
    """Decompose a 2-d plane into a `levels`-deep Haar pyramid.

    Both dimensions must be divisible by 2**levels.
    """
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise DimensionError(f"expected a 2-d plane, got shape {plane.shape}")
    if levels < 1:
        raise DimensionError(f"levels must be >= 1, got {levels}")
    div = 1 << levels
    h, w = plane.shape
    if h % div or w % div:
        raise DimensionError(f"plane {h}x{w} not divisible by 2**{levels}")
    details = []
    ll = plane
    for _ in range(levels):
        ll, lh, hl, hh = _haar_step(ll)
        details.append((lh, hl, hh))
    return WaveletPyramid(levels, ll, tuple(details))


def idwt2(pyr: WaveletPyramid) -> np.ndarray:
    """Invert :func:`dwt2`; exact up to float rounding."""
    plane = np.asarray(pyr.ll, dtype=np.float64)
    for lh, hl, hh in reversed(pyr.details):
        if lh.shape != plane.shape:
            raise DimensionError(f"detail band {lh.shape} inconsistent with ll {plane.shape}")
        plane = _haar_step_inv(plane, lh, hl, hh)
    return plane


def dct2(plane: np.ndarray) -> np.ndarray:
    """Orthonormal 2-d DCT-II coefficients of a plane."""
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise DimensionError(f"expected a 2-d plane, got shape {plane.shape}")
    return _fft.dctn(plane, type=2, norm="ortho")


def idct2(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of :func:`dct2` (orthonormal DCT-III)."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.ndim != 2:
        raise DimensionError(f"expected a 2-d coefficient matrix, got shape {coeffs.shape}")
    return _fft.idctn(coeffs, type=2, norm="ortho")
