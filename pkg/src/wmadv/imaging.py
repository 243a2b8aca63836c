"""Image decode/encode, resizing, and channel plumbing.

All pixel math in this package happens on float64 planes in the nominal
range [0, 255]. Values leave that range freely during processing; they
are clamped and rounded exactly once, at PNG encode time (or explicitly
via :func:`quantize`). PNG is the only output format because it is
lossless; JPEG is accepted on the read side only.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, DimensionError

__all__ = [
    "ImageTensor",
    "SizePolicy",
    "decode",
    "encode_png",
    "encode_png_gray",
    "merge",
    "psnr",
    "quantize",
    "resize",
    "split",
]


class ImageTensor:
    """Three float64 planes (r, g, b) of equal shape, read-only.

    The backing array has shape (3, height, width). Construction copies
    and freezes the data so instances can be shared between threads.
    """

    __slots__ = ("planes",)

    def __init__(self, planes: np.ndarray):
        arr = np.asarray(planes, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] != 3:
            raise DimensionError(f"expected (3, h, w) planes, got shape {arr.shape}")
        if arr.shape[1] < 1 or arr.shape[2] < 1:
            raise DimensionError(f"image must be at least 1x1, got shape {arr.shape}")
        arr = np.ascontiguousarray(arr).copy()
        arr.setflags(write=False)
        self.planes = arr

    @property
    def height(self) -> int:
        return self.planes.shape[1]

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    @property
    def r(self) -> np.ndarray:
        return self.planes[0]

    @property
    def g(self) -> np.ndarray:
        return self.planes[1]

    @property
    def b(self) -> np.ndarray:
        return self.planes[2]

    def __repr__(self) -> str:  # pragma: no cover
        return f"ImageTensor({self.width}x{self.height})"


@dataclass(frozen=True)
class SizePolicy:
    """Working sizes for hosts and watermarks.

    host_size must be divisible by 8 (three dyadic halvings) and
    wm_size_dwt must equal host_size / 4, so the host's third-level
    approximation band and the watermark's first-level approximation
    band have identical dimensions. DCT watermarks are resized to the
    full host size.
    """

    host_size: int = 256
    wm_size_dwt: int = 64

    def __post_init__(self):
        if self.host_size < 8 or self.host_size % 8 != 0:
            raise DimensionError(f"host_size must be a positive multiple of 8, got {self.host_size}")
        if self.wm_size_dwt % 2 != 0:
            raise DimensionError(f"wm_size_dwt must be even, got {self.wm_size_dwt}")
        if self.wm_size_dwt * 4 != self.host_size:
            raise DimensionError(
                f"wm_size_dwt must be host_size/4, got {self.wm_size_dwt} for host {self.host_size}"
            )

    @property
    def wm_size_dct(self) -> int:
        return self.host_size


def decode(data: bytes) -> ImageTensor:
    """Decode PNG or JPEG bytes into an ImageTensor.

    Grayscale inputs are replicated across all three planes; any alpha
    channel is discarded. Raises DecodeError (with the underlying cause)
    for truncated or unrecognized inputs.
    """
    try:
        with Image.open(io.BytesIO(data)) as im:
            im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float64)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"cannot decode image: {exc}") from exc
    return ImageTensor(np.transpose(arr, (2, 0, 1)))


def _quantize_array(planes: np.ndarray) -> np.ndarray:
    # Clamp to [0, 255] then round half away from zero; after clamping all
    # values are non-negative so floor(x + 0.5) implements that rounding.
    clamped = np.clip(planes, 0.0, 255.0)
    return np.floor(clamped + 0.5)


def quantize(img: ImageTensor) -> ImageTensor:
    """Clamp to [0, 255] and round half away from zero (still float64)."""
    return ImageTensor(_quantize_array(img.planes))


def encode_png(img: ImageTensor) -> bytes:
    """Encode to PNG bytes, quantizing to 8-bit exactly once."""
    q = _quantize_array(img.planes).astype(np.uint8)
    pil = Image.fromarray(np.transpose(q, (1, 2, 0)), mode="RGB")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def encode_png_gray(plane: np.ndarray) -> bytes:
    """Encode a single plane as a grayscale PNG (same quantization rule)."""
    q = _quantize_array(np.asarray(plane, dtype=np.float64)).astype(np.uint8)
    pil = Image.fromarray(q, mode="L")
    buf = io.BytesIO()
    pil.save(buf, format="PNG")
    return buf.getvalue()


def _resize_axis(arr: np.ndarray, out_len: int, axis: int) -> np.ndarray:
    in_len = arr.shape[axis]
    if in_len == out_len:
        return arr
    # Half-pixel-center coordinate mapping with edge clamping.
    src = (np.arange(out_len, dtype=np.float64) + 0.5) * (in_len / out_len) - 0.5
    src = np.clip(src, 0.0, in_len - 1.0)
    lo = np.floor(src).astype(np.intp)
    hi = np.minimum(lo + 1, in_len - 1)
    w = src - lo
    shape = [1] * arr.ndim
    shape[axis] = out_len
    w = w.reshape(shape)
    a = np.take(arr, lo, axis=axis)
    b = np.take(arr, hi, axis=axis)
    return a * (1.0 - w) + b * w


def resize(img: ImageTensor, width: int, height: int) -> ImageTensor:
    """Bilinear resize, separable, deterministic.

    Sample coordinates use half-pixel centers and clamp at the edges, so
    constant images stay constant (to float rounding) and a 2x2 -> 1x1
    reduction is the plain average of the four pixels.
    """
    if width < 1 or height < 1:
        raise DimensionError(f"target size must be >= 1, got {width}x{height}")
    planes = _resize_axis(img.planes, height, axis=1)
    planes = _resize_axis(planes, width, axis=2)
    return ImageTensor(planes)


def split(img: ImageTensor) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return the (r, g, b) planes as read-only float64 views."""
    return img.planes[0], img.planes[1], img.planes[2]


def merge(r: np.ndarray, g: np.ndarray, b: np.ndarray) -> ImageTensor:
    """Stack three equally-shaped planes back into an ImageTensor."""
    r = np.asarray(r, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if not (r.shape == g.shape == b.shape) or r.ndim != 2:
        raise DimensionError(
            f"merge needs three equal 2-d planes, got {r.shape}, {g.shape}, {b.shape}"
        )
    return ImageTensor(np.stack([r, g, b]))


def psnr(a: ImageTensor, b: ImageTensor) -> float:
    """Peak signal-to-noise ratio between two quantized images, in dB."""
    if a.planes.shape != b.planes.shape:
        raise DimensionError(f"shape mismatch: {a.planes.shape} vs {b.planes.shape}")
    qa = _quantize_array(a.planes)
    qb = _quantize_array(b.planes)
    mse = float(np.mean((qa - qb) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(255.0 * 255.0 / mse)
