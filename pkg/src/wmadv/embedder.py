"""Frequency-domain watermark embedders.

Two routes, selected per run:

* wavelet: the watermark's first-level approximation band is added into
  the host's third-level approximation band, channel by channel. Signs
  follow a luminance-sensitivity convention: the green channel (to which
  the eye is most sensitive) gets one sign, red and blue the other.
* dct: the watermark's full-frame DCT is added into the host's, all
  channels positive. Because the transform is linear and orthonormal
  this is exactly pixel-domain addition of the scaled watermark.

Repetition (`times`) is applied as a single scaled accumulation, which
is float-identical to repeating the unquantized embedding step. The
`sequential_quantize` mode instead quantizes to 8 bits between rounds,
for fidelity experiments.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DimensionError
from .imaging import ImageTensor, quantize
from .transforms import dct2, dwt2, idct2, idwt2

__all__ = [
    "EmbedAlgo",
    "EmbedParams",
    "PerturbationNorms",
    "SignConvention",
    "DWT_DEFAULT_STRENGTHS",
    "DCT_DEFAULT_STRENGTHS",
    "ENHANCED_STRENGTHS",
    "DWT_DEFAULT_SCHEDULE",
    "DCT_DEFAULT_SCHEDULE",
    "embed",
    "embed_dct",
    "embed_dwt",
    "perturbation_norms",
]

# Default per-channel strengths (r, g, b) and repetition schedules. The
# wavelet route keeps green weakest (4:3:8); the dct route weights green
# even lower (4:1:8). The "enhanced" triple is used with feature-map
# watermarks, whose energy is much sparser than a natural image's.
DWT_DEFAULT_STRENGTHS = (0.04, 0.03, 0.08)
DCT_DEFAULT_STRENGTHS = (0.04, 0.01, 0.08)
ENHANCED_STRENGTHS = (0.08, 0.08, 0.08)
DWT_DEFAULT_SCHEDULE = tuple(range(5, 55, 5))
DCT_DEFAULT_SCHEDULE = tuple(range(1, 11))

_DWT_LEVELS = 3


class EmbedAlgo(enum.Enum):
    DWT = "dwt"
    DCT = "dct"


class SignConvention(enum.Enum):
    """Per-channel embedding signs for the wavelet route (r, g, b)."""

    G_PLUS_RB_MINUS = "g-plus-rb-minus"
    G_MINUS_RB_PLUS = "g-minus-rb-plus"

    def signs(self) -> tuple[float, float, float]:
        if self is SignConvention.G_PLUS_RB_MINUS:
            return (-1.0, 1.0, -1.0)
        return (1.0, -1.0, 1.0)


@dataclass(frozen=True)
class EmbedParams:
    """Per-channel strengths, repetition count, and wavelet signs."""

    strength_r: float
    strength_g: float
    strength_b: float
    times: int = 1
    sign_convention: SignConvention = SignConvention.G_PLUS_RB_MINUS

    def __post_init__(self):
        for name, s in zip("rgb", self.strengths):
            if not np.isfinite(s) or s < 0.0:
                raise ConfigError(f"strength_{name} must be finite and >= 0, got {s}")
        if not isinstance(self.times, int) or self.times < 1:
            raise ConfigError(f"times must be an integer >= 1, got {self.times!r}")

    @property
    def strengths(self) -> tuple[float, float, float]:
        return (self.strength_r, self.strength_g, self.strength_b)


def _check_dwt_dims(host: ImageTensor, wm: ImageTensor) -> None:
    if host.height % 8 or host.width % 8:
        raise DimensionError(f"host {host.width}x{host.height} not divisible by 8")
    if wm.height * 4 != host.height or wm.width * 4 != host.width:
        raise DimensionError(
            f"watermark {wm.width}x{wm.height} must be a quarter of host {host.width}x{host.height}"
        )


def embed_dwt(host: ImageTensor, wm: ImageTensor, params: EmbedParams) -> ImageTensor:
    """Embed into the host's deepest approximation band (float output)."""
    _check_dwt_dims(host, wm)
    signs = params.sign_convention.signs()
    out = np.empty_like(host.planes)
    for k in range(3):
        pyr = dwt2(host.planes[k], _DWT_LEVELS)
        wm_ll = dwt2(wm.planes[k], 1).ll
        shifted = pyr.ll + signs[k] * params.times * params.strengths[k] * wm_ll
        out[k] = idwt2(pyr.with_ll(shifted))
    return ImageTensor(out)


def embed_dct(host: ImageTensor, wm: ImageTensor, params: EmbedParams) -> ImageTensor:
    """Add the watermark's DCT into the host's, all channels positive."""
    if wm.height != host.height or wm.width != host.width:
        raise DimensionError(
            f"watermark {wm.width}x{wm.height} must match host {host.width}x{host.height}"
        )
    out = np.empty_like(host.planes)
    for k in range(3):
        coeffs = dct2(host.planes[k]) + params.times * params.strengths[k] * dct2(wm.planes[k])
        out[k] = idct2(coeffs)
    return ImageTensor(out)


def embed(
    host: ImageTensor,
    wm: ImageTensor,
    params: EmbedParams,
    algo: EmbedAlgo,
    sequential_quantize: bool = False,
) -> ImageTensor:
    """Run one embedding route; optionally quantize between repetitions.

    With sequential_quantize the `times` rounds are applied one at a
    time with an 8-bit clamp-and-round after each, mimicking a pipeline
    that writes the file out between rounds.
    """
    fn = embed_dwt if algo is EmbedAlgo.DWT else embed_dct
    if not sequential_quantize:
        return fn(host, wm, params)
    single = replace(params, times=1)
    cur = host
    for _ in range(params.times):
        cur = quantize(fn(cur, wm, single))
    return cur


@dataclass(frozen=True)
class PerturbationNorms:
    """Distortion of a candidate vs its host, on the quantized 8-bit grid."""

    l2: float
    linf: float
    per_pixel_mean: float


def perturbation_norms(host: ImageTensor, candidate: ImageTensor) -> PerturbationNorms:
    if host.planes.shape != candidate.planes.shape:
        raise DimensionError(
            f"shape mismatch: {host.planes.shape} vs {candidate.planes.shape}"
        )
    diff = quantize(candidate).planes - quantize(host).planes
    absdiff = np.abs(diff)
    return PerturbationNorms(
        l2=float(np.sqrt(np.sum(diff * diff))),
        linf=float(np.max(absdiff)),
        per_pixel_mean=float(np.mean(absdiff)),
    )
