"""Photometric perturbations and their parameter presets.

Ten transform kinds are supported: five factor-controlled enhancements
(brightness, contrast, hue, saturation, sharpness), Gaussian blur and its
deblur counterpart, and three parameter-light histogram operations
(auto-contrast, equalize, posterize).

The enhancement kinds share one convention: the output interpolates between a
"degenerate" image and the input, ``out = degenerate + c * (img - degenerate)``,
so c=1 is the identity, c=0 collapses to the degenerate image, and c>1
exaggerates. c=1 short-circuits to the input buffer so the identity is
bit-exact rather than merely close.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import ParameterError, ShapeError
from .imaging import (
    ImageBuffer,
    PixelU8View,
    from_u8,
    hsv_to_rgb,
    luminance,
    rgb_to_hsv,
    to_u8,
)

# Canonical kind order; sampling and serialization both rely on it being fixed.
KINDS = (
    "brightness",
    "contrast",
    "hue",
    "saturation",
    "sharpness",
    "blur",
    "deblur",
    "auto_contrast",
    "equalize",
    "posterize",
)

ENHANCEMENT_KINDS = ("brightness", "contrast", "hue", "saturation", "sharpness")
KERNEL_KINDS = ("blur", "deblur")

_SMOOTH_KERNEL = np.array([[1, 1, 1], [1, 5, 1], [1, 1, 1]], dtype=np.float64) / 13.0


@dataclass(frozen=True)
class TransformSpec:
    """One sampled perturbation: a kind plus its parameters."""

    kind: str
    factor: Optional[float] = None
    kernel: Optional[tuple[int, int]] = None
    bits: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ParameterError(f"unknown transform kind {self.kind!r}")
        if self.kind in ENHANCEMENT_KINDS:
            if self.factor is None or self.factor < 0.0:
                raise ParameterError(f"{self.kind} needs a factor >= 0, got {self.factor}")
        elif self.kind in KERNEL_KINDS:
            if self.kernel is None:
                raise ParameterError(f"{self.kind} needs a (k1, k2) kernel")
            for k in self.kernel:
                if k < 3 or k % 2 == 0:
                    raise ParameterError(f"kernel sizes must be odd and >= 3, got {self.kernel}")
        elif self.kind == "posterize":
            if self.bits is None or not 1 <= self.bits <= 6:
                raise ParameterError(f"posterize bits must be in 1..6, got {self.bits}")

    def to_json_dict(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.factor is not None:
            out["factor"] = self.factor
        if self.kernel is not None:
            out["kernel"] = list(self.kernel)
        if self.bits is not None:
            out["bits"] = self.bits
        return out

    @classmethod
    def from_json_dict(cls, obj: dict) -> "TransformSpec":
        kernel = obj.get("kernel")
        return cls(
            kind=obj["kind"],
            factor=obj.get("factor"),
            kernel=tuple(kernel) if kernel is not None else None,
            bits=obj.get("bits"),
        )


@dataclass(frozen=True)
class DiversityPreset:
    """Per-kind parameter ranges plus the set of enabled kinds."""

    name: str
    factor_ranges: dict[str, tuple[float, float]]
    k1_range: tuple[int, int]
    k2_range: tuple[int, int]
    posterize_bits: tuple[int, ...]
    enabled_kinds: tuple[str, ...]

    def odd_sizes(self, lo: int, hi: int) -> tuple[int, ...]:
        """Odd kernel sizes >= 3 inside the inclusive [lo, hi] bound."""
        return tuple(k for k in range(max(3, lo), hi + 1) if k % 2 == 1)


STANDARD = DiversityPreset(
    name="standard",
    factor_ranges={
        "brightness": (0.2, 1.8),
        "contrast": (0.3, 1.7),
        "hue": (0.7, 1.3),
        "saturation": (0.5, 1.5),
        "sharpness": (0.0, 2.0),
    },
    k1_range=(3, 9),
    k2_range=(5, 11),
    posterize_bits=(1, 2, 3, 4, 5, 6),
    enabled_kinds=KINDS,
)

LESS = DiversityPreset(
    name="less",
    factor_ranges={
        "brightness": (0.6, 1.4),
        "contrast": (0.65, 1.35),
        "hue": (0.85, 1.15),
        "saturation": (0.75, 1.25),
        "sharpness": (0.5, 1.0),
    },
    k1_range=(3, 5),
    k2_range=(3, 5),
    posterize_bits=(1, 2, 3, 4, 5, 6),
    enabled_kinds=tuple(k for k in KINDS if k != "equalize"),
)

PRESETS = {"standard": STANDARD, "less": LESS}


def _check_factor(c: float) -> None:
    if c < 0.0:
        raise ParameterError(f"factor must be >= 0, got {c}")


def _blend(img: ImageBuffer, degenerate: np.ndarray, c: float) -> ImageBuffer:
    # c=1 must be bit-exact, so skip the arithmetic entirely.
    if c == 1.0:
        return img
    return ImageBuffer.clamped(degenerate + c * (img.data - degenerate))


def adjust_brightness(img: ImageBuffer, c: float) -> ImageBuffer:
    """Scale toward black: out = clamp(c * img)."""
    _check_factor(c)
    return _blend(img, np.zeros_like(img.data), c)


def adjust_contrast(img: ImageBuffer, c: float) -> ImageBuffer:
    """Spread values around the image's scalar mean luminance."""
    _check_factor(c)
    if c == 1.0:
        return img
    if img.channels == 3:
        mu = float(luminance(img).data.mean())
    else:
        mu = float(img.data.mean())
    return _blend(img, np.full_like(img.data, mu), c)


def adjust_hue(img: ImageBuffer, c: float) -> ImageBuffer:
    """Rotate the hue channel by (c - 1) full turns; S and V untouched."""
    if img.channels != 3:
        raise ShapeError("hue adjustment requires a 3-channel image")
    shift = (c - 1.0) % 1.0
    if shift == 0.0:
        return img
    hsv = rgb_to_hsv(img).data.copy()
    hsv[..., 0] = (hsv[..., 0] + shift) % 1.0
    return hsv_to_rgb(ImageBuffer(hsv))


def adjust_saturation(img: ImageBuffer, c: float) -> ImageBuffer:
    """Interpolate between the per-pixel grayscale image and the input."""
    _check_factor(c)
    if img.channels != 3:
        raise ShapeError("saturation adjustment requires a 3-channel image")
    if c == 1.0:
        return img
    gray = np.repeat(luminance(img).data, 3, axis=2)
    return _blend(img, gray, c)


def _smooth(img: ImageBuffer) -> np.ndarray:
    """3x3 weighted box smoothing; border pixels are copied from the input."""
    out = img.data.copy()
    if img.height >= 3 and img.width >= 3:
        for ch in range(img.channels):
            blurred = ndimage.correlate(img.data[:, :, ch], _SMOOTH_KERNEL, mode="nearest")
            out[1:-1, 1:-1, ch] = blurred[1:-1, 1:-1]
    return out


def adjust_sharpness(img: ImageBuffer, c: float) -> ImageBuffer:
    """Interpolate between a smoothed copy and the input."""
    _check_factor(c)
    if c == 1.0:
        return img
    return _blend(img, _smooth(img), c)


def gaussian_kernel_1d(k: int) -> np.ndarray:
    """Normalized 1-D Gaussian taps for an odd kernel size k."""
    if k < 3 or k % 2 == 0:
        raise ParameterError(f"kernel size must be odd and >= 3, got {k}")
    sigma = 0.3 * ((k - 1) / 2.0 - 1.0) + 0.8
    x = np.arange(k, dtype=np.float64) - (k - 1) / 2.0
    w = np.exp(-(x**2) / (2.0 * sigma**2))
    return w / w.sum()


def gaussian_blur(img: ImageBuffer, k1: int, k2: int) -> ImageBuffer:
    """Separable Gaussian blur; k1 is the horizontal extent, k2 vertical.

    Border handling is reflect-101 (edge sample not repeated).
    """
    kx = gaussian_kernel_1d(k1)
    ky = gaussian_kernel_1d(k2)
    out = img.data.copy()
    for ch in range(img.channels):
        plane = ndimage.convolve1d(img.data[:, :, ch], kx, axis=1, mode="mirror")
        out[:, :, ch] = ndimage.convolve1d(plane, ky, axis=0, mode="mirror")
    return ImageBuffer.clamped(out)


def make_deblur_pair(img: ImageBuffer, k1: int, k2: int) -> tuple[ImageBuffer, ImageBuffer]:
    """Return (blurred original, sharp transformed) for deblur samples.

    The blurred copy plays the role of the original image so that pasting the
    sharp region into it teaches the model to remove blur.
    """
    return gaussian_blur(img, k1, k2), img


def auto_contrast(img: ImageBuffer) -> ImageBuffer:
    """Per channel, remap values linearly so min -> 0 and max -> 1."""
    out = img.data.copy()
    for ch in range(img.channels):
        plane = img.data[:, :, ch]
        lo, hi = float(plane.min()), float(plane.max())
        if hi > lo:
            out[:, :, ch] = (plane - lo) / (hi - lo)
    return ImageBuffer.clamped(out)


def equalize(img: ImageBuffer) -> ImageBuffer:
    """Classical per-channel histogram equalization on the 0-255 view."""
    view = to_u8(img).data
    out = view.copy()
    npix = view.shape[0] * view.shape[1]
    for ch in range(view.shape[2]):
        hist = np.bincount(view[:, :, ch].reshape(-1), minlength=256)
        cdf = np.cumsum(hist)
        cdf_min = int(cdf[hist > 0][0])
        if npix == cdf_min:
            continue  # constant channel: degenerate histogram, leave as is
        lut = np.floor(255.0 * (cdf - cdf_min) / (npix - cdf_min) + 0.5)
        lut = np.clip(lut, 0, 255).astype(np.uint8)
        out[:, :, ch] = lut[view[:, :, ch]]
    return from_u8(PixelU8View(out))


def posterize(img: ImageBuffer, n: int) -> ImageBuffer:
    """Keep only the n most significant bits of each 0-255 channel value."""
    if not 1 <= n <= 6:
        raise ParameterError(f"posterize bits must be in 1..6, got {n}")
    view = to_u8(img)
    keep = np.uint8((0xFF << (8 - n)) & 0xFF)
    return from_u8(PixelU8View(view.data & keep))


def sample_transform(
    preset: DiversityPreset, rng: np.random.Generator, allow_deblur: bool = True
) -> TransformSpec:
    """Draw one TransformSpec: uniform kind, then uniform parameters.

    Draw order is fixed (kind, then that kind's parameters) so a seeded rng
    reproduces the same sequence. ``allow_deblur=False`` removes deblur from
    the candidate kinds; the composite pipeline uses it for chained draws,
    where deblur is disallowed because it redefines the reconstruction target.
    """
    kinds = preset.enabled_kinds
    if not allow_deblur:
        kinds = tuple(k for k in kinds if k != "deblur")
    kind = kinds[int(rng.integers(len(kinds)))]
    if kind in ENHANCEMENT_KINDS:
        lo, hi = preset.factor_ranges[kind]
        return TransformSpec(kind, factor=float(rng.uniform(lo, hi)))
    if kind in KERNEL_KINDS:
        k1_choices = preset.odd_sizes(*preset.k1_range)
        k2_choices = preset.odd_sizes(*preset.k2_range)
        k1 = int(k1_choices[int(rng.integers(len(k1_choices)))])
        k2 = int(k2_choices[int(rng.integers(len(k2_choices)))])
        return TransformSpec(kind, kernel=(k1, k2))
    if kind == "posterize":
        bits = int(preset.posterize_bits[int(rng.integers(len(preset.posterize_bits)))])
        return TransformSpec(kind, bits=bits)
    return TransformSpec(kind)


def apply_transform(img: ImageBuffer, spec: TransformSpec) -> ImageBuffer:
    """Apply a plain image-to-image transform.

    Deblur is rejected here: it changes the reconstruction target as well as
    the image, so only the sample pipeline (via make_deblur_pair) may use it.
    """
    if spec.kind == "brightness":
        return adjust_brightness(img, spec.factor)
    if spec.kind == "contrast":
        return adjust_contrast(img, spec.factor)
    if spec.kind == "hue":
        return adjust_hue(img, spec.factor)
    if spec.kind == "saturation":
        return adjust_saturation(img, spec.factor)
    if spec.kind == "sharpness":
        return adjust_sharpness(img, spec.factor)
    if spec.kind == "blur":
        return gaussian_blur(img, *spec.kernel)
    if spec.kind == "auto_contrast":
        return auto_contrast(img)
    if spec.kind == "equalize":
        return equalize(img)
    if spec.kind == "posterize":
        return posterize(img, spec.bits)
    if spec.kind == "deblur":
        raise ParameterError("deblur is not a plain transform; use make_deblur_pair")
    raise ParameterError(f"unknown transform kind {spec.kind!r}")
