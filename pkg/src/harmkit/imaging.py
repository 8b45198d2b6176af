"""Image and mask containers plus the compositing primitive shared by every
other module.

Pixel data is float64 on a [0, 1] scale throughout; the 0-255 integer scale
only exists at I/O and metric boundaries (``PixelU8View``). All containers
are immutable after construction and all operations are pure functions, so
everything here is safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError

# ITU-R BT.601 luma weights, used for every grayscale reduction.
BT601_WEIGHTS = (0.299, 0.587, 0.114)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """H x W x C raster (C in {1, 3}) of float64 values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ShapeError(f"expected (H, W, 1|3) array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ShapeError(f"empty image: shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ParameterError("image contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ParameterError("image values outside [0, 1]; clamp before constructing")
        object.__setattr__(self, "data", _frozen(arr.copy()))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @classmethod
    def clamped(cls, arr: np.ndarray) -> "ImageBuffer":
        """Build a buffer from an unclamped array, clipping into [0, 1]."""
        arr = np.asarray(arr, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise ParameterError("cannot clamp non-finite values")
        return cls(np.clip(arr, 0.0, 1.0))

    @classmethod
    def full(cls, height: int, width: int, value: float, channels: int = 3) -> "ImageBuffer":
        return cls(np.full((height, width, channels), value, dtype=np.float64))

    def same_shape(self, other: "ImageBuffer") -> bool:
        return self.data.shape == other.data.shape


@dataclass(frozen=True, eq=False)
class ForegroundMask:
    """Binary H x W mask; 1 marks foreground pixels."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.bits)
        if arr.ndim != 2:
            raise ShapeError(f"expected (H, W) mask, got shape {arr.shape}")
        if arr.dtype == bool:
            arr = arr.astype(np.uint8)
        else:
            arr = arr.astype(np.uint8, casting="unsafe")
        if not np.isin(arr, (0, 1)).all():
            raise ParameterError("mask values must be 0 or 1")
        object.__setattr__(self, "bits", _frozen(arr.copy()))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def ratio(self) -> float:
        """Fraction of pixels set to 1."""
        return float(self.bits.sum()) / (self.height * self.width)

    def count(self) -> int:
        """Number of foreground pixels."""
        return int(self.bits.sum())

    def as_channel(self) -> np.ndarray:
        """Mask as a float (H, W, 1) array with values {0.0, 1.0}."""
        return self.bits.astype(np.float64)[:, :, None]


@dataclass(frozen=True, eq=False)
class PixelU8View:
    """Integer 0-255 view of an image, used at I/O and metric boundaries."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ShapeError(f"expected (H, W, 1|3) array, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.min() < 0 or arr.max() > 255:
                raise ParameterError("u8 view values outside [0, 255]")
            arr = arr.astype(np.uint8)
        object.__setattr__(self, "data", _frozen(arr.copy()))


def composite(foreground: ImageBuffer, background: ImageBuffer, mask: ForegroundMask) -> ImageBuffer:
    """Paste ``foreground`` over ``background`` where ``mask`` is 1.

    Pure per-pixel selection: no blending or feathering.
    """
    if not foreground.same_shape(background):
        raise ShapeError(
            f"foreground {foreground.data.shape} vs background {background.data.shape}"
        )
    if (mask.height, mask.width) != (foreground.height, foreground.width):
        raise ShapeError(
            f"mask {mask.bits.shape} does not match image "
            f"{(foreground.height, foreground.width)}"
        )
    sel = mask.bits.astype(bool)[:, :, None]
    return ImageBuffer(np.where(sel, foreground.data, background.data))


def to_u8(img: ImageBuffer) -> PixelU8View:
    """Quantize to 0-255 integers, rounding half away from zero."""
    return PixelU8View(np.floor(img.data * 255.0 + 0.5).astype(np.uint8))


def from_u8(view: PixelU8View) -> ImageBuffer:
    """Map 0-255 integers back onto the [0, 1] float scale."""
    return ImageBuffer(view.data.astype(np.float64) / 255.0)


def _require_rgb(img: ImageBuffer, op: str) -> None:
    if img.channels != 3:
        raise ShapeError(f"{op} requires a 3-channel image, got {img.channels} channels")


def rgb_to_hsv(img: ImageBuffer) -> ImageBuffer:
    """Hexcone RGB -> HSV with H in [0, 1) as a fraction of a full turn."""
    _require_rgb(img, "rgb_to_hsv")
    r, g, b = img.data[..., 0], img.data[..., 1], img.data[..., 2]
    maxc = np.max(img.data, axis=-1)
    minc = np.min(img.data, axis=-1)
    delta = maxc - minc
    v = maxc
    s = np.where(maxc > 0.0, np.divide(delta, maxc, out=np.zeros_like(delta), where=maxc > 0.0), 0.0)

    safe = np.where(delta > 0.0, delta, 1.0)
    # Sector selection mirrors the classic hexcone formulation (max channel
    # decides the sector, ties resolved in R, G, B order).
    h = np.where(
        delta == 0.0,
        0.0,
        np.where(
            maxc == r,
            ((g - b) / safe) % 6.0,
            np.where(maxc == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
        ),
    )
    h = (h / 6.0) % 1.0
    return ImageBuffer(np.stack([h, s, v], axis=-1))


def hsv_to_rgb(img: ImageBuffer) -> ImageBuffer:
    """Inverse hexcone conversion; input H in [0, 1), S and V in [0, 1]."""
    _require_rgb(img, "hsv_to_rgb")
    h, s, v = img.data[..., 0], img.data[..., 1], img.data[..., 2]
    h6 = (h % 1.0) * 6.0
    i = np.floor(h6).astype(np.int64) % 6
    f = h6 - np.floor(h6)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))

    r = np.choose(i, [v, q, p, p, t, v])
    g = np.choose(i, [t, v, v, q, p, p])
    b = np.choose(i, [p, p, t, v, v, q])
    return ImageBuffer.clamped(np.stack([r, g, b], axis=-1))


def luminance(img: ImageBuffer) -> ImageBuffer:
    """BT.601 luma; returns a 1-channel image."""
    _require_rgb(img, "luminance")
    w = np.asarray(BT601_WEIGHTS)
    lum = img.data @ w
    return ImageBuffer.clamped(lum[:, :, None])
