"""Bit-exact binary Netpbm readers and writers (PPM P6 for color, PGM P5 for
grayscale masks) plus PNG convenience wrappers via Pillow.

The binary formats are the package's interchange formats: a write followed by
a read returns byte-identical pixel data, which the deterministic-output
checks rely on. PNG is offered for viewing convenience only.
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from .errors import ParameterError, ShapeError
from .imaging import ForegroundMask, ImageBuffer, PixelU8View, from_u8, to_u8

PathLike = Union[str, Path]

_MAXVAL = 255


def encode_ppm(view: PixelU8View) -> bytes:
    """Serialize a 3-channel u8 image as binary PPM (P6, maxval 255)."""
    if view.data.shape[2] != 3:
        raise ShapeError(f"P6 requires 3 channels, got {view.data.shape[2]}")
    h, w = view.data.shape[:2]
    header = f"P6\n{w} {h}\n{_MAXVAL}\n".encode("ascii")
    return header + view.data.tobytes()


def encode_pgm(mask: ForegroundMask) -> bytes:
    """Serialize a binary mask as PGM (P5); foreground is stored as 255."""
    h, w = mask.bits.shape
    header = f"P5\n{w} {h}\n{_MAXVAL}\n".encode("ascii")
    return header + (mask.bits * np.uint8(255)).tobytes()


def _tokenize_header(buf: bytes, count: int) -> tuple[list[int], int]:
    """Read ``count`` whitespace-separated integer tokens after the magic,
    skipping ``#`` comments, and return them with the offset just past the
    single whitespace byte that terminates the last token."""
    tokens: list[int] = []
    pos = 2  # past the 2-byte magic
    current = b""
    while len(tokens) < count:
        if pos >= len(buf):
            raise ParameterError("truncated Netpbm header")
        ch = buf[pos : pos + 1]
        pos += 1
        if ch == b"#":
            while pos < len(buf) and buf[pos : pos + 1] != b"\n":
                pos += 1
            continue
        if ch in (b" ", b"\t", b"\r", b"\n"):
            if current:
                tokens.append(int(current))
                current = b""
            continue
        if not ch.isdigit():
            raise ParameterError(f"unexpected byte {ch!r} in Netpbm header")
        current += ch
    return tokens, pos


def decode_ppm(buf: bytes) -> PixelU8View:
    """Parse binary PPM bytes into a u8 image view."""
    if buf[:2] != b"P6":
        raise ParameterError(f"not a P6 file (magic {buf[:2]!r})")
    (w, h, maxval), pos = _tokenize_header(buf, 3)
    if maxval != _MAXVAL:
        raise ParameterError(f"unsupported maxval {maxval}; only 255 is handled")
    if w < 1 or h < 1:
        raise ParameterError(f"invalid dimensions {w}x{h}")
    need = w * h * 3
    raster = buf[pos : pos + need]
    if len(raster) != need:
        raise ParameterError(f"raster has {len(raster)} bytes, expected {need}")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(h, w, 3)
    return PixelU8View(arr)


def decode_pgm(buf: bytes) -> ForegroundMask:
    """Parse binary PGM bytes into a mask; any nonzero sample is foreground."""
    if buf[:2] != b"P5":
        raise ParameterError(f"not a P5 file (magic {buf[:2]!r})")
    (w, h, maxval), pos = _tokenize_header(buf, 3)
    if maxval != _MAXVAL:
        raise ParameterError(f"unsupported maxval {maxval}; only 255 is handled")
    if w < 1 or h < 1:
        raise ParameterError(f"invalid dimensions {w}x{h}")
    need = w * h
    raster = buf[pos : pos + need]
    if len(raster) != need:
        raise ParameterError(f"raster has {len(raster)} bytes, expected {need}")
    arr = np.frombuffer(raster, dtype=np.uint8).reshape(h, w)
    return ForegroundMask((arr > 0).astype(np.uint8))


def write_ppm(path: PathLike, img: ImageBuffer) -> None:
    Path(path).write_bytes(encode_ppm(to_u8(img)))


def read_ppm(path: PathLike) -> ImageBuffer:
    return from_u8(decode_ppm(Path(path).read_bytes()))


def write_pgm(path: PathLike, mask: ForegroundMask) -> None:
    Path(path).write_bytes(encode_pgm(mask))


def read_pgm(path: PathLike) -> ForegroundMask:
    return decode_pgm(Path(path).read_bytes())


def write_png(path: PathLike, img: ImageBuffer) -> None:
    """Convenience PNG export (viewing only; PPM is the canonical format)."""
    Image.fromarray(to_u8(img).data, mode="RGB").save(Path(path), format="PNG")


def read_png(path: PathLike) -> ImageBuffer:
    with Image.open(Path(path)) as im:
        rgb = im.convert("RGB")
        arr = np.asarray(rgb, dtype=np.uint8)
    return from_u8(PixelU8View(arr))


def read_image(path: PathLike) -> ImageBuffer:
    """Load a color image, dispatching on the file's magic bytes."""
    raw = Path(path).read_bytes()
    if raw[:2] == b"P6":
        return from_u8(decode_ppm(raw))
    if raw[:8] == b"\x89PNG\r\n\x1a\n":
        with Image.open(io.BytesIO(raw)) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
        return from_u8(PixelU8View(arr))
    raise ParameterError(f"unrecognized image format for {path}")
