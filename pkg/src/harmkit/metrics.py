"""Reconstruction-quality metrics on the 0-255 scale.

Four metrics: MSE, PSNR, and their foreground-restricted variants fMSE and
fPSNR. The default path works on the float buffers scaled by 255; pass
``quantized=True`` to measure on the rounded 0-255 integer views instead
(the two differ by at most the quantization bound).

PSNR of an error-free image is reported as the fixed cap 100.0 dB so that
dataset averages stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import log10
from typing import Sequence

import numpy as np

from .errors import ParameterError, ShapeError
from .imaging import ForegroundMask, ImageBuffer, to_u8

PSNR_CAP_DB = 100.0
_PEAK_SQ = 255.0**2
# MSE below this floor maps to the 100 dB cap (255^2 / 1e10).
_MSE_FLOOR = _PEAK_SQ * 1e-10


@dataclass(frozen=True)
class MetricReport:
    """Per-image (or aggregated) metric values."""

    mse: float
    psnr: float
    fmse: float
    fpsnr: float
    fg_pixel_count: int


def _error_sq(pred: ImageBuffer, gt: ImageBuffer, quantized: bool) -> np.ndarray:
    if not pred.same_shape(gt):
        raise ShapeError(f"prediction {pred.data.shape} vs ground truth {gt.data.shape}")
    if quantized:
        diff = to_u8(pred).data.astype(np.float64) - to_u8(gt).data.astype(np.float64)
    else:
        diff = 255.0 * (pred.data - gt.data)
    return diff * diff


def mse(pred: ImageBuffer, gt: ImageBuffer, quantized: bool = False) -> float:
    """Mean squared error over all pixels and channels, 0-255 scale."""
    return float(_error_sq(pred, gt, quantized).mean())


def _to_db(err: float) -> float:
    if err < _MSE_FLOOR:
        return PSNR_CAP_DB
    return 10.0 * log10(_PEAK_SQ / err)


def psnr(pred: ImageBuffer, gt: ImageBuffer, quantized: bool = False) -> float:
    """Peak signal-to-noise ratio in dB, capped at 100 for error-free pairs."""
    return _to_db(mse(pred, gt, quantized))


def fmse(
    pred: ImageBuffer, gt: ImageBuffer, mask: ForegroundMask, quantized: bool = False
) -> float:
    """MSE restricted to mask==1 pixels."""
    if (mask.height, mask.width) != (pred.height, pred.width):
        raise ShapeError(f"mask {mask.bits.shape} does not match image {pred.data.shape}")
    if mask.count() == 0:
        raise ParameterError("fMSE is undefined for an empty foreground mask")
    err = _error_sq(pred, gt, quantized)
    sel = mask.bits.astype(bool)
    return float(err[sel].mean())


def fpsnr(
    pred: ImageBuffer, gt: ImageBuffer, mask: ForegroundMask, quantized: bool = False
) -> float:
    """PSNR over foreground pixels only, same 100 dB cap."""
    return _to_db(fmse(pred, gt, mask, quantized))


def evaluate(
    pred: ImageBuffer, gt: ImageBuffer, mask: ForegroundMask, quantized: bool = False
) -> MetricReport:
    """All four metrics for one (prediction, ground truth, mask) triple."""
    m = mse(pred, gt, quantized)
    f = fmse(pred, gt, mask, quantized)
    return MetricReport(
        mse=m,
        psnr=_to_db(m),
        fmse=f,
        fpsnr=_to_db(f),
        fg_pixel_count=mask.count(),
    )


def aggregate(reports: Sequence[MetricReport]) -> MetricReport:
    """Arithmetic mean of each metric over images; PSNR values are averaged in
    dB (so the result is not the PSNR of the mean MSE). The foreground count
    becomes the rounded mean count."""
    if not reports:
        raise ParameterError("cannot aggregate an empty report list")
    n = len(reports)
    return MetricReport(
        mse=sum(r.mse for r in reports) / n,
        psnr=sum(r.psnr for r in reports) / n,
        fmse=sum(r.fmse for r in reports) / n,
        fpsnr=sum(r.fpsnr for r in reports) / n,
        fg_pixel_count=int(round(sum(r.fg_pixel_count for r in reports) / n)),
    )
