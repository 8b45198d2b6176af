"""Foreground-mask synthesis.

Three strategies are provided:

- ``random``: pick cells of an m x m partition uniformly without replacement.
- ``grid``: a deterministic checkerboard-style cell pattern, identical for all
  images of the same size.
- ``block``: union of perturbed rectangles, grown until the target coverage is
  reached; produces contiguous object-like regions.

Random and grid hit their cell-quantized target ratio exactly; block lands in
[target, target + 0.1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .imaging import ForegroundMask

STRATEGIES = ("random", "grid", "block")

# Safety valve for the block strategy's growth loop; unreachable in practice
# because every added quadrilateral covers at least one pixel center.
_BLOCK_MAX_ITERS = 10_000


@dataclass(frozen=True)
class MaskSpec:
    """Strategy plus its parameters. The RNG is supplied per call, not stored,
    so one spec can drive many independently seeded masks."""

    strategy: str
    partition: int = 8
    target_ratio: float = 0.5

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ParameterError(f"unknown mask strategy {self.strategy!r}")
        if self.partition < 2:
            raise ParameterError(f"partition must be >= 2, got {self.partition}")
        if not 0.0 < self.target_ratio < 1.0:
            raise ParameterError(f"target_ratio must be in (0, 1), got {self.target_ratio}")

    def to_json_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "partition": self.partition,
            "target_ratio": self.target_ratio,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "MaskSpec":
        return cls(obj["strategy"], obj["partition"], obj["target_ratio"])


def _check_partition(m: int, h: int, w: int) -> None:
    if h % m != 0 or w % m != 0:
        raise ShapeError(f"partition {m} must divide image dimensions {h}x{w}")


def _cells_to_mask(cells: np.ndarray, h: int, w: int) -> ForegroundMask:
    m = cells.shape[0]
    return ForegroundMask(np.kron(cells, np.ones((h // m, w // m), dtype=np.uint8)))


def _cell_count(spec: MaskSpec) -> int:
    return int(np.rint(spec.target_ratio * spec.partition**2))


def random_mask(spec: MaskSpec, h: int, w: int, rng: np.random.Generator) -> ForegroundMask:
    """Exactly round(ratio * m^2) cells chosen uniformly without replacement."""
    m = spec.partition
    _check_partition(m, h, w)
    k = _cell_count(spec)
    chosen = rng.choice(m * m, size=k, replace=False)
    cells = np.zeros(m * m, dtype=np.uint8)
    cells[chosen] = 1
    return _cells_to_mask(cells.reshape(m, m), h, w)


def grid_mask(spec: MaskSpec, h: int, w: int) -> ForegroundMask:
    """Deterministic cell pattern: checkerboard cells first (row-major), then
    remaining cells row-major until round(ratio * m^2) cells are set."""
    m = spec.partition
    _check_partition(m, h, w)
    k = _cell_count(spec)
    rows, cols = np.divmod(np.arange(m * m), m)
    parity = (rows + cols) % 2
    order = np.concatenate([np.flatnonzero(parity == 0), np.flatnonzero(parity == 1)])
    cells = np.zeros(m * m, dtype=np.uint8)
    cells[order[:k]] = 1
    return _cells_to_mask(cells.reshape(m, m), h, w)


def _rasterize_quad(mask: np.ndarray, quad: np.ndarray) -> None:
    """Set pixels whose centers fall inside a convex quadrilateral.

    Pixel (r, c) has its center at (x, y) = (c + 0.5, r + 0.5). Inside-ness is
    tested with the edge cross products all sharing a sign, which is valid here
    because the corner perturbation bound keeps the quadrilateral convex.
    """
    h, w = mask.shape
    xs, ys = quad[:, 0], quad[:, 1]
    c0 = max(0, int(math.floor(xs.min() - 0.5)))
    c1 = min(w - 1, int(math.ceil(xs.max())))
    r0 = max(0, int(math.floor(ys.min() - 0.5)))
    r1 = min(h - 1, int(math.ceil(ys.max())))
    if c1 < c0 or r1 < r0:
        return
    px = np.arange(c0, c1 + 1, dtype=np.float64) + 0.5
    py = np.arange(r0, r1 + 1, dtype=np.float64) + 0.5
    gx, gy = np.meshgrid(px, py)
    pos = np.ones(gx.shape, dtype=bool)
    neg = np.ones(gx.shape, dtype=bool)
    for i in range(4):
        ax, ay = quad[i]
        bx, by = quad[(i + 1) % 4]
        cross = (bx - ax) * (gy - ay) - (by - ay) * (gx - ax)
        pos &= cross >= 0.0
        neg &= cross <= 0.0
    mask[r0 : r1 + 1, c0 : c1 + 1] |= pos | neg


def block_mask(spec: MaskSpec, h: int, w: int, rng: np.random.Generator) -> ForegroundMask:
    """Union of corner-perturbed rectangles grown to the target coverage.

    Each iteration draws, in this fixed order: a rectangle area uniform in
    [10%, 40%] of the remaining pixel deficit, a log-uniform aspect ratio in
    [1/3, 3], a uniform top-left position keeping the rectangle inside the
    image, four per-corner x offsets uniform within +/-25% of the rectangle
    width, then four y offsets within +/-25% of its height. The perturbed
    quadrilateral is rasterized and unioned in; the loop stops once coverage
    reaches the target.
    """
    if h < 16 or w < 16:
        raise ShapeError(f"block masks need at least 16x16 images, got {h}x{w}")
    total = h * w
    target_px = spec.target_ratio * total
    mask = np.zeros((h, w), dtype=bool)
    count = 0
    for _ in range(_BLOCK_MAX_ITERS):
        if count >= target_px:
            break
        deficit = target_px - count
        area = rng.uniform(0.1, 0.4) * deficit
        aspect = math.exp(rng.uniform(math.log(1.0 / 3.0), math.log(3.0)))
        rw = min(float(w), max(2.0, math.sqrt(area * aspect)))
        rh = min(float(h), max(2.0, math.sqrt(area / aspect)))
        x0 = rng.uniform(0.0, w - rw)
        y0 = rng.uniform(0.0, h - rh)
        corners = np.array(
            [[x0, y0], [x0 + rw, y0], [x0 + rw, y0 + rh], [x0, y0 + rh]],
            dtype=np.float64,
        )
        offsets = np.stack(
            [
                rng.uniform(-0.25 * rw, 0.25 * rw, size=4),
                rng.uniform(-0.25 * rh, 0.25 * rh, size=4),
            ],
            axis=1,
        )
        _rasterize_quad(mask, corners + offsets)
        count = int(mask.sum())
    else:
        raise ParameterError("block mask failed to reach the target ratio")
    return ForegroundMask(mask.astype(np.uint8))


def make_mask(spec: MaskSpec, h: int, w: int, rng: np.random.Generator) -> ForegroundMask:
    """Dispatch on the spec's strategy. The grid strategy ignores the rng."""
    if spec.strategy == "random":
        return random_mask(spec, h, w, rng)
    if spec.strategy == "grid":
        return grid_mask(spec, h, w)
    return block_mask(spec, h, w, rng)
