"""Synthetic source images for tests and the self-contained training demo.

Each image is a smooth random field: a directional gradient plus a few random
low-frequency cosine waves per channel, rescaled into a comfortable value
range. Smoothness matters because the harmonization objective compares a
perturbed region against its surroundings; pure noise would carry no usable
context.
"""

from __future__ import annotations

import numpy as np

from .imaging import ImageBuffer


def make_toy_image(height: int, width: int, rng: np.random.Generator) -> ImageBuffer:
    """One smooth random RGB image with values inside [0.05, 0.95]."""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    ys /= height
    xs /= width
    out = np.empty((height, width, 3))
    for ch in range(3):
        theta = rng.uniform(0.0, 2.0 * np.pi)
        field = rng.uniform(0.5, 2.0) * (np.cos(theta) * xs + np.sin(theta) * ys)
        for _ in range(3):
            fy, fx = rng.uniform(0.5, 3.0, size=2)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            field += rng.uniform(0.2, 1.0) * np.cos(
                2.0 * np.pi * (fy * ys + fx * xs) + phase
            )
        lo, hi = field.min(), field.max()
        if hi > lo:
            field = (field - lo) / (hi - lo)
        else:
            field = np.full_like(field, 0.5)
        out[:, :, ch] = 0.05 + 0.9 * field
    return ImageBuffer(out)


def make_toy_corpus(count: int, height: int, width: int, seed: int) -> list[ImageBuffer]:
    """Deterministic list of toy images; image i depends only on (seed, i)."""
    images = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence((seed, i)))
        images.append(make_toy_image(height, width, rng))
    return images
