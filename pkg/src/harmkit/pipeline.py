"""Online generation of (composite, mask, target) training triples.

Given a source image, the pipeline samples one or more photometric transforms,
applies them to the whole image, generates a foreground mask, and pastes the
transformed content into the untouched image inside the mask. The original
image is the reconstruction target. Deblur samples invert the roles: the
target is a blurred copy and the masked region keeps the sharp original, so
the perturbation to undo is the blur outside being absent inside.

Every sample's randomness is derived from (master_seed, sample index) through
named substreams, so regeneration is reproducible regardless of worker count
or iteration order.
"""

from __future__ import annotations

from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional, Union

import numpy as np

from .errors import ParameterError
from .imaging import ForegroundMask, ImageBuffer, composite
from .maskgen import MaskSpec, make_mask
from .transforms import (
    STANDARD,
    DiversityPreset,
    TransformSpec,
    apply_transform,
    make_deblur_pair,
    sample_transform,
)

# Substream tags for per-sample RNG derivation.
TRANSFORM_STREAM = 0
MASK_STREAM = 1

MAX_CHAIN = 3


@dataclass(frozen=True)
class PipelineConfig:
    """Sampling configuration shared by every sample of a run."""

    preset: DiversityPreset = STANDARD
    mask_spec: MaskSpec = MaskSpec("random", 8, 0.5)
    transforms_per_sample: int = 1
    master_seed: int = 0

    def __post_init__(self) -> None:
        if not 1 <= self.transforms_per_sample <= MAX_CHAIN:
            raise ParameterError(
                f"transforms_per_sample must be in 1..{MAX_CHAIN}, "
                f"got {self.transforms_per_sample}"
            )
        if self.master_seed < 0:
            raise ParameterError("master_seed must be non-negative")


@dataclass(frozen=True)
class Provenance:
    """Everything needed to regenerate a sample: the applied transforms in
    order, the mask spec, and the (master_seed, index) pair."""

    transforms: tuple[TransformSpec, ...]
    mask_spec: MaskSpec
    master_seed: int
    index: int


@dataclass(frozen=True)
class TrainingSample:
    composite: ImageBuffer
    mask: ForegroundMask
    target: ImageBuffer
    provenance: Provenance


def derived_rng(master_seed: int, index: int, stream: int) -> np.random.Generator:
    """Independent generator for one substream of one sample."""
    return np.random.default_rng(np.random.SeedSequence((master_seed, index, stream)))


def generate_sample(img: ImageBuffer, cfg: PipelineConfig, index: int) -> TrainingSample:
    """Produce the deterministic training triple for (img, cfg, index).

    Transform draws come first, in chain order, from the transform substream;
    the mask is drawn from its own substream, so changing the chain length
    does not perturb the mask. A deblur draw is only honored as the first and
    only transform; later draws exclude it because it redefines the target.
    """
    t_rng = derived_rng(cfg.master_seed, index, TRANSFORM_STREAM)
    m_rng = derived_rng(cfg.master_seed, index, MASK_STREAM)

    specs = [sample_transform(cfg.preset, t_rng)]
    if specs[0].kind != "deblur":
        for _ in range(cfg.transforms_per_sample - 1):
            specs.append(sample_transform(cfg.preset, t_rng, allow_deblur=False))

    if specs[0].kind == "deblur":
        target, transformed = make_deblur_pair(img, *specs[0].kernel)
    else:
        target = img
        transformed = img
        for spec in specs:
            transformed = apply_transform(transformed, spec)

    mask = make_mask(cfg.mask_spec, img.height, img.width, m_rng)
    return TrainingSample(
        composite=composite(transformed, target, mask),
        mask=mask,
        target=target,
        provenance=Provenance(tuple(specs), cfg.mask_spec, cfg.master_seed, index),
    )


Source = Union[ImageBuffer, str, Path, Callable[[], ImageBuffer]]


@dataclass(frozen=True)
class StreamItem:
    """One positional result of generate_stream: either a sample or the error
    that prevented it, never both."""

    index: int
    sample: Optional[TrainingSample]
    error: Optional[Exception]
    source: str

    @property
    def ok(self) -> bool:
        return self.error is None


def _load_source(src: Source) -> tuple[ImageBuffer, str]:
    if isinstance(src, ImageBuffer):
        return src, "<buffer>"
    if callable(src):
        return src(), "<callable>"
    from .netpbm import read_image  # local import to avoid an import cycle

    return read_image(src), str(src)


def generate_stream(
    sources: Iterable[Source], cfg: PipelineConfig, threads: int = 1
) -> Iterator[StreamItem]:
    """Lazily generate samples in source order.

    With ``threads`` above one, generation fans out to a worker pool while
    preserving order and content: each sample's randomness depends only on
    (master_seed, index). Per-item failures (unreadable file, incompatible
    dimensions) are reported in the stream instead of aborting it.
    """

    def produce(args: tuple[int, Source]) -> StreamItem:
        index, src = args
        name = str(src) if isinstance(src, (str, Path)) else "<buffer>"
        try:
            img, name = _load_source(src)
            return StreamItem(index, generate_sample(img, cfg, index), None, name)
        except Exception as exc:  # surfaced per item by contract
            return StreamItem(index, None, exc, name)

    indexed = enumerate(sources)
    if threads <= 1:
        for item in indexed:
            yield produce(item)
        return
    # Sliding window keeps at most 2*threads items in flight, so huge source
    # lists never pile up in memory, and popping from the left preserves order.
    window = 2 * threads
    with ThreadPoolExecutor(max_workers=threads) as pool:
        pending: deque = deque()
        for args in indexed:
            pending.append(pool.submit(produce, args))
            if len(pending) >= window:
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()
