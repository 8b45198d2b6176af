"""Losses, the AdamW optimizer, the cosine schedule, and the two training
loops (reconstruction pre-training and foreground-normalized fine-tuning).

Losses are computed on the [0, 1] float scale; the evaluation metrics use
0-255, so a loss relates to a metric MSE by the factor 255^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from . import tensor as T
from .errors import ParameterError, ShapeError
from .metrics import mse as metric_mse
from .model import HarmonizerModel, patchify
from .pipeline import TrainingSample
from .tensor import Tensor


@dataclass(frozen=True)
class TrainConfig:
    """Optimization hyperparameters. ``min_area`` clamps the denominator of
    the foreground-normalized loss; None derives it from the image area at
    the reference rate of 100 pixels per 256x256 image."""

    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    weight_decay: float = 0.05
    lr_pretrain: float = 2.7e-2
    lr_finetune: float = 2.7e-3
    batch_size: int = 2
    min_area: Optional[int] = None

    def __post_init__(self) -> None:
        for name in ("beta1", "beta2", "eps", "weight_decay", "lr_pretrain", "lr_finetune"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be positive")
        if not (self.beta1 < 1 and self.beta2 < 1):
            raise ParameterError("beta1 and beta2 must be below 1")
        if self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")
        if self.min_area is not None and self.min_area < 1:
            raise ParameterError("min_area must be >= 1 when given")

    def effective_min_area(self, h: int, w: int) -> int:
        if self.min_area is not None:
            return self.min_area
        return max(1, int(round(100.0 * h * w / 65536.0)))


def mse_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean squared error on the [0, 1] scale, differentiable in pred."""
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} vs target {target.shape}")
    diff = pred - Tensor(target)
    return T.mean(T.mul(diff, diff))


def fn_mse_loss(pred: Tensor, target: np.ndarray, fg_count: int, min_area: int) -> Tensor:
    """Squared error summed over every value, divided by the clamped
    foreground pixel count. Identical to mse_loss scaled by
    size / max(min_area, fg_count)."""
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} vs target {target.shape}")
    diff = pred - Tensor(target)
    denom = float(max(min_area, fg_count))
    return T.mul(T.sum_(T.mul(diff, diff)), 1.0 / denom)


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float = 0.0) -> float:
    """Half-cosine decay from lr_max at step 0 to lr_min at step == total."""
    if total_steps < 1:
        raise ParameterError("total_steps must be >= 1")
    if not 0 <= step <= total_steps:
        raise ParameterError(f"step {step} outside [0, {total_steps}]")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))


class AdamW:
    """AdamW with bias correction and decoupled multiplicative weight decay."""

    def __init__(self, params: dict[str, Tensor], cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, lr: float) -> None:
        cfg = self.cfg
        self.t += 1
        bc1 = 1.0 - cfg.beta1**self.t
        bc2 = 1.0 - cfg.beta2**self.t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self.m[name]
            v = self.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            m_hat = m / bc1
            v_hat = v / bc2
            p.data *= 1.0 - lr * cfg.weight_decay
            p.data -= lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


def _batched(samples: Iterable, size: int) -> Iterator[list]:
    batch: list = []
    for s in samples:
        batch.append(s)
        if len(batch) == size:
            yield batch
            batch = []
    if batch:
        yield batch


def _target_tokens(sample: TrainingSample, n: int) -> np.ndarray:
    # Loss on the patch-token layout averages the same values as the pixel
    # layout, so the two are interchangeable.
    return patchify(sample.target.data, n)


def pretrain_loop(
    model: HarmonizerModel,
    samples: Iterable[TrainingSample],
    cfg: TrainConfig,
    steps: int,
    loss_kind: str = "mse",
) -> list[float]:
    """Optimize reconstruction over a sample stream for ``steps`` updates.

    ``loss_kind`` selects the objective: plain "mse" for pre-training or
    "fn_mse" (foreground-normalized) for fine-tuning. Learning rate follows
    the cosine schedule from the matching config field down to zero. Returns
    the per-step loss history.
    """
    if steps < 1:
        raise ParameterError("steps must be >= 1")
    if loss_kind not in ("mse", "fn_mse"):
        raise ParameterError(f"unknown loss kind {loss_kind!r}")
    lr_max = cfg.lr_pretrain if loss_kind == "mse" else cfg.lr_finetune
    opt = AdamW(model.params, cfg)
    n = model.config.patch_size
    history: list[float] = []
    batches = _batched(samples, cfg.batch_size)
    for step in range(steps):
        try:
            batch = next(batches)
        except StopIteration:
            break
        opt.zero_grad()
        total: Optional[Tensor] = None
        for sample in batch:
            pred = model.forward_tokens(sample.composite.data, sample.mask.bits)
            target = _target_tokens(sample, n)
            if loss_kind == "mse":
                loss = mse_loss(pred, target)
            else:
                h, w = sample.target.height, sample.target.width
                loss = fn_mse_loss(
                    pred, target, sample.mask.count(), cfg.effective_min_area(h, w)
                )
            total = loss if total is None else total + loss
        total = T.mul(total, 1.0 / len(batch))
        total.backward()
        opt.step(cosine_lr(step, steps, lr_max))
        value = total.item()
        if not math.isfinite(value):
            raise ParameterError(f"training diverged at step {step}: loss {value}")
        history.append(value)
    return history


def select_fraction(count: int, fraction: float, seed: int) -> np.ndarray:
    """Deterministic uniform subsample of range(count): max(1, round(f*count))
    indices, sorted."""
    if not 0.0 < fraction <= 1.0:
        raise ParameterError(f"fraction must be in (0, 1], got {fraction}")
    k = max(1, int(round(fraction * count)))
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xF5AC)))
    return np.sort(rng.choice(count, size=k, replace=False))


def finetune_loop(
    model: HarmonizerModel,
    triples: Sequence[TrainingSample],
    cfg: TrainConfig,
    steps: int,
    fraction: float = 1.0,
    seed: int = 0,
) -> list[float]:
    """Fine-tune with the foreground-normalized loss on a labeled triple set,
    cycling through a deterministic ``fraction`` subsample."""
    if not triples:
        raise ParameterError("finetune_loop needs at least one triple")
    chosen = [triples[i] for i in select_fraction(len(triples), fraction, seed)]

    def cycle() -> Iterator[TrainingSample]:
        while True:
            yield from chosen

    return pretrain_loop(model, cycle(), cfg, steps, loss_kind="fn_mse")


def mean_validation_mse(model: HarmonizerModel, triples: Sequence[TrainingSample]) -> float:
    """Mean 0-255-scale MSE of model outputs against targets."""
    if not triples:
        raise ParameterError("validation needs at least one triple")
    scores = []
    for sample in triples:
        out = model.forward(sample.composite, sample.mask)
        scores.append(metric_mse(out, sample.target))
    return float(np.mean(scores))
