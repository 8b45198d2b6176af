"""Window-attention harmonization network.

The model consumes a composite image concatenated with its foreground mask as
a fourth channel, embeds non-overlapping pixel patches as tokens, runs three
stages of window-attention blocks (depths 3, 3, 5 by default) with the token
width doubling after stages one and two, applies a configurable tail (global
attention over every token, or one more windowed block), and reconstructs an
image with a linear head and a sigmoid.

Tokens are kept in a flat (token, feature) layout; window partitioning and the
half-window cyclic shift are precomputed permutation gathers, which keeps every
tensor within the rank-4 autodiff core.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from . import tensor as T
from .errors import ParameterError, ShapeError
from .imaging import ForegroundMask, ImageBuffer
from .tensor import Tensor

# Additive score penalty for forbidden token pairs; far below the exp
# underflow threshold, so masked attention weights are exactly zero.
ATTENTION_MASK_VALUE = -1e9

TAILS = ("global", "local")
RESOLUTION_MODES = ("full", "bottleneck")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters. ``embed_dim`` is the stage-1 token width;
    stages two and three run at twice and four times that width."""

    patch_size: int = 4
    window_size: int = 4
    embed_dim: int = 16
    num_heads: tuple[int, int, int] = (2, 2, 2)
    depths: tuple[int, int, int] = (3, 3, 5)
    tail: str = "global"
    resolution_mode: str = "full"
    mlp_ratio: float = 4.0
    rel_pos_bias: bool = False
    disable_shift: bool = False

    def __post_init__(self) -> None:
        if self.patch_size < 1 or self.window_size < 1:
            raise ParameterError("patch and window sizes must be positive")
        if self.tail not in TAILS:
            raise ParameterError(f"tail must be one of {TAILS}, got {self.tail!r}")
        if self.resolution_mode not in RESOLUTION_MODES:
            raise ParameterError(f"resolution_mode must be one of {RESOLUTION_MODES}")
        if len(self.depths) != 3 or len(self.num_heads) != 3:
            raise ParameterError("depths and num_heads must have three entries")
        if self.mlp_ratio <= 0:
            raise ParameterError("mlp_ratio must be positive")
        for s, heads in enumerate(self.num_heads):
            if self.stage_dims[s] % heads != 0:
                raise ParameterError(
                    f"stage {s} width {self.stage_dims[s]} not divisible by {heads} heads"
                )

    @property
    def stage_dims(self) -> tuple[int, int, int]:
        return (self.embed_dim, 2 * self.embed_dim, 4 * self.embed_dim)

    def to_json_dict(self) -> dict:
        return {
            "patch_size": self.patch_size,
            "window_size": self.window_size,
            "embed_dim": self.embed_dim,
            "num_heads": list(self.num_heads),
            "depths": list(self.depths),
            "tail": self.tail,
            "resolution_mode": self.resolution_mode,
            "mlp_ratio": self.mlp_ratio,
            "rel_pos_bias": self.rel_pos_bias,
            "disable_shift": self.disable_shift,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ModelConfig":
        return cls(
            patch_size=obj["patch_size"],
            window_size=obj["window_size"],
            embed_dim=obj["embed_dim"],
            num_heads=tuple(obj["num_heads"]),
            depths=tuple(obj["depths"]),
            tail=obj["tail"],
            resolution_mode=obj["resolution_mode"],
            mlp_ratio=obj["mlp_ratio"],
            rel_pos_bias=obj["rel_pos_bias"],
            disable_shift=obj["disable_shift"],
        )


def desk_config(**overrides) -> ModelConfig:
    """Small configuration sized for 32x32 inputs on a single CPU core."""
    return replace(ModelConfig(), **overrides) if overrides else ModelConfig()


def large_config(**overrides) -> ModelConfig:
    """Full-capacity configuration: window 32, patch 4, token width 128."""
    cfg = ModelConfig(window_size=32, embed_dim=128, num_heads=(4, 8, 16))
    return replace(cfg, **overrides) if overrides else cfg


def patchify(arr: np.ndarray, n: int) -> np.ndarray:
    """(H, W, C) -> (H/n * W/n, n*n*C), patches in row-major grid order."""
    h, w, c = arr.shape
    if h % n or w % n:
        raise ShapeError(f"image {h}x{w} not divisible by patch size {n}")
    hg, wg = h // n, w // n
    return arr.reshape(hg, n, wg, n, c).transpose(0, 2, 1, 3, 4).reshape(hg * wg, n * n * c)


def unpatchify(tokens: np.ndarray, hg: int, wg: int, n: int, c: int) -> np.ndarray:
    """Inverse of patchify: (hg*wg, n*n*c) -> (hg*n, wg*n, c)."""
    return (
        tokens.reshape(hg, wg, n, n, c).transpose(0, 2, 1, 3, 4).reshape(hg * n, wg * n, c)
    )


@lru_cache(maxsize=64)
def window_permutation(hg: int, wg: int, k: int, shift: int) -> tuple[np.ndarray, np.ndarray]:
    """Index maps for (cyclic shift, window partition) and their inverse.

    ``perm[i]`` is the flat-grid token that lands at windowed position ``i``
    after rolling the grid up-left by ``shift`` and tiling k x k windows.
    """
    if hg % k or wg % k:
        raise ShapeError(f"token grid {hg}x{wg} not divisible by window {k}")
    idx = np.arange(hg * wg).reshape(hg, wg)
    if shift:
        idx = np.roll(idx, (-shift, -shift), axis=(0, 1))
    perm = idx.reshape(hg // k, k, wg // k, k).transpose(0, 2, 1, 3).reshape(-1)
    inv = np.argsort(perm)
    return perm, inv


@lru_cache(maxsize=64)
def shifted_window_mask(hg: int, wg: int, k: int, shift: int, heads: int) -> np.ndarray:
    """Additive attention mask for shifted windows, shape (nW, heads, k*k, k*k).

    The grid is labeled with nine regions via the window/shift boundary
    slices; after the cyclic shift, tokens sharing a window but carrying
    different labels came from non-adjacent parts of the image and must not
    attend to each other.
    """
    label = np.zeros((hg, wg))
    bounds = (slice(0, -k), slice(-k, -shift), slice(-shift, None))
    count = 0
    for hs in bounds:
        for ws in bounds:
            label[hs, ws] = count
            count += 1
    windows = label.reshape(hg // k, k, wg // k, k).transpose(0, 2, 1, 3).reshape(-1, k * k)
    different = windows[:, :, None] != windows[:, None, :]
    mask = np.where(different, ATTENTION_MASK_VALUE, 0.0)
    return np.broadcast_to(mask[:, None, :, :], (mask.shape[0], heads, k * k, k * k)).copy()


@lru_cache(maxsize=16)
def relative_position_index(k: int) -> np.ndarray:
    """Flat (k*k*k*k,) index into a (2k-1)^2 bias table for all token pairs."""
    coords = np.stack(np.meshgrid(np.arange(k), np.arange(k), indexing="ij"), axis=-1)
    coords = coords.reshape(-1, 2)
    rel = coords[:, None, :] - coords[None, :, :] + (k - 1)
    return (rel[..., 0] * (2 * k - 1) + rel[..., 1]).reshape(-1)


@lru_cache(maxsize=16)
def merge_child_indices(hg: int, wg: int) -> tuple[np.ndarray, ...]:
    """Token indices of the four 2x2 children per coarse-grid position."""
    rows = np.arange(0, hg, 2)[:, None]
    cols = np.arange(0, wg, 2)[None, :]
    base = rows * wg + cols
    return (
        base.reshape(-1),
        (base + 1).reshape(-1),
        (base + wg).reshape(-1),
        (base + wg + 1).reshape(-1),
    )


@lru_cache(maxsize=16)
def expand_child_order(hg: int, wg: int) -> np.ndarray:
    """For each fine-grid token, its position in the (parent, child-slot) list."""
    r = np.arange(hg)[:, None]
    c = np.arange(wg)[None, :]
    parent = (r // 2) * (wg // 2) + (c // 2)
    slot = (r % 2) * 2 + (c % 2)
    return (parent * 4 + slot).reshape(-1)


@dataclass(frozen=True)
class _BlockPlan:
    """Resolved geometry for one attention block at a given input size."""

    prefix: str
    dim: int
    heads: int
    grid: tuple[int, int]
    shift: int
    is_global: bool


def attention_interaction_macs(token_count: int, window_tokens: int, dim: int) -> int:
    """Multiply-accumulates spent on score computation plus value aggregation.

    Projections are excluded on purpose: this counts the part whose cost is
    linear in the window size, so windowed attention scales linearly with the
    token count while global attention scales quadratically.
    """
    return 2 * token_count * window_tokens * dim


def swin_interaction_macs(hg: int, wg: int, k: int, dim: int) -> int:
    return attention_interaction_macs(hg * wg, k * k, dim)


def global_interaction_macs(hg: int, wg: int, dim: int) -> int:
    return attention_interaction_macs(hg * wg, hg * wg, dim)


class HarmonizerModel:
    """Configuration plus parameter tensors, with pure forward evaluation."""

    def __init__(self, config: ModelConfig, seed: int = 0, params: dict | None = None):
        self.config = config
        if params is not None:
            self.params = {k: v if isinstance(v, Tensor) else Tensor(v, requires_grad=True) for k, v in params.items()}
            self._check_params()
        else:
            self.params = self._init_params(np.random.default_rng(seed))

    # ---- parameter construction ------------------------------------------

    def _param_shapes(self) -> dict[str, tuple[int, ...]]:
        cfg = self.config
        n, d1 = cfg.patch_size, cfg.embed_dim
        dims = cfg.stage_dims
        shapes: dict[str, tuple[int, ...]] = {
            "embed.w": (n * n * 4, d1),
            "embed.b": (d1,),
        }

        def block(prefix: str, dim: int, heads: int) -> None:
            hidden = int(round(cfg.mlp_ratio * dim))
            shapes[f"{prefix}.ln1.g"] = (dim,)
            shapes[f"{prefix}.ln1.b"] = (dim,)
            for name in ("q", "k", "v", "o"):
                shapes[f"{prefix}.{name}.w"] = (dim, dim)
                shapes[f"{prefix}.{name}.b"] = (dim,)
            shapes[f"{prefix}.ln2.g"] = (dim,)
            shapes[f"{prefix}.ln2.b"] = (dim,)
            shapes[f"{prefix}.mlp1.w"] = (dim, hidden)
            shapes[f"{prefix}.mlp1.b"] = (hidden,)
            shapes[f"{prefix}.mlp2.w"] = (hidden, dim)
            shapes[f"{prefix}.mlp2.b"] = (dim,)
            if cfg.rel_pos_bias and prefix != "tail.global":
                side = 2 * cfg.window_size - 1
                shapes[f"{prefix}.relpos"] = (side * side, heads)

        for s in range(3):
            for i in range(cfg.depths[s]):
                block(f"s{s}.b{i}", dims[s], cfg.num_heads[s])
        merge1_in = 4 * dims[0] if cfg.resolution_mode == "bottleneck" else dims[0]
        shapes["merge1.w"] = (merge1_in, dims[1])
        shapes["merge1.b"] = (dims[1],)
        shapes["merge2.w"] = (dims[1], dims[2])
        shapes["merge2.b"] = (dims[2],)
        block("tail.global" if cfg.tail == "global" else "tail.local", dims[2], cfg.num_heads[2])
        if cfg.resolution_mode == "bottleneck":
            shapes["expand.w"] = (dims[2], 4 * dims[2])
            shapes["expand.b"] = (4 * dims[2],)
        shapes["head.w"] = (dims[2], n * n * 3)
        shapes["head.b"] = (n * n * 3,)
        return shapes

    def _init_params(self, rng: np.random.Generator) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for name, shape in self._param_shapes().items():
            if name.endswith(".g"):
                data = np.ones(shape)
            elif name.endswith(".b"):
                data = np.zeros(shape)
            elif name.endswith(".relpos"):
                data = rng.normal(0.0, 0.02, size=shape)
            elif name.endswith(("o.w", "mlp2.w")):
                # Residual branches start at zero so every block begins as the
                # identity map; short training runs stay well conditioned.
                data = np.zeros(shape)
            else:
                # Fan-balanced normal keeps activation scale stable across the
                # narrow desk-size widths as well as the full-size ones.
                std = np.sqrt(2.0 / (shape[0] + shape[1]))
                data = rng.normal(0.0, std, size=shape)
            params[name] = Tensor(data, requires_grad=True)
        return params

    def _check_params(self) -> None:
        expected = self._param_shapes()
        got = {k: v.shape for k, v in self.params.items()}
        if got != expected:
            missing = sorted(set(expected) - set(got))
            surplus = sorted(set(got) - set(expected))
            wrong = sorted(k for k in set(got) & set(expected) if got[k] != expected[k])
            raise ShapeError(
                f"parameter mismatch: missing={missing} surplus={surplus} reshaped={wrong}"
            )

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.params.values())

    # ---- geometry --------------------------------------------------------

    def _grids(self, h: int, w: int) -> tuple[tuple[int, int], tuple[int, int]]:
        """Token grids for stage 1 and for stages 2/3 (halved in bottleneck
        mode), with divisibility validation."""
        cfg = self.config
        n, k = cfg.patch_size, cfg.window_size
        if h % n or w % n:
            raise ShapeError(f"image {h}x{w} not divisible by patch size {n}")
        hg, wg = h // n, w // n
        if hg % k or wg % k:
            raise ShapeError(f"token grid {hg}x{wg} not divisible by window {k}")
        if cfg.resolution_mode == "full":
            return (hg, wg), (hg, wg)
        if hg % 2 or wg % 2 or (hg // 2) % k or (wg // 2) % k:
            raise ShapeError(
                f"bottleneck mode needs the halved grid {hg//2}x{wg//2} to tile window {k}"
            )
        return (hg, wg), (hg // 2, wg // 2)

    def _block_shift(self, index: int, grid: tuple[int, int]) -> int:
        cfg = self.config
        k = cfg.window_size
        if cfg.disable_shift or index % 2 == 0:
            return 0
        if min(grid) <= k:
            return 0  # a single window already sees everything; no shift
        return k // 2

    def _plans(self, h: int, w: int) -> list[_BlockPlan]:
        cfg = self.config
        grid1, grid23 = self._grids(h, w)
        grids = (grid1, grid23, grid23)
        plans = []
        for s in range(3):
            for i in range(cfg.depths[s]):
                plans.append(
                    _BlockPlan(
                        prefix=f"s{s}.b{i}",
                        dim=cfg.stage_dims[s],
                        heads=cfg.num_heads[s],
                        grid=grids[s],
                        shift=self._block_shift(i, grids[s]),
                        is_global=False,
                    )
                )
        if cfg.tail == "global":
            plans.append(
                _BlockPlan("tail.global", cfg.stage_dims[2], cfg.num_heads[2], grid23, 0, True)
            )
        else:
            plans.append(
                _BlockPlan(
                    "tail.local",
                    cfg.stage_dims[2],
                    cfg.num_heads[2],
                    grid23,
                    self._block_shift(cfg.depths[2], grid23),
                    False,
                )
            )
        return plans

    # ---- forward ---------------------------------------------------------

    def _linear(self, x: Tensor, name: str) -> Tensor:
        return T.matmul(x, self.params[f"{name}.w"]) + self.params[f"{name}.b"]

    def _attention_block(self, x: Tensor, plan: _BlockPlan) -> Tensor:
        p = self.params
        cfg = self.config
        hg, wg = plan.grid
        tokens = hg * wg
        k = cfg.window_size
        if plan.is_global:
            n_windows, win_tokens = 1, tokens
        else:
            n_windows, win_tokens = tokens // (k * k), k * k
        head_dim = plan.dim // plan.heads

        normed = T.layer_norm(x, p[f"{plan.prefix}.ln1.g"], p[f"{plan.prefix}.ln1.b"])
        if plan.is_global:
            win = T.reshape(normed, (1, tokens, plan.dim))
        else:
            perm, inv = window_permutation(hg, wg, k, plan.shift)
            win = T.reshape(T.gather(normed, perm), (n_windows, win_tokens, plan.dim))

        def heads_of(t: Tensor) -> Tensor:
            t = T.reshape(t, (n_windows, win_tokens, plan.heads, head_dim))
            return T.transpose(t, (0, 2, 1, 3))

        q = heads_of(self._linear(win, f"{plan.prefix}.q"))
        key = heads_of(self._linear(win, f"{plan.prefix}.k"))
        v = heads_of(self._linear(win, f"{plan.prefix}.v"))
        scores = T.mul(T.matmul(q, T.transpose(key, (0, 1, 3, 2))), 1.0 / np.sqrt(head_dim))
        if not plan.is_global and cfg.rel_pos_bias:
            table = p[f"{plan.prefix}.relpos"]
            bias = T.gather(table, relative_position_index(k))
            bias = T.transpose(T.reshape(bias, (win_tokens, win_tokens, plan.heads)), (2, 0, 1))
            scores = scores + bias
        if plan.shift:
            mask = shifted_window_mask(hg, wg, k, plan.shift, plan.heads)
            scores = scores + Tensor(mask)
        attn = T.softmax(scores, axis=-1)
        ctx = T.matmul(attn, v)
        ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (n_windows, win_tokens, plan.dim))
        ctx = self._linear(ctx, f"{plan.prefix}.o")
        ctx = T.reshape(ctx, (tokens, plan.dim))
        if not plan.is_global:
            ctx = T.gather(ctx, inv)
        x = x + ctx
        normed2 = T.layer_norm(x, p[f"{plan.prefix}.ln2.g"], p[f"{plan.prefix}.ln2.b"])
        hidden = T.gelu(self._linear(normed2, f"{plan.prefix}.mlp1"))
        return x + self._linear(hidden, f"{plan.prefix}.mlp2")

    def forward_tokens(self, composite: np.ndarray, mask_bits: np.ndarray) -> Tensor:
        """Run the network; returns sigmoid patch tokens of shape (T, n*n*3)."""
        cfg = self.config
        h, w = composite.shape[:2]
        if composite.shape != (h, w, 3):
            raise ShapeError(f"expected (H, W, 3) composite, got {composite.shape}")
        if mask_bits.shape != (h, w):
            raise ShapeError(f"mask {mask_bits.shape} does not match image {h}x{w}")
        grid1, grid23 = self._grids(h, w)
        stacked = np.concatenate([composite, mask_bits.astype(np.float64)[:, :, None]], axis=2)
        x = Tensor(patchify(stacked, cfg.patch_size))
        x = self._linear(x, "embed")

        plans = self._plans(h, w)
        depths = cfg.depths
        for i, plan in enumerate(plans):
            if i == depths[0]:  # entering stage 2: widen (and merge in bottleneck mode)
                if cfg.resolution_mode == "bottleneck":
                    children = merge_child_indices(*grid1)
                    x = T.concat([T.gather(x, idx) for idx in children], axis=1)
                x = self._linear(x, "merge1")
            # A separate check, not elif: with an empty middle stage both
            # widenings land on the same block index and must fire in order.
            if i == depths[0] + depths[1]:
                x = self._linear(x, "merge2")
            x = self._attention_block(x, plan)

        if cfg.resolution_mode == "bottleneck":
            x = self._linear(x, "expand")
            d3 = cfg.stage_dims[2]
            x = T.reshape(x, (grid23[0] * grid23[1] * 4, d3))
            x = T.gather(x, expand_child_order(*grid1))
        return T.sigmoid(self._linear(x, "head"))

    def forward(self, composite: ImageBuffer, mask: ForegroundMask) -> ImageBuffer:
        """Convenience wrapper producing an image from buffer inputs."""
        if composite.channels != 3:
            raise ShapeError("the network expects a 3-channel composite")
        tokens = self.forward_tokens(composite.data, mask.bits)
        n = self.config.patch_size
        hg, wg = composite.height // n, composite.width // n
        return ImageBuffer(unpatchify(tokens.data, hg, wg, n, 3))
