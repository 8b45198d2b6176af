"""Acceptance suite: eleven end-to-end guarantees, one summary line each.

Each test prints "[criterion NN] name: PASS/FAIL" so the suite's verdict can
be read off the terminal without parsing pytest output. Tolerances are pinned
next to each assertion; timed criteria also assert their runtime budget.
"""

import json
import time
from contextlib import contextmanager

import numpy as np
import pytest
from scipy.stats import chi2

from harmkit import metrics
from harmkit import tensor as T
from harmkit.cli import main
from harmkit.imaging import ForegroundMask, ImageBuffer, composite
from harmkit.maskgen import MaskSpec, make_mask
from harmkit.model import (
    HarmonizerModel,
    desk_config,
    patchify,
    shifted_window_mask,
    window_permutation,
)
from harmkit.netpbm import write_ppm
from harmkit.pipeline import PipelineConfig, generate_sample
from harmkit.tensor import Tensor
from harmkit.toydata import make_toy_corpus
from harmkit.training import (
    AdamW,
    TrainConfig,
    cosine_lr,
    finetune_loop,
    mse_loss,
    pretrain_loop,
    mean_validation_mse,
)
from harmkit.transforms import (
    LESS,
    STANDARD,
    TransformSpec,
    apply_transform,
    gaussian_blur,
    sample_transform,
)


@contextmanager
def criterion(capsys, number: int, name: str):
    try:
        yield
    except BaseException:
        with capsys.disabled():
            print(f"[criterion {number:02d}] {name}: FAIL")
        raise
    with capsys.disabled():
        print(f"[criterion {number:02d}] {name}: PASS")


def random_images(count, h, w, seed):
    rng = np.random.default_rng(seed)
    return [ImageBuffer(rng.uniform(size=(h, w, 3))) for _ in range(count)]


def test_criterion_01_transform_identities(capsys):
    with criterion(capsys, 1, "transform identities"):
        start = time.perf_counter()
        images = random_images(20, 24, 24, seed=0)
        for img in images:
            for kind in ("brightness", "contrast", "hue", "saturation", "sharpness"):
                out = apply_transform(img, TransformSpec(kind, factor=1.0))
                assert np.array_equal(out.data, img.data), f"{kind} at c=1 must be exact"
            for bits in range(1, 7):
                spec = TransformSpec("posterize", bits=bits)
                once = apply_transform(img, spec)
                twice = apply_transform(once, spec)
                assert np.array_equal(twice.data, once.data)
            once = apply_transform(img, TransformSpec("auto_contrast"))
            twice = apply_transform(once, TransformSpec("auto_contrast"))
            assert np.abs(twice.data - once.data).max() <= 1e-12
        for value in (0.0, 0.25, 1.0):
            flat = ImageBuffer.full(16, 16, value)
            for k1, k2 in ((3, 5), (9, 11)):
                out = apply_transform(flat, TransformSpec("blur", kernel=(k1, k2)))
                assert np.abs(out.data - value).max() <= 1e-12
        assert time.perf_counter() - start < 10.0


def test_criterion_02_transform_ranges(capsys):
    with criterion(capsys, 2, "transform sampling ranges"):
        n = 10**5
        pinned = {
            "standard": {
                "brightness": (0.2, 1.8),
                "contrast": (0.3, 1.7),
                "hue": (0.7, 1.3),
                "saturation": (0.5, 1.5),
                "sharpness": (0.0, 2.0),
            },
            "less": {
                "brightness": (0.6, 1.4),
                "contrast": (0.65, 1.35),
                "hue": (0.85, 1.15),
                "saturation": (0.75, 1.25),
                "sharpness": (0.5, 1.0),
            },
        }
        kernel_bounds = {"standard": ((3, 9), (5, 11)), "less": ((3, 5), (3, 5))}
        for preset in (STANDARD, LESS):
            rng = np.random.default_rng(2024)
            counts: dict[str, int] = {}
            factor_ranges = pinned[preset.name]
            (k1_lo, k1_hi), (k2_lo, k2_hi) = kernel_bounds[preset.name]
            brightness_factors = []
            for _ in range(n):
                spec = sample_transform(preset, rng)
                counts[spec.kind] = counts.get(spec.kind, 0) + 1
                if spec.kind in factor_ranges:
                    lo, hi = factor_ranges[spec.kind]
                    assert lo <= spec.factor <= hi, (spec.kind, spec.factor)
                    if spec.kind == "brightness":
                        brightness_factors.append(spec.factor)
                elif spec.kind in ("blur", "deblur"):
                    k1, k2 = spec.kernel
                    assert k1 % 2 == 1 and k2 % 2 == 1
                    assert k1_lo <= k1 <= k1_hi and k2_lo <= k2 <= k2_hi
                elif spec.kind == "posterize":
                    assert 1 <= spec.bits <= 6
            assert set(counts) == set(preset.enabled_kinds)
            if preset.name == "less":
                assert "equalize" not in counts
            observed = np.array([counts[k] for k in preset.enabled_kinds], dtype=float)
            expected = n / len(preset.enabled_kinds)
            stat = float(((observed - expected) ** 2 / expected).sum())
            crit = chi2.ppf(0.99, df=len(preset.enabled_kinds) - 1)
            assert stat < crit, f"{preset.name}: kind chi2 {stat:.2f} >= {crit:.2f}"
            # the continuous factor inside its range must also look uniform
            hist, _ = np.histogram(brightness_factors, bins=10, range=factor_ranges["brightness"])
            expected_bin = len(brightness_factors) / 10.0
            stat = float(((hist - expected_bin) ** 2 / expected_bin).sum())
            assert stat < chi2.ppf(0.99, df=9)


def test_criterion_03_composite_algebra(capsys):
    with criterion(capsys, 3, "composite algebra"):
        start = time.perf_counter()
        images = make_toy_corpus(8, 24, 24, seed=2)
        total = 0
        deblur_seen = 0
        for chain, master_seed in ((1, 17), (2, 18)):
            cfg = PipelineConfig(master_seed=master_seed, transforms_per_sample=chain)
            for index in range(500):
                img = images[index % len(images)]
                sample = generate_sample(img, cfg, index)
                total += 1
                fg = sample.mask.bits == 1
                bg = ~fg
                assert np.array_equal(sample.composite.data[bg], sample.target.data[bg])
                specs = sample.provenance.transforms
                if specs[0].kind == "deblur":
                    deblur_seen += 1
                    assert len(specs) == 1
                    blurred = gaussian_blur(img, *specs[0].kernel)
                    assert np.array_equal(sample.target.data, blurred.data)
                    assert np.array_equal(sample.composite.data[fg], img.data[fg])
                else:
                    rebuilt = img
                    for spec in specs:
                        rebuilt = apply_transform(rebuilt, spec)
                    expect = composite(rebuilt, img, sample.mask)
                    assert np.array_equal(sample.composite.data, expect.data)
                redone = composite(sample.composite, sample.composite, sample.mask)
                assert np.array_equal(redone.data, sample.composite.data)
        assert total == 1000 and deblur_seen > 0
        assert time.perf_counter() - start < 30.0


def test_criterion_04_mask_ratios(capsys):
    with criterion(capsys, 4, "mask ratio control"):
        targets = (0.3, 0.5, 0.7)
        for target in targets:
            cells = int(np.rint(target * 64))
            for strategy in ("random", "grid"):
                for seed in range(5):
                    rng = np.random.default_rng(seed)
                    mask = make_mask(MaskSpec(strategy, 8, target), 32, 32, rng)
                    assert mask.count() == cells * 16, (strategy, target, seed)
        for target in targets:
            for seed in range(1000):
                rng = np.random.default_rng(seed)
                mask = make_mask(MaskSpec("block", 8, target), 48, 48, rng)
                ratio = mask.ratio()
                assert target <= ratio <= target + 0.1, (target, seed, ratio)


def naive_metrics(pred, gt, bits):
    h, w, c = pred.shape
    se_all = 0.0
    se_fg = 0.0
    n_fg = 0
    for y in range(h):
        for x in range(w):
            for ch in range(c):
                d = (pred[y, x, ch] - gt[y, x, ch]) * 255.0
                se_all += d * d
                if bits[y, x]:
                    se_fg += d * d
            if bits[y, x]:
                n_fg += 1
    mse_val = se_all / (h * w * c)
    fmse_val = se_fg / (n_fg * c)

    def db(err):
        if err <= 65025e-10:
            return 100.0
        return 10.0 * np.log10(65025.0 / err)

    return mse_val, db(mse_val), fmse_val, db(fmse_val)


def test_criterion_05_metric_oracle(capsys):
    with criterion(capsys, 5, "metric oracle"):
        rng = np.random.default_rng(11)
        for _ in range(100):
            pred = rng.uniform(size=(8, 8, 3))
            gt = rng.uniform(size=(8, 8, 3))
            bits = (rng.uniform(size=(8, 8)) < 0.6).astype(np.uint8)
            if not bits.any():
                bits[0, 0] = 1
            report = metrics.evaluate(ImageBuffer(pred), ImageBuffer(gt), ForegroundMask(bits))
            ref = naive_metrics(pred, gt, bits)
            for got, want in zip((report.mse, report.psnr, report.fmse, report.fpsnr), ref):
                assert abs(got - want) <= 1e-9 * max(1.0, abs(want))
        sample = ImageBuffer(rng.uniform(size=(8, 8, 3)))
        other = ImageBuffer(rng.uniform(size=(8, 8, 3)))
        full = ForegroundMask(np.ones((8, 8), dtype=np.uint8))
        assert metrics.fmse(sample, other, full) == metrics.mse(sample, other)
        black = ImageBuffer.full(4, 4, 0.0)
        white = ImageBuffer.full(4, 4, 1.0)
        assert metrics.mse(black, white) == 65025.0
        assert metrics.psnr(black, white) == 0.0
        assert metrics.psnr(sample, sample) == 100.0


def test_criterion_06_attention_structure(capsys):
    with criterion(capsys, 6, "windowed attention structure"):
        for hg, wg, k, shift in ((8, 8, 4, 0), (8, 8, 4, 2), (8, 12, 4, 2), (16, 8, 8, 4)):
            perm, inv = window_permutation(hg, wg, k, shift)
            n = hg * wg
            assert np.array_equal(perm[inv], np.arange(n))
            assert np.array_equal(inv[perm], np.arange(n))

        rng = np.random.default_rng(3)
        scores = rng.normal(size=(4, 2, 16, 16))
        mask = shifted_window_mask(8, 8, 4, 2, 2)
        weights = T.softmax(Tensor(scores + mask), axis=-1).data
        assert np.abs(weights.sum(axis=-1) - 1.0).max() <= 1e-12
        blocked = mask < 0.0
        assert blocked.any()
        assert weights[blocked].max() < 1e-20

        # locality probe at the 8x8 token scale (32x32 pixels, patch 4)
        img = make_toy_corpus(1, 32, 32, seed=7)[0]
        bits = np.zeros((32, 32), dtype=np.uint8)

        def influence(model):
            base = model.forward_tokens(img.data, bits).data
            moved = img.data.copy()
            moved[4:8, 4:8] += 0.25  # patch token 9 = grid (1, 1)
            out = model.forward_tokens(np.clip(moved, 0, 1), bits).data
            return np.abs(out - base).max(axis=1)

        def randomized(cfg):
            model = HarmonizerModel(cfg, seed=0)
            prng = np.random.default_rng(77)
            for name in sorted(model.params):
                data = model.params[name].data
                data[...] = prng.normal(0.0, 0.3, size=data.shape)
            return model

        window = np.zeros(64, dtype=bool)
        window.reshape(8, 8)[:4, :4] = True
        local = influence(randomized(desk_config(tail="local", disable_shift=True)))
        assert local[window].max() > 0.0
        assert local[~window].max() == 0.0  # zero cross-window influence
        swept = influence(randomized(desk_config(tail="global", disable_shift=True)))
        assert swept.min() > 0.0  # the global tail reaches every token


def finite_difference(fn, arrays, tol, rng, h=1e-5, probes=None):
    """Central-difference check of fn's gradients w.r.t. every input array."""
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = fn(*tensors)
    weights = rng.normal(size=out.shape)
    loss = T.sum_(T.mul(out, Tensor(weights)))
    loss.backward()

    def value_at(mutated):
        plain = fn(*[Tensor(a) for a in mutated])
        return float(np.sum(plain.data * weights))

    for t_idx, base in enumerate(arrays):
        grad = tensors[t_idx].grad
        assert grad is not None
        flat = base.reshape(-1)
        coords = range(flat.size) if probes is None else rng.choice(flat.size, probes, replace=False)
        for j in coords:
            bumped = [a.copy() for a in arrays]
            bumped[t_idx].reshape(-1)[j] = flat[j] + h
            hi = value_at(bumped)
            bumped[t_idx].reshape(-1)[j] = flat[j] - h
            lo = value_at(bumped)
            numeric = (hi - lo) / (2 * h)
            analytic = grad.reshape(-1)[j]
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
            assert err <= tol, f"coord {j}: analytic {analytic} vs numeric {numeric}"


def test_criterion_07_gradient_checks(capsys):
    with criterion(capsys, 7, "gradient checks"):
        start = time.perf_counter()
        rng = np.random.default_rng(5)
        a23 = rng.normal(size=(2, 3))
        b23 = rng.normal(size=(2, 3))
        cases = [
            (lambda x, y: x + y, [a23, b23]),
            (lambda x, y: x - y, [a23, b23]),
            (lambda x, y: T.mul(x, y), [a23, b23]),
            (lambda x: T.neg(x), [a23]),
            (lambda x, y: T.matmul(x, y), [rng.normal(size=(3, 4)), rng.normal(size=(4, 2))]),
            (
                lambda x, y: T.matmul(x, y),
                [rng.normal(size=(2, 2, 3, 4)), rng.normal(size=(2, 2, 4, 2))],
            ),
            (lambda x: T.reshape(x, (6,)), [a23]),
            (lambda x: T.transpose(x, (1, 0)), [a23]),
            (lambda x: T.slice_(x, (slice(0, 1), slice(1, 3))), [a23]),
            (lambda x, y: T.concat([x, y], axis=0), [a23, b23]),
            (lambda x: T.pad(x, ((1, 1), (0, 2))), [a23]),
            (lambda x: T.gather(x, np.array([2, 0, 1, 2])), [rng.normal(size=(3, 2))]),
            (
                lambda x: T.scatter_add(x, np.array([1, 0, 1]), 0, 4),
                [rng.normal(size=(3, 2))],
            ),
            (lambda x: T.sum_(x), [a23]),
            (lambda x: T.mean(x), [a23]),
            (lambda x: T.softmax(x, axis=-1), [rng.normal(size=(2, 4))]),
            (
                lambda x, g, b: T.layer_norm(x, g, b),
                [rng.normal(size=(3, 5)), rng.normal(size=(5,)), rng.normal(size=(5,))],
            ),
            (lambda x: T.gelu(x), [a23]),
            (lambda x: T.sigmoid(x), [a23]),
        ]
        for fn, arrays in cases:
            finite_difference(fn, arrays, tol=1e-4, rng=rng)

        # full desk-scale model: 100 randomly probed parameters
        model = HarmonizerModel(desk_config(), seed=3)
        prng = np.random.default_rng(13)
        for name in sorted(model.params):
            data = model.params[name].data
            data[...] = prng.normal(0.0, 0.2, size=data.shape)
        img = make_toy_corpus(1, 32, 32, seed=7)[0]
        bits = (prng.uniform(size=(32, 32)) < 0.5).astype(np.uint8)
        target = patchify(make_toy_corpus(1, 32, 32, seed=8)[0].data, 4)

        def loss_value():
            pred = model.forward_tokens(img.data, bits)
            return mse_loss(pred, target)

        loss = loss_value()
        loss.backward()
        grads = {k: p.grad.copy() for k, p in model.params.items()}
        for p in model.params.values():
            p.grad = None

        names = sorted(model.params)
        sizes = np.array([model.params[k].data.size for k in names], dtype=float)
        h = 1e-5
        for _ in range(100):
            name = names[int(prng.choice(len(names), p=sizes / sizes.sum()))]
            data = model.params[name].data
            j = int(prng.integers(data.size))
            keep = data.reshape(-1)[j]
            data.reshape(-1)[j] = keep + h
            hi = loss_value().item()
            data.reshape(-1)[j] = keep - h
            lo = loss_value().item()
            data.reshape(-1)[j] = keep
            numeric = (hi - lo) / (2 * h)
            analytic = grads[name].reshape(-1)[j]
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
            assert err <= 1e-3, f"{name}[{j}]: analytic {analytic} vs numeric {numeric}"
        assert time.perf_counter() - start < 300.0


def test_criterion_08_optimizer_and_schedule(capsys):
    with criterion(capsys, 8, "optimizer and schedule"):
        cfg = TrainConfig(weight_decay=0.02)
        rng = np.random.default_rng(1)
        p = Tensor(rng.normal(size=(4,)), requires_grad=True)
        ref = p.data.copy()
        opt = AdamW({"p": p}, cfg)
        m = np.zeros(4)
        v = np.zeros(4)
        for t in range(1, 101):
            g = np.cos(0.1 * t * np.arange(1.0, 5.0))
            lr = cosine_lr(t - 1, 100, 0.01)
            p.grad = g.copy()
            opt.step(lr)
            m = cfg.beta1 * m + (1 - cfg.beta1) * g
            v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
            m_hat = m / (1 - cfg.beta1**t)
            v_hat = v / (1 - cfg.beta2**t)
            ref = ref * (1 - lr * cfg.weight_decay) - lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
            assert np.abs(p.data - ref).max() <= 1e-12, f"diverged at step {t}"
        for lr_max, total in ((0.3, 100), (2.7e-3, 7)):
            assert cosine_lr(0, total, lr_max) == lr_max
            assert cosine_lr(total, total, lr_max) == 0.0


def test_criterion_09_single_sample_overfit(capsys):
    with criterion(capsys, 9, "single-sample overfit"):
        start = time.perf_counter()
        img = make_toy_corpus(1, 32, 32, seed=7)[0]
        sample = generate_sample(img, PipelineConfig(master_seed=3), 0)
        model = HarmonizerModel(desk_config(), seed=1)
        cfg = TrainConfig(lr_pretrain=2.7e-3, batch_size=1)
        history = pretrain_loop(model, iter([sample] * 200), cfg, steps=200)
        ratio = history[-1] / history[0]
        assert ratio < 0.01, f"loss ratio {ratio:.5f}"
        restored = model.forward(sample.composite, sample.mask)
        db = metrics.psnr(restored, sample.target)
        assert db > 30.0, f"reconstruction {db:.2f} dB"
        assert time.perf_counter() - start < 600.0


def test_criterion_10_pretraining_direction_of_effect(capsys):
    with criterion(capsys, 10, "pre-training direction of effect"):
        start = time.perf_counter()
        images = make_toy_corpus(20, 32, 32, seed=11)
        val_cfg = PipelineConfig(master_seed=9999)
        val_triples = [generate_sample(images[14 + i], val_cfg, i) for i in range(6)]
        wins = {0.5: 0, 1.0: 0}
        for seed in range(10):
            pre_cfg = PipelineConfig(master_seed=seed)
            stream = (generate_sample(images[i % 20], pre_cfg, i) for i in range(10**6))
            cfg = TrainConfig(lr_pretrain=2.7e-3, lr_finetune=2.7e-3, batch_size=2)
            pre_model = HarmonizerModel(desk_config(), seed=seed)
            pretrain_loop(pre_model, stream, cfg, steps=150)

            ft_cfg = PipelineConfig(master_seed=1000 + seed)
            triples = [generate_sample(images[i % 20], ft_cfg, i) for i in range(10)]
            for frac in (0.5, 1.0):
                warm = HarmonizerModel(desk_config(), seed=seed)
                for k in warm.params:
                    warm.params[k].data[...] = pre_model.params[k].data
                finetune_loop(warm, triples, cfg, steps=60, fraction=frac, seed=seed)
                cold = HarmonizerModel(desk_config(), seed=seed)
                finetune_loop(cold, triples, cfg, steps=60, fraction=frac, seed=seed)
                if mean_validation_mse(warm, val_triples) < mean_validation_mse(cold, val_triples):
                    wins[frac] += 1
        assert wins[0.5] >= 8, f"fraction 0.5: only {wins[0.5]}/10 wins"
        assert wins[1.0] >= 8, f"fraction 1.0: only {wins[1.0]}/10 wins"
        assert time.perf_counter() - start < 3600.0


def test_criterion_11_cli_determinism(capsys, tmp_path):
    with criterion(capsys, 11, "command-line determinism"):
        src = tmp_path / "src"
        src.mkdir()
        for i, img in enumerate(make_toy_corpus(3, 32, 32, seed=100)):
            write_ppm(src / f"img{i}.ppm", img)

        runs = []
        for label, extra in (("a", []), ("b", []), ("c", ["--threads", "3"])):
            out = tmp_path / f"gen_{label}"
            args = ["generate", str(src), "--out", str(out), "--seed", "7", *extra]
            assert main(args) == 0
            runs.append(out)
        names = sorted(p.name for p in runs[0].iterdir())
        assert "manifest.jsonl" in names
        for other in runs[1:]:
            assert sorted(p.name for p in other.iterdir()) == names
            for name in names:
                assert (runs[0] / name).read_bytes() == (other / name).read_bytes(), name
        header = json.loads((runs[0] / "manifest.jsonl").read_text().splitlines()[0])
        assert header["type"] == "run-config"

        demos = []
        for label, extra in (("a", []), ("b", []), ("c", ["--threads", "2"])):
            out = tmp_path / f"demo_{label}" / "model.bin"
            args = [
                "train-demo",
                "--steps",
                "3",
                "--corpus-size",
                "2",
                "--image-size",
                "16",
                "--seed",
                "5",
                "--out",
                str(out),
                *extra,
            ]
            assert main(args) == 0
            demos.append(out)
        for other in demos[1:]:
            assert demos[0].read_bytes() == other.read_bytes()
            for suffix in (".loss.csv", ".loss.png"):
                a = demos[0].parent / (demos[0].name + suffix)
                b = other.parent / (other.name + suffix)
                assert a.read_bytes() == b.read_bytes()
