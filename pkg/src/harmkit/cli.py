"""Command-line interface.

Subcommands:

- ``generate``: turn source images into (composite, mask, target) triples
  plus a JSON-lines manifest.
- ``eval``: score predictions against ground truth and masks; writes CSV,
  Markdown, and a rendered figure.
- ``train-demo``: small-scale training run producing a checkpoint, a loss
  CSV, and a loss-curve figure.
- ``inspect``: apply a single named transform to one image.

Every subcommand accepts ``--seed``, ``--threads``, and ``--config FILE``.
The config file is plain ``key = value`` text (keys are long option names
with dashes as underscores); explicit flags override config values. Exit
codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import HarmkitError
from .imaging import ImageBuffer
from .maskgen import STRATEGIES, MaskSpec
from .metrics import aggregate, evaluate
from .model import HarmonizerModel, ModelConfig, desk_config, large_config
from .netpbm import read_image, read_pgm, write_pgm, write_png, write_ppm
from .pipeline import PipelineConfig, generate_stream
from .report import (
    render_loss_curve,
    render_metrics_figure,
    write_loss_csv,
    write_metrics_csv,
    write_metrics_markdown,
)
from .training import TrainConfig, finetune_loop, pretrain_loop
from .transforms import PRESETS, TransformSpec, apply_transform
from .toydata import make_toy_corpus

IMAGE_SUFFIXES = (".ppm", ".png")


class UsageError(Exception):
    """Bad invocation discovered after argparse; maps to exit code 2."""


def _common_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    sub.add_argument(
        "--threads", type=int, default=1, help="worker threads; results never depend on it"
    )
    sub.add_argument("--config", type=str, default=None, help="key=value config file")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="harmkit",
        description="Composite-generation, harmonization-metric, and training toolkit.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)
    by_name: dict[str, argparse.ArgumentParser] = {}

    gen = subs.add_parser("generate", help="create (composite, mask, target) triples")
    gen.add_argument("inputs", nargs="+", help="source images or one directory")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--preset", choices=sorted(PRESETS), default="standard")
    gen.add_argument("--strategy", choices=STRATEGIES, default="random")
    gen.add_argument("--ratio", type=float, default=0.5, help="target mask ratio")
    gen.add_argument("--partition", type=int, default=8, help="cells per side for random/grid")
    gen.add_argument(
        "--chain", type=int, default=1, help="transforms applied per sample (1 to 3)"
    )
    gen.add_argument("--prefix", default="sample", help="output filename prefix")
    by_name["generate"] = gen

    ev = subs.add_parser("eval", help="score predictions with MSE/PSNR/fMSE/fPSNR")
    ev.add_argument("--manifest", help="manifest from generate; scores composite vs target")
    ev.add_argument("--pred", help="directory of predictions (NAME.ppm or NAME.png)")
    ev.add_argument("--gt", help="directory of ground-truth images (same NAME)")
    ev.add_argument("--mask", help="directory of masks (NAME.pgm)")
    ev.add_argument("--out", required=True, help="report directory")
    ev.add_argument(
        "--quantized", action="store_true", help="measure on rounded 0-255 values"
    )
    by_name["eval"] = ev

    tr = subs.add_parser("train-demo", help="small-scale training run")
    tr.add_argument("--preset", choices=("desk", "large"), default="desk")
    tr.add_argument("--steps", type=int, default=50)
    tr.add_argument("--batch-size", type=int, default=2)
    tr.add_argument(
        "--lr",
        type=float,
        default=2.7e-3,
        help="peak learning rate (cosine-annealed to zero)",
    )
    tr.add_argument("--out", required=True, help="checkpoint path")
    tr.add_argument("--images", default=None, help="source image directory (default: synthetic)")
    tr.add_argument("--corpus-size", type=int, default=8, help="synthetic corpus size")
    tr.add_argument(
        "--image-size", type=int, default=None, help="synthetic image side (default fits preset)"
    )
    tr.add_argument(
        "--fraction",
        type=float,
        default=None,
        help="fine-tune on this fraction of the corpus instead of pre-training",
    )
    tr.add_argument("--from-checkpoint", default=None, help="resume weights from a checkpoint")
    by_name["train-demo"] = tr

    ins = subs.add_parser("inspect", help="apply one transform to one image")
    ins.add_argument(
        "kind",
        choices=(
            "brightness",
            "contrast",
            "hue",
            "saturation",
            "sharpness",
            "blur",
            "auto_contrast",
            "equalize",
            "posterize",
        ),
    )
    ins.add_argument("--input", required=True)
    ins.add_argument("--output", required=True)
    ins.add_argument("--c", type=float, default=None, help="factor for enhancement kinds")
    ins.add_argument("--k1", type=int, default=3, help="horizontal blur kernel size")
    ins.add_argument("--k2", type=int, default=5, help="vertical blur kernel size")
    ins.add_argument("--n", type=int, default=None, help="bits kept by posterize")
    by_name["inspect"] = ins

    for sub in by_name.values():
        _common_flags(sub)
    return parser, by_name


def load_config_file(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment, blanks are skipped."""
    mapping: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        mapping[key.replace("-", "_")] = value
    return mapping


def _coerce_config(
    mapping: dict[str, str], sub: argparse.ArgumentParser, command: str
) -> dict[str, object]:
    actions = {
        a.dest: a
        for a in sub._actions
        if a.option_strings and a.dest not in ("help", "config")
    }
    out: dict[str, object] = {}
    for key, value in mapping.items():
        if key not in actions:
            raise UsageError(f"config key {key!r} is not an option of {command!r}")
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            lowered = value.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key!r} needs a boolean, got {value!r}")
            out[key] = lowered in ("true", "1", "yes")
        elif action.type is not None:
            try:
                out[key] = action.type(value)
            except ValueError as exc:
                raise UsageError(f"config key {key!r}: {exc}") from exc
        else:
            out[key] = value
        if action.choices is not None and out[key] not in action.choices:
            raise UsageError(
                f"config key {key!r} must be one of {sorted(action.choices)}, got {value!r}"
            )
    return out


def _expand_inputs(inputs: Sequence[str]) -> list[Path]:
    if len(inputs) == 1 and Path(inputs[0]).is_dir():
        root = Path(inputs[0])
        found = sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not found:
            raise UsageError(f"no {'/'.join(IMAGE_SUFFIXES)} images in {root}")
        return found
    return [Path(p) for p in inputs]


def _effective_run_config(args: argparse.Namespace) -> dict:
    return {
        "type": "run-config",
        "command": "generate",
        "preset": args.preset,
        "strategy": args.strategy,
        "ratio": args.ratio,
        "partition": args.partition,
        "chain": args.chain,
        "prefix": args.prefix,
        "seed": args.seed,
    }


def cmd_generate(args: argparse.Namespace) -> int:
    paths = _expand_inputs(args.inputs)
    cfg = PipelineConfig(
        preset=PRESETS[args.preset],
        mask_spec=MaskSpec(args.strategy, args.partition, args.ratio),
        transforms_per_sample=args.chain,
        master_seed=args.seed,
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = 0
    with open(out_dir / "manifest.jsonl", "w", encoding="utf-8") as manifest:
        manifest.write(json.dumps(_effective_run_config(args)) + "\n")
        for item in generate_stream(paths, cfg, threads=args.threads):
            if not item.ok:
                failures += 1
                print(f"error: {item.source}: {item.error}", file=sys.stderr)
                continue
            stem = f"{args.prefix}_{item.index:05d}"
            files = {
                "composite": f"{stem}_composite.ppm",
                "mask": f"{stem}_mask.pgm",
                "target": f"{stem}_target.ppm",
            }
            sample = item.sample
            write_ppm(out_dir / files["composite"], sample.composite)
            write_pgm(out_dir / files["mask"], sample.mask)
            write_ppm(out_dir / files["target"], sample.target)
            record = {
                "index": item.index,
                "source_path": item.source,
                "transforms": [t.to_json_dict() for t in sample.provenance.transforms],
                "mask": sample.provenance.mask_spec.to_json_dict(),
                "seed": [cfg.master_seed, item.index],
                "files": files,
            }
            manifest.write(json.dumps(record) + "\n")
    return 1 if failures else 0


def _eval_triples_from_manifest(manifest_path: Path):
    base = manifest_path.parent
    with open(manifest_path, encoding="utf-8") as fh:
        for line in fh:
            obj = json.loads(line)
            if obj.get("type") == "run-config":
                continue
            files = obj["files"]
            name = files["composite"]
            yield name, base / files["composite"], base / files["target"], base / files["mask"]


def _eval_triples_from_dirs(pred_dir: Path, gt_dir: Path, mask_dir: Path):
    preds = sorted(p for p in pred_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not preds:
        raise UsageError(f"no predictions found in {pred_dir}")
    for pred in preds:
        yield pred.name, pred, gt_dir / pred.name, mask_dir / (pred.stem + ".pgm")


def cmd_eval(args: argparse.Namespace) -> int:
    if args.manifest:
        triples = _eval_triples_from_manifest(Path(args.manifest))
    elif args.pred and args.gt and args.mask:
        triples = _eval_triples_from_dirs(Path(args.pred), Path(args.gt), Path(args.mask))
    else:
        raise UsageError("eval needs --manifest or all of --pred/--gt/--mask")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    failures = 0
    for name, pred_path, gt_path, mask_path in triples:
        try:
            report = evaluate(
                read_image(pred_path),
                read_image(gt_path),
                read_pgm(mask_path),
                quantized=args.quantized,
            )
        except (OSError, HarmkitError) as exc:
            failures += 1
            print(f"error: {name}: {exc}", file=sys.stderr)
            continue
        rows.append((name, report))
    if not rows:
        print("error: nothing evaluated", file=sys.stderr)
        return 1
    total = aggregate([r for _, r in rows])
    write_metrics_csv(out_dir / "metrics.csv", rows, total)
    write_metrics_markdown(out_dir / "metrics.md", rows, total)
    render_metrics_figure(out_dir / "metrics.png", rows, total)
    print(
        f"aggregate over {len(rows)} images: MSE {total.mse:.4f}, PSNR {total.psnr:.4f} dB, "
        f"fMSE {total.fmse:.4f}, fPSNR {total.fpsnr:.4f} dB"
    )
    return 1 if failures else 0


def _demo_model(args: argparse.Namespace) -> HarmonizerModel:
    if args.from_checkpoint:
        weights, header = load_checkpoint(args.from_checkpoint)
        return HarmonizerModel(ModelConfig.from_json_dict(header["model"]), params=weights)
    config = desk_config() if args.preset == "desk" else large_config()
    return HarmonizerModel(config, seed=args.seed)


def _demo_corpus(args: argparse.Namespace) -> list[ImageBuffer]:
    if args.images:
        root = Path(args.images)
        paths = sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not paths:
            raise UsageError(f"no images found in {root}")
        return [read_image(p) for p in paths]
    side = args.image_size or (32 if args.preset == "desk" else 128)
    return make_toy_corpus(args.corpus_size, side, side, args.seed)


def cmd_train_demo(args: argparse.Namespace) -> int:
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    model = _demo_model(args)
    corpus = _demo_corpus(args)
    if args.lr <= 0:
        raise UsageError("--lr must be positive")
    train_cfg = TrainConfig(
        batch_size=args.batch_size, lr_pretrain=args.lr, lr_finetune=args.lr
    )
    pipe_cfg = PipelineConfig(master_seed=args.seed)

    def endless_sources():
        i = 0
        while True:
            yield corpus[i % len(corpus)]
            i += 1

    def samples():
        for item in generate_stream(endless_sources(), pipe_cfg, threads=args.threads):
            yield item.sample

    if args.fraction is not None:
        triples = []
        for item in generate_stream(corpus, pipe_cfg, threads=args.threads):
            if not item.ok:
                raise item.error
            triples.append(item.sample)
        history = finetune_loop(
            model, triples, train_cfg, args.steps, fraction=args.fraction, seed=args.seed
        )
    else:
        history = pretrain_loop(model, samples(), train_cfg, args.steps)

    out = Path(args.out)
    if out.parent:
        out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, model.params, {"model": model.config.to_json_dict()})
    write_loss_csv(Path(str(out) + ".loss.csv"), history)
    render_loss_curve(Path(str(out) + ".loss.png"), history)
    print(f"steps {len(history)}, first loss {history[0]:.6g}, final loss {history[-1]:.6g}")
    return 0


def cmd_inspect(args: argparse.Namespace) -> int:
    factor_kinds = ("brightness", "contrast", "hue", "saturation", "sharpness")
    if args.kind in factor_kinds:
        if args.c is None:
            raise UsageError(f"{args.kind} needs --c")
        spec = TransformSpec(args.kind, factor=args.c)
    elif args.kind == "blur":
        spec = TransformSpec("blur", kernel=(args.k1, args.k2))
    elif args.kind == "posterize":
        if args.n is None:
            raise UsageError("posterize needs --n")
        spec = TransformSpec("posterize", bits=args.n)
    else:
        spec = TransformSpec(args.kind)
    img = read_image(args.input)
    result = apply_transform(img, spec)
    out = Path(args.output)
    if out.suffix.lower() == ".png":
        write_png(out, result)
    else:
        write_ppm(out, result)
    return 0


_HANDLERS = {
    "generate": cmd_generate,
    "eval": cmd_eval,
    "train-demo": cmd_train_demo,
    "inspect": cmd_inspect,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, _ = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            # Reparse with config-file values as defaults, so explicit flags
            # keep priority over the file.
            parser2, by_name2 = build_parser()
            defaults = _coerce_config(load_config_file(args.config), by_name2[args.command], args.command)
            by_name2[args.command].set_defaults(**defaults)
            args = parser2.parse_args(argv)
        if args.seed < 0:
            raise UsageError("--seed must be non-negative")
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return _HANDLERS[args.command](args)
    except SystemExit as exc:  # argparse exits; surface the code to callers
        return exc.code if isinstance(exc.code, int) else 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (HarmkitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
