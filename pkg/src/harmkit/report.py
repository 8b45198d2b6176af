"""Delimited metric tables, loss histories, and their rendered figures.

All writers are deterministic: no timestamps, fixed float formatting, and
figures saved with pinned PNG metadata so reruns produce identical bytes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import MetricReport

PathLike = Union[str, Path]

_PNG_METADATA = {"Software": "harmkit"}

METRIC_COLUMNS = ("MSE", "PSNR", "fMSE", "fPSNR")


def _fmt(x: float) -> str:
    return f"{x:.4f}"


def _rows_to_cells(rows: Sequence[tuple[str, MetricReport]]) -> list[list[str]]:
    return [
        [name, _fmt(r.mse), _fmt(r.psnr), _fmt(r.fmse), _fmt(r.fpsnr), str(r.fg_pixel_count)]
        for name, r in rows
    ]


def write_metrics_csv(
    path: PathLike, rows: Sequence[tuple[str, MetricReport]], total: MetricReport
) -> None:
    lines = ["image,MSE,PSNR,fMSE,fPSNR,fg_pixels"]
    for cells in _rows_to_cells(list(rows) + [("aggregate", total)]):
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_metrics_markdown(
    path: PathLike, rows: Sequence[tuple[str, MetricReport]], total: MetricReport
) -> None:
    lines = [
        "| image | MSE | PSNR | fMSE | fPSNR | fg pixels |",
        "| --- | ---: | ---: | ---: | ---: | ---: |",
    ]
    for cells in _rows_to_cells(list(rows) + [("aggregate", total)]):
        lines.append("| " + " | ".join(cells) + " |")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def render_metrics_figure(
    path: PathLike, rows: Sequence[tuple[str, MetricReport]], total: MetricReport
) -> None:
    """Two-panel bar chart: per-image error and per-image PSNR, with the
    aggregate drawn as a dashed reference line."""
    xs = range(len(rows))
    fig, (ax_err, ax_db) = plt.subplots(1, 2, figsize=(10, 4))
    width = 0.4
    ax_err.bar([x - width / 2 for x in xs], [r.mse for _, r in rows], width, label="MSE")
    ax_err.bar([x + width / 2 for x in xs], [r.fmse for _, r in rows], width, label="fMSE")
    ax_err.axhline(total.mse, linestyle="--", linewidth=1, color="black")
    ax_err.set_xlabel("image index")
    ax_err.set_ylabel("squared error (0-255 scale)")
    ax_err.legend()
    ax_db.bar([x - width / 2 for x in xs], [r.psnr for _, r in rows], width, label="PSNR")
    ax_db.bar([x + width / 2 for x in xs], [r.fpsnr for _, r in rows], width, label="fPSNR")
    ax_db.axhline(total.psnr, linestyle="--", linewidth=1, color="black")
    ax_db.set_xlabel("image index")
    ax_db.set_ylabel("dB")
    ax_db.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_METADATA)
    plt.close(fig)


def write_loss_csv(path: PathLike, history: Sequence[float]) -> None:
    lines = ["step,loss"]
    for step, loss in enumerate(history):
        lines.append(f"{step},{loss:.10g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def render_loss_curve(path: PathLike, history: Sequence[float]) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(range(len(history)), history)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.grid(True, which="both", linewidth=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_PNG_METADATA)
    plt.close(fig)
