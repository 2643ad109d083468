"""Attention heatmaps: a tab-separated weight matrix and a grayscale SVG."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .attention import AttentionLevel, HopConfig
from .data import Example
from .model import AMRNN

CELL_W, CELL_H, LABEL_H, MARGIN = 36, 24, 60, 8


def format_matrix(weights: np.ndarray) -> str:
    return "".join("\t".join(f"{w:.17g}" for w in row) + "\n" for row in weights)


def read_matrix(path) -> np.ndarray:
    rows = [[float(x) for x in line.split("\t")] for line in Path(path).read_text().splitlines() if line]
    return np.array(rows)


def render_svg(weights: np.ndarray, words: list[str], title: str = "") -> str:
    """One row of cells per hop; black is weight 1, white is weight 0."""
    n_hops, n_pos = weights.shape
    width = 2 * MARGIN + 40 + n_pos * CELL_W
    height = 2 * MARGIN + 20 + n_hops * CELL_H + LABEL_H
    top = MARGIN + 20
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<text x="{MARGIN}" y="{MARGIN + 12}" font-family="monospace" font-size="12">{escape(title)}</text>',
    ]
    for k in range(n_hops):
        y = top + k * CELL_H
        parts.append(f'<text x="{MARGIN}" y="{y + CELL_H - 8}" font-family="monospace" '
                     f'font-size="11">hop {k + 1}</text>')
        for t in range(n_pos):
            level = int(round(255 * (1.0 - min(max(weights[k, t], 0.0), 1.0))))
            parts.append(f'<rect x="{MARGIN + 40 + t * CELL_W}" y="{y}" width="{CELL_W}" height="{CELL_H}" '
                         f'fill="rgb({level},{level},{level})" stroke="#999" stroke-width="0.5">'
                         f'<title>{weights[k, t]:.6g}</title></rect>')
    label_y = top + n_hops * CELL_H + 6
    for t, word in enumerate(words):
        x = MARGIN + 40 + t * CELL_W + CELL_W // 2
        parts.append(f'<text x="{x}" y="{label_y}" font-family="monospace" font-size="10" '
                     f'transform="rotate(60 {x} {label_y})">{escape(word)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def export_attention(model: AMRNN, example: Example, level: AttentionLevel | str,
                     out_dir) -> tuple[Path, Path]:
    """Write ``<id>.<level>.tsv`` and ``<id>.<level>.svg`` for one example."""
    level = AttentionLevel(level)
    viewer = AMRNN(model.encoder, HopConfig(model.hops.n_hops, level))
    trace = viewer.trace(example)
    weights = trace.weights
    out_dir = Path(out_dir)
    stem = f"{example.id}.{level.value}"
    tsv, svg = out_dir / f"{stem}.tsv", out_dir / f"{stem}.svg"
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        tsv.write_text(format_matrix(weights), encoding="utf-8")
        svg.write_text(render_svg(weights, example.story.words,
                                  f"{example.id} ({level.value}): {' '.join(example.question)}"),
                       encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write attention export to {out_dir}: {exc}") from exc
    return tsv, svg
