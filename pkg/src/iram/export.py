"""Attention-trace export: heatmap CSV and a minimal SVG rendering.

The CSV layout is locked so downstream diffs are bit-exact: the header
row holds the sentence tokens followed by one column per carried summary
("s1" .. "s(T-1)"), and data row t holds iteration t's weights printed
with six decimals. Structural zeros print as 0.000000.
"""

from __future__ import annotations

import csv
import io

__all__ = ["trace_to_csv", "trace_to_svg"]


def trace_to_csv(trace, tokens):
    matrix = trace.matrix.data
    steps, width = matrix.shape
    if len(tokens) != trace.input_length:
        raise ValueError(f"{len(tokens)} tokens for a trace over {trace.input_length} inputs")
    header = list(tokens) + [f"s{k}" for k in range(1, steps)]
    if len(header) != width:
        raise ValueError(f"header of {len(header)} columns for a {width}-column trace")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in matrix:
        writer.writerow([f"{value:.6f}" for value in row])
    return buffer.getvalue()


def trace_to_svg(trace, tokens, cell=42, label_height=64):
    """Grid heatmap: darker cells carry more attention weight."""
    matrix = trace.matrix.data
    steps, width = matrix.shape
    header = list(tokens) + [f"s{k}" for k in range(1, steps)]
    total_w = width * cell
    total_h = steps * cell + label_height
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" '
        f'font-family="monospace" font-size="11">',
    ]
    for col, name in enumerate(header):
        x = col * cell + cell // 2
        parts.append(
            f'<text x="{x}" y="{label_height - 8}" text-anchor="start" '
            f'transform="rotate(-45 {x} {label_height - 8})">{_escape(name)}</text>')
    for row in range(steps):
        for col in range(width):
            shade = int(round(255 * (1.0 - matrix[row, col])))
            x, y = col * cell, label_height + row * cell
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="rgb({shade},{shade},255)" stroke="#888"/>')
            parts.append(
                f'<text x="{x + cell // 2}" y="{y + cell // 2 + 4}" text-anchor="middle">'
                f'{matrix[row, col]:.2f}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def _escape(text):
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
