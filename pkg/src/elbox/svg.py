"""Minimal SVG drawing of 2-D boxes."""
from __future__ import annotations

from xml.sax.saxutils import escape

PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
]


def boxes_to_svg(boxes: dict, size: int = 600, padding: float = 0.1) -> str:
    """Render ``{label: Box}`` (2-D boxes) into an SVG document string.

    Coordinates are mapped linearly into a ``size`` x ``size`` viewport with
    ``padding`` of the extent left free on every side; the y axis points up.
    """
    if any(b.dim != 2 for b in boxes.values()):
        raise ValueError("only 2-D boxes can be drawn")
    if boxes:
        xs = [v for b in boxes.values() for v in (b.center[0] - b.offset[0], b.center[0] + b.offset[0])]
        ys = [v for b in boxes.values() for v in (b.center[1] - b.offset[1], b.center[1] + b.offset[1])]
        x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    else:
        x0 = y0 = 0.0
        x1 = y1 = 1.0
    span = max(x1 - x0, y1 - y0, 1e-9)
    inner = size * (1 - 2 * padding)
    scale = inner / span
    pad = size * padding

    def px(x):
        return pad + (x - x0) * scale

    def py(y):
        return size - pad - (y - y0) * scale

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect x="0" y="0" width="{size}" height="{size}" fill="white"/>',
    ]
    for i, (label, b) in enumerate(boxes.items()):
        color = PALETTE[i % len(PALETTE)]
        left, top = px(b.center[0] - b.offset[0]), py(b.center[1] + b.offset[1])
        w, h = 2 * b.offset[0] * scale, 2 * b.offset[1] * scale
        parts.append(
            f'<rect class="box" x="{left:.2f}" y="{top:.2f}" width="{w:.2f}" height="{h:.2f}" '
            f'fill="{color}" fill-opacity="0.15" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(
            f'<text x="{left + 3:.2f}" y="{top + 13:.2f}" font-family="sans-serif" font-size="12" '
            f'fill="{color}">{escape(label)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
