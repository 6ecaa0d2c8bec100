"""Minimal SVG output for contours and 2D point clouds (figure panels)."""

from __future__ import annotations

import numpy as np

from .meshing import Contour

__all__ = ["svg_document", "contour_path", "point_markers", "write_svg"]

_CANVAS = 512.0


def _to_canvas(xy: np.ndarray) -> np.ndarray:
    # unit square to pixels, y flipped for screen coordinates
    out = np.asarray(xy, dtype=np.float64) * _CANVAS
    out[:, 1] = _CANVAS - out[:, 1]
    return out


def contour_path(contour: Contour, color: str = "#1f77b4", width: float = 2.0) -> str:
    parts = []
    for loop in contour.loops:
        pts = _to_canvas(loop.copy())
        d = "M " + " L ".join(f"{x:.2f},{y:.2f}" for x, y in pts) + " Z"
        parts.append(
            f'<path d="{d}" fill="none" stroke="{color}" stroke-width="{width}"/>'
        )
    return "\n".join(parts)


def point_markers(points: np.ndarray, color: str = "#d62728", radius: float = 1.5) -> str:
    pts = _to_canvas(np.asarray(points, dtype=np.float64).copy())
    return "\n".join(
        f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{radius}" fill="{color}"/>' for x, y in pts
    )


def svg_document(elements: list[str]) -> str:
    body = "\n".join(elements)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_CANVAS:.0f}" '
        f'height="{_CANVAS:.0f}" viewBox="0 0 {_CANVAS:.0f} {_CANVAS:.0f}">\n'
        f'<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n'
    )


def write_svg(path, elements: list[str]) -> None:
    with open(path, "w") as fh:
        fh.write(svg_document(elements))
