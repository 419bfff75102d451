"""Boundary rasters: cut/pad, polyline rasterisation, warping and burn-in."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from skimage.draw import line as draw_line

from gcpreg.core import RasterImage
from gcpreg.errors import CanvasTooSmall, MalformedLine, OutOfBounds, SizeMismatch
from gcpreg.resample import resample_nn, round_half_away
from gcpreg.warp import DEFAULT_DEGREE, WarpModel, fit_points


@dataclass(frozen=True)
class BoundaryPolyline:
    """Polylines of real ``(scan, pixel)`` vertices in the frame ``frame``."""

    lines: tuple
    frame: str = "source"

    def __post_init__(self):
        lines = []
        for k, pl in enumerate(self.lines):
            arr = np.array(pl, dtype=np.float64).reshape(-1, 2)
            if len(arr) < 2:
                raise ValueError(f"polyline {k} has {len(arr)} vertices; need at least 2")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"polyline {k} has non-finite vertices")
            arr.flags.writeable = False
            lines.append(arr)
        object.__setattr__(self, "lines", tuple(lines))

    def map(self, fn, frame: Optional[str] = None) -> "BoundaryPolyline":
        """Apply ``fn(scan_array, pixel_array) -> (scan_array, pixel_array)`` to every vertex."""
        out = []
        for pl in self.lines:
            xs, ys = fn(pl[:, 0], pl[:, 1])
            out.append(np.column_stack([xs, ys]))
        return BoundaryPolyline(tuple(out), frame or self.frame)

    def translate(self, d_scan: float, d_pixel: float) -> "BoundaryPolyline":
        return self.map(lambda x, y: (x + d_scan, y + d_pixel))


def read_polylines(path, frame: str = "source") -> BoundaryPolyline:
    """Parse the polyline text format.

    ``P`` starts a polyline, each following ``scan pixel`` line adds a vertex,
    a blank line (or the next ``P``) ends it, ``#`` starts a comment.
    """
    lines, current = [], None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            if raw.strip() == "" and current is not None:
                lines.append(_close(current, lineno))
                current = None
            continue
        if text == "P":
            if current is not None:
                lines.append(_close(current, lineno))
            current = []
            continue
        if current is None:
            raise MalformedLine(lineno, "vertex outside a polyline (missing 'P')")
        parts = text.split()
        try:
            if len(parts) != 2:
                raise ValueError
            current.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise MalformedLine(lineno, f"expected 'scan pixel', got {raw!r}") from None
    if current is not None:
        lines.append(_close(current, "EOF"))
    return BoundaryPolyline(tuple(lines), frame)


def _close(vertices, where):
    if len(vertices) < 2:
        raise MalformedLine(where, "polyline needs at least 2 vertices")
    return vertices


def write_polylines(path, boundary: BoundaryPolyline) -> None:
    out = []
    for pl in boundary.lines:
        out.append("P")
        out.extend(f"{float(x)!r} {float(y)!r}" for x, y in pl)
        out.append("")
    Path(path).write_text("\n".join(out))


def centered_origin(cut_size, canvas_size) -> tuple[int, int]:
    return (canvas_size[0] - cut_size[0]) // 2, (canvas_size[1] - cut_size[1]) // 2


def cut_and_pad(src: RasterImage, cut_origin, cut_size, canvas_size, pad_value: int = 0,
                placement=None) -> RasterImage:
    """Cut ``cut_size`` (rows, cols) at ``cut_origin`` and place it on a padded canvas.

    The cut is centred on the canvas unless ``placement`` gives its top-left corner.
    """
    r0, c0 = cut_origin
    h, w = cut_size
    if r0 < 0 or c0 < 0 or h < 1 or w < 1 or r0 + h > src.height or c0 + w > src.width:
        raise OutOfBounds(f"cut {h}x{w} at {tuple(cut_origin)} leaves {src.height}x{src.width} source")
    H, W = canvas_size
    if H < h or W < w:
        raise CanvasTooSmall(f"canvas {H}x{W} cannot hold cut {h}x{w}")
    pr, pc = centered_origin(cut_size, canvas_size) if placement is None else placement
    if pr < 0 or pc < 0 or pr + h > H or pc + w > W:
        raise OutOfBounds(f"placement {(pr, pc)} puts the cut outside the canvas")
    canvas = np.full((H, W), pad_value, dtype=src.samples.dtype)
    canvas[pr:pr + h, pc:pc + w] = src.samples[r0:r0 + h, c0:c0 + w]
    return RasterImage(canvas, src.max_value)


def rasterize_boundary(lines: BoundaryPolyline, width: int, height: int, burn_value: int = 255,
                       max_value: int = 255) -> RasterImage:
    """Draw every segment with 8-connected Bresenham lines on a zero background.

    Vertices are rounded half away from zero; pixels outside the frame are
    dropped per segment.
    """
    if width < 1 or height < 1:
        raise ValueError(f"raster size must be >= 1x1, got {height}x{width}")
    out = np.zeros((height, width), dtype=np.uint16)
    for pl in lines.lines:
        v = round_half_away(pl).astype(np.int64)
        for (r0, c0), (r1, c1) in zip(v[:-1], v[1:]):
            if max(r0, r1) < 0 or min(r0, r1) >= height or max(c0, c1) < 0 or min(c0, c1) >= width:
                continue
            rr, cc = draw_line(int(r0), int(c0), int(r1), int(c1))
            keep = (rr >= 0) & (rr < height) & (cc >= 0) & (cc < width)
            out[rr[keep], cc[keep]] = burn_value
    return RasterImage(out, max_value)


def _pair_arrays(pairs):
    arr = np.asarray(pairs, dtype=np.float64).reshape(-1, 2, 2)
    return arr[:, 0, :], arr[:, 1, :]


def transform_polyline(lines: BoundaryPolyline, pairs: Sequence, degree: int = DEFAULT_DEGREE) -> BoundaryPolyline:
    """Move polyline vertices from the source to the target frame.

    ``pairs`` holds ``((target_scan, target_pixel), (source_scan, source_pixel))``
    tie points; the source-to-target polynomial is fitted from them.
    """
    target, source = _pair_arrays(pairs)
    model, _ = fit_points(source, target, degree)
    return lines.map(model.evaluate_many, frame="target")


def transform_boundary(boundary, pairs: Sequence, target_dims, degree: int = DEFAULT_DEGREE,
                       burn_value: int = 255, max_value: int = 255) -> RasterImage:
    """Bring a boundary into the target frame defined by manual tie points.

    A raster is NN-resampled through the target-to-source fit; polylines are
    transformed vertex by vertex and rasterised afresh.
    """
    height, width = target_dims
    if isinstance(boundary, BoundaryPolyline):
        moved = transform_polyline(boundary, pairs, degree)
        return rasterize_boundary(moved, width, height, burn_value, max_value)
    target, source = _pair_arrays(pairs)
    model, _ = fit_points(target, source, degree)
    return resample_nn(boundary, model, width, height, fill_value=0)


def burn_overlay(img: RasterImage, boundary: RasterImage, burn_value: Optional[int] = None) -> RasterImage:
    """Set ``burn_value`` (default ``img.max_value``) wherever ``boundary`` is non-zero."""
    if img.shape != boundary.shape:
        raise SizeMismatch(f"image {img.shape} and boundary {boundary.shape} differ")
    burn = img.max_value if burn_value is None else burn_value
    data = np.array(img.samples)
    data[boundary.samples != 0] = burn
    return RasterImage(data, img.max_value)
