"""Nearest-neighbour resampling of the sensed image onto the reference grid."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from gcpreg.core import RasterImage
from gcpreg.warp import WarpModel

DEFAULT_FILL = 0
_ROWS_PER_BLOCK = 64


def round_half_away(values) -> np.ndarray:
    """Round to the nearest integer, ties away from zero (2.5 -> 3, -2.5 -> -3)."""
    v = np.asarray(values, dtype=np.float64)
    return np.where(v >= 0, np.floor(v + 0.5), np.ceil(v - 0.5))


def source_coords(model: WarpModel, rows: np.ndarray, width: int):
    """Real-valued sensed coordinates for every pixel of the given output rows."""
    xr, yr = np.meshgrid(rows.astype(np.float64), np.arange(width, dtype=np.float64), indexing="ij")
    return model.evaluate_many(xr, yr)


def _resample_rows(src, model, rows, width, fill):
    xs, ys = source_coords(model, rows, width)
    xi = round_half_away(xs)
    yi = round_half_away(ys)
    inside = (xi >= 0) & (xi < src.shape[0]) & (yi >= 0) & (yi < src.shape[1])
    out = np.full(xs.shape, fill, dtype=src.dtype)
    out[inside] = src[xi[inside].astype(np.intp), yi[inside].astype(np.intp)]
    return out, inside


def resample_nn(sensed: RasterImage, model: WarpModel, out_width: int, out_height: int,
                fill_value: int = DEFAULT_FILL, workers: int = 1, return_mask: bool = False):
    """Registered image on the ``out_height x out_width`` reference grid.

    Each output pixel ``(x_ref, y_ref)`` takes the sensed sample nearest to
    ``model(x_ref, y_ref)``; positions outside the sensed image get
    ``fill_value``. Row blocks are independent, so ``workers > 1`` gives the
    same bytes as a sequential run.

    Returns
    -------
    RasterImage, or ``(RasterImage, mask)`` when ``return_mask`` where ``mask``
    is True on pixels copied from the sensed image.
    """
    if out_width < 1 or out_height < 1:
        raise ValueError(f"output size must be >= 1x1, got {out_height}x{out_width}")
    if not 0 <= fill_value <= sensed.max_value:
        raise ValueError(f"fill_value {fill_value} outside [0, {sensed.max_value}]")
    src = sensed.samples
    blocks = [np.arange(s, min(s + _ROWS_PER_BLOCK, out_height)) for s in range(0, out_height, _ROWS_PER_BLOCK)]
    work = lambda rows: _resample_rows(src, model, rows, out_width, fill_value)  # noqa: E731
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, blocks))
    else:
        parts = [work(b) for b in blocks]
    data = np.concatenate([p[0] for p in parts], axis=0)
    mask = np.concatenate([p[1] for p in parts], axis=0)
    out = RasterImage(data, sensed.max_value)
    return (out, mask) if return_mask else out


@dataclass(frozen=True)
class RadiometryReport:
    tv_distance: float
    new_values: tuple[int, ...]
    compared_pixels: int

    @property
    def new_value_count(self) -> int:
        return len(self.new_values)


def radiometry_report(sensed: RasterImage, registered: RasterImage, fill_value: int = DEFAULT_FILL,
                      mask=None) -> RadiometryReport:
    """Compare gray-level histograms of the sensed and registered images.

    Fill pixels are excluded: via ``mask`` (True = copied sample) when given,
    otherwise by dropping every pixel equal to ``fill_value`` in both images.
    ``tv_distance`` is half the L1 distance between normalised histograms.
    """
    s = sensed.samples.ravel()
    if mask is None:
        s = s[s != fill_value]
        r = registered.samples.ravel()
        r = r[r != fill_value]
    else:
        r = registered.samples[np.asarray(mask, dtype=bool)]
    n = max(sensed.max_value, registered.max_value) + 1
    hs = np.bincount(s, minlength=n).astype(np.float64)
    hr = np.bincount(r, minlength=n).astype(np.float64)
    if hs.sum() == 0 or hr.sum() == 0:
        tv = 0.0 if hs.sum() == hr.sum() else 1.0
    else:
        tv = 0.5 * float(np.abs(hs / hs.sum() - hr / hr.sum()).sum())
    new = tuple(int(v) for v in np.flatnonzero((hr > 0) & (hs == 0)))
    return RadiometryReport(tv, new, int(r.size))
