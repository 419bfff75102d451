"""Shared domain types and the pixel-access contract.

Coordinates are always ``(scan, pixel)`` = ``(row, column)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from gcpreg.errors import OutOfBounds

SAMPLE_DTYPE = np.uint16
MAX_SUPPORTED_VALUE = np.iinfo(SAMPLE_DTYPE).max


class PixelCoord(NamedTuple):
    scan: int
    pixel: int


class RasterImage:
    """Immutable 2D grid of unsigned radiometric samples.

    Parameters
    ----------
    samples : array_like
        2D array of non-negative integers, row-major ``(height, width)``.
    max_value : int, optional
        Largest representable sample. Defaults to 255 when every sample fits
        in 8 bits, else 65535.
    """

    __slots__ = ("_samples", "max_value")

    def __init__(self, samples, max_value: Optional[int] = None):
        arr = np.asarray(samples)
        if arr.ndim != 2:
            raise ValueError(f"samples must be 2D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if arr.size and not np.issubdtype(arr.dtype, np.integer):
            if not np.all(np.equal(np.mod(arr, 1), 0)):
                raise ValueError("samples must be integers")
        if arr.min() < 0:
            raise ValueError("samples must be non-negative")
        peak = int(arr.max())
        if max_value is None:
            max_value = 255 if peak <= 255 else MAX_SUPPORTED_VALUE
        max_value = int(max_value)
        if not 1 <= max_value <= MAX_SUPPORTED_VALUE:
            raise ValueError(f"max_value {max_value} outside [1, {MAX_SUPPORTED_VALUE}]")
        if peak > max_value:
            raise ValueError(f"sample {peak} exceeds max_value {max_value}")
        data = np.array(arr, dtype=SAMPLE_DTYPE, order="C", copy=True)
        data.flags.writeable = False
        self._samples = data
        self.max_value = max_value

    @property
    def samples(self) -> np.ndarray:
        return self._samples

    @property
    def height(self) -> int:
        return self._samples.shape[0]

    @property
    def width(self) -> int:
        return self._samples.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._samples.shape

    def contains(self, coord) -> bool:
        return 0 <= coord[0] < self.height and 0 <= coord[1] < self.width

    def replace(self, samples) -> "RasterImage":
        return RasterImage(samples, self.max_value)

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return (self.max_value == other.max_value
                and self.shape == other.shape
                and bool(np.array_equal(self._samples, other._samples)))

    def __hash__(self):
        return hash((self.max_value, self.shape, self._samples.tobytes()))

    def __repr__(self):
        return f"RasterImage({self.height}x{self.width}, max_value={self.max_value})"


@dataclass(frozen=True)
class GroundControlPoint:
    id: str
    ref_coord: PixelCoord

    def __post_init__(self):
        object.__setattr__(self, "ref_coord", PixelCoord(*map(int, self.ref_coord)))


@dataclass(frozen=True)
class WindowSpec:
    """Square target window ``T`` sliding inside a square search window ``S``."""

    target_size: int
    search_size: int

    def __post_init__(self):
        t, s = self.target_size, self.search_size
        if t % 2 == 0 or s % 2 == 0:
            raise ValueError(f"window sides must be odd, got T={t}, S={s}")
        if not 1 <= t < s:
            raise ValueError(f"need 1 <= T < S, got T={t}, S={s}")

    @property
    def radius(self) -> int:
        return (self.search_size - self.target_size) // 2


VHRR_WINDOWS = WindowSpec(11, 31)
CCD_WINDOWS = WindowSpec(21, 101)
PRESETS = {"vhrr": VHRR_WINDOWS, "ccd": CCD_WINDOWS}

MATCHED = "matched"
UNMATCHED = "unmatched"


@dataclass(frozen=True)
class MatchResult:
    """Outcome of the moving-window search at one GCP.

    ``offset`` and ``sensed_coord`` are ``None`` when unmatched. ``score`` is
    the value of the deciding measure (NCC in combined mode).
    """

    gcp_id: str
    ref_coord: PixelCoord
    status: str
    sensed_coord: Optional[PixelCoord] = None
    offset: Optional[tuple[int, int]] = None
    ncc_score: float = float("nan")
    ssd_score: float = float("nan")
    score: float = float("nan")
    reason: Optional[str] = None
    measure: str = "combined"
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def matched(self) -> bool:
        return self.status == MATCHED


def window_bounds(center, side: int) -> tuple[int, int, int, int]:
    half = side // 2
    return center[0] - half, center[0] + half + 1, center[1] - half, center[1] + half + 1


def window_fits(shape, center, side: int) -> bool:
    r0, r1, c0, c1 = window_bounds(center, side)
    return r0 >= 0 and c0 >= 0 and r1 <= shape[0] and c1 <= shape[1]


def extract_window(img: RasterImage, center, side: int) -> np.ndarray:
    """Return the ``side x side`` neighbourhood centred at ``center``.

    The result is a read-only view into the image samples.
    """
    if side < 1 or side % 2 == 0:
        raise ValueError(f"window side must be a positive odd integer, got {side}")
    if not window_fits(img.shape, center, side):
        raise OutOfBounds(f"{side}x{side} window at {tuple(center)} leaves {img.height}x{img.width} image")
    r0, r1, c0, c1 = window_bounds(center, side)
    return img.samples[r0:r1, c0:c1]
