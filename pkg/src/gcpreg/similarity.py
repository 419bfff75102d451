"""Window similarity measures: SSD, NCC, CRA and mutual information.

These are the scalar reference implementations, evaluated on one pair of
equal-sized windows. The moving-window search in :mod:`gcpreg.matching`
uses batched kernels that are tested against these functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gcpreg.errors import DegenerateHistogram, SizeMismatch, ZeroVariance

DEFAULT_BINS = 64
MEASURES = ("ssd", "ncc", "cra", "mi")


def _pair(r, s):
    r = np.asarray(r, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if r.shape != s.shape:
        raise SizeMismatch(f"window shapes differ: {r.shape} vs {s.shape}")
    return r, s


def ssd(r, s) -> float:
    """Sum of squared brightness differences; zero iff the windows are equal."""
    r, s = _pair(r, s)
    return float(np.sum((r - s) ** 2))


def ncc(r, s) -> float:
    """Mean-centred correlation coefficient in ``[-1, 1]``.

    Raises
    ------
    ZeroVariance
        If either window is constant. ``which`` is ``"reference"`` or
        ``"sensed"``.
    """
    r, s = _pair(r, s)
    rc = (r - r.mean()).ravel()
    sc = (s - s.mean()).ravel()
    rr = float(rc @ rc)
    ss = float(sc @ sc)
    if rr == 0.0:
        raise ZeroVariance("reference")
    if ss == 0.0:
        raise ZeroVariance("sensed")
    value = float(rc @ sc) / np.sqrt(rr * ss)
    return float(np.clip(value, -1.0, 1.0))


def bin_index(samples, bins: int, max_value: int) -> np.ndarray:
    """Map samples to histogram bins: ``floor(sample * bins / (max_value + 1))``."""
    if bins < 2:
        raise ValueError(f"need at least 2 bins, got {bins}")
    idx = np.asarray(samples, dtype=np.int64) * bins // (int(max_value) + 1)
    return np.clip(idx, 0, bins - 1)


@dataclass(frozen=True)
class JointHistogram:
    """Co-occurrence counts of (reference bin, sensed bin) over a window pair."""

    counts: np.ndarray  # (bins, bins) int64, rows = reference bin

    @classmethod
    def from_windows(cls, r, s, bins: int = DEFAULT_BINS, max_value: int = 255):
        r = np.asarray(r)
        s = np.asarray(s)
        if r.shape != s.shape:
            raise SizeMismatch(f"window shapes differ: {r.shape} vs {s.shape}")
        k = bin_index(r, bins, max_value).ravel()
        l = bin_index(s, bins, max_value).ravel()
        counts = np.bincount(k * bins + l, minlength=bins * bins).reshape(bins, bins)
        return cls(counts)

    @property
    def bins(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def reference_marginal(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def sensed_marginal(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def entropy(counts) -> float:
    """Shannon entropy in bits of a histogram given as raw counts (0 log 0 = 0)."""
    c = np.asarray(counts, dtype=np.float64).ravel()
    total = c.sum()
    if total <= 0:
        return 0.0
    p = c[c > 0] / total
    return float(-(p * np.log2(p)).sum())


def mutual_information(r, s, bins: int = DEFAULT_BINS, max_value: int = 255) -> float:
    """``H(r) + H(s) - H(r, s)`` in bits, from the binned joint histogram."""
    jh = JointHistogram.from_windows(r, s, bins, max_value)
    mi = entropy(jh.reference_marginal) + entropy(jh.sensed_marginal) - entropy(jh.counts)
    # float noise can push an exact zero slightly negative
    return max(mi, 0.0)


def cra(r, s, bins: int = DEFAULT_BINS, max_value: int = 255) -> float:
    """Cluster reward statistic of the joint histogram.

    ``(phi/F - F/P^2) / (1 - F/P^2)`` with ``phi`` the sum of squared joint
    counts, ``F = sqrt(h_r * h_s)`` and ``h_r``, ``h_s`` the sums of squared
    marginal counts. Equals 1 for identical non-constant windows.
    """
    jh = JointHistogram.from_windows(r, s, bins, max_value)
    counts = jh.counts.astype(np.int64)
    p2 = jh.total ** 2
    phi = int((counts ** 2).sum())
    h_r = int((jh.reference_marginal ** 2).sum())
    h_s = int((jh.sensed_marginal ** 2).sum())
    if h_r * h_s == p2 * p2:
        raise DegenerateHistogram("both windows fall in a single bin")
    f = np.sqrt(float(h_r) * float(h_s))
    return float((phi / f - f / p2) / (1.0 - f / p2))


def evaluate(measure: str, r, s, bins: int = DEFAULT_BINS, max_value: int = 255) -> float:
    """Dispatch to one of the four measures by name."""
    if measure == "ssd":
        return ssd(r, s)
    if measure == "ncc":
        return ncc(r, s)
    if measure == "cra":
        return cra(r, s, bins, max_value)
    if measure == "mi":
        return mutual_information(r, s, bins, max_value)
    raise ValueError(f"unknown measure {measure!r}; expected one of {MEASURES}")


def maximizes(measure: str) -> bool:
    """True when a larger score means a better match."""
    return measure != "ssd"
