"""Moving-window GCP matching.

A target window around each GCP in the reference image is slid over every
integer offset of a search window centred on the same coordinates in the
sensed image. Each placement is scored, giving a similarity surface, and the
matching criterion picks (or rejects) an offset.
"""

from __future__ import annotations

import collections
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from gcpreg import similarity
from gcpreg.core import (
    MATCHED,
    UNMATCHED,
    VHRR_WINDOWS,
    GroundControlPoint,
    MatchResult,
    PixelCoord,
    RasterImage,
    WindowSpec,
    extract_window,
    window_bounds,
    window_fits,
)
from gcpreg.errors import EmptyGcpList, GcpOutOfBounds, TooSmall

COMBINED = "combined"
MODES = (COMBINED,) + similarity.MEASURES

# upper bound on joint-histogram cells allocated per chunk in the MI/CRA kernels
_HIST_CELLS_PER_CHUNK = 1 << 22


@dataclass(frozen=True)
class MatchConfig:
    windows: WindowSpec = VHRR_WINDOWS
    mode: str = COMBINED
    ncc_threshold: float = 0.5
    edge_preprocess: bool = False
    bins: int = similarity.DEFAULT_BINS

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not 0.0 < self.ncc_threshold <= 1.0:
            raise ValueError(f"ncc_threshold must lie in (0, 1], got {self.ncc_threshold}")
        if self.bins < 2:
            raise ValueError(f"bins must be >= 2, got {self.bins}")


@dataclass
class SimilaritySurface:
    """Scores of one measure over all offsets ``[-R, R]^2``.

    ``scores[i, j]`` holds the offset ``(i - R, j - R)``; cells where the
    measure is undefined are ``nan`` and ``False`` in ``valid``.
    """

    measure: str
    radius: int
    scores: np.ndarray
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.valid is None:
            self.valid = np.isfinite(self.scores)
        side = 2 * self.radius + 1
        if self.scores.shape != (side, side):
            raise ValueError(f"surface must be {side}x{side}, got {self.scores.shape}")

    def at(self, offset) -> float:
        return float(self.scores[offset[0] + self.radius, offset[1] + self.radius])

    def best(self) -> Optional[tuple[tuple[int, int], float]]:
        """Optimal offset and score, or ``None`` if no cell is valid.

        Ties go to the smallest offset magnitude, then to row-major order.
        """
        if not self.valid.any():
            return None
        flat = np.where(self.valid, self.scores, np.nan).ravel()
        target = np.nanmax(flat) if similarity.maximizes(self.measure) else np.nanmin(flat)
        idx = np.flatnonzero(flat == target)
        side = 2 * self.radius + 1
        di = idx // side - self.radius
        dj = idx % side - self.radius
        pick = np.lexsort((idx, di * di + dj * dj))[0]
        return (int(di[pick]), int(dj[pick])), float(flat[idx[pick]])


def edge_extract(img: RasterImage) -> RasterImage:
    """Sobel gradient magnitude ``|gx| + |gy|`` clamped to ``max_value``.

    Borders use nearest-sample extension.
    """
    if img.height < 3 or img.width < 3:
        raise TooSmall(f"edge extraction needs at least 3x3, got {img.height}x{img.width}")
    data = img.samples.astype(np.int64)
    gx = ndimage.sobel(data, axis=0, mode="nearest")
    gy = ndimage.sobel(data, axis=1, mode="nearest")
    mag = np.minimum(np.abs(gx) + np.abs(gy), img.max_value)
    return RasterImage(mag, img.max_value)


def _searchable(ref: RasterImage, sensed: RasterImage, gcp: GroundControlPoint, spec: WindowSpec) -> bool:
    c = gcp.ref_coord
    return window_fits(ref.shape, c, spec.target_size) and window_fits(sensed.shape, c, spec.search_size)


def _candidates(sensed: RasterImage, center, spec: WindowSpec) -> np.ndarray:
    """All ``T x T`` windows inside the search window, shape ``(n_offsets, T*T)``."""
    r0, r1, c0, c1 = window_bounds(center, spec.search_size)
    region = sensed.samples[r0:r1, c0:c1]
    t = spec.target_size
    views = sliding_window_view(region, (t, t))
    return views.reshape(-1, t * t).astype(np.float64)


def _ssd_scores(target, cands):
    return ((cands - target) ** 2).sum(axis=1)


def _ncc_scores(target, cands):
    tc = target - target.mean()
    tt = float(tc @ tc)
    cc = cands - cands.mean(axis=1, keepdims=True)
    ss = (cc * cc).sum(axis=1)
    out = np.full(len(cands), np.nan)
    if tt == 0.0:
        return out
    ok = ss > 0.0
    out[ok] = np.clip((cc[ok] @ tc) / np.sqrt(tt * ss[ok]), -1.0, 1.0)
    return out


def _hist_stats(target, cands, bins, max_value):
    """Per-candidate joint/marginal histogram statistics.

    Yields, for every candidate row, ``sum(joint^2)``, ``sum(marg^2)``,
    ``sum(joint*log2 joint)`` and ``sum(marg*log2 marg)``.
    """
    k = similarity.bin_index(target, bins, max_value)
    lab = similarity.bin_index(cands, bins, max_value)
    n, p = lab.shape
    bb = bins * bins
    chunk = max(1, _HIST_CELLS_PER_CHUNK // bb)
    joint_sq = np.empty(n)
    marg_sq = np.empty(n)
    joint_xlog = np.empty(n)
    marg_xlog = np.empty(n)
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        rows = np.arange(stop - start)[:, None]
        codes = (rows * bb + k[None, :] * bins + lab[start:stop]).ravel()
        joint = np.bincount(codes, minlength=(stop - start) * bb).reshape(stop - start, bb)
        marg = joint.reshape(stop - start, bins, bins).sum(axis=1)
        joint_sq[start:stop] = (joint.astype(np.float64) ** 2).sum(axis=1)
        marg_sq[start:stop] = (marg.astype(np.float64) ** 2).sum(axis=1)
        joint_xlog[start:stop] = _xlogx(joint).sum(axis=1)
        marg_xlog[start:stop] = _xlogx(marg).sum(axis=1)
    return k, joint_sq, marg_sq, joint_xlog, marg_xlog


def _xlogx(counts):
    c = counts.astype(np.float64)
    out = np.zeros_like(c)
    nz = c > 0
    out[nz] = c[nz] * np.log2(c[nz])
    return out


def _mi_scores(target, cands, bins, max_value):
    k, _, _, joint_xlog, marg_xlog = _hist_stats(target, cands, bins, max_value)
    p = float(target.size)
    h_r = similarity.entropy(np.bincount(k, minlength=bins))
    h_s = np.log2(p) - marg_xlog / p
    h_rs = np.log2(p) - joint_xlog / p
    return np.maximum(h_r + h_s - h_rs, 0.0)


def _cra_scores(target, cands, bins, max_value):
    k, joint_sq, marg_sq, _, _ = _hist_stats(target, cands, bins, max_value)
    p2 = float(target.size) ** 2
    h_r = float((np.bincount(k, minlength=bins).astype(np.float64) ** 2).sum())
    f = np.sqrt(h_r * marg_sq)
    out = np.full(len(cands), np.nan)
    ok = h_r * marg_sq != p2 * p2
    out[ok] = (joint_sq[ok] / f[ok] - f[ok] / p2) / (1.0 - f[ok] / p2)
    return out


def _surface(measure, target, cands, radius, cfg, max_value):
    if measure == "ssd":
        scores = _ssd_scores(target, cands)
    elif measure == "ncc":
        scores = _ncc_scores(target, cands)
    elif measure == "mi":
        scores = _mi_scores(target, cands, cfg.bins, max_value)
    elif measure == "cra":
        scores = _cra_scores(target, cands, cfg.bins, max_value)
    else:
        raise ValueError(f"unknown measure {measure!r}")
    side = 2 * radius + 1
    return SimilaritySurface(measure, radius, scores.reshape(side, side))


def _surfaces(ref, sensed, gcp, cfg, measures):
    spec = cfg.windows
    if not _searchable(ref, sensed, gcp, spec):
        raise GcpOutOfBounds(gcp.id)
    target = extract_window(ref, gcp.ref_coord, spec.target_size).astype(np.float64).ravel()
    cands = _candidates(sensed, gcp.ref_coord, spec)
    max_value = max(ref.max_value, sensed.max_value)
    return {m: _surface(m, target, cands, spec.radius, cfg, max_value) for m in measures}


def build_surface(ref: RasterImage, sensed: RasterImage, gcp: GroundControlPoint,
                  cfg: MatchConfig, measure: str) -> SimilaritySurface:
    """Score every placement of the GCP's target window inside its search window.

    Raises
    ------
    GcpOutOfBounds
        If the target window leaves the reference or the search window
        leaves the sensed image.
    """
    return _surfaces(ref, sensed, gcp, cfg, [measure])[measure]


def _unmatched(gcp, cfg, reason, **scores):
    return MatchResult(gcp.id, gcp.ref_coord, UNMATCHED, reason=reason, measure=cfg.mode, **scores)


def _matched(gcp, cfg, offset, ncc_score, ssd_score, score):
    c = gcp.ref_coord
    return MatchResult(
        gcp.id, c, MATCHED,
        sensed_coord=PixelCoord(c.scan + offset[0], c.pixel + offset[1]),
        offset=offset, ncc_score=ncc_score, ssd_score=ssd_score, score=score,
        measure=cfg.mode,
    )


def _match_prepared(ref, sensed, gcp, cfg) -> MatchResult:
    measures = ["ncc", "ssd"] if cfg.mode == COMBINED else sorted({cfg.mode, "ncc", "ssd"})
    try:
        surf = _surfaces(ref, sensed, gcp, cfg, measures)
    except GcpOutOfBounds:
        return _unmatched(gcp, cfg, "out_of_bounds")

    if cfg.mode == COMBINED:
        best_ncc = surf["ncc"].best()
        if best_ncc is None:
            return _unmatched(gcp, cfg, "zero_variance")
        off_ncc, ncc_score = best_ncc
        off_ssd, _ = surf["ssd"].best()
        if ncc_score < cfg.ncc_threshold:
            return _unmatched(gcp, cfg, "low_score", ncc_score=ncc_score, score=ncc_score)
        if off_ncc != off_ssd:
            return _unmatched(gcp, cfg, "criterion_disagreement", ncc_score=ncc_score, score=ncc_score)
        return _matched(gcp, cfg, off_ncc, ncc_score, surf["ssd"].at(off_ncc), ncc_score)

    best = surf[cfg.mode].best()
    if best is None:
        reason = "degenerate_histogram" if cfg.mode == "cra" else "zero_variance"
        return _unmatched(gcp, cfg, reason)
    offset, score = best
    if cfg.mode == "ncc" and score < cfg.ncc_threshold:
        return _unmatched(gcp, cfg, "low_score", score=score, ncc_score=score)
    # MI and CRA are exactly 0 against a flat window: no dependence found
    if cfg.mode in ("mi", "cra") and not score > 0.0:
        return _unmatched(gcp, cfg, "low_score", score=score)
    return _matched(gcp, cfg, offset, surf["ncc"].at(offset), surf["ssd"].at(offset), score)


def match_gcp(ref: RasterImage, sensed: RasterImage, gcp: GroundControlPoint,
              cfg: MatchConfig = MatchConfig()) -> MatchResult:
    """Find the sensed-image position of one GCP.

    In combined mode the GCP matches only when the NCC maximum and the SSD
    minimum fall on the same offset and the NCC there reaches
    ``cfg.ncc_threshold``. Failures are reported in the result, never raised.
    """
    if cfg.edge_preprocess:
        ref, sensed = edge_extract(ref), edge_extract(sensed)
    return _match_prepared(ref, sensed, gcp, cfg)


def match_all(ref: RasterImage, sensed: RasterImage, gcps: Sequence[GroundControlPoint],
              cfg: MatchConfig = MatchConfig(), workers: int = 1):
    """Match every GCP; results keep the input order whatever ``workers`` is.

    Returns
    -------
    results : list of MatchResult
    census : collections.Counter
        ``"matched"`` plus one key per unmatched reason.
    """
    gcps = list(gcps)
    if not gcps:
        raise EmptyGcpList("no ground control points supplied")
    if cfg.edge_preprocess:
        ref, sensed = edge_extract(ref), edge_extract(sensed)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda g: _match_prepared(ref, sensed, g, cfg), gcps))
    else:
        results = [_match_prepared(ref, sensed, g, cfg) for g in gcps]
    return results, census(results)


def census(results) -> collections.Counter:
    counts = collections.Counter()
    for r in results:
        counts[MATCHED if r.matched else r.reason] += 1
    return counts
