"""Synthetic scenes with known warps, for end-to-end verification.

Randomness comes from numpy's ``default_rng`` (PCG64 bit generator) seeded
explicitly, so scenes are reproducible across platforms.
"""

from __future__ import annotations

import collections
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from gcpreg.core import GroundControlPoint, RasterImage, extract_window, window_fits
from gcpreg.errors import DisplacementBoundExceeded, FitError, MalformedHeader, NonInvertibleSpec
from gcpreg.matching import MatchConfig, match_all
from gcpreg.resample import round_half_away
from gcpreg.warp import WarpModel, fit_warp, parse_key_values

KINDS = {"shift": 2, "affine": 6, "quadratic": 12}
_QUAD_TERMS = [(0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2)]
_AFFINE_TERMS = [(0, 0), (1, 0), (0, 1)]
_NEWTON_ITERS = 30
_JACOBIAN_GRID = 33


@dataclass(frozen=True)
class Occlusion:
    center: tuple[float, float]
    radius: float
    value: int


@dataclass(frozen=True)
class DistortionSpec:
    """A known reference-to-sensed distortion plus degradations.

    ``params`` by ``kind``:

    * ``shift``: ``(d_scan, d_pixel)``
    * ``affine``: ``(a00, a10, a01, b00, b10, b01)``
    * ``quadratic``: ``(a00, a10, a01, a11, a20, a02, b00, b10, b01, b11, b20, b02)``

    where ``scan = a00 + a10*x + a01*y + a11*x*y + a20*x**2 + a02*y**2`` etc.
    """

    kind: str
    params: tuple
    noise_sigma: float = 0.0
    occlusions: tuple = ()
    seed: int = 0
    max_displacement: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown distortion kind {self.kind!r}")
        params = tuple(float(p) for p in self.params)
        if len(params) != KINDS[self.kind]:
            raise ValueError(f"{self.kind} needs {KINDS[self.kind]} params, got {len(params)}")
        object.__setattr__(self, "params", params)
        occ = tuple(o if isinstance(o, Occlusion) else Occlusion(tuple(o[0]), float(o[1]), int(o[2]))
                    for o in self.occlusions)
        object.__setattr__(self, "occlusions", occ)
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    def forward_model(self) -> WarpModel:
        """Ground-truth map ``f`` from reference to sensed coordinates."""
        p = self.params
        if self.kind == "shift":
            return WarpModel.shift(p[0], p[1])
        if self.kind == "affine":
            return WarpModel.from_coefficients(dict(zip(_AFFINE_TERMS, p[:3])), dict(zip(_AFFINE_TERMS, p[3:])), 1)
        return WarpModel.from_coefficients(dict(zip(_QUAD_TERMS, p[:6])), dict(zip(_QUAD_TERMS, p[6:])), 2)

    def jacobian(self, x, y):
        """``(dxs/dx, dxs/dy, dys/dx, dys/dy)`` of the forward map."""
        a, b = self.forward_model().coefficients()
        # every kind is at most quadratic; missing terms are zero
        g = lambda c, k: c.get(k, 0.0)  # noqa: E731
        return (g(a, (1, 0)) + g(a, (1, 1)) * y + 2 * g(a, (2, 0)) * x,
                g(a, (0, 1)) + g(a, (1, 1)) * x + 2 * g(a, (0, 2)) * y,
                g(b, (1, 0)) + g(b, (1, 1)) * y + 2 * g(b, (2, 0)) * x,
                g(b, (0, 1)) + g(b, (1, 1)) * x + 2 * g(b, (0, 2)) * y)


def _frame_grid(height, width, n=_JACOBIAN_GRID):
    xs = np.linspace(0, height - 1, n)
    ys = np.linspace(0, width - 1, n)
    return np.meshgrid(xs, ys, indexing="ij")


def max_displacement(spec: DistortionSpec, height: int, width: int) -> float:
    """Largest per-axis ``|f(p) - p|`` over a grid covering the frame (corners included)."""
    gx, gy = _frame_grid(height, width)
    fx, fy = spec.forward_model().evaluate_many(gx, gy)
    return float(max(np.abs(fx - gx).max(), np.abs(fy - gy).max()))


def check_spec(spec: DistortionSpec, height: int, width: int) -> None:
    """Raise if the spec is not invertible on the frame or exceeds its displacement bound."""
    gx, gy = _frame_grid(height, width)
    j11, j12, j21, j22 = (np.broadcast_to(v, gx.shape) for v in spec.jacobian(gx, gy))
    det = j11 * j22 - j12 * j21
    if spec.kind == "quadratic":
        if not np.all(det > 0):
            raise NonInvertibleSpec("quadratic map folds over the frame (Jacobian determinant <= 0)")
    elif not np.all(det != 0):
        raise NonInvertibleSpec(f"{spec.kind} map is singular")
    if spec.max_displacement is not None:
        d = max_displacement(spec, height, width)
        if d > spec.max_displacement:
            raise DisplacementBoundExceeded(f"displacement {d:.3f} px exceeds bound {spec.max_displacement}")


def inverse_map(spec: DistortionSpec, xs, ys):
    """Reference coordinates ``g(x, y)`` whose forward image is ``(x, y)``."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    p = spec.params
    if spec.kind == "shift":
        return xs - p[0], ys - p[1]
    if spec.kind == "affine":
        a00, a10, a01, b00, b10, b01 = p
        det = a10 * b01 - a01 * b10
        u, v = xs - a00, ys - b00
        return (b01 * u - a01 * v) / det, (a10 * v - b10 * u) / det
    f = spec.forward_model()
    fx, fy = f.evaluate_many(xs, ys)
    gx, gy = 2 * xs - fx, 2 * ys - fy
    for _ in range(_NEWTON_ITERS):
        fx, fy = f.evaluate_many(gx, gy)
        rx, ry = fx - xs, fy - ys
        j11, j12, j21, j22 = spec.jacobian(gx, gy)
        det = j11 * j22 - j12 * j21
        gx = gx - (j22 * rx - j12 * ry) / det
        gy = gy - (j11 * ry - j21 * rx) / det
    return gx, gy


def generate_sensed(ref: RasterImage, spec: DistortionSpec, fill_value: int = 0):
    """Distort ``ref`` by ``spec``.

    ``sensed(x, y) = ref(g(x, y))`` by nearest-neighbour sampling with
    ``g = f^-1``; then Gaussian noise (rounded, clamped to ``[0, max_value]``)
    and flat occlusion discs are applied.

    Returns
    -------
    sensed : RasterImage
    truth : WarpModel
        The forward map ``f`` (reference -> sensed).
    """
    check_spec(spec, ref.height, ref.width)
    xs, ys = np.meshgrid(np.arange(ref.height, dtype=np.float64), np.arange(ref.width, dtype=np.float64),
                         indexing="ij")
    gx, gy = inverse_map(spec, xs, ys)
    xi, yi = round_half_away(gx), round_half_away(gy)
    inside = (xi >= 0) & (xi < ref.height) & (yi >= 0) & (yi < ref.width)
    data = np.full(ref.shape, fill_value, dtype=np.float64)
    data[inside] = ref.samples[xi[inside].astype(np.intp), yi[inside].astype(np.intp)]
    if spec.noise_sigma > 0:
        rng = np.random.default_rng(spec.seed)
        data = np.clip(np.rint(data + rng.normal(0.0, spec.noise_sigma, data.shape)), 0, ref.max_value)
    for occ in spec.occlusions:
        disc = (xs - occ.center[0]) ** 2 + (ys - occ.center[1]) ** 2 <= occ.radius ** 2
        data[disc] = occ.value
    return RasterImage(data.astype(np.int64), ref.max_value), spec.forward_model()


def textured_reference(height: int = 512, width: int = 512, seed: int = 0, max_value: int = 255) -> RasterImage:
    """Band-limited random texture spanning the full gray range."""
    rng = np.random.default_rng(seed)
    fine = ndimage.gaussian_filter(rng.normal(size=(height, width)), 1.5, mode="reflect")
    coarse = ndimage.gaussian_filter(rng.normal(size=(height, width)), 8.0, mode="reflect")
    field_ = fine / fine.std() + 0.5 * coarse / coarse.std()
    lo, hi = field_.min(), field_.max()
    return RasterImage(np.rint((field_ - lo) / (hi - lo) * max_value).astype(np.int64), max_value)


def grid_gcps(img: RasterImage, n: int, margin: int, target_size: int = 11,
              min_std: float = 1.0, prefix: str = "G") -> list[GroundControlPoint]:
    """Up to ``n`` GCPs on a uniform grid ``margin`` pixels inside the frame.

    Grid nodes whose target window has standard deviation below ``min_std``
    are skipped; ids are ``prefix`` plus a running number.
    """
    h, w = img.shape
    if 2 * margin >= min(h, w):
        raise ValueError(f"margin {margin} leaves no room in {h}x{w} image")
    cols = max(1, math.ceil(math.sqrt(n * (w - 2 * margin) / (h - 2 * margin))))
    rows = math.ceil(n / cols)
    rs = np.rint(np.linspace(margin, h - 1 - margin, rows)).astype(int) if rows > 1 else [h // 2]
    cs = np.rint(np.linspace(margin, w - 1 - margin, cols)).astype(int) if cols > 1 else [w // 2]
    out = []
    for r in rs:
        for c in cs:
            if len(out) == n:
                return out
            if not window_fits(img.shape, (r, c), target_size):
                continue
            if extract_window(img, (int(r), int(c)), target_size).std() < min_std:
                continue
            out.append(GroundControlPoint(f"{prefix}{len(out) + 1:03d}", (int(r), int(c))))
    return out


@dataclass
class Scorecard:
    """One row of the similarity-measure comparison table."""

    measure: str
    input_gcps: int
    matched: int
    rmse: tuple[float, float]
    elapsed: float
    reasons: dict = field(default_factory=dict)
    fit_error: Optional[str] = None


def score_run(matches, model: Optional[WarpModel], ground_truth: WarpModel, elapsed: float = float("nan"),
              measure: str = "combined") -> Scorecard:
    """Tabulate a run: RMSE of the fitted model against ``ground_truth`` at the matched GCPs."""
    matched = [m for m in matches if m.matched]
    reasons = collections.Counter(m.reason for m in matches if not m.matched)
    rmse = (float("nan"), float("nan"))
    if model is not None and matched:
        ref = np.array([m.ref_coord for m in matched], dtype=np.float64)
        px, py = model.evaluate_many(ref[:, 0], ref[:, 1])
        tx, ty = ground_truth.evaluate_many(ref[:, 0], ref[:, 1])
        rmse = (float(np.sqrt(np.mean((px - tx) ** 2))), float(np.sqrt(np.mean((py - ty) ** 2))))
    return Scorecard(measure, len(matches), len(matched), rmse, elapsed, dict(sorted(reasons.items())))


@dataclass
class BenchRun:
    scorecard: Scorecard
    matches: list
    model: Optional[WarpModel]


def bench(ref: RasterImage, sensed: RasterImage, gcps: Sequence[GroundControlPoint], truth: WarpModel,
          modes: Sequence[str] = ("mi", "cra", "ncc", "ssd", "combined"), base: MatchConfig = MatchConfig(),
          degree: int = 2, workers: int = 1) -> list[BenchRun]:
    """Run every matching mode on one scene and score each against ``truth``.

    ``elapsed`` covers the match phase only.
    """
    runs = []
    for mode in modes:
        cfg = MatchConfig(base.windows, mode, base.ncc_threshold, base.edge_preprocess, base.bins)
        t0 = time.perf_counter()
        results, _ = match_all(ref, sensed, gcps, cfg, workers=workers)
        elapsed = time.perf_counter() - t0
        model, error = None, None
        try:
            model, _ = fit_warp(results, degree)
        except FitError as exc:
            error = str(exc)
        card = score_run(results, model, truth, elapsed, mode)
        card.fit_error = error
        runs.append(BenchRun(card, results, model))
    return runs


_MEASURE_LABELS = {"combined": "ncc+msd"}


def format_scorecards(cards: Sequence[Scorecard], with_time: bool = True) -> str:
    """Whitespace-aligned comparison table (measure, GCPs, matched, RMSE, time)."""
    header = f"{'measure':<10} {'input_gcps':>10} {'matched':>8} {'rmse_scan':>10} {'rmse_pixel':>10} {'time_s':>9}"
    rows = [header]
    for c in cards:
        t = f"{c.elapsed:9.3f}" if with_time else f"{'-':>9}"
        rows.append(f"{_MEASURE_LABELS.get(c.measure, c.measure):<10} {c.input_gcps:>10d} {c.matched:>8d} "
                    f"{c.rmse[0]:>10.4f} {c.rmse[1]:>10.4f} {t}")
    return "\n".join(rows) + "\n"


def spec_to_text(spec: DistortionSpec) -> str:
    lines = [f"kind {spec.kind}", "params " + " ".join(repr(p) for p in spec.params),
             f"noise_sigma {spec.noise_sigma!r}", f"seed {spec.seed}"]
    if spec.max_displacement is not None:
        lines.append(f"max_displacement {float(spec.max_displacement)!r}")
    for k, o in enumerate(spec.occlusions):
        lines.append(f"occlusion_{k} {float(o.center[0])!r} {float(o.center[1])!r} {float(o.radius)!r} {o.value}")
    return "\n".join(lines) + "\n"


def spec_from_text(text: str) -> DistortionSpec:
    kv = parse_key_values(text)
    try:
        occ = []
        k = 0
        while f"occlusion_{k}" in kv:
            x, y, r, v = kv[f"occlusion_{k}"].split()
            occ.append(Occlusion((float(x), float(y)), float(r), int(v)))
            k += 1
        return DistortionSpec(
            kind=kv["kind"],
            params=tuple(float(p) for p in kv["params"].split()),
            noise_sigma=float(kv.get("noise_sigma", "0")),
            occlusions=tuple(occ),
            seed=int(kv.get("seed", "0")),
            max_displacement=float(kv["max_displacement"]) if "max_displacement" in kv else None,
        )
    except (KeyError, ValueError) as exc:
        raise MalformedHeader(f"bad distortion spec: {exc}") from exc
