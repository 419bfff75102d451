"""Bivariate polynomial warp: least-squares fit and evaluation.

The model maps reference coordinates to sensed coordinates::

    scan  = sum a_ij * x_ref**i * y_ref**j    (i + j <= N)
    pixel = sum b_ij * x_ref**i * y_ref**j

Fitting rescales the reference coordinates to [-1, 1] over the bounding box
of the fit points and solves with an SVD-based least-squares solver; the
rescale is kept in the model so evaluation works in the original frame.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from math import comb
from typing import Optional, Sequence

import numpy as np

from gcpreg.errors import (
    DegenerateGeometry,
    FitError,
    InsufficientPoints,
    MalformedHeader,
    MalformedLine,
)

MAX_DEGREE = 4
DEFAULT_DEGREE = 2
# singular-value ratio below which the design matrix counts as rank deficient
_RANK_RTOL = 1e-10


def monomial_exponents(degree: int) -> list[tuple[int, int]]:
    """Exponents ``(i, j)`` with ``i + j <= degree`` in lexicographic order."""
    return [(i, j) for i in range(degree + 1) for j in range(degree + 1 - i)]


def n_coefficients(degree: int) -> int:
    return (degree + 1) * (degree + 2) // 2


def _check_degree(degree):
    if not 1 <= degree <= MAX_DEGREE:
        raise ValueError(f"degree must be in 1..{MAX_DEGREE}, got {degree}")


def design_matrix(u, v, degree: int) -> np.ndarray:
    """Monomial columns ``u**i * v**j`` built by repeated multiplication."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    pu = [np.ones_like(u)]
    pv = [np.ones_like(v)]
    for _ in range(degree):
        pu.append(pu[-1] * u)
        pv.append(pv[-1] * v)
    return np.stack([pu[i] * pv[j] for i, j in monomial_exponents(degree)], axis=-1)


@dataclass(frozen=True)
class WarpModel:
    """Polynomial reference-to-sensed mapping.

    ``coef_scan`` / ``coef_pixel`` are stored in the normalised frame
    ``u = (x_ref - center[0]) / scale[0]``, ``v = (y_ref - center[1]) / scale[1]``,
    ordered as :func:`monomial_exponents`. Use :meth:`coefficients` for the
    original-frame ``a_ij`` / ``b_ij``.
    """

    degree: int
    coef_scan: np.ndarray
    coef_pixel: np.ndarray
    center: tuple[float, float] = (0.0, 0.0)
    scale: tuple[float, float] = (1.0, 1.0)
    domain: Optional[tuple[float, float, float, float]] = None

    def __post_init__(self):
        _check_degree(self.degree)
        m = n_coefficients(self.degree)
        for name in ("coef_scan", "coef_pixel"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            if arr.shape != (m,):
                raise ValueError(f"{name} needs {m} coefficients for degree {self.degree}, got {arr.shape}")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "scale", tuple(float(s) for s in self.scale))
        if self.scale[0] == 0 or self.scale[1] == 0:
            raise ValueError("normalisation scale must be non-zero")

    @classmethod
    def from_coefficients(cls, a, b, degree: Optional[int] = None) -> "WarpModel":
        """Build a model from original-frame coefficients.

        ``a`` and ``b`` are either mappings ``{(i, j): value}`` (missing terms
        are zero) or sequences in :func:`monomial_exponents` order.
        """
        if degree is None:
            if isinstance(a, dict):
                keys = list(a) + list(b)
                degree = max([i + j for i, j in keys] + [1])
            else:
                m = len(a)
                degree = next(d for d in range(1, MAX_DEGREE + 1) if n_coefficients(d) == m)
        exps = monomial_exponents(degree)

        def vec(c):
            if isinstance(c, dict):
                unknown = set(c) - set(exps)
                if unknown:
                    raise ValueError(f"terms {sorted(unknown)} exceed degree {degree}")
                return [float(c.get(e, 0.0)) for e in exps]
            return c

        return cls(degree, vec(a), vec(b))

    @classmethod
    def identity(cls, degree: int = 1) -> "WarpModel":
        return cls.from_coefficients({(1, 0): 1.0}, {(0, 1): 1.0}, degree)

    @classmethod
    def shift(cls, d_scan: float, d_pixel: float, degree: int = 1) -> "WarpModel":
        return cls.from_coefficients({(0, 0): d_scan, (1, 0): 1.0}, {(0, 0): d_pixel, (0, 1): 1.0}, degree)

    def evaluate_many(self, x_ref, y_ref) -> tuple[np.ndarray, np.ndarray]:
        u = (np.asarray(x_ref, dtype=np.float64) - self.center[0]) / self.scale[0]
        v = (np.asarray(y_ref, dtype=np.float64) - self.center[1]) / self.scale[1]
        basis = design_matrix(u, v, self.degree)
        # elementwise accumulation, not BLAS: per-point results must not depend on batch shape
        xs = np.zeros(basis.shape[:-1])
        ys = np.zeros(basis.shape[:-1])
        for k in range(basis.shape[-1]):
            xs += basis[..., k] * self.coef_scan[k]
            ys += basis[..., k] * self.coef_pixel[k]
        return xs, ys

    def __call__(self, x_ref, y_ref):
        return self.evaluate_many(x_ref, y_ref)

    def coefficients(self) -> tuple[dict, dict]:
        """Original-frame coefficients ``({(i, j): a_ij}, {(i, j): b_ij})``."""
        (cx, cy), (sx, sy) = self.center, self.scale
        exps = monomial_exponents(self.degree)
        out = []
        for coef in (self.coef_scan, self.coef_pixel):
            raw = dict.fromkeys(exps, 0.0)
            for (i, j), c in zip(exps, coef):
                for k in range(i + 1):
                    for l in range(j + 1):
                        raw[(k, l)] += (c * comb(i, k) * comb(j, l)
                                        * sx ** -k * (-cx / sx) ** (i - k)
                                        * sy ** -l * (-cy / sy) ** (j - l))
            out.append(raw)
        return out[0], out[1]

    def is_extrapolating(self, x_ref, y_ref) -> np.ndarray:
        """Boolean mask of points outside the bounding box of the fit points."""
        x = np.asarray(x_ref, dtype=np.float64)
        y = np.asarray(y_ref, dtype=np.float64)
        if self.domain is None:
            return np.zeros(np.broadcast(x, y).shape, dtype=bool)
        x0, x1, y0, y1 = self.domain
        return (x < x0) | (x > x1) | (y < y0) | (y > y1)


def evaluate(model: WarpModel, ref_coord) -> tuple[float, float]:
    """Map one reference coordinate ``(x_ref, y_ref)`` into the sensed frame."""
    xs, ys = model.evaluate_many([ref_coord[0]], [ref_coord[1]])
    return float(xs[0]), float(ys[0])


@dataclass
class FitReport:
    degree: int
    rmse: tuple[float, float]
    residuals: np.ndarray
    matched: int
    total: int
    condition: float
    elapsed: float
    ids: list = field(default_factory=list)
    holdout_rmse: Optional[tuple[float, float]] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _rmse(res):
    if len(res) == 0:
        return (float("nan"), float("nan"))
    r = np.sqrt(np.mean(np.asarray(res) ** 2, axis=0))
    return float(r[0]), float(r[1])


def fit_points(ref_pts, sensed_pts, degree: int = DEFAULT_DEGREE, ids=None, total=None):
    """Least-squares polynomial fit of ``sensed = f(ref)`` per axis.

    Parameters
    ----------
    ref_pts, sensed_pts : array_like, shape (n, 2)
        Matching ``(scan, pixel)`` coordinates.

    Returns
    -------
    (WarpModel, FitReport)

    Raises
    ------
    InsufficientPoints
        Fewer than ``(N+1)(N+2)/2`` points.
    DegenerateGeometry
        The points cannot determine every coefficient (e.g. collinear).
    """
    t0 = time.perf_counter()
    _check_degree(degree)
    ref = np.asarray(ref_pts, dtype=np.float64).reshape(-1, 2)
    obs = np.asarray(sensed_pts, dtype=np.float64).reshape(-1, 2)
    if ref.shape != obs.shape:
        raise ValueError("reference and sensed point arrays differ in length")
    needed = n_coefficients(degree)
    if len(ref) < needed:
        raise InsufficientPoints(needed, len(ref))

    lo = ref.min(axis=0)
    hi = ref.max(axis=0)
    center = (lo + hi) / 2.0
    half = (hi - lo) / 2.0
    scale = np.where(half > 0, half, 1.0)
    basis = design_matrix((ref[:, 0] - center[0]) / scale[0], (ref[:, 1] - center[1]) / scale[1], degree)

    coef, _, rank, sv = np.linalg.lstsq(basis, obs, rcond=None)
    if rank < needed or sv[-1] <= _RANK_RTOL * sv[0]:
        raise DegenerateGeometry(f"design matrix rank {rank} < {needed}: GCP layout cannot support degree {degree}")

    model = WarpModel(degree, coef[:, 0], coef[:, 1], tuple(center), tuple(scale),
                      domain=(lo[0], hi[0], lo[1], hi[1]))
    residuals = basis @ coef - obs
    report = FitReport(
        degree=degree,
        rmse=_rmse(residuals),
        residuals=residuals,
        matched=len(ref),
        total=len(ref) if total is None else total,
        condition=float(sv[0] / sv[-1]),
        elapsed=time.perf_counter() - t0,
        ids=list(ids) if ids is not None else [],
    )
    return model, report


def fit_warp(matches: Sequence, degree: int = DEFAULT_DEGREE, holdout: float = 0.0, seed: int = 0):
    """Fit a warp to the matched entries of ``matches``.

    Unmatched results are ignored for fitting but counted in ``FitReport.total``.
    With ``holdout > 0`` that fraction of matched points is withheld from the
    fit and their RMSE is reported in ``FitReport.holdout_rmse``.
    """
    matched = [m for m in matches if m.matched]
    ids = [m.gcp_id for m in matched]
    ref = np.array([m.ref_coord for m in matched], dtype=np.float64).reshape(-1, 2)
    obs = np.array([m.sensed_coord for m in matched], dtype=np.float64).reshape(-1, 2)
    if not 0.0 <= holdout < 1.0:
        raise ValueError(f"holdout must be in [0, 1), got {holdout}")
    n_hold = int(round(holdout * len(matched)))
    if n_hold == 0:
        return fit_points(ref, obs, degree, ids=ids, total=len(matches))
    order = np.random.default_rng(seed).permutation(len(matched))
    test, train = np.sort(order[:n_hold]), np.sort(order[n_hold:])
    model, report = fit_points(ref[train], obs[train], degree, ids=[ids[i] for i in train], total=len(matches))
    px, py = model.evaluate_many(ref[test, 0], ref[test, 1])
    report.holdout_rmse = _rmse(np.column_stack([px, py]) - obs[test])
    return model, report


def degree_sweep(matches: Sequence, degrees=range(1, MAX_DEGREE + 1)) -> list[FitReport]:
    """One FitReport per degree; failed degrees carry ``error`` instead of raising."""
    reports = []
    n = sum(1 for m in matches if m.matched)
    for d in degrees:
        try:
            _, rep = fit_warp(matches, d)
        except FitError as exc:
            rep = FitReport(d, (float("nan"), float("nan")), np.empty((0, 2)), n, len(matches),
                            float("nan"), 0.0, error=str(exc))
        reports.append(rep)
    return reports


def model_to_text(model: WarpModel) -> str:
    """Plain key-value serialisation with round-trip exact floats."""
    lines = [
        f"degree {model.degree}",
        f"center_scan {model.center[0]!r}",
        f"center_pixel {model.center[1]!r}",
        f"scale_scan {model.scale[0]!r}",
        f"scale_pixel {model.scale[1]!r}",
    ]
    if model.domain is not None:
        lines.append("domain " + " ".join(repr(float(v)) for v in model.domain))
    for (i, j), c in zip(monomial_exponents(model.degree), model.coef_scan):
        lines.append(f"a_{i}_{j} {float(c)!r}")
    for (i, j), c in zip(monomial_exponents(model.degree), model.coef_pixel):
        lines.append(f"b_{i}_{j} {float(c)!r}")
    return "\n".join(lines) + "\n"


def parse_key_values(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise MalformedLine(lineno, f"expected 'key value', got {raw!r}")
        if parts[0] in out:
            raise MalformedLine(lineno, f"duplicate key {parts[0]!r}")
        out[parts[0]] = parts[1].strip()
    return out


def model_from_text(text: str) -> WarpModel:
    kv = parse_key_values(text)
    try:
        degree = int(kv["degree"])
        exps = monomial_exponents(degree)
        a = [float(kv[f"a_{i}_{j}"]) for i, j in exps]
        b = [float(kv[f"b_{i}_{j}"]) for i, j in exps]
        center = (float(kv["center_scan"]), float(kv["center_pixel"]))
        scale = (float(kv["scale_scan"]), float(kv["scale_pixel"]))
        domain = tuple(float(v) for v in kv["domain"].split()) if "domain" in kv else None
    except (KeyError, ValueError) as exc:
        raise MalformedHeader(f"bad warp model file: {exc}") from exc
    return WarpModel(degree, a, b, center, scale, domain)
