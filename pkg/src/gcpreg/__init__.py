"""Automatic GCP-based registration of a sensed raster to a reference raster."""

from gcpreg.core import (
    CCD_WINDOWS,
    VHRR_WINDOWS,
    GroundControlPoint,
    MatchResult,
    PixelCoord,
    RasterImage,
    WindowSpec,
    extract_window,
)
from gcpreg.matching import MatchConfig, build_surface, edge_extract, match_all, match_gcp
from gcpreg.resample import radiometry_report, resample_nn
from gcpreg.warp import WarpModel, degree_sweep, evaluate, fit_points, fit_warp

__version__ = "0.1.0"

__all__ = [
    "CCD_WINDOWS",
    "VHRR_WINDOWS",
    "GroundControlPoint",
    "MatchConfig",
    "MatchResult",
    "PixelCoord",
    "RasterImage",
    "WarpModel",
    "WindowSpec",
    "build_surface",
    "degree_sweep",
    "edge_extract",
    "evaluate",
    "extract_window",
    "fit_points",
    "fit_warp",
    "match_all",
    "match_gcp",
    "radiometry_report",
    "resample_nn",
]
