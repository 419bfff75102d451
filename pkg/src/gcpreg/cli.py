"""Command-line entry point: ``gcpreg <command> ...``.

Exit codes: 0 success, 1 I/O or parse error, 2 algorithmic failure
(too few matches, degenerate fit, invalid distortion).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from gcpreg import io, matching, overlay, resample, synth, warp
from gcpreg.core import PRESETS, WindowSpec
from gcpreg.errors import (
    DisplacementBoundExceeded,
    EmptyGcpList,
    FitError,
    FormatError,
    NonInvertibleSpec,
    RegistrationError,
)

log = logging.getLogger("gcpreg")

EXIT_OK, EXIT_IO, EXIT_ALGO = 0, 1, 2
MIN_MATCHES = warp.n_coefficients(warp.DEFAULT_DEGREE)
POLYLINE_SUFFIXES = (".txt", ".poly", ".pl")


def _add_match_args(p):
    p.add_argument("--ref", required=True, help="reference image (.pgm or .raw)")
    p.add_argument("--sensed", required=True, help="sensed image (.pgm or .raw)")
    p.add_argument("--gcps", required=True, help="GCP file: id,ref_scan,ref_pixel")
    _add_window_args(p)


def _add_window_args(p):
    p.add_argument("--preset", choices=sorted(PRESETS), default="vhrr",
                   help="window sizes: vhrr = 11/31, ccd = 21/101 (default vhrr)")
    p.add_argument("--target-size", type=int, help="target window side T (overrides preset)")
    p.add_argument("--search-size", type=int, help="search window side S (overrides preset)")
    p.add_argument("--measure", choices=matching.MODES, default=matching.COMBINED)
    p.add_argument("--edge", action="store_true", help="match on Sobel edge images")
    p.add_argument("--bins", type=int, default=64, help="histogram bins for MI/CRA")
    p.add_argument("--ncc-threshold", type=float, default=0.5)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads")


def _config(args, mode=None) -> matching.MatchConfig:
    preset = PRESETS[args.preset]
    windows = WindowSpec(args.target_size or preset.target_size, args.search_size or preset.search_size)
    return matching.MatchConfig(windows, mode or args.measure, args.ncc_threshold, args.edge, args.bins)


def _run_match(args):
    ref = io.read_image(args.ref)
    sensed = io.read_image(args.sensed)
    gcps = io.read_gcps(args.gcps)
    results, census = matching.match_all(ref, sensed, gcps, _config(args), workers=args.threads)
    log.info("matched %d of %d GCPs %s", census["matched"], len(results), dict(census))
    return ref, sensed, results, census


def cmd_match(args) -> int:
    _, _, results, census = _run_match(args)
    if args.out:
        io.write_matches(args.out, results)
    else:
        sys.stdout.write(io.format_matches(results))
    print(f"matched {census['matched']}/{len(results)}", file=sys.stderr)
    return EXIT_OK if census["matched"] >= MIN_MATCHES else EXIT_ALGO


def cmd_register(args) -> int:
    ref, sensed, results, census = _run_match(args)
    if args.matches:
        io.write_matches(args.matches, results)
    model, report = warp.fit_warp(results, args.degree)
    registered, mask = resample.resample_nn(sensed, model, ref.width, ref.height, args.fill,
                                            workers=args.threads, return_mask=True)
    io.write_image(args.out, registered)
    if args.model:
        io.write_model(args.model, model)
    radiometry = resample.radiometry_report(sensed, registered, args.fill, mask=mask)
    extra = {
        "unmatched": " ".join(f"{k}={v}" for k, v in sorted(census.items()) if k != "matched") or "none",
        "histogram_tv": f"{radiometry.tv_distance:.6g}",
        "new_gray_values": str(radiometry.new_value_count),
        "extrapolated_fraction": f"{_extrapolated_fraction(model, ref):.6g}",
    }
    text = io.report_to_text(report, extra)
    if args.report:
        Path(args.report).write_text(text)
        Path(str(args.report) + ".kv").write_text(io.report_to_kv(report, extra))
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _extrapolated_fraction(model, ref) -> float:
    xr, yr = np.meshgrid(np.arange(ref.height), np.arange(ref.width), indexing="ij")
    return float(model.is_extrapolating(xr, yr).mean())


def _read_boundary(path, frame="source"):
    if Path(path).suffix.lower() in POLYLINE_SUFFIXES:
        return overlay.read_polylines(path, frame)
    return io.read_image(path)


def cmd_overlay(args) -> int:
    img = io.read_image(args.image)
    boundary = _read_boundary(args.boundary)
    if isinstance(boundary, overlay.BoundaryPolyline):
        boundary = overlay.rasterize_boundary(boundary, img.width, img.height, 1, img.max_value)
    io.write_image(args.out, overlay.burn_overlay(img, boundary, args.burn))
    return EXIT_OK


def cmd_boundary_gen(args) -> int:
    boundary = _read_boundary(args.boundary)
    pairs = io.read_pairs(args.pairs)
    target_dims = tuple(args.target_dims)
    if isinstance(boundary, overlay.BoundaryPolyline):
        if args.cut_size and args.canvas:
            pr, pc = overlay.centered_origin(args.cut_size, args.canvas)
            boundary = boundary.translate(pr - args.cut_origin[0], pc - args.cut_origin[1])
        out = overlay.transform_boundary(boundary, pairs, target_dims, args.degree, args.burn, args.max_value)
    else:
        cut_size = args.cut_size or (boundary.height - args.cut_origin[0], boundary.width - args.cut_origin[1])
        canvas = args.canvas or cut_size
        padded = overlay.cut_and_pad(boundary, args.cut_origin, cut_size, canvas, 0)
        out = overlay.transform_boundary(padded, pairs, target_dims, args.degree)
    io.write_image(args.out, out)
    return EXIT_OK


def _add_scene_args(p):
    p.add_argument("--size", type=int, nargs=2, metavar=("H", "W"), default=(512, 512))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-value", type=int, default=255)
    p.add_argument("--kind", choices=sorted(synth.KINDS), default="shift")
    p.add_argument("--params", nargs="+", default=None,
                   help="distortion parameters (shift: d_scan d_pixel; affine: 6; quadratic: 12); "
                        "use --params=a,b,... when values have negative exponents")
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian noise sigma in gray levels")
    p.add_argument("--occlude", action="append", default=[], metavar="SCAN,PIXEL,RADIUS,VALUE",
                   help="flat disc occlusion in the sensed image (repeatable)")
    p.add_argument("--max-displacement", type=float, default=None)
    p.add_argument("--n-gcps", type=int, default=29)
    p.add_argument("--margin", type=int, default=None, help="GCP grid margin (default S/2 + displacement)")


def _scene(args, spec_windows: WindowSpec):
    if args.params is None:
        params = {"shift": [4, -7]}.get(args.kind)
        if params is None:
            raise SystemExit(f"--params is required for kind {args.kind}")
    else:
        params = [float(v) for item in args.params for v in item.split(",") if v.strip()]
    occ = []
    for item in args.occlude:
        x, y, r, v = item.split(",")
        occ.append(synth.Occlusion((float(x), float(y)), float(r), int(v)))
    spec = synth.DistortionSpec(args.kind, tuple(params), args.noise, tuple(occ), args.seed, args.max_displacement)
    h, w = args.size
    ref = synth.textured_reference(h, w, args.seed, args.max_value)
    sensed, truth = synth.generate_sensed(ref, spec)
    margin = args.margin
    if margin is None:
        margin = spec_windows.search_size // 2 + int(round(synth.max_displacement(spec, h, w) + 0.5)) + 1
    gcps = synth.grid_gcps(ref, args.n_gcps, margin, spec_windows.target_size)
    return spec, ref, sensed, truth, gcps


def cmd_synth(args) -> int:
    windows = PRESETS[args.preset]
    spec, ref, sensed, truth, gcps = _scene(args, windows)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_image(out / "reference.pgm", ref)
    io.write_image(out / "sensed.pgm", sensed)
    io.write_gcps(out / "gcps.csv", gcps)
    (out / "truth.txt").write_text(synth.spec_to_text(spec))
    io.write_model(out / "truth_model.txt", truth)
    print(f"wrote scene with {len(gcps)} GCPs to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config(args, matching.COMBINED)
    if args.ref:
        if not (args.sensed and args.gcps and args.truth):
            raise SystemExit("--ref needs --sensed, --gcps and --truth")
        ref, sensed = io.read_image(args.ref), io.read_image(args.sensed)
        gcps = io.read_gcps(args.gcps)
        truth = synth.spec_from_text(Path(args.truth).read_text()).forward_model()
    else:
        _, ref, sensed, truth, gcps = _scene(args, cfg.windows)
    modes = [m.strip() for m in args.modes.split(",")]
    for m in modes:
        if m not in matching.MODES:
            raise SystemExit(f"unknown mode {m!r}; choose from {', '.join(matching.MODES)}")
    t0 = time.perf_counter()
    runs = synth.bench(ref, sensed, gcps, truth, modes, cfg, args.degree, args.threads)
    log.info("bench finished in %.2f s", time.perf_counter() - t0)
    table = synth.format_scorecards([r.scorecard for r in runs], with_time=not args.no_time)
    sys.stdout.write(table)
    if args.out:
        Path(args.out).write_text(table)
    if args.artifacts:
        d = Path(args.artifacts)
        d.mkdir(parents=True, exist_ok=True)
        for r in runs:
            io.write_matches(d / f"matches_{r.scorecard.measure}.csv", r.matches)
            if r.model is not None:
                io.write_model(d / f"model_{r.scorecard.measure}.txt", r.model)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gcpreg", description="GCP-based satellite image registration")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("match", help="find GCP match points in the sensed image")
    _add_match_args(p)
    p.add_argument("--out", help="match table (default stdout)")
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("register", help="match, fit the polynomial warp and resample")
    _add_match_args(p)
    p.add_argument("--degree", type=int, default=warp.DEFAULT_DEGREE, choices=range(1, warp.MAX_DEGREE + 1))
    p.add_argument("--fill", type=int, default=resample.DEFAULT_FILL)
    p.add_argument("--out", required=True, help="registered image")
    p.add_argument("--report", help="fit report (text); a .kv twin is written alongside")
    p.add_argument("--model", help="write the fitted warp model here")
    p.add_argument("--matches", help="write the match table here")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("overlay", help="burn a boundary raster or polyline file onto an image")
    p.add_argument("--image", required=True)
    p.add_argument("--boundary", required=True, help="boundary image, or polyline file (.txt/.poly)")
    p.add_argument("--burn", type=int, default=None, help="burn value (default image max)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_overlay)

    p = sub.add_parser("boundary-gen", help="cut/pad a boundary and warp it into a target frame")
    p.add_argument("--boundary", required=True, help="boundary image, or polyline file (.txt/.poly)")
    p.add_argument("--pairs", required=True, help="tie points: target_scan,target_pixel,source_scan,source_pixel")
    p.add_argument("--target-dims", type=int, nargs=2, metavar=("H", "W"), required=True)
    p.add_argument("--cut-origin", type=int, nargs=2, metavar=("SCAN", "PIXEL"), default=(0, 0))
    p.add_argument("--cut-size", type=int, nargs=2, metavar=("H", "W"))
    p.add_argument("--canvas", type=int, nargs=2, metavar=("H", "W"))
    p.add_argument("--degree", type=int, default=warp.DEFAULT_DEGREE)
    p.add_argument("--burn", type=int, default=255)
    p.add_argument("--max-value", type=int, default=255)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_boundary_gen)

    p = sub.add_parser("synth", help="write a synthetic reference/sensed scene with ground truth")
    _add_scene_args(p)
    p.add_argument("--preset", choices=sorted(PRESETS), default="vhrr")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="compare all matching modes on one scene")
    _add_scene_args(p)
    _add_window_args(p)
    p.add_argument("--ref")
    p.add_argument("--sensed")
    p.add_argument("--gcps")
    p.add_argument("--truth", help="distortion spec file written by 'synth'")
    p.add_argument("--modes", default="mi,cra,ncc,ssd,combined")
    p.add_argument("--degree", type=int, default=warp.DEFAULT_DEGREE)
    p.add_argument("--no-time", action="store_true", help="print '-' for the time column")
    p.add_argument("--out", help="also write the table here")
    p.add_argument("--artifacts", help="directory for per-mode match tables and models")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FitError, EmptyGcpList, NonInvertibleSpec, DisplacementBoundExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ALGO
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except RegistrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ALGO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
