"""File formats: images, GCP lists, match tables, warp models and fit reports.

Byte-level layouts are documented in docs/FORMATS.md.
"""

from __future__ import annotations

import math
import re
from pathlib import Path

import numpy as np

from gcpreg.core import MATCHED, UNMATCHED, GroundControlPoint, MatchResult, PixelCoord, RasterImage
from gcpreg.errors import MalformedHeader, MalformedLine, TruncatedData, UnsupportedMaxValue
from gcpreg.warp import FitReport, WarpModel, model_from_text, model_to_text, parse_key_values

MAX_VALUE_LIMIT = 65535
RAW_SUFFIXES = (".raw",)
SIDECAR_SUFFIX = ".meta"


# -- images -----------------------------------------------------------------

_PGM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _pgm_header(buf: bytes):
    pos = 0
    fields = []
    for _ in range(4):
        m = _PGM_TOKEN.match(buf, pos)
        if not m:
            raise MalformedHeader("incomplete PGM header")
        fields.append(m.group(1))
        pos = m.end()
    if fields[0] != b"P5":
        raise MalformedHeader(f"not a binary PGM (magic {fields[0]!r})")
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise MalformedHeader("non-integer PGM header field") from None
    if pos >= len(buf) or buf[pos:pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise MalformedHeader("missing whitespace after PGM max value")
    return width, height, maxval, pos + 1


def _check_dims(width, height, maxval):
    if width < 1 or height < 1:
        raise MalformedHeader(f"invalid dimensions {width}x{height}")
    if maxval > MAX_VALUE_LIMIT:
        raise UnsupportedMaxValue(f"max value {maxval} exceeds {MAX_VALUE_LIMIT}")
    if maxval < 1:
        raise MalformedHeader(f"invalid max value {maxval}")


def read_pgm(path) -> RasterImage:
    buf = Path(path).read_bytes()
    width, height, maxval, offset = _pgm_header(buf)
    _check_dims(width, height, maxval)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    if len(buf) - offset < need:
        raise TruncatedData(f"expected {need} sample bytes, found {len(buf) - offset}")
    data = np.frombuffer(buf, dtype=dtype, count=width * height, offset=offset).reshape(height, width)
    if data.max() > maxval:
        raise MalformedHeader(f"sample {int(data.max())} exceeds declared max value {maxval}")
    return RasterImage(data, maxval)


def write_pgm(path, img: RasterImage) -> None:
    dtype = ">u2" if img.max_value > 255 else "u1"
    header = f"P5\n{img.width} {img.height}\n{img.max_value}\n".encode("ascii")
    Path(path).write_bytes(header + img.samples.astype(dtype).tobytes())


def sidecar_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.name + SIDECAR_SUFFIX)


def read_raw(path) -> RasterImage:
    meta = parse_key_values(sidecar_path(path).read_text())
    try:
        width, height, maxval = int(meta["width"]), int(meta["height"]), int(meta["max_value"])
    except (KeyError, ValueError) as exc:
        raise MalformedHeader(f"bad raw sidecar: {exc}") from exc
    _check_dims(width, height, maxval)
    buf = Path(path).read_bytes()
    need = width * height * 2
    if len(buf) < need:
        raise TruncatedData(f"expected {need} bytes, found {len(buf)}")
    if len(buf) > need:
        raise MalformedHeader(f"raw file has {len(buf) - need} bytes beyond {width}x{height} samples")
    data = np.frombuffer(buf, dtype="<u2").reshape(height, width)
    if data.max() > maxval:
        raise MalformedHeader(f"sample {int(data.max())} exceeds declared max value {maxval}")
    return RasterImage(data, maxval)


def write_raw(path, img: RasterImage) -> None:
    Path(path).write_bytes(img.samples.astype("<u2").tobytes())
    sidecar_path(path).write_text(f"width {img.width}\nheight {img.height}\nmax_value {img.max_value}\n")


def read_image(path) -> RasterImage:
    """Read a ``.raw`` (+ sidecar) image, otherwise a binary PGM."""
    if Path(path).suffix.lower() in RAW_SUFFIXES:
        return read_raw(path)
    return read_pgm(path)


def write_image(path, img: RasterImage) -> None:
    if Path(path).suffix.lower() in RAW_SUFFIXES:
        write_raw(path, img)
    else:
        write_pgm(path, img)


# -- GCPs and matches -----------------------------------------------------------

def _csv_rows(path):
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, [f.strip() for f in line.split(",")]


def read_gcps(path) -> list[GroundControlPoint]:
    """``id, ref_scan, ref_pixel`` per line; ``#`` starts a comment."""
    gcps, seen = [], set()
    for lineno, fields in _csv_rows(path):
        if len(fields) != 3:
            raise MalformedLine(lineno, f"expected 3 fields, got {len(fields)}")
        gid = fields[0]
        if not gid:
            raise MalformedLine(lineno, "empty GCP id")
        if gid in seen:
            raise MalformedLine(lineno, f"duplicate id {gid!r}")
        try:
            coord = PixelCoord(int(fields[1]), int(fields[2]))
        except ValueError:
            raise MalformedLine(lineno, "coordinates must be integers") from None
        seen.add(gid)
        gcps.append(GroundControlPoint(gid, coord))
    return gcps


def write_gcps(path, gcps) -> None:
    lines = ["# id,ref_scan,ref_pixel"]
    lines += [f"{g.id},{g.ref_coord.scan},{g.ref_coord.pixel}" for g in gcps]
    Path(path).write_text("\n".join(lines) + "\n")


MATCH_COLUMNS = ("id", "ref_scan", "ref_pixel", "sensed_scan", "sensed_pixel", "d_scan", "d_pixel",
                 "ncc", "ssd", "score", "measure", "status", "reason")


def _num(v: float) -> str:
    return "nan" if math.isnan(v) else repr(float(v))


def format_matches(results) -> str:
    lines = ["# " + ",".join(MATCH_COLUMNS)]
    for m in results:
        if m.matched:
            pos = [m.sensed_coord.scan, m.sensed_coord.pixel, m.offset[0], m.offset[1]]
        else:
            pos = ["", "", "", ""]
        fields = [m.gcp_id, m.ref_coord.scan, m.ref_coord.pixel, *pos,
                  _num(m.ncc_score), _num(m.ssd_score), _num(m.score), m.measure, m.status, m.reason or ""]
        lines.append(",".join(str(f) for f in fields))
    return "\n".join(lines) + "\n"


def write_matches(path, results) -> None:
    Path(path).write_text(format_matches(results))


def read_matches(path) -> list[MatchResult]:
    out = []
    for lineno, f in _csv_rows(path):
        if len(f) != len(MATCH_COLUMNS):
            raise MalformedLine(lineno, f"expected {len(MATCH_COLUMNS)} fields, got {len(f)}")
        try:
            status = f[11]
            if status not in (MATCHED, UNMATCHED):
                raise ValueError(f"bad status {status!r}")
            ref = PixelCoord(int(f[1]), int(f[2]))
            kw = {}
            if status == MATCHED:
                kw["sensed_coord"] = PixelCoord(int(f[3]), int(f[4]))
                kw["offset"] = (int(f[5]), int(f[6]))
            out.append(MatchResult(f[0], ref, status, ncc_score=float(f[7]), ssd_score=float(f[8]),
                                   score=float(f[9]), measure=f[10], reason=f[12] or None, **kw))
        except ValueError as exc:
            raise MalformedLine(lineno, str(exc)) from None
    return out


# -- models and reports -----------------------------------------------------------

def write_model(path, model: WarpModel) -> None:
    Path(path).write_text(model_to_text(model))


def read_model(path) -> WarpModel:
    return model_from_text(Path(path).read_text())


def report_to_kv(report: FitReport, extra: dict | None = None) -> str:
    """Line-oriented ``key value`` form of a fit report."""
    lines = [
        f"degree {report.degree}",
        f"rmse_scan {_num(report.rmse[0])}",
        f"rmse_pixel {_num(report.rmse[1])}",
        f"matched {report.matched}",
        f"total {report.total}",
        f"condition {_num(report.condition)}",
        f"elapsed_s {_num(report.elapsed)}",
    ]
    if report.holdout_rmse is not None:
        lines.append(f"holdout_rmse {_num(report.holdout_rmse[0])} {_num(report.holdout_rmse[1])}")
    for gid, (dx, dy) in zip(report.ids, report.residuals):
        lines.append(f"residual_{gid} {_num(dx)} {_num(dy)}")
    for k, v in (extra or {}).items():
        lines.append(f"{k} {v}")
    return "\n".join(lines) + "\n"


def report_to_text(report: FitReport, extra: dict | None = None) -> str:
    """Human-readable fit summary."""
    lines = [
        f"Polynomial degree     : {report.degree}",
        f"GCPs matched / input  : {report.matched} / {report.total}",
        f"RMSE (scan, pixel)    : ({report.rmse[0]:.4f}, {report.rmse[1]:.4f}) px",
        f"Condition number      : {report.condition:.3g}",
        f"Fit time              : {report.elapsed * 1e3:.2f} ms",
    ]
    if report.holdout_rmse is not None:
        lines.append(f"Hold-out RMSE         : ({report.holdout_rmse[0]:.4f}, {report.holdout_rmse[1]:.4f}) px")
    for k, v in (extra or {}).items():
        lines.append(f"{k:<22}: {v}")
    if report.ids:
        lines.append("")
        lines.append(f"{'gcp':<12} {'res_scan':>10} {'res_pixel':>10}")
        for gid, (dx, dy) in zip(report.ids, report.residuals):
            lines.append(f"{gid:<12} {dx:>10.4f} {dy:>10.4f}")
    return "\n".join(lines) + "\n"


def read_pairs(path) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    """Manual tie points: ``target_scan, target_pixel, source_scan, source_pixel`` per line."""
    pairs = []
    for lineno, f in _csv_rows(path):
        if len(f) != 4:
            raise MalformedLine(lineno, f"expected 4 fields, got {len(f)}")
        try:
            v = [float(x) for x in f]
        except ValueError:
            raise MalformedLine(lineno, "coordinates must be numbers") from None
        pairs.append(((v[0], v[1]), (v[2], v[3])))
    return pairs


def write_pairs(path, pairs) -> None:
    lines = ["# target_scan,target_pixel,source_scan,source_pixel"]
    lines += [f"{t[0]!r},{t[1]!r},{s[0]!r},{s[1]!r}" for t, s in pairs]
    Path(path).write_text("\n".join(lines) + "\n")
