"""Deterministic line-chart rendering for flight-log parameters.

Both outputs are built from scratch rather than through a plotting stack:
the SVG is assembled from fixed-format strings and the PNG rasterizes the
same polylines with integer Bresenham strokes and a stored-block deflate
stream. Identical specs therefore produce byte-identical files on every
run and platform, which the acceptance checks and scripted vision calls
rely on.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

from .errors import InvalidSpec
from .flightlog import TimeSeries

WIDTH = 800
HEIGHT = 400
MARGIN_LEFT = 62
MARGIN_RIGHT = 14
MARGIN_TOP = 34
MARGIN_BOTTOM = 42
MAX_POINTS = 4000
TICKS = 5

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")
_PALETTE_RGBA = tuple(
    (int(c[1:3], 16), int(c[3:5], 16), int(c[5:7], 16), 255) for c in PALETTE
)
_BG = (255, 255, 255, 255)
_AXIS = (32, 32, 32, 255)


@dataclass(frozen=True)
class PlotSpec:
    title: str
    series: tuple[tuple[str, TimeSeries], ...]
    y_label: str = ""
    x_label: str = "time (s)"
    width: int = WIDTH
    height: int = HEIGHT

    def __post_init__(self) -> None:
        if not self.series:
            raise InvalidSpec("plot needs at least one series")
        for label, ts in self.series:
            if len(ts) < 2:
                raise InvalidSpec(f"series {label!r} needs at least 2 points")


def _decimate(ts: TimeSeries) -> tuple[list[int], list[float]]:
    """Min/max-preserving bucket decimation down to MAX_POINTS points."""
    n = len(ts)
    if n <= MAX_POINTS:
        return ts.timestamps, ts.values
    buckets = MAX_POINTS // 2
    out_t: list[int] = []
    out_v: list[float] = []
    for b in range(buckets):
        lo = b * n // buckets
        hi = max(lo + 1, (b + 1) * n // buckets)
        window = range(lo, hi)
        i_min = min(window, key=lambda i: ts.values[i])
        i_max = max(window, key=lambda i: ts.values[i])
        for i in sorted({i_min, i_max}):
            out_t.append(ts.timestamps[i])
            out_v.append(ts.values[i])
    return out_t, out_v


def axis_ranges(spec: PlotSpec) -> tuple[float, float, float, float]:
    """Data ranges with 5% padding; a flat axis widens to value +/- 1 instead."""
    xs: list[float] = []
    ys: list[float] = []
    for _label, ts in spec.series:
        t, v = _decimate(ts)
        xs.extend(x / 1e6 for x in t)
        ys.extend(y for y in v if y == y)  # NaN-safe
    x_min, x_max = min(xs), max(xs)
    if not ys:
        y_min = y_max = 0.0
    else:
        y_min, y_max = min(ys), max(ys)
    if y_max == y_min:
        y_min, y_max = y_min - 1.0, y_max + 1.0
    else:
        pad = 0.05 * (y_max - y_min)
        y_min, y_max = y_min - pad, y_max + pad
    if x_max == x_min:
        x_min, x_max = x_min - 1.0, x_max + 1.0
    else:
        pad = 0.05 * (x_max - x_min)
        x_min, x_max = x_min - pad, x_max + pad
    return x_min, x_max, y_min, y_max


def _fmt(value: float) -> str:
    return f"{value:.6g}"


def _escape(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        .replace('"', "&quot;")
    )


def render_plot(spec: PlotSpec) -> tuple[bytes, bytes]:
    """Render (svg_bytes, png_bytes) for a plot spec."""
    x0, x1, y0, y1 = axis_ranges(spec)
    left, right = MARGIN_LEFT, spec.width - MARGIN_RIGHT
    top, bottom = MARGIN_TOP, spec.height - MARGIN_BOTTOM

    def to_px(x: float, y: float) -> tuple[float, float]:
        px = left + (x - x0) / (x1 - x0) * (right - left)
        py = bottom - (y - y0) / (y1 - y0) * (bottom - top)
        return px, py

    polylines: list[list[tuple[float, float]]] = []
    for _label, ts in spec.series:
        t, v = _decimate(ts)
        polylines.append(
            [to_px(x / 1e6, y) for x, y in zip(t, v) if y == y]
        )

    svg = _render_svg(spec, polylines, (x0, x1, y0, y1))
    png = _render_png(spec, polylines)
    return svg, png


def _render_svg(
    spec: PlotSpec,
    polylines: list[list[tuple[float, float]]],
    ranges: tuple[float, float, float, float],
) -> bytes:
    x0, x1, y0, y1 = ranges
    left, right = MARGIN_LEFT, spec.width - MARGIN_RIGHT
    top, bottom = MARGIN_TOP, spec.height - MARGIN_BOTTOM
    w, h = spec.width, spec.height
    parts: list[str] = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff"/>',
        f'<text x="{w / 2:.1f}" y="20" text-anchor="middle" font-size="14" '
        f'font-family="monospace">{_escape(spec.title)}</text>',
    ]
    # axes
    parts.append(
        f'<line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}" '
        f'stroke="#202020" stroke-width="1"/>'
    )
    parts.append(
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}" '
        f'stroke="#202020" stroke-width="1"/>'
    )
    for i in range(TICKS + 1):
        frac = i / TICKS
        x_val = x0 + frac * (x1 - x0)
        y_val = y0 + frac * (y1 - y0)
        x_px = left + frac * (right - left)
        y_px = bottom - frac * (bottom - top)
        parts.append(
            f'<line x1="{x_px:.2f}" y1="{bottom}" x2="{x_px:.2f}" y2="{bottom + 4}" '
            f'stroke="#202020" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{x_px:.2f}" y="{bottom + 16}" text-anchor="middle" '
            f'font-size="10" font-family="monospace">{_fmt(x_val)}</text>'
        )
        parts.append(
            f'<line x1="{left - 4}" y1="{y_px:.2f}" x2="{left}" y2="{y_px:.2f}" '
            f'stroke="#202020" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{left - 6}" y="{y_px + 3:.2f}" text-anchor="end" '
            f'font-size="10" font-family="monospace">{_fmt(y_val)}</text>'
        )
    parts.append(
        f'<text x="{(left + right) / 2:.1f}" y="{h - 8}" text-anchor="middle" '
        f'font-size="11" font-family="monospace">{_escape(spec.x_label)}</text>'
    )
    if spec.y_label:
        parts.append(
            f'<text x="14" y="{(top + bottom) / 2:.1f}" text-anchor="middle" '
            f'font-size="11" font-family="monospace" '
            f'transform="rotate(-90 14 {(top + bottom) / 2:.1f})">'
            f"{_escape(spec.y_label)}</text>"
        )
    for idx, ((label, _ts), points) in enumerate(zip(spec.series, polylines)):
        color = PALETTE[idx % len(PALETTE)]
        coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
            f'points="{coords}"/>'
        )
        parts.append(
            f'<text x="{right - 4}" y="{top + 12 + 12 * idx}" text-anchor="end" '
            f'font-size="10" font-family="monospace" fill="{color}">'
            f"{_escape(label)}</text>"
        )
    parts.append("</svg>")
    return "\n".join(parts).encode("utf-8")


# PNG rasterization

def _render_png(spec: PlotSpec, polylines: list[list[tuple[float, float]]]) -> bytes:
    w, h = spec.width, spec.height
    canvas = bytearray(_BG * (w * h))

    def put(x: int, y: int, rgba: tuple[int, int, int, int]) -> None:
        if 0 <= x < w and 0 <= y < h:
            off = 4 * (y * w + x)
            canvas[off : off + 4] = bytes(rgba)

    def line(xa: int, ya: int, xb: int, yb: int, rgba: tuple[int, int, int, int]) -> None:
        dx, dy = abs(xb - xa), -abs(yb - ya)
        sx = 1 if xa < xb else -1
        sy = 1 if ya < yb else -1
        err = dx + dy
        while True:
            put(xa, ya, rgba)
            if xa == xb and ya == yb:
                return
            e2 = 2 * err
            if e2 >= dy:
                err += dy
                xa += sx
            if e2 <= dx:
                err += dx
                ya += sy

    left, right = MARGIN_LEFT, w - MARGIN_RIGHT
    top, bottom = MARGIN_TOP, h - MARGIN_BOTTOM
    line(left, bottom, right, bottom, _AXIS)
    line(left, top, left, bottom, _AXIS)
    for idx, points in enumerate(polylines):
        rgba = _PALETTE_RGBA[idx % len(_PALETTE_RGBA)]
        pixel_points = [(round(x), round(y)) for x, y in points]
        for (xa, ya), (xb, yb) in zip(pixel_points, pixel_points[1:]):
            line(xa, ya, xb, yb, rgba)
    return _encode_png(bytes(canvas), w, h)


def _encode_png(rgba: bytes, w: int, h: int) -> bytes:
    raw = bytearray()
    stride = w * 4
    for row in range(h):
        raw.append(0)  # filter type: none
        raw += rgba[row * stride : (row + 1) * stride]
    idat = _deflate_stored(bytes(raw))

    def chunk(tag: bytes, body: bytes) -> bytes:
        return (
            struct.pack(">I", len(body))
            + tag
            + body
            + struct.pack(">I", zlib.crc32(tag + body) & 0xFFFFFFFF)
        )

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 6, 0, 0, 0)  # 8-bit RGBA
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", idat)
        + chunk(b"IEND", b"")
    )


def _deflate_stored(data: bytes) -> bytes:
    """zlib stream of stored (uncompressed) deflate blocks.

    Hand-rolled so the byte stream never depends on the zlib build.
    """
    out = bytearray(b"\x78\x01")
    pos = 0
    while True:
        block = data[pos : pos + 0xFFFF]
        pos += len(block)
        final = 1 if pos >= len(data) else 0
        out.append(final)
        out += struct.pack("<HH", len(block), len(block) ^ 0xFFFF)
        out += block
        if final:
            break
    out += struct.pack(">I", zlib.adler32(data) & 0xFFFFFFFF)
    return bytes(out)
