"""Plot determinism, axis handling, and output structure."""
from __future__ import annotations

import struct
import zlib

import pytest

from astkit.errors import InvalidSpec
from astkit.flightlog import TimeSeries
from astkit.plotting import MAX_POINTS, PlotSpec, axis_ranges, _decimate, render_plot

from conftest import series


def simple_spec(**kwargs) -> PlotSpec:
    ts = series([1.0, 3.0, 2.0, 5.0, 4.0])
    defaults = dict(title="baro_alt_meter", series=(("baro_alt_meter", ts),),
                    y_label="m")
    defaults.update(kwargs)
    return PlotSpec(**defaults)


def test_identical_specs_render_identical_bytes():
    svg1, png1 = render_plot(simple_spec())
    svg2, png2 = render_plot(simple_spec())
    assert svg1 == svg2
    assert png1 == png2


def test_constant_series_widens_y_axis_to_plus_minus_one():
    spec = PlotSpec(title="t", series=(("flat", series([5.0] * 4)),))
    _x0, _x1, y0, y1 = axis_ranges(spec)
    assert (y0, y1) == (4.0, 6.0)


def test_two_series_spec_has_exactly_two_polylines():
    spec = PlotSpec(
        title="t",
        series=(("a", series([1.0, 2.0, 3.0])), ("b", series([3.0, 2.0, 1.0]))),
    )
    svg, _png = render_plot(spec)
    assert svg.decode("utf-8").count("<polyline") == 2


def test_title_and_labels_rendered():
    svg, _png = render_plot(simple_spec(title="spike check", y_label="meters"))
    text = svg.decode("utf-8")
    assert "spike check" in text
    assert "time (s)" in text
    assert "meters" in text


def test_png_is_valid_and_expected_size():
    _svg, png = render_plot(simple_spec())
    assert png.startswith(b"\x89PNG\r\n\x1a\n")
    width, height = struct.unpack(">II", png[16:24])
    assert (width, height) == (800, 400)
    # IDAT payload decompresses to H rows of 1 filter byte + W*4 RGBA bytes
    idat = _extract_idat(png)
    raw = zlib.decompress(idat)
    assert len(raw) == 400 * (1 + 800 * 4)


def _extract_idat(png: bytes) -> bytes:
    pos = 8
    chunks = []
    while pos < len(png):
        (length,) = struct.unpack(">I", png[pos : pos + 4])
        tag = png[pos + 4 : pos + 8]
        if tag == b"IDAT":
            chunks.append(png[pos + 8 : pos + 8 + length])
        pos += 12 + length
    return b"".join(chunks)


def test_png_contains_series_color_pixels():
    _svg, png = render_plot(simple_spec())
    raw = zlib.decompress(_extract_idat(png))
    assert bytes((0x1F, 0x77, 0xB4, 0xFF)) in raw  # first palette color


def test_spec_requires_series():
    with pytest.raises(InvalidSpec):
        PlotSpec(title="t", series=())


def test_spec_requires_two_points_per_series():
    with pytest.raises(InvalidSpec):
        PlotSpec(title="t", series=(("a", series([1.0])),))


def test_five_percent_padding():
    spec = PlotSpec(title="t", series=(("a", series([0.0, 10.0])),))
    _x0, _x1, y0, y1 = axis_ranges(spec)
    assert y0 == pytest.approx(-0.5)
    assert y1 == pytest.approx(10.5)


def test_long_series_decimated_below_cap():
    import math

    big = series([math.sin(i / 50.0) for i in range(10_000)])
    t, v = _decimate(big)
    assert len(t) <= MAX_POINTS
    assert max(v) == pytest.approx(max(big.values))
    assert min(v) == pytest.approx(min(big.values))
    svg, png = render_plot(PlotSpec(title="big", series=(("s", big),)))
    assert svg and png


def test_nan_values_skipped_in_polyline():
    ts = TimeSeries([0, 1_000_000, 2_000_000], [1.0, float("nan"), 3.0])
    spec = PlotSpec(title="t", series=(("a", ts),))
    svg, _png = render_plot(spec)
    # polyline has two points, the NaN sample is dropped
    line = [ln for ln in svg.decode().splitlines() if "polyline" in ln][0]
    assert line.count(",") == 2
