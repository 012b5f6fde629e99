"""Flight-controller log parsing: binary ULog subset plus CSV fallback.

The binary reader covers the message types simulation logs actually use
(format definitions, subscriptions, data, logged strings, parameters and
info records); everything else is skipped and counted. The companion
writer emits minimal conformant files that the parser inverts exactly,
which is how log fixtures for the analytics layer are built.

Series naming follows the ``<topic>.<field>`` convention, with ``[i]``
suffixes for array fields and a ``_<instance>`` topic suffix for non-zero
multi-instance subscriptions.
"""
from __future__ import annotations

import logging
import math
import re
import struct
from dataclasses import dataclass, field

from .errors import (
    BadMagic,
    CorruptHeader,
    CorruptLog,
    MissingHeader,
    NoDataRows,
    NonMonotonicTimestamps,
)

logger = logging.getLogger(__name__)

ULOG_MAGIC = bytes([0x55, 0x4C, 0x6F, 0x67, 0x01, 0x12, 0x35])
ULOG_VERSION = 1
HEADER_SIZE = 16
UNPARSEABLE_LIMIT = 0.10

MSG_FORMAT = ord("F")
MSG_ADD_SUBSCRIPTION = ord("A")
MSG_DATA = ord("D")
MSG_LOGGED_STRING = ord("L")
MSG_INFO = ord("I")
MSG_PARAMETER = ord("P")

_TYPE_STRUCT = {
    "int8_t": "b", "uint8_t": "B",
    "int16_t": "h", "uint16_t": "H",
    "int32_t": "i", "uint32_t": "I",
    "int64_t": "q", "uint64_t": "Q",
    "float": "f", "double": "d",
    "bool": "B", "char": "s",
}

_FIELD_RE = re.compile(r"^(?P<type>[a-z0-9_]+)(?:\[(?P<count>\d+)\])?\s+(?P<name>\w+)$")
_SERIES_NAME_RE = re.compile(r"^(?P<base>[^.\[\]]+\.[^.\[\]]+)(?:\[(?P<index>\d+)\])?$")


@dataclass
class TimeSeries:
    timestamps: list[int]
    values: list[float]

    def validate(self) -> None:
        if len(self.timestamps) != len(self.values):
            raise ValueError("timestamps and values must have equal length")
        for a, b in zip(self.timestamps, self.timestamps[1:]):
            if b <= a:
                raise ValueError(f"timestamps must be strictly increasing ({a} -> {b})")
        for v in self.values:
            if not math.isfinite(v) and not math.isnan(v):
                raise ValueError("series values must be finite or NaN")

    @property
    def has_nan(self) -> bool:
        return any(math.isnan(v) for v in self.values)

    def __len__(self) -> int:
        return len(self.timestamps)


@dataclass
class LoggedMessage:
    timestamp: int  # microseconds
    level: int
    text: str


@dataclass
class FlightLog:
    start_time: int  # microseconds since epoch
    series: dict[str, TimeSeries]
    messages: list[LoggedMessage] = field(default_factory=list)
    source_format: str = "ulog"
    info: dict[str, str] = field(default_factory=dict)
    params: dict[str, float | int] = field(default_factory=dict)
    skipped_messages: int = 0
    dropped_samples: int = 0

    def validate(self) -> None:
        if not self.series:
            raise ValueError("flight log must contain at least one series")
        for name, ts in self.series.items():
            if not name:
                raise ValueError("series names must be non-empty")
            ts.validate()


def _parse_format(payload: bytes) -> tuple[str, list[tuple[str, int, str]]]:
    text = payload.decode("ascii")
    name, _, fields_text = text.partition(":")
    fields: list[tuple[str, int, str]] = []
    for part in fields_text.split(";"):
        part = part.strip()
        if not part:
            continue
        m = _FIELD_RE.match(part)
        if not m:
            raise ValueError(f"bad field spec {part!r}")
        if m["type"] not in _TYPE_STRUCT:
            raise ValueError(f"unsupported field type {m['type']!r}")
        fields.append((m["type"], int(m["count"] or 1), m["name"]))
    if not name or not fields:
        raise ValueError("format message must define a name and fields")
    return name, fields


def _format_struct(fields: list[tuple[str, int, str]]) -> struct.Struct:
    fmt = "<"
    for ftype, count, _name in fields:
        code = _TYPE_STRUCT[ftype]
        fmt += f"{count}{code}" if (count > 1 or code == "s") else code
    return struct.Struct(fmt)


def parse_ulog(data: bytes) -> FlightLog:
    """Decode a binary log into per-parameter time series and messages.

    Unknown message types are skipped and counted; a truncated trailing
    message ends parsing quietly. If more than 10% of framed messages fail
    to decode the whole log is rejected as corrupt.
    """
    if len(data) < len(ULOG_MAGIC) or data[: len(ULOG_MAGIC)] != ULOG_MAGIC:
        raise BadMagic("input does not start with the ULog magic bytes")
    if len(data) < HEADER_SIZE:
        raise CorruptHeader("file header truncated")
    version = data[len(ULOG_MAGIC)]
    if version != ULOG_VERSION:
        raise CorruptHeader(f"unsupported version byte {version}")
    (start_time,) = struct.unpack_from("<Q", data, len(ULOG_MAGIC) + 1)

    formats: dict[str, list[tuple[str, int, str]]] = {}
    structs: dict[str, struct.Struct] = {}
    subscriptions: dict[int, tuple[str, str]] = {}  # msg_id -> (series topic, format name)
    raw_series: dict[str, tuple[list[int], list[float]]] = {}
    series_order: list[str] = []
    messages: list[LoggedMessage] = []
    info: dict[str, str] = {}
    params: dict[str, float | int] = {}
    total = unparseable = unknown = dropped = 0

    pos = HEADER_SIZE
    while pos + 3 <= len(data):
        size, mtype = struct.unpack_from("<HB", data, pos)
        if pos + 3 + size > len(data):
            break  # truncated trailing message
        payload = data[pos + 3 : pos + 3 + size]
        pos += 3 + size
        total += 1
        try:
            if mtype == MSG_FORMAT:
                name, fields = _parse_format(payload)
                formats[name] = fields
                structs[name] = _format_struct(fields)
            elif mtype == MSG_ADD_SUBSCRIPTION:
                multi_id, msg_id = struct.unpack_from("<BH", payload, 0)
                topic = payload[3:].decode("ascii")
                if topic not in formats:
                    raise ValueError(f"subscription for undefined format {topic!r}")
                series_topic = topic if multi_id == 0 else f"{topic}_{multi_id}"
                subscriptions[msg_id] = (series_topic, topic)
            elif mtype == MSG_DATA:
                (msg_id,) = struct.unpack_from("<H", payload, 0)
                if msg_id not in subscriptions:
                    raise ValueError(f"data for unknown msg_id {msg_id}")
                series_topic, fmt_name = subscriptions[msg_id]
                dropped += _decode_data(
                    payload[2:], series_topic, formats[fmt_name], structs[fmt_name],
                    raw_series, series_order,
                )
            elif mtype == MSG_LOGGED_STRING:
                level, timestamp = struct.unpack_from("<BQ", payload, 0)
                messages.append(LoggedMessage(timestamp, level, payload[9:].decode("utf-8")))
            elif mtype in (MSG_INFO, MSG_PARAMETER):
                key_len = payload[0]
                key = payload[1 : 1 + key_len].decode("ascii")
                value = _decode_keyed_value(key, payload[1 + key_len :])
                if mtype == MSG_INFO:
                    info[key.split(" ", 1)[1]] = str(value)
                else:
                    params[key.split(" ", 1)[1]] = value  # numeric by construction
            else:
                unknown += 1
        except (ValueError, struct.error, UnicodeDecodeError, IndexError) as exc:
            unparseable += 1
            logger.debug("unparseable message at offset %d: %s", pos, exc)

    if total and unparseable / total > UNPARSEABLE_LIMIT:
        raise CorruptLog(f"{unparseable} of {total} messages unparseable")

    series = {
        name: TimeSeries(list(ts), list(vs))
        for name, (ts, vs) in ((n, raw_series[n]) for n in series_order)
    }
    return FlightLog(
        start_time=start_time,
        series=series,
        messages=messages,
        source_format="ulog",
        info=info,
        params=params,
        skipped_messages=unknown,
        dropped_samples=dropped,
    )


def _decode_data(
    body: bytes,
    topic: str,
    fields: list[tuple[str, int, str]],
    layout: struct.Struct,
    raw_series: dict[str, tuple[list[int], list[float]]],
    series_order: list[str],
) -> int:
    if len(body) != layout.size:
        raise ValueError(f"data size {len(body)} != format size {layout.size}")
    values = layout.unpack(body)
    cursor = 0
    timestamp: int | None = None
    decoded: list[tuple[str, float]] = []
    for ftype, count, name in fields:
        if ftype == "char":
            cursor += 1  # one packed bytes object regardless of count
            continue
        span = values[cursor : cursor + count]
        cursor += count
        if name.startswith("_padding"):
            continue
        if name == "timestamp" and ftype == "uint64_t":
            timestamp = int(span[0])
            continue
        if count == 1:
            decoded.append((f"{topic}.{name}", float(span[0])))
        else:
            decoded.extend(
                (f"{topic}.{name}[{i}]", float(v)) for i, v in enumerate(span)
            )
    if timestamp is None:
        return 0  # topic without a time base contributes no series
    dropped = 0
    for series_name, value in decoded:
        if series_name not in raw_series:
            raw_series[series_name] = ([], [])
            series_order.append(series_name)
        ts, vs = raw_series[series_name]
        if ts and timestamp <= ts[-1]:
            dropped += 1  # keep per-series timestamps strictly increasing
            continue
        ts.append(timestamp)
        vs.append(value)
    return dropped


def _decode_keyed_value(key: str, raw: bytes) -> float | int | str:
    ftype, _, _name = key.partition(" ")
    base = ftype.split("[", 1)[0]
    if base == "char":
        return raw.decode("utf-8")
    code = _TYPE_STRUCT.get(base)
    if code is None or code == "s":
        raise ValueError(f"unsupported keyed value type {ftype!r}")
    (value,) = struct.unpack(f"<{code}", raw)
    return float(value) if base in ("float", "double") else int(value)


# Writing

def write_ulog(log: FlightLog) -> bytes:
    """Serialize a flight log so that ``parse_ulog`` inverts it exactly.

    Series are grouped by the topic prefix before the first dot; every
    series in one topic must share the same timestamp vector, array fields
    must cover a full 0..n-1 index range, and values are written as doubles
    so they round-trip bit-for-bit.
    """
    log.validate()
    topics = _group_topics(log)

    out = bytearray()
    out += ULOG_MAGIC
    out += bytes([ULOG_VERSION])
    out += struct.pack("<Q", log.start_time)

    for key, value in log.info.items():
        raw = value.encode("utf-8")
        _emit(out, MSG_INFO, _keyed_payload(f"char[{len(raw)}] {key}", raw))
    for key, value in log.params.items():
        if isinstance(value, int):
            _emit(out, MSG_PARAMETER, _keyed_payload(f"int32_t {key}", struct.pack("<i", value)))
        else:
            # doubles, not the controller's float32, so fixtures round-trip exactly
            _emit(out, MSG_PARAMETER, _keyed_payload(f"double {key}", struct.pack("<d", value)))

    for msg_id, (topic, fields, _rows) in enumerate(topics):
        spec = "".join(
            f"double[{count}] {name};" if count > 1 else f"double {name};"
            for name, count in fields
        )
        _emit(out, MSG_FORMAT, f"{topic}:uint64_t timestamp;{spec}".encode("ascii"))
    for msg_id, (topic, _fields, _rows) in enumerate(topics):
        _emit(out, MSG_ADD_SUBSCRIPTION,
              struct.pack("<BH", 0, msg_id) + topic.encode("ascii"))

    for msg_id, (_topic, fields, rows) in enumerate(topics):
        n_values = sum(count for _name, count in fields)
        layout = struct.Struct(f"<Q{n_values}d")
        for timestamp, values in rows:
            _emit(out, MSG_DATA,
                  struct.pack("<H", msg_id) + layout.pack(timestamp, *values))

    for msg in log.messages:
        _emit(out, MSG_LOGGED_STRING,
              struct.pack("<BQ", msg.level, msg.timestamp) + msg.text.encode("utf-8"))
    return bytes(out)


def _emit(out: bytearray, mtype: int, payload: bytes) -> None:
    if len(payload) > 0xFFFF:
        raise ValueError("message payload exceeds the u16 size field")
    out += struct.pack("<HB", len(payload), mtype)
    out += payload


def _keyed_payload(key: str, value: bytes) -> bytes:
    raw_key = key.encode("ascii")
    if len(raw_key) > 0xFF:
        raise ValueError("keyed message key too long")
    return bytes([len(raw_key)]) + raw_key + value


def _group_topics(
    log: FlightLog,
) -> list[tuple[str, list[tuple[str, int]], list[tuple[int, list[float]]]]]:
    """Group series into (topic, fields, data rows) write units."""
    by_topic: dict[str, dict[str, dict[int | None, TimeSeries]]] = {}
    topic_order: list[str] = []
    for name, ts in log.series.items():
        m = _SERIES_NAME_RE.match(name)
        if not m:
            raise ValueError(
                f"series {name!r} is not writeable: expected <topic>.<field> "
                "with an optional [index] suffix"
            )
        topic, fname = m["base"].split(".", 1)
        index = int(m["index"]) if m["index"] is not None else None
        if topic not in by_topic:
            by_topic[topic] = {}
            topic_order.append(topic)
        by_topic[topic].setdefault(fname, {})[index] = ts

    result = []
    for topic in topic_order:
        fields: list[tuple[str, int]] = []
        columns: list[TimeSeries] = []
        for fname, variants in by_topic[topic].items():
            if None in variants:
                if len(variants) > 1:
                    raise ValueError(f"field {topic}.{fname} mixes scalar and array forms")
                fields.append((fname, 1))
                columns.append(variants[None])
            else:
                n = len(variants)
                if sorted(variants) != list(range(n)):
                    raise ValueError(
                        f"array field {topic}.{fname} must cover indexes 0..{n - 1}"
                    )
                fields.append((fname, n))
                columns.extend(variants[i] for i in range(n))
        base = columns[0].timestamps
        for col in columns[1:]:
            if col.timestamps != base:
                raise ValueError(
                    f"series under topic {topic!r} must share one timestamp vector"
                )
        rows = [
            (t, [col.values[i] for col in columns]) for i, t in enumerate(base)
        ]
        result.append((topic, fields, rows))
    return result


# CSV fallback

def parse_csv(data: bytes) -> FlightLog:
    """Parse a "timestamp_us,<p1>,<p2>,..." CSV export into a flight log.

    Empty cells are omitted from that parameter's series; "NaN" cells are
    kept as NaN values.
    """
    text = data.decode("utf-8-sig", errors="replace")
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines or not lines[0].split(",")[0].strip() == "timestamp_us":
        raise MissingHeader('CSV header must start with "timestamp_us"')
    columns = [c.strip() for c in lines[0].split(",")]
    if len(columns) < 2:
        raise MissingHeader("CSV header defines no parameter columns")
    rows = lines[1:]
    if not rows:
        raise NoDataRows("CSV has no data rows")

    series: dict[str, TimeSeries] = {
        name: TimeSeries([], []) for name in columns[1:]
    }
    last_ts: int | None = None
    for lineno, row in enumerate(rows, start=2):
        cells = row.split(",")
        try:
            timestamp = int(cells[0])
        except ValueError as exc:
            raise NonMonotonicTimestamps(
                f"line {lineno}: bad timestamp {cells[0]!r}"
            ) from exc
        if last_ts is not None and timestamp <= last_ts:
            raise NonMonotonicTimestamps(
                f"line {lineno}: timestamp {timestamp} after {last_ts}"
            )
        last_ts = timestamp
        for name, cell in zip(columns[1:], cells[1:]):
            cell = cell.strip()
            if not cell:
                continue
            value = float(cell)
            series[name].timestamps.append(timestamp)
            series[name].values.append(value)

    series = {name: ts for name, ts in series.items() if len(ts)}
    if not series:
        raise NoDataRows("CSV rows contain no values")
    start = min(ts.timestamps[0] for ts in series.values())
    return FlightLog(start_time=start, series=series, source_format="csv")


def find_series(log: FlightLog, parameter: str) -> tuple[str, TimeSeries] | None:
    """Locate a series by exact name or by its field suffix.

    "baro_alt_meter" matches "vehicle_air_data.baro_alt_meter"; indexed
    names match their own suffix form.
    """
    if parameter in log.series:
        return parameter, log.series[parameter]
    suffix = "." + parameter
    for name, ts in log.series.items():
        if name.endswith(suffix):
            return name, ts
    return None


def find_series_group(log: FlightLog, prefix: str) -> list[tuple[str, TimeSeries]]:
    """All series whose field name is ``prefix`` or ``prefix[i]``."""
    out = []
    for name, ts in log.series.items():
        fname = name.rsplit(".", 1)[-1]
        base = fname.split("[", 1)[0]
        if base == prefix:
            out.append((name, ts))
    return out
