"""Deterministic sensor-failure detectors over parsed flight logs.

These heuristics are the testable counterpart to the vision-model
narrative: they always run, they are pure functions of (log, config), and
each of the seven monitored sensors gets exactly one verdict. Thresholds
are config, not code, so teams can tune them per airframe.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .flightlog import FlightLog, find_series, find_series_group

SENSORS = ("gps", "accelerometer", "gyro", "magnetometer", "battery", "barometer", "airspeed")


@dataclass(frozen=True)
class Evidence:
    parameter: str
    timestamp_us: int | None
    description: str

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "timestamp_us": self.timestamp_us,
            "description": self.description,
        }


@dataclass(frozen=True)
class SensorVerdict:
    sensor: str
    failed: bool
    evidence: tuple[Evidence, ...]

    def __post_init__(self) -> None:
        if self.failed and not self.evidence:
            raise ValueError("a failed verdict requires evidence")

    def to_dict(self) -> dict:
        return {
            "sensor": self.sensor,
            "failed": self.failed,
            "evidence": [e.to_dict() for e in self.evidence],
        }


@dataclass(frozen=True)
class DetectorConfig:
    """Thresholds and the parameter names each detector looks for.

    Parameter names match a series either exactly or as the field part of
    a <topic>.<field> name.
    """

    baro_step_m: float = 10.0
    gps_min_satellites: float = 6.0
    gps_low_sat_consecutive: int = 3
    gps_jump_m: float = 50.0
    battery_low_remaining: float = 0.15
    accel_std_limit: float = 15.0
    accel_window: int = 20
    gyro_spike_rad_s: float = 6.0
    gyro_spike_max_run: int = 5
    yaw_std_limit_rad: float = 1.5
    yaw_window: int = 20
    level_attitude_rad: float = 0.3

    baro_param: str = "baro_alt_meter"
    gps_sat_param: str = "satellites_used"
    gps_lat_param: str = "lat"
    gps_lon_param: str = "lon"
    battery_param: str = "remaining"
    accel_fault_param: str = "accel_fault_detected"
    accel_prefix: str = "accel"
    gyro_prefix: str = "gyro"
    mag_fault_param: str = "mag_fault_detected"
    yaw_param: str = "yaw"
    roll_param: str = "roll"
    pitch_param: str = "pitch"
    airspeed_param: str = "indicated_airspeed"

    def __post_init__(self) -> None:
        for name in (
            "baro_step_m", "gps_min_satellites", "gps_jump_m",
            "battery_low_remaining", "accel_std_limit", "gyro_spike_rad_s",
            "yaw_std_limit_rad",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_file(cls, path: str | Path) -> "DetectorConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown detector config keys: {sorted(unknown)}")
        return cls(**data)


def _no_data(sensor: str, parameter: str) -> SensorVerdict:
    return SensorVerdict(
        sensor, False, (Evidence(parameter, None, "no data"),)
    )


def _rolling_std(values: np.ndarray, window: int) -> np.ndarray:
    if len(values) < window:
        return np.zeros(0)
    shape = (len(values) - window + 1, window)
    strides = (values.strides[0], values.strides[0])
    windows = np.lib.stride_tricks.as_strided(values, shape=shape, strides=strides)
    return windows.std(axis=1)


def detect_sensor_failures(
    log: FlightLog, cfg: DetectorConfig | None = None
) -> list[SensorVerdict]:
    """One verdict per monitored sensor, in a fixed order."""
    cfg = cfg or DetectorConfig()
    return [
        _detect_gps(log, cfg),
        _detect_accelerometer(log, cfg),
        _detect_gyro(log, cfg),
        _detect_magnetometer(log, cfg),
        _detect_battery(log, cfg),
        _detect_barometer(log, cfg),
        _detect_airspeed(log, cfg),
    ]


def _detect_barometer(log: FlightLog, cfg: DetectorConfig) -> SensorVerdict:
    hit = find_series(log, cfg.baro_param)
    if hit is None:
        return _no_data("barometer", cfg.baro_param)
    name, ts = hit
    evidence = []
    for i in range(1, len(ts)):
        step = ts.values[i] - ts.values[i - 1]
        if math.isnan(step):
            continue
        if abs(step) > cfg.baro_step_m:
            evidence.append(
                Evidence(name, ts.timestamps[i],
                         f"altitude step of {step:+.1f} m between consecutive samples")
            )
    return SensorVerdict("barometer", bool(evidence), tuple(evidence))


def _detect_gps(log: FlightLog, cfg: DetectorConfig) -> SensorVerdict:
    sat_hit = find_series(log, cfg.gps_sat_param)
    lat_hit = find_series(log, cfg.gps_lat_param)
    lon_hit = find_series(log, cfg.gps_lon_param)
    if sat_hit is None and (lat_hit is None or lon_hit is None):
        return _no_data("gps", cfg.gps_sat_param)
    evidence = []
    if sat_hit is not None:
        name, ts = sat_hit
        run = 0
        for i, value in enumerate(ts.values):
            run = run + 1 if value < cfg.gps_min_satellites else 0
            if run == cfg.gps_low_sat_consecutive:
                evidence.append(
                    Evidence(name, ts.timestamps[i],
                             f"satellite count below {cfg.gps_min_satellites:g} for "
                             f"{run} consecutive samples")
                )
    if lat_hit is not None and lon_hit is not None:
        lat_name, lat_ts = lat_hit
        _lon_name, lon_ts = lon_hit
        n = min(len(lat_ts), len(lon_ts))
        for i in range(1, n):
            jump = _ground_distance_m(
                lat_ts.values[i - 1], lon_ts.values[i - 1],
                lat_ts.values[i], lon_ts.values[i],
            )
            if jump > cfg.gps_jump_m:
                evidence.append(
                    Evidence(lat_name, lat_ts.timestamps[i],
                             f"horizontal position jump of {jump:.0f} m between samples")
                )
    return SensorVerdict("gps", bool(evidence), tuple(evidence))


def _ground_distance_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    if any(math.isnan(v) for v in (lat1, lon1, lat2, lon2)):
        return 0.0
    r = 6371000.0
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = math.radians(lat2 - lat1)
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * r * math.asin(min(1.0, math.sqrt(a)))


def _detect_battery(log: FlightLog, cfg: DetectorConfig) -> SensorVerdict:
    evidence = []
    hit = find_series(log, cfg.battery_param)
    for msg in log.messages:
        lowered = msg.text.lower()
        if "failsafe" in lowered and "battery" in lowered:
            evidence.append(Evidence("message", msg.timestamp, msg.text))
    if hit is not None:
        name, ts = hit
        for t, value in zip(ts.timestamps, ts.values):
            if not math.isnan(value) and value < cfg.battery_low_remaining:
                evidence.append(
                    Evidence(name, t, f"remaining capacity {value:.2f} below "
                                      f"{cfg.battery_low_remaining:g}")
                )
                break
    elif not evidence:
        return _no_data("battery", cfg.battery_param)
    return SensorVerdict("battery", bool(evidence), tuple(evidence))


def _detect_accelerometer(log: FlightLog, cfg: DetectorConfig) -> SensorVerdict:
    evidence = []
    fault = find_series(log, cfg.accel_fault_param)
    if fault is not None:
        name, ts = fault
        for t, value in zip(ts.timestamps, ts.values):
            if value > 0:
                evidence.append(Evidence(name, t, "accelerometer fault flag set"))
                break
    axes = find_series_group(log, cfg.accel_prefix)
    if fault is None and not axes:
        return _no_data("accelerometer", cfg.accel_prefix)
    if axes:
        n = min(len(ts) for _name, ts in axes)
        stacked = np.array([ts.values[:n] for _name, ts in axes])
        magnitude = np.sqrt((stacked**2).sum(axis=0))
        stds = _rolling_std(magnitude, cfg.accel_window)
        over = np.nonzero(stds > cfg.accel_std_limit)[0]
        if over.size:
            i = int(over[0]) + cfg.accel_window - 1
            evidence.append(
                Evidence(axes[0][0], axes[0][1].timestamps[i],
                         f"acceleration magnitude std {stds[int(over[0])]:.1f} m/s^2 "
                         f"over window of {cfg.accel_window}")
            )
    return SensorVerdict("accelerometer", bool(evidence), tuple(evidence))


def _detect_gyro(log: FlightLog, cfg: DetectorConfig) -> SensorVerdict:
    axes = find_series_group(log, cfg.gyro_prefix)
    if not axes:
        return _no_data("gyro", cfg.gyro_prefix)
    evidence = []
    for name, ts in axes:
        run_start = None
        run_len = 0
        for i, value in enumerate(list(ts.values) + [0.0]):  # sentinel closes runs
            if not math.isnan(value) and abs(value) > cfg.gyro_spike_rad_s:
                if run_start is None:
                    run_start = i
                run_len += 1
            else:
                if run_start is not None and run_len < cfg.gyro_spike_max_run:
                    evidence.append(
                        Evidence(name, ts.timestamps[run_start],
                                 f"rate spike over {cfg.gyro_spike_rad_s:g} rad/s "
                                 f"lasting {run_len} sample(s)")
                    )
                run_start, run_len = None, 0
    return SensorVerdict("gyro", bool(evidence), tuple(evidence))


def _detect_magnetometer(log: FlightLog, cfg: DetectorConfig) -> SensorVerdict:
    evidence = []
    fault = find_series(log, cfg.mag_fault_param)
    yaw = find_series(log, cfg.yaw_param)
    if fault is None and yaw is None:
        return _no_data("magnetometer", cfg.mag_fault_param)
    if fault is not None:
        name, ts = fault
        for t, value in zip(ts.timestamps, ts.values):
            if value > 0:
                evidence.append(Evidence(name, t, "magnetometer fault flag set"))
                break
    if yaw is not None and not evidence:
        name, ts = yaw
        if _is_level(log, cfg):
            stds = _rolling_std(np.asarray(ts.values, dtype=float), cfg.yaw_window)
            over = np.nonzero(stds > cfg.yaw_std_limit_rad)[0]
            if over.size:
                i = int(over[0]) + cfg.yaw_window - 1
                evidence.append(
                    Evidence(name, ts.timestamps[i],
                             f"heading std {stds[int(over[0])]:.2f} rad during level flight")
                )
    return SensorVerdict("magnetometer", bool(evidence), tuple(evidence))


def _is_level(log: FlightLog, cfg: DetectorConfig) -> bool:
    """Level flight when roll/pitch stay small; absent series count as level."""
    for param in (cfg.roll_param, cfg.pitch_param):
        hit = find_series(log, param)
        if hit is None:
            continue
        _name, ts = hit
        values = [v for v in ts.values if not math.isnan(v)]
        if values and max(abs(v) for v in values) > cfg.level_attitude_rad:
            return False
    return True


def _detect_airspeed(log: FlightLog, cfg: DetectorConfig) -> SensorVerdict:
    evidence = []
    for msg in log.messages:
        if "airspeed" in msg.text.lower():
            evidence.append(Evidence("message", msg.timestamp, msg.text))
    hit = find_series(log, cfg.airspeed_param)
    if hit is None and not evidence:
        return _no_data("airspeed", cfg.airspeed_param)
    if hit is not None:
        name, ts = hit
        for t, value in zip(ts.timestamps, ts.values):
            if math.isnan(value):
                evidence.append(Evidence(name, t, "indicated airspeed is NaN"))
                break
            if value < 0:
                evidence.append(Evidence(name, t, f"indicated airspeed negative ({value:.1f})"))
                break
    return SensorVerdict("airspeed", bool(evidence), tuple(evidence))
