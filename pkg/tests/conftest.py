"""Shared fixtures: scripted gateways, stub HTTP backends, synthetic logs."""
from __future__ import annotations

import json
import math
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from astkit.flightlog import FlightLog, LoggedMessage, TimeSeries
from astkit.gateway import BackendConfig, Gateway, ScriptedResponses


def scripted_gateway(entries: list[tuple[str, str]], default: str = "") -> Gateway:
    return Gateway(
        BackendConfig(kind="scripted"),
        ScriptedResponses(entries=tuple(entries), default_response=default),
    )


class StubBackend:
    """Local chat-completions stub that records every request.

    Behavior is driven by a list of (status, body) steps; the last step
    repeats once the list is exhausted.
    """

    def __init__(self, steps: list[tuple[int, str]]):
        self.steps = steps
        self.requests: list[dict] = []
        self.concurrent = 0
        self.max_concurrent = 0
        self.hold_seconds = 0.0
        self._lock = threading.Lock()
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # noqa: D102
                pass

            def do_POST(self):  # noqa: N802
                import time

                with stub._lock:
                    stub.concurrent += 1
                    stub.max_concurrent = max(stub.max_concurrent, stub.concurrent)
                try:
                    length = int(self.headers.get("Content-Length", 0))
                    payload = json.loads(self.rfile.read(length) or b"{}")
                    with stub._lock:
                        stub.requests.append(payload)
                        index = min(len(stub.requests) - 1, len(stub.steps) - 1)
                    if stub.hold_seconds:
                        time.sleep(stub.hold_seconds)
                    status, body = stub.steps[index]
                    if body == "@echo-image-count":
                        count = _count_images(payload)
                        body = json.dumps(
                            {"choices": [{"message": {"content": f"images={count}"}}]}
                        )
                    raw = body.encode("utf-8")
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(raw)))
                    self.end_headers()
                    self.wfile.write(raw)
                finally:
                    with stub._lock:
                        stub.concurrent -= 1

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def base_url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def close(self) -> None:
        self.server.shutdown()
        self.server.server_close()


def _count_images(payload: dict) -> int:
    count = 0
    for message in payload.get("messages", []):
        content = message.get("content")
        if isinstance(content, list):
            count += sum(1 for part in content if part.get("type") == "image_url")
    return count


def ok_response(text: str) -> tuple[int, str]:
    return 200, json.dumps({"choices": [{"message": {"content": text}}]})


@pytest.fixture
def stub_backend_factory():
    stubs: list[StubBackend] = []

    def make(steps: list[tuple[int, str]]) -> StubBackend:
        stub = StubBackend(steps)
        stubs.append(stub)
        return stub

    yield make
    for stub in stubs:
        stub.close()


# Synthetic flight logs

HZ = 5
DURATION_S = 240


def series(values: list[float], dt_us: int = 1_000_000 // HZ, t0: int = 0) -> TimeSeries:
    return TimeSeries([t0 + i * dt_us for i in range(len(values))], list(values))


def _base_signals(n: int) -> dict[str, list[float]]:
    return {
        "vehicle_air_data.baro_alt_meter": [100.0 + 0.2 * math.sin(i / 11.0) for i in range(n)],
        "vehicle_gps_position.satellites_used": [12.0] * n,
        "vehicle_gps_position.lat": [47.64 + 1e-6 * i for i in range(n)],
        "vehicle_gps_position.lon": [-122.14 + 1e-6 * i for i in range(n)],
        "battery_status.remaining": [0.9 - 0.0005 * i for i in range(n)],
        "estimator_status.accel_fault_detected": [0.0] * n,
        "estimator_status.mag_fault_detected": [0.0] * n,
        "sensor_combined.accel[0]": [0.1 * math.sin(i / 5.0) for i in range(n)],
        "sensor_combined.accel[1]": [0.1 * math.cos(i / 5.0) for i in range(n)],
        "sensor_combined.accel[2]": [9.81 + 0.05 * math.sin(i / 3.0) for i in range(n)],
        "sensor_combined.gyro[0]": [0.02 * math.sin(i / 4.0) for i in range(n)],
        "sensor_combined.gyro[1]": [0.02 * math.cos(i / 4.0) for i in range(n)],
        "sensor_combined.gyro[2]": [0.01] * n,
        "vehicle_attitude.roll": [0.05 * math.sin(i / 9.0) for i in range(n)],
        "vehicle_attitude.pitch": [0.04 * math.cos(i / 9.0) for i in range(n)],
        "vehicle_attitude.yaw": [1.0 + 0.02 * math.sin(i / 20.0) for i in range(n)],
        "airspeed.indicated_airspeed": [12.0 + 0.3 * math.sin(i / 8.0) for i in range(n)],
    }


def clean_log(n: int = HZ * DURATION_S) -> FlightLog:
    signals = _base_signals(n)
    log = FlightLog(
        start_time=1_700_000_000_000_000,
        series={name: series(values) for name, values in signals.items()},
        messages=[LoggedMessage(5_000_000, 6, "Mission started")],
        source_format="ulog",
    )
    log.validate()
    return log


def failure_log(sensor: str, n: int = HZ * DURATION_S) -> FlightLog:
    """Clean log with exactly one injected failure for the named sensor."""
    signals = _base_signals(n)
    messages = [LoggedMessage(5_000_000, 6, "Mission started")]
    half = n // 2
    if sensor == "barometer":
        # +25 m step at the 150 s mark (sample index 150*HZ)
        step_at = 150 * HZ
        for i in range(step_at, n):
            signals["vehicle_air_data.baro_alt_meter"][i] += 25.0
    elif sensor == "gps":
        for i in range(half, half + 10):
            signals["vehicle_gps_position.satellites_used"][i] = 3.0
    elif sensor == "battery":
        messages.append(LoggedMessage(120_000_000, 3, "FAILSAFE: low battery"))
        for i in range(half, n):
            signals["battery_status.remaining"][i] = 0.08
    elif sensor == "accelerometer":
        signals["estimator_status.accel_fault_detected"][half] = 1.0
    elif sensor == "gyro":
        for i in range(half, half + 3):
            signals["sensor_combined.gyro[0]"][i] = 9.0
    elif sensor == "magnetometer":
        signals["estimator_status.mag_fault_detected"][half] = 1.0
    elif sensor == "airspeed":
        for i in range(half, n):
            signals["airspeed.indicated_airspeed"][i] = -2.0
    else:
        raise ValueError(f"unknown sensor {sensor!r}")
    log = FlightLog(
        start_time=1_700_000_000_000_000,
        series={name: series(values) for name, values in signals.items()},
        messages=messages,
        source_format="ulog",
    )
    log.validate()
    return log
