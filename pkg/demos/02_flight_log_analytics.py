"""Phase 3 walkthrough: parse a flight log, detect failures, plot, narrate.

Builds a synthetic log with an injected barometer step, writes real binary
log bytes, parses them back, and runs both the deterministic detectors and
the full analysis flow with a scripted vision backend.
"""
import math
from pathlib import Path

from astkit.analytics import AnalysisRequest, analyze, render_report_markdown
from astkit.detectors import detect_sensor_failures
from astkit.flightlog import FlightLog, TimeSeries, parse_ulog, write_ulog
from astkit.gateway import BackendConfig, Gateway, ScriptedResponses
from astkit.knowledge import build_index, param_chunks, parse_msg_definitions
from astkit.config import data_path

out = Path("demo_workspace/analytics-demo")
out.mkdir(parents=True, exist_ok=True)

print("=== build a 5-minute log with a +25 m barometer step at t=150 s ===")
hz, seconds = 5, 300
n = hz * seconds
stamps = [i * 1_000_000 // hz for i in range(n)]
baro = [100 + 0.3 * math.sin(i / 9.0) + (25.0 if i >= 150 * hz else 0.0)
        for i in range(n)]
log = FlightLog(
    start_time=0,
    series={
        "vehicle_air_data.baro_alt_meter": TimeSeries(stamps, baro),
        "vehicle_gps_position.satellites_used": TimeSeries(stamps, [12.0] * n),
        "vehicle_attitude.roll": TimeSeries(stamps, [0.04 * math.sin(i / 7.0) for i in range(n)]),
    },
)
raw = write_ulog(log)
(out / "flight.ulg").write_bytes(raw)
parsed = parse_ulog(raw)
print(f"wrote and re-parsed {len(raw)} bytes, {len(parsed.series)} series")

print("\n=== deterministic sensor verdicts ===")
for verdict in detect_sensor_failures(parsed):
    marker = "FAIL" if verdict.failed else "ok  "
    print(f"  [{marker}] {verdict.sensor}: {verdict.evidence[0].description if verdict.evidence else ''}")

print("\n=== full analysis with a scripted vision backend ===")
docs = parse_msg_definitions(sorted(data_path("msg").glob("*.msg")))
param_index = build_index(param_chunks(docs))
vision = Gateway(
    BackendConfig(kind="scripted"),
    ScriptedResponses(entries=(
        ("baro_alt_meter",
         "The sudden spike in altitude readings at around 150 seconds in the "
         "baro alt meter plot could be due to a sensor error."),
    ), default_response="No anomalies visible."),
)
report = analyze(
    AnalysisRequest(mode="interactive",
                    goals=("Did the barometric altitude behave?",),
                    log_ref="demo"),
    parsed, param_index, vision, plot_dir=out / "plots",
)
print(report.narrative)
(out / "report.md").write_text(render_report_markdown(report), encoding="utf-8")
print(f"\nmarkdown report: {out / 'report.md'}")
print(f"plots: {report.plots}")
