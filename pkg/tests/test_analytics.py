"""Parameter selection and the per-goal analysis flow."""
from __future__ import annotations

import pytest

from astkit.analytics import (
    AnalysisRequest,
    NARRATIVE_UNAVAILABLE,
    analyze,
    render_report_markdown,
    select_parameters,
)
from astkit.errors import BackendUnavailable, EmptyIndex
from astkit.knowledge import ParameterDoc, build_index, embed, param_chunks

from conftest import clean_log, failure_log, scripted_gateway


def kb_docs() -> list[ParameterDoc]:
    rows = [
        ("accel_bias[0]", "estimator_status",
         "accelerometer bias estimate along the first axis"),
        ("accel_fault_detected", "estimator_status",
         "flag set when an accelerometer fault was detected"),
        ("failsafe", "vehicle_status",
         "failsafe flag raised on loss of control or accelerometer issues"),
        ("yawspeed", "vehicle_angular_velocity",
         "yaw angular velocity which reacts to accelerometer disturbances"),
        ("baro_alt_meter", "vehicle_air_data",
         "barometric altitude above mean sea level"),
        ("satellites_used", "vehicle_gps_position",
         "number of satellites used; a low satellite count degrades the fix"),
        ("remaining", "battery_status",
         "remaining battery capacity fraction"),
        ("roll", "vehicle_attitude",
         "roll angle in radians; oscillations show poor flight stability in wind"),
    ]
    return [
        ParameterDoc(name=n, message_type=m, description=d, source_file=f"{m}.msg")
        for n, m, d in rows
    ]


def kb_index():
    return build_index(param_chunks(kb_docs()))


def test_accelerometer_goal_ranks_accel_params_first():
    results = select_parameters("Consistency of Accelerometer Readings", kb_index(), 4)
    names = [doc.name for doc, _score in results]
    assert "baro_alt_meter" not in names
    assert {"accel_bias[0]", "accel_fault_detected"} <= set(names)


def test_goal_equal_to_description_scores_one():
    target = kb_docs()[4]
    results = select_parameters(target.description, kb_index(), 3)
    assert results[0][0].name == target.name
    assert results[0][1] == pytest.approx(1.0, abs=1e-6)


def test_three_doc_fixture_exact_order():
    docs = [
        ParameterDoc("a", "m", "wind speed gust response", "m.msg"),
        ParameterDoc("b", "m", "battery voltage sag", "m.msg"),
        ParameterDoc("c", "m", "gust wind handling speed margin", "m.msg"),
    ]
    index = build_index(param_chunks(docs))
    # independent oracle: plain cosine over the same embeddings
    import numpy as np

    query = "wind gust speed"
    qvec = embed(query)
    scored = sorted(
        ((doc.name, float(np.dot(qvec, embed(doc.description)))) for doc in docs),
        key=lambda pair: -pair[1],
    )
    results = select_parameters(query, index, 3)
    assert [doc.name for doc, _s in results] == [name for name, _s in scored]


def test_select_on_empty_index_raises():
    with pytest.raises(EmptyIndex):
        select_parameters("anything", build_index([]), 3)


# analyze()


def vision_gateway():
    return scripted_gateway(
        [
            ("baro_alt_meter",
             "The sudden spike in altitude readings at around 150 seconds in the "
             "baro alt meter plot could be due to a sensor error."),
            ("satellites_used", "Satellite count stays healthy throughout."),
            ("Data Analyst", "No anomalies for this goal."),
        ],
        default="OK.",
    )


def test_automated_mode_barometer_fixture(tmp_path):
    request = AnalysisRequest(
        mode="automated",
        goals=("barometric altitude above mean sea level",),
        log_ref="fixture-baro",
    )
    report = analyze(request, failure_log("barometer"), kb_index(),
                     vision_gateway(), plot_dir=tmp_path)
    assert "sudden spike in altitude readings" in report.narrative
    verdicts = {v.sensor: v for v in report.detector_verdicts}
    assert verdicts["barometer"].failed
    assert verdicts["barometer"].evidence[0].timestamp_us == 150_000_000
    assert sum(1 for v in report.detector_verdicts if v.failed) == 1
    assert report.plots and all(p.endswith(".png") for p in report.plots)
    assert (tmp_path / "baro_alt_meter.svg").exists()


def test_interactive_satellite_question(tmp_path):
    request = AnalysisRequest(
        mode="interactive",
        goals=("Was the satellite count low?",),
        log_ref="fixture-gps",
    )
    report = analyze(request, clean_log(), kb_index(), vision_gateway(),
                     plot_dir=tmp_path)
    selected_names = [doc.name for doc, _s in report.selected_params]
    assert "satellites_used" in selected_names
    assert (tmp_path / "satellites_used.png").exists()


def test_zero_goals_rejected():
    with pytest.raises(ValueError):
        AnalysisRequest(mode="automated", goals=(), log_ref="x")


def test_interactive_requires_single_goal():
    with pytest.raises(ValueError):
        AnalysisRequest(mode="interactive", goals=("a", "b"), log_ref="x")


def test_goal_without_matching_parameters_is_skipped():
    docs = [ParameterDoc("only_param", "m", "quite unrelated content", "m.msg")]
    index = build_index(param_chunks(docs))
    request = AnalysisRequest(mode="automated", goals=("quite unrelated content",),
                              log_ref="x")
    report = analyze(request, clean_log(), index, vision_gateway())
    assert report.goal_results[0].notice == "no selected parameter is present in the log"
    assert report.plots == []
    assert len(report.detector_verdicts) == 7  # verdicts still computed


def test_backend_down_keeps_verdicts():
    class DownGateway:
        def complete_vision(self, messages):
            raise BackendUnavailable("offline")

    request = AnalysisRequest(
        mode="automated", goals=("barometric altitude above mean sea level",),
        log_ref="x",
    )
    report = analyze(request, failure_log("barometer"), kb_index(), DownGateway())
    assert NARRATIVE_UNAVAILABLE in report.narrative
    assert any(v.failed and v.sensor == "barometer" for v in report.detector_verdicts)


def test_selected_params_capped_by_k():
    request = AnalysisRequest(mode="automated", goals=("flight stability in wind",),
                              log_ref="x", k_params=2)
    report = analyze(request, clean_log(), kb_index(), vision_gateway())
    assert len(report.goal_results[0].selected) <= 2


def test_markdown_report_layout(tmp_path):
    request = AnalysisRequest(
        mode="automated",
        goals=("barometric altitude above mean sea level",),
        log_ref="baro-log",
    )
    report = analyze(request, failure_log("barometer"), kb_index(),
                     vision_gateway(), plot_dir=tmp_path)
    markdown = render_report_markdown(report)
    assert "## barometric altitude above mean sea level" in markdown
    assert "| barometer | yes |" in markdown
    assert "| gps | no |" in markdown
    assert "![baro_alt_meter]" in markdown


def test_report_dict_is_json_ready(tmp_path):
    import json

    request = AnalysisRequest(mode="interactive", goals=("Was the satellite count low?",),
                              log_ref="log-1")
    report = analyze(request, clean_log(), kb_index(), vision_gateway(),
                     plot_dir=tmp_path)
    payload = json.dumps(report.to_dict())
    assert "satellites_used" in payload
