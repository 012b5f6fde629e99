"""Run state machine, persistence, and the CLI wrapper."""
from __future__ import annotations

import json

import pytest

from astkit import cli
from astkit.config import load_config
from astkit.errors import BadMagic, UnknownLog, WrongStage
from astkit.flightlog import write_ulog
from astkit.orchestrator import ARTIFACT_SET, Orchestrator, RunManifest, new_ulid
from astkit.scenario import FeedbackNote

from conftest import failure_log


@pytest.fixture
def orc(tmp_path) -> Orchestrator:
    return Orchestrator(load_config(mock=True, workspace=tmp_path / "ws"))


def test_ulids_sort_by_time_and_are_unique():
    a = new_ulid(now_ms=1_000)
    b = new_ulid(now_ms=2_000)
    assert len(a) == len(b) == 26
    assert a < b
    assert len({new_ulid() for _ in range(200)}) == 200


def test_start_run_reaches_awaiting_approval(orc):
    manifest = orc.start_run("city surveillance")
    assert manifest.stage == "awaiting_approval"
    run_dir = orc.runs_dir / manifest.run_id
    assert (run_dir / "blueprint.json").exists()
    assert (run_dir / "blueprint.raw.txt").exists()
    stages = [h["stage"] for h in manifest.history]
    assert stages == ["blueprint_drafted", "awaiting_approval"]


def test_start_run_rejects_empty_goal(orc):
    with pytest.raises(ValueError):
        orc.start_run("   ")


def test_backend_failure_marks_run_failed(tmp_path):
    config = load_config(mock=True, workspace=tmp_path / "ws")
    orc = Orchestrator(config)

    class Down:
        def complete(self, messages):
            from astkit.errors import BackendUnavailable

            raise BackendUnavailable("offline")

    orc.gateway = Down()
    manifest = orc.start_run("city surveillance")
    assert manifest.stage == "failed"
    assert "BackendUnavailable" in manifest.error


def test_approve_generates_and_validates_scripts(orc):
    run_id = orc.start_run("city surveillance").run_id
    manifest = orc.approve(run_id)
    assert manifest.stage == "scripts_validated"
    run_dir = orc.runs_dir / run_id
    plan = json.loads((run_dir / "mission.plan.json").read_text())
    assert set(plan["mission"]) == {"cruiseSpeed", "hoverSpeed", "items",
                                    "plannedHomePosition"}
    validation = json.loads((run_dir / "validation.json").read_text())
    assert validation["mission"]["ok"] and validation["sim_settings"]["ok"]


def test_approve_twice_is_wrong_stage(orc):
    run_id = orc.start_run("city surveillance").run_id
    orc.approve(run_id)
    with pytest.raises(WrongStage):
        orc.approve(run_id)


def test_feedback_increments_revision_and_stays_gated(orc):
    run_id = orc.start_run("city surveillance").run_id
    note = FeedbackNote(author="dev", text="add lighting variability",
                        target_section="environment")
    manifest = orc.submit_feedback(run_id, note)
    assert manifest.stage == "awaiting_approval"
    assert manifest.revision_count == 1
    blueprint = orc.load_blueprint(run_id)
    assert blueprint.revision == 1
    manifest = orc.approve(run_id)
    assert manifest.stage == "scripts_validated"


def test_feedback_after_approval_is_wrong_stage(orc):
    run_id = orc.start_run("city surveillance").run_id
    orc.approve(run_id)
    with pytest.raises(WrongStage):
        orc.submit_feedback(run_id, FeedbackNote("d", "more complexity"))


def test_full_mock_run_produces_artifact_set(orc):
    run_id = orc.start_run("city surveillance").run_id
    orc.approve(run_id)
    manifest = orc.ingest_flight_log(run_id, write_ulog(failure_log("barometer")))
    assert manifest.stage == "evaluated"
    assert set(manifest.artifact_paths) == set(ARTIFACT_SET)
    run_dir = orc.runs_dir / run_id
    for name in ARTIFACT_SET:
        assert (run_dir / name).exists(), name
    report = json.loads((run_dir / "analysis" / "report.json").read_text())
    flagged = [v["sensor"] for v in report["detector_verdicts"] if v["failed"]]
    assert flagged == ["barometer"]


def test_ingest_corrupt_bytes_leaves_stage(orc):
    run_id = orc.start_run("city surveillance").run_id
    orc.approve(run_id)
    with pytest.raises(BadMagic):
        orc.ingest_flight_log(run_id, b"\x55garbage", fmt="ulog")
    assert orc.load_manifest(run_id).stage == "scripts_validated"


def test_ingest_accepts_csv(orc):
    run_id = orc.start_run("city surveillance").run_id
    orc.approve(run_id)
    csv = b"timestamp_us,vehicle_air_data.baro_alt_meter\n0,100.0\n1000000,101.0\n"
    manifest = orc.ingest_flight_log(run_id, csv)
    assert manifest.stage == "evaluated"


def test_await_log_stage(orc):
    run_id = orc.start_run("city surveillance").run_id
    orc.approve(run_id)
    assert orc.await_log(run_id).stage == "awaiting_log"
    manifest = orc.ingest_flight_log(run_id, write_ulog(failure_log("gps")))
    assert manifest.stage == "evaluated"


def test_manifest_round_trip(orc):
    run_id = orc.start_run("city surveillance").run_id
    manifest = orc.load_manifest(run_id)
    clone = RunManifest.from_dict(json.loads(json.dumps(manifest.to_dict())))
    assert clone.to_dict() == manifest.to_dict()


def test_history_is_append_only(orc):
    run_id = orc.start_run("city surveillance").run_id
    before = orc.load_manifest(run_id).history
    orc.approve(run_id)
    after = orc.load_manifest(run_id).history
    assert after[: len(before)] == before
    assert len(after) > len(before)


def test_query_analytics_selects_satellite_parameters(orc):
    run_id = orc.start_run("city surveillance").run_id
    orc.approve(run_id)
    orc.ingest_flight_log(run_id, write_ulog(failure_log("gps")))
    report = orc.query_analytics(run_id, "Was the satellite count low?")
    names = [doc.name for doc, _score in report.selected_params]
    assert "satellites_used" in names
    assert report.plots  # at least one plot rendered and persisted
    session = orc.analytics_dir / run_id
    assert (session / "001.json").exists()
    orc.query_analytics(run_id, "Was the satellite count low?")
    assert (session / "002.json").exists()


def test_query_analytics_unknown_log(orc):
    with pytest.raises(UnknownLog):
        orc.query_analytics("nope", "anything?")


def test_query_analytics_empty_question(orc):
    with pytest.raises(ValueError):
        orc.query_analytics("nope", "  ")


def test_eval_report_written(orc):
    run_id = orc.start_run("city surveillance").run_id
    orc.approve(run_id)
    orc.ingest_flight_log(run_id, write_ulog(failure_log("barometer")))
    payload = json.loads((orc.runs_dir / run_id / "eval.json").read_text())
    assert payload["mode"] == "fixture"
    assert 0.0 <= payload["faithfulness"] <= 1.0
    assert 0.0 <= payload["response_relevancy"] <= 1.0
    assert payload["context_precision"] is None  # no labels file configured
    assert any("labels" in flag for flag in payload["flags"])


def test_eval_uses_labels_when_configured(tmp_path):
    from astkit.config import data_path

    goal = "city surveillance"
    # label two of the demo incidents as the relevant set for this goal
    labels = {goal: ["regulator-reports/incident-001", "news-archive/incident-101"]}
    labels_path = tmp_path / "labels.json"
    labels_path.write_text(json.dumps(labels), encoding="utf-8")
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({
        "mock": True,
        "workspace": str(tmp_path / "ws"),
        "labels_path": str(labels_path),
        "corpus_dir": str(data_path("demo_corpus")),
        "param_msg_dir": str(data_path("msg")),
    }), encoding="utf-8")
    orc = Orchestrator(load_config(config_path))
    run_id = orc.start_run(goal).run_id
    report = orc.evaluate_run(run_id)
    assert report.context_precision is not None
    assert report.context_recall is not None
    blueprint = orc.load_blueprint(run_id)
    relevant = set(labels[goal])
    expected_precision = sum(1 for c in blueprint.provenance if c in relevant) / len(
        blueprint.provenance
    )
    assert report.context_precision == pytest.approx(expected_precision)


def test_distinct_runs_advance_concurrently(orc):
    import threading

    ids = [orc.start_run("city surveillance").run_id for _ in range(3)]
    threads = [threading.Thread(target=orc.approve, args=(rid,)) for rid in ids]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert {orc.load_manifest(rid).stage for rid in ids} == {"scripts_validated"}


def test_same_run_transitions_serialized(orc):
    import threading

    run_id = orc.start_run("city surveillance").run_id
    outcomes: list[str] = []

    def racer():
        try:
            orc.approve(run_id)
            outcomes.append("approved")
        except WrongStage:
            outcomes.append("wrong_stage")

    threads = [threading.Thread(target=racer) for _ in range(2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(outcomes) == ["approved", "wrong_stage"]
    assert orc.load_manifest(run_id).stage == "scripts_validated"


def test_artifact_path_escapes_rejected(orc):
    run_id = orc.start_run("city surveillance").run_id
    with pytest.raises(ValueError):
        orc.artifact_path(run_id, "../../../etc/passwd")


# CLI


def run_cli(*argv: str) -> int:
    return cli.main(list(argv))


def test_cli_full_flow(tmp_path, capsys):
    ws = str(tmp_path / "ws")
    assert run_cli("--mock", "--workspace", ws, "run", "--goal", "city surveillance") == 0
    run_id = json.loads(capsys.readouterr().out)["run_id"]
    assert run_cli("--mock", "--workspace", ws, "feedback", run_id,
                   "--text", "increase the mission complexity",
                   "--section", "test_properties") == 0
    capsys.readouterr()
    assert run_cli("--mock", "--workspace", ws, "approve", run_id) == 0
    capsys.readouterr()
    log_file = tmp_path / "flight.ulg"
    log_file.write_bytes(write_ulog(failure_log("barometer")))
    assert run_cli("--mock", "--workspace", ws, "ingest-log", run_id, str(log_file)) == 0
    manifest = json.loads(capsys.readouterr().out)
    assert manifest["stage"] == "evaluated"
    assert run_cli("--mock", "--workspace", ws, "analyze", run_id,
                   "--question", "Was the satellite count low?") == 0
    capsys.readouterr()
    assert run_cli("--mock", "--workspace", ws, "eval", run_id) == 0


def test_cli_bad_input_exit_code(tmp_path, capsys):
    ws = str(tmp_path / "ws")
    assert run_cli("--mock", "--workspace", ws, "approve", "missing-run") == 4
    capsys.readouterr()


def test_cli_wrong_stage_exit_code(tmp_path, capsys):
    ws = str(tmp_path / "ws")
    run_cli("--mock", "--workspace", ws, "run", "--goal", "g")
    run_id = json.loads(capsys.readouterr().out)["run_id"]
    run_cli("--mock", "--workspace", ws, "approve", run_id)
    capsys.readouterr()
    assert run_cli("--mock", "--workspace", ws, "approve", run_id) == 4


def test_cli_validation_failure_exit_code(tmp_path, capsys):
    # a scripted pack whose mission script always violates the altitude rule
    from astkit.config import data_path

    bad_mission = json.dumps({
        "mission": {
            "cruiseSpeed": 12, "hoverSpeed": 5,
            "items": [{"Altitude": 500, "AltitudeMode": 1, "autoContinue": True,
                       "command": 22, "frame": 3,
                       "params": [0, 0, 0, None, 40.7, -74.0, 500],
                       "type": "SimpleItem"}],
            "plannedHomePosition": [40.7, -74.0, 10],
        }
    })
    good_settings = json.dumps({
        "SimulatorSettings": {"Weather": {"RainIntensity": 0, "WindSpeed": 5,
                                          "WindDirection": 0, "Visibility": 1}},
        "Vehicles": {"D1": {"VehicleType": "Quadrotor",
                            "Pose": {"X": 0, "Y": 0, "Z": 0, "Roll": 0, "Pitch": 0,
                                     "Yaw": 0},
                            "HomeLocation": {"Latitude": 40.7, "Longitude": -74.0,
                                             "Altitude": 10}}},
    })
    pack = [
        {"match": "Test Engineer", "response": json.dumps({
            "environment": {"location": "X", "narrative": "windy"},
            "mission": "patrol", "test_properties": ["stability"],
        })},
        {"match": "mission script", "response": bad_mission},
        {"match": "sim tool script", "response": good_settings},
        {"default": "OK"},
    ]
    pack_path = tmp_path / "pack.json"
    pack_path.write_text(json.dumps(pack), encoding="utf-8")
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({
        "mock": True,
        "workspace": str(tmp_path / "ws"),
        "scripted_responses_path": str(pack_path),
        "corpus_dir": str(data_path("demo_corpus")),
        "param_msg_dir": str(data_path("msg")),
    }), encoding="utf-8")
    assert run_cli("--config", str(config_path), "run", "--goal", "g") == 0
    run_id = json.loads(capsys.readouterr().out)["run_id"]
    assert run_cli("--config", str(config_path), "approve", run_id) == 2
    manifest = json.loads(capsys.readouterr().out)
    assert manifest["stage"] == "failed"


def test_cli_backend_error_exit_code(tmp_path, capsys):
    from astkit.config import data_path

    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({
        "workspace": str(tmp_path / "ws"),
        "text_backend": {"kind": "remote", "base_url": "http://127.0.0.1:9",
                         "max_retries": 0, "timeout": 2},
        "corpus_dir": str(data_path("demo_corpus")),
        "param_msg_dir": str(data_path("msg")),
    }), encoding="utf-8")
    assert run_cli("--config", str(config_path), "run", "--goal", "g") == 3
    out = json.loads(capsys.readouterr().out)
    assert out["stage"] == "failed"
    assert "BackendUnavailable" in out["error"]


def test_cli_ingest_corpus_and_param_kb(tmp_path, capsys):
    ws = str(tmp_path / "ws")
    corpus = tmp_path / "corpus" / "source-a"
    corpus.mkdir(parents=True)
    (corpus / "one.txt").write_text("drone incident in high wind", encoding="utf-8")
    assert run_cli("--workspace", ws, "ingest-corpus", str(tmp_path / "corpus")) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["sources"] == [["source-a", 1, 5]]

    msg_dir = tmp_path / "msg"
    msg_dir.mkdir()
    (msg_dir / "topic.msg").write_text("float32 field_a # a field\n", encoding="utf-8")
    assert run_cli("--workspace", ws, "build-param-kb", str(msg_dir)) == 0
    assert json.loads(capsys.readouterr().out)["parameters"] == 1
