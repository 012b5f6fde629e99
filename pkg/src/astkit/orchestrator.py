"""Pipeline state machine and run persistence.

Every run lives in its own directory under <workspace>/runs/<ulid> as plain
JSON and text files, so state survives restarts and can be inspected with
nothing but a file browser. Transitions of one run are serialized through
a per-run lock; distinct runs advance independently.
"""
from __future__ import annotations

import datetime as dt
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import scriptgen
from .analytics import AnalysisRequest, analyze, render_report_markdown
from .config import PipelineConfig, data_path
from .detectors import DetectorConfig
from .errors import AstkitError, UnknownLog, UnknownRun, WrongStage
from .evaluation import (
    EvalReport,
    RelevanceLabels,
    context_precision,
    context_recall,
    faithfulness,
    response_relevancy,
)
from .flightlog import FlightLog, parse_csv, parse_ulog, ULOG_MAGIC
from .gateway import Gateway, ScriptedResponses
from .knowledge import (
    VectorIndex,
    build_index,
    ingest_corpus,
    load_index,
    load_param_docs,
    param_chunks,
    parse_msg_definitions,
    save_index,
    save_param_docs,
)
from .scenario import FeedbackNote, ScenarioBlueprint, generate_blueprint, refine_blueprint

STAGES = (
    "blueprint_drafted",
    "awaiting_approval",
    "approved",
    "scripts_generated",
    "scripts_validated",
    "awaiting_log",
    "log_ingested",
    "analyzed",
    "evaluated",
    "failed",
)

ARTIFACT_SET = (
    "blueprint.json",
    "mission.plan.json",
    "sim.settings.json",
    "validation.json",
    "analysis/report.json",
    "eval.json",
    "manifest.json",
)

_ULID_ALPHABET = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"  # Crockford base32


def new_ulid(now_ms: int | None = None) -> str:
    """Sortable 26-char ULID: 48-bit ms timestamp + 80 random bits."""
    ts = int(time.time() * 1000) if now_ms is None else now_ms
    value = (ts & (2**48 - 1)) << 80 | int.from_bytes(os.urandom(10), "big")
    chars = []
    for _ in range(26):
        chars.append(_ULID_ALPHABET[value & 0x1F])
        value >>= 5
    return "".join(reversed(chars))


def _utcnow() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat()


@dataclass
class RunManifest:
    run_id: str
    user_goal: str
    stage: str
    artifact_paths: dict[str, str] = field(default_factory=dict)
    revision_count: int = 0
    history: list[dict] = field(default_factory=list)
    config_snapshot: dict = field(default_factory=dict)
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "user_goal": self.user_goal,
            "stage": self.stage,
            "artifact_paths": self.artifact_paths,
            "revision_count": self.revision_count,
            "history": self.history,
            "config_snapshot": self.config_snapshot,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        return cls(**data)


class Orchestrator:
    """Owns the knowledge stores, gateways, and all run state transitions."""

    def __init__(self, config: PipelineConfig):
        self.config = config
        self.workspace = Path(config.workspace)
        self.runs_dir = self.workspace / "runs"
        self.kb_dir = self.workspace / "kb"
        self.analytics_dir = self.workspace / "analytics"
        for directory in (self.runs_dir, self.kb_dir, self.analytics_dir):
            directory.mkdir(parents=True, exist_ok=True)

        scripted = None
        if config.scripted_responses_path is not None:
            scripted = ScriptedResponses.from_file(config.scripted_responses_path)
        self.gateway = Gateway(config.text_backend, scripted)
        self.vision_gateway = Gateway(config.vision_backend, scripted)

        self.mission_ruleset = (
            scriptgen.RuleSet.from_file(config.mission_ruleset_path)
            if config.mission_ruleset_path
            else scriptgen.default_mission_ruleset()
        )
        self.env_ruleset = (
            scriptgen.RuleSet.from_file(config.env_ruleset_path)
            if config.env_ruleset_path
            else scriptgen.default_env_ruleset()
        )
        self.detector_config = (
            DetectorConfig.from_file(config.detector_config_path)
            if config.detector_config_path
            else DetectorConfig()
        )

        self.incident_index = self._load_incident_index()
        self.param_index = self._load_param_index()

        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._registry_lock = threading.Lock()

    # Knowledge store bootstrap

    def _load_incident_index(self) -> VectorIndex | None:
        index_path = self.kb_dir / "incidents.idx"
        if index_path.exists():
            return load_index(index_path)
        if self.config.corpus_dir is not None:
            _manifest, chunks = ingest_corpus(self.config.corpus_dir)
            index = build_index(chunks)
            save_index(index, index_path)
            return index
        return None

    def _load_param_index(self) -> VectorIndex | None:
        docs_path = self.kb_dir / "params.jsonl"
        if docs_path.exists():
            docs = load_param_docs(docs_path)
        elif self.config.param_msg_dir is not None:
            files = sorted(Path(self.config.param_msg_dir).glob("*.msg"))
            docs = parse_msg_definitions(list(files))
            if docs:
                save_param_docs(docs, docs_path)
        else:
            docs = []
        return build_index(param_chunks(docs)) if docs else None

    def ingest_corpus_dir(self, directory: str | Path):
        """(Re)build the incident index from a corpus directory."""
        manifest, chunks = ingest_corpus(directory)
        self.incident_index = build_index(chunks)
        save_index(self.incident_index, self.kb_dir / "incidents.idx")
        (self.kb_dir / "corpus_manifest.json").write_text(
            json.dumps({"sources": [list(row) for row in manifest.sources]}, indent=2),
            encoding="utf-8",
        )
        return manifest

    def build_param_kb(self, msg_dir: str | Path) -> int:
        files = sorted(Path(msg_dir).glob("*.msg"))
        docs = parse_msg_definitions(list(files))
        save_param_docs(docs, self.kb_dir / "params.jsonl")
        self.param_index = build_index(param_chunks(docs)) if docs else None
        return len(docs)

    # Run lifecycle

    def start_run(self, user_goal: str) -> RunManifest:
        if not user_goal.strip():
            raise ValueError("user goal must be non-empty")
        if self.incident_index is None:
            raise ValueError("incident knowledge base not built; ingest a corpus first")
        run_id = new_ulid()
        run_dir = self.runs_dir / run_id
        run_dir.mkdir(parents=True)
        manifest = RunManifest(
            run_id=run_id,
            user_goal=user_goal,
            stage="blueprint_drafted",
            config_snapshot=self.config.snapshot(),
        )
        manifest.history.append({"stage": "blueprint_drafted", "at": _utcnow()})
        self._save_manifest(manifest)
        try:
            blueprint = generate_blueprint(
                user_goal,
                self.config.k_retrieval,
                incident_index=self.incident_index,
                gateway=self.gateway,
            )
        except AstkitError as exc:
            self._fail(manifest, f"{type(exc).__name__}: {exc}")
            return manifest
        self._write_blueprint(manifest, blueprint)
        self._transition(manifest, "awaiting_approval")
        return manifest

    def submit_feedback(self, run_id: str, note: FeedbackNote) -> RunManifest:
        with self._run_lock(run_id):
            manifest = self.load_manifest(run_id)
            self._require_stage(manifest, ("awaiting_approval",))
            blueprint = self.load_blueprint(run_id)
            revised = refine_blueprint(blueprint, note, self.gateway)
            self._transition(manifest, "blueprint_drafted")
            manifest.revision_count += 1
            self._write_blueprint(manifest, revised)
            self._transition(manifest, "awaiting_approval")
            return manifest

    def approve(self, run_id: str) -> RunManifest:
        with self._run_lock(run_id):
            manifest = self.load_manifest(run_id)
            self._require_stage(manifest, ("awaiting_approval",))
            blueprint = self.load_blueprint(run_id)
            self._transition(manifest, "approved")
            run_dir = self.runs_dir / run_id
            try:
                mission, mission_report, _attempts = scriptgen.generate_validated(
                    "mission", blueprint, self.gateway,
                    ruleset=self.mission_ruleset,
                    max_attempts=self.config.max_attempts,
                )
                settings, env_report, _attempts = scriptgen.generate_validated(
                    "env", blueprint, self.gateway,
                    ruleset=self.env_ruleset,
                    max_attempts=self.config.max_attempts,
                )
            except AstkitError as exc:
                self._fail(manifest, f"{type(exc).__name__}: {exc}")
                raise
            _write_json(run_dir / "mission.plan.json", mission.to_document())
            _write_json(run_dir / "sim.settings.json", settings.to_document())
            _write_json(run_dir / "validation.json", {
                "mission": mission_report.to_dict(),
                "sim_settings": env_report.to_dict(),
            })
            manifest.artifact_paths["mission.plan.json"] = "mission.plan.json"
            manifest.artifact_paths["sim.settings.json"] = "sim.settings.json"
            manifest.artifact_paths["validation.json"] = "validation.json"
            self._transition(manifest, "scripts_generated")
            if mission_report.ok and env_report.ok:
                self._transition(manifest, "scripts_validated")
            else:
                self._fail(manifest, "script validation failed after retries")
            return manifest

    def await_log(self, run_id: str) -> RunManifest:
        """Mark a validated run as waiting on an external simulator run."""
        with self._run_lock(run_id):
            manifest = self.load_manifest(run_id)
            self._require_stage(manifest, ("scripts_validated",))
            self._transition(manifest, "awaiting_log")
            return manifest

    def ingest_flight_log(
        self, run_id: str, data: bytes, fmt: str | None = None
    ) -> RunManifest:
        """Parse and store a log, then run analysis and evaluation.

        Parse failures propagate and leave the stage untouched.
        """
        with self._run_lock(run_id):
            manifest = self.load_manifest(run_id)
            self._require_stage(manifest, ("scripts_validated", "awaiting_log"))
            log, ext = self._parse_log(data, fmt)
            run_dir = self.runs_dir / run_id
            log_path = run_dir / f"flight.{ext}"
            log_path.write_bytes(data)
            self._register_log(run_id, run_id, str(log_path), ext)
            self._transition(manifest, "log_ingested")

            blueprint = self.load_blueprint(run_id)
            goals = tuple(blueprint.test_properties) or ("Overall flight health",)
            report = analyze(
                AnalysisRequest(mode="automated", goals=goals, log_ref=run_id,
                                k_params=self.config.k_params),
                log,
                self._require_param_index(),
                self.vision_gateway,
                self.detector_config,
                plot_dir=run_dir / "analysis" / "plots",
            )
            self._relativize_plots(report)
            _write_json(run_dir / "analysis" / "report.json", report.to_dict())
            (run_dir / "analysis" / "report.md").write_text(
                render_report_markdown(report), encoding="utf-8"
            )
            manifest.artifact_paths["analysis/report.json"] = "analysis/report.json"
            self._transition(manifest, "analyzed")

            self._evaluate(manifest)
            self._transition(manifest, "evaluated")
            return manifest

    def evaluate_run(self, run_id: str) -> EvalReport:
        with self._run_lock(run_id):
            manifest = self.load_manifest(run_id)
            report = self._evaluate(manifest)
            return report

    def query_analytics(self, log_id: str, question: str):
        """Interactive analysis of a previously ingested log."""
        if not question.strip():
            raise ValueError("question must be non-empty")
        entry = self._log_registry().get(log_id)
        if entry is None:
            raise UnknownLog(f"no log with id {log_id!r}")
        data = Path(entry["path"]).read_bytes()
        log, _ext = self._parse_log(data, entry.get("format"))
        session_dir = self.analytics_dir / log_id
        session_dir.mkdir(parents=True, exist_ok=True)
        seq = 1 + sum(1 for p in session_dir.glob("*.json"))
        report = analyze(
            AnalysisRequest(mode="interactive", goals=(question,), log_ref=log_id,
                            k_params=self.config.k_params),
            log,
            self._require_param_index(),
            self.vision_gateway,
            self.detector_config,
            plot_dir=session_dir / f"plots-{seq:03d}",
        )
        self._relativize_plots(report)
        _write_json(session_dir / f"{seq:03d}.json", report.to_dict())
        return report

    def _relativize_plots(self, report) -> None:
        """Rewrite plot paths relative to the workspace for /api/plots URLs."""
        root = self.workspace.resolve()

        def rel(path: str) -> str:
            try:
                return str(Path(path).resolve().relative_to(root))
            except ValueError:
                return path

        report.plots = [rel(p) for p in report.plots]
        for result in report.goal_results:
            result.plotted = [rel(p) for p in result.plotted]

    # Accessors

    def list_runs(self) -> list[RunManifest]:
        manifests = []
        for path in sorted(self.runs_dir.glob("*/manifest.json")):
            manifests.append(self.load_manifest(path.parent.name))
        return manifests

    def load_manifest(self, run_id: str) -> RunManifest:
        path = self.runs_dir / run_id / "manifest.json"
        if not path.exists():
            raise UnknownRun(f"no run with id {run_id!r}")
        return RunManifest.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def load_blueprint(self, run_id: str) -> ScenarioBlueprint:
        run_dir = self.runs_dir / run_id
        data = json.loads((run_dir / "blueprint.json").read_text(encoding="utf-8"))
        raw_path = run_dir / "blueprint.raw.txt"
        raw = raw_path.read_text(encoding="utf-8") if raw_path.exists() else ""
        return ScenarioBlueprint.from_dict(data, raw_text=raw)

    def artifact_path(self, run_id: str, name: str) -> Path:
        run_dir = (self.runs_dir / run_id).resolve()
        if not (run_dir / "manifest.json").exists():
            raise UnknownRun(f"no run with id {run_id!r}")
        path = (run_dir / name).resolve()
        if run_dir not in path.parents and path != run_dir:
            raise ValueError("artifact path escapes the run directory")
        if not path.is_file():
            raise FileNotFoundError(name)
        return path

    def list_logs(self) -> list[dict]:
        return [
            {"log_id": log_id, **entry}
            for log_id, entry in sorted(self._log_registry().items())
        ]

    # Internals

    def _require_param_index(self) -> VectorIndex:
        if self.param_index is None:
            raise ValueError("parameter knowledge base not built")
        return self.param_index

    def _parse_log(self, data: bytes, fmt: str | None) -> tuple[FlightLog, str]:
        if fmt == "ulog" or (fmt is None and data[: len(ULOG_MAGIC)] == ULOG_MAGIC):
            return parse_ulog(data), "ulg"
        if fmt in (None, "csv", "ulg"):
            if fmt == "ulg":
                return parse_ulog(data), "ulg"
            return parse_csv(data), "csv"
        raise ValueError(f"unknown log format {fmt!r}")

    def _evaluate(self, manifest: RunManifest) -> EvalReport:
        run_dir = self.runs_dir / manifest.run_id
        blueprint = self.load_blueprint(manifest.run_id)
        contexts = self._provenance_texts(blueprint)
        flags: list[str] = []
        faith = None
        if contexts and blueprint.raw_text:
            faith = faithfulness(blueprint.raw_text, contexts, mode="fixture")
        else:
            flags.append("faithfulness skipped: no retrieved contexts recorded")
        relevancy = None
        if blueprint.raw_text:
            relevancy = response_relevancy(manifest.user_goal, blueprint.raw_text,
                                           mode="fixture")
        precision = recall = None
        labels = self._load_labels()
        if labels is not None and manifest.user_goal in labels.by_query:
            precision = context_precision(blueprint.provenance, labels,
                                          manifest.user_goal)
            recall, recall_flagged = context_recall(blueprint.provenance, labels,
                                                    manifest.user_goal)
            if recall_flagged:
                flags.append("recall flagged: empty relevant set for this goal")
        else:
            flags.append("context precision/recall require a labels file entry "
                         "for this goal")
        report = EvalReport(
            mode="fixture",
            faithfulness=faith,
            context_precision=precision,
            context_recall=recall,
            response_relevancy=relevancy,
            flags=flags,
            per_item={"provenance": blueprint.provenance},
        )
        _write_json(run_dir / "eval.json", report.to_dict())
        manifest.artifact_paths["eval.json"] = "eval.json"
        self._save_manifest(manifest)
        return report

    def _load_labels(self) -> RelevanceLabels | None:
        if self.config.labels_path is None:
            return None
        data = json.loads(Path(self.config.labels_path).read_text(encoding="utf-8"))
        return RelevanceLabels.from_dict(data)

    def _provenance_texts(self, blueprint: ScenarioBlueprint) -> list[str]:
        if self.incident_index is None:
            return []
        by_id = {chunk.id: chunk.text for chunk in self.incident_index.chunks}
        return [by_id[cid] for cid in blueprint.provenance if cid in by_id]

    def _write_blueprint(self, manifest: RunManifest, blueprint: ScenarioBlueprint) -> None:
        run_dir = self.runs_dir / manifest.run_id
        _write_json(run_dir / "blueprint.json", blueprint.to_dict())
        (run_dir / "blueprint.raw.txt").write_text(blueprint.raw_text, encoding="utf-8")
        manifest.artifact_paths["blueprint.json"] = "blueprint.json"
        self._save_manifest(manifest)

    def _register_log(self, log_id: str, run_id: str, path: str, ext: str) -> None:
        with self._registry_lock:
            registry = self._log_registry()
            registry[log_id] = {"run_id": run_id, "path": path, "format": ext}
            _write_json(self.workspace / "logs.json", registry)

    def _log_registry(self) -> dict:
        path = self.workspace / "logs.json"
        if not path.exists():
            return {}
        return json.loads(path.read_text(encoding="utf-8"))

    def _run_lock(self, run_id: str) -> threading.Lock:
        with self._locks_guard:
            if run_id not in self._locks:
                self._locks[run_id] = threading.Lock()
            return self._locks[run_id]

    def _require_stage(self, manifest: RunManifest, allowed: tuple[str, ...]) -> None:
        if manifest.stage not in allowed:
            raise WrongStage(
                f"run {manifest.run_id} is in stage {manifest.stage!r}; "
                f"operation requires {allowed}"
            )

    def _transition(self, manifest: RunManifest, stage: str) -> None:
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        manifest.stage = stage
        manifest.history.append({"stage": stage, "at": _utcnow()})
        self._save_manifest(manifest)

    def _fail(self, manifest: RunManifest, cause: str) -> None:
        manifest.error = cause
        self._transition(manifest, "failed")

    def _save_manifest(self, manifest: RunManifest) -> None:
        run_dir = self.runs_dir / manifest.run_id
        manifest.artifact_paths.setdefault("manifest.json", "manifest.json")
        _write_json(run_dir / "manifest.json", manifest.to_dict())


def _write_json(path: Path, data: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True), encoding="utf-8")


def default_mock_fixture_log_path() -> Path:
    """Packaged barometer-failure fixture used by the replay adapter."""
    return data_path("fixture_logs", "barometer_failure.csv")
