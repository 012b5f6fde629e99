"""Automated and interactive flight-log analysis.

For each analysis goal the agent semantically selects flight-controller
parameters from the parameter knowledge base, plots the ones present in the
log, and sends the plots to the vision backend for a narrative. The
deterministic failure detectors always run and their verdicts ride along in
the report even when no backend is reachable.
"""
from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

from .detectors import DetectorConfig, SensorVerdict, detect_sensor_failures
from .errors import BackendUnavailable, EmptyIndex, Timeout
from .flightlog import FlightLog, find_series
from .gateway import ChatMessage, Gateway
from .knowledge import ParameterDoc, VectorIndex, search
from .plotting import PlotSpec, render_plot
from .prompting import assemble, builtin_spec

MODES = ("automated", "interactive")
DEFAULT_K_PARAMS = 5

NARRATIVE_UNAVAILABLE = "narrative unavailable"


@dataclass(frozen=True)
class AnalysisRequest:
    mode: str
    goals: tuple[str, ...]
    log_ref: str
    k_params: int = DEFAULT_K_PARAMS

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not self.goals or not all(g.strip() for g in self.goals):
            raise ValueError("goals must be non-empty")
        if self.mode == "interactive" and len(self.goals) != 1:
            raise ValueError("interactive mode takes exactly one question")
        if self.k_params < 1:
            raise ValueError("k_params must be >= 1")


@dataclass
class GoalResult:
    goal: str
    selected: list[tuple[ParameterDoc, float]]
    plotted: list[str]  # artifact paths
    response: str
    notice: str = ""


@dataclass
class AnalysisReport:
    request: AnalysisRequest
    selected_params: list[tuple[ParameterDoc, float]]
    plots: list[str]
    narrative: str
    detector_verdicts: list[SensorVerdict]
    goal_results: list[GoalResult] = field(default_factory=list)
    created_at: str = ""

    def to_dict(self) -> dict:
        return {
            "request": {
                "mode": self.request.mode,
                "goals": list(self.request.goals),
                "log_ref": self.request.log_ref,
                "k_params": self.request.k_params,
            },
            "selected_params": [
                {"name": doc.name, "message_type": doc.message_type,
                 "description": doc.description, "score": score}
                for doc, score in self.selected_params
            ],
            "plots": list(self.plots),
            "narrative": self.narrative,
            "detector_verdicts": [v.to_dict() for v in self.detector_verdicts],
            "created_at": self.created_at,
        }


def select_parameters(
    goal: str, param_index: VectorIndex, k: int = DEFAULT_K_PARAMS
) -> list[tuple[ParameterDoc, float]]:
    """Top-k parameters by cosine over their embedded descriptions."""
    hits = search(param_index, goal, k)
    out = []
    for chunk, score in hits:
        message_type, _, name = chunk.id.partition(".")
        description = "" if chunk.text == name else chunk.text
        out.append(
            (ParameterDoc(name=name, message_type=message_type,
                          description=description, source_file="",
                          flagged=not description), score)
        )
    return out


def _safe_filename(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


def analyze(
    request: AnalysisRequest,
    log: FlightLog,
    param_index: VectorIndex,
    gateway: Gateway | None,
    detector_config: DetectorConfig | None = None,
    plot_dir: str | Path | None = None,
) -> AnalysisReport:
    """Run the full per-goal analysis flow and attach detector verdicts.

    Plots are written under plot_dir when given; otherwise plot artifacts
    are rendered but not persisted and paths are omitted.
    """
    verdicts = detect_sensor_failures(log, detector_config)
    goal_results: list[GoalResult] = []
    prompt_base = builtin_spec(
        "analytics_auto" if request.mode == "automated" else "analytics_interactive"
    )

    for goal in request.goals:
        try:
            selected = select_parameters(goal, param_index, request.k_params)
        except EmptyIndex:
            goal_results.append(GoalResult(goal, [], [], "", "parameter index is empty"))
            continue
        present = []
        for doc, score in selected:
            hit = find_series(log, doc.name)
            if hit is not None and len(hit[1]) >= 2:
                present.append((doc, score, hit))
        if not present:
            goal_results.append(
                GoalResult(goal, selected, [], "",
                           "no selected parameter is present in the log")
            )
            continue

        images: list[tuple[bytes, str]] = []
        plot_paths: list[str] = []
        for doc, _score, (series_name, ts) in present:
            spec = PlotSpec(title=series_name, series=((series_name, ts),),
                            y_label=doc.name)
            svg, png = render_plot(spec)
            images.append((png, "image/png"))
            if plot_dir is not None:
                base = Path(plot_dir) / _safe_filename(doc.name)
                base.parent.mkdir(parents=True, exist_ok=True)
                base.with_suffix(".svg").write_bytes(svg)
                base.with_suffix(".png").write_bytes(png)
                plot_paths.append(str(base.with_suffix(".png")))

        response = _narrate(goal, present, images, prompt_base, gateway)
        goal_results.append(
            GoalResult(goal, selected, plot_paths, response)
        )

    narrative_parts = []
    for result in goal_results:
        body = result.response or result.notice or NARRATIVE_UNAVAILABLE
        narrative_parts.append(f"## {result.goal}\n{body}")
    all_selected = [pair for r in goal_results for pair in r.selected]
    all_plots = [p for r in goal_results for p in r.plotted]
    return AnalysisReport(
        request=request,
        selected_params=all_selected,
        plots=all_plots,
        narrative="\n\n".join(narrative_parts),
        detector_verdicts=verdicts,
        goal_results=goal_results,
        created_at=dt.datetime.now(dt.timezone.utc).isoformat(),
    )


def _narrate(goal, present, images, prompt_base, gateway) -> str:
    if gateway is None:
        return ""
    params_line = ", ".join(doc.name for doc, _score, _hit in present)
    spec = replace(
        prompt_base,
        user_goals=f"{goal}\nParameters plotted: {params_line}",
    )
    message = ChatMessage("user", assemble(spec), images=tuple(images))
    try:
        return gateway.complete_vision([message])
    except (BackendUnavailable, Timeout):
        return NARRATIVE_UNAVAILABLE


def render_report_markdown(report: AnalysisReport) -> str:
    """Human-readable report: goal sections, plot links, verdict table."""
    lines = [f"# Flight log analysis ({report.request.mode} mode)", ""]
    lines.append(f"Log: `{report.request.log_ref}`  ")
    lines.append(f"Created: {report.created_at}")
    lines.append("")
    for result in report.goal_results:
        lines.append(f"## {result.goal}")
        lines.append("")
        if result.selected:
            lines.append("Selected parameters: " + ", ".join(
                f"`{doc.name}` ({score:.3f})" for doc, score in result.selected
            ))
            lines.append("")
        for path in result.plotted:
            name = Path(path).stem
            lines.append(f"![{name}]({path})")
        if result.plotted:
            lines.append("")
        lines.append(result.response or result.notice or NARRATIVE_UNAVAILABLE)
        lines.append("")
    lines.append("## Sensor failure verdicts")
    lines.append("")
    lines.append("| Sensor | Issue detected | Evidence |")
    lines.append("|--------|----------------|----------|")
    for verdict in report.detector_verdicts:
        mark = "yes" if verdict.failed else "no"
        notes = "; ".join(e.description for e in verdict.evidence[:3]) or "-"
        lines.append(f"| {verdict.sensor} | {mark} | {notes} |")
    lines.append("")
    return "\n".join(lines)
