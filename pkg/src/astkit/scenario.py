"""Scenario blueprint generation over the incident knowledge base.

The blueprint agent retrieves incidents similar to the user's testing goal,
prompts the backend with them, and parses the reply into the three-part
blueprint (environment, mission, test properties). Responses are requested
as fenced JSON first; a header-based prose splitter is the fallback so
free-form model output still lands in the same structure.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace

from .errors import UnparseableBlueprint
from .gateway import ChatMessage, Gateway
from .knowledge import VectorIndex, search
from .prompting import PromptSpec, assemble, builtin_spec
from .validation import ValidationReport

GPS_QUALITIES = ("low", "medium", "high")
FEEDBACK_SECTIONS = ("environment", "mission", "test_properties", "all")

DEFAULT_K = 5

_FENCE_RE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)


@dataclass
class EnvDescription:
    location: str = ""
    weather: dict[str, dict] = field(default_factory=dict)  # condition -> {magnitude, unit}
    gps_quality: str = "medium"
    obstacles: list[str] = field(default_factory=list)
    narrative: str = ""

    def __post_init__(self) -> None:
        if self.gps_quality not in GPS_QUALITIES:
            raise ValueError(f"gps_quality must be one of {GPS_QUALITIES}")
        wind = self.weather.get("wind")
        if wind is not None and float(wind.get("magnitude", 0.0)) < 0:
            raise ValueError("wind magnitude must be >= 0")

    def is_empty(self) -> bool:
        return not (self.location or self.narrative or self.weather or self.obstacles)

    def render(self) -> str:
        parts = []
        if self.location:
            parts.append(f"Location: {self.location}")
        for condition, value in self.weather.items():
            parts.append(f"{condition.capitalize()}: {value['magnitude']} {value.get('unit', '')}".rstrip())
        parts.append(f"GPS quality: {self.gps_quality}")
        if self.obstacles:
            parts.append("Obstacles: " + ", ".join(self.obstacles))
        if self.narrative:
            parts.append(self.narrative)
        return "\n".join(parts)


@dataclass
class ScenarioBlueprint:
    use_case: str
    environment: EnvDescription
    mission_description: str
    test_properties: list[str]
    provenance: list[str] = field(default_factory=list)
    raw_text: str = ""
    revision: int = 0

    def to_dict(self) -> dict:
        return {
            "use_case": self.use_case,
            "environment": {
                "location": self.environment.location,
                "weather": self.environment.weather,
                "gps_quality": self.environment.gps_quality,
                "obstacles": self.environment.obstacles,
                "narrative": self.environment.narrative,
            },
            "mission_description": self.mission_description,
            "test_properties": self.test_properties,
            "provenance": self.provenance,
            "revision": self.revision,
        }

    @classmethod
    def from_dict(cls, data: dict, raw_text: str = "") -> "ScenarioBlueprint":
        env = data.get("environment", {})
        return cls(
            use_case=data.get("use_case", ""),
            environment=EnvDescription(
                location=env.get("location", ""),
                weather=env.get("weather", {}),
                gps_quality=env.get("gps_quality", "medium"),
                obstacles=list(env.get("obstacles", [])),
                narrative=env.get("narrative", ""),
            ),
            mission_description=data.get("mission_description", ""),
            test_properties=list(data.get("test_properties", [])),
            provenance=list(data.get("provenance", [])),
            raw_text=raw_text,
            revision=int(data.get("revision", 0)),
        )


@dataclass(frozen=True)
class FeedbackNote:
    author: str
    text: str
    target_section: str = "all"

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("feedback text must be non-empty")
        if self.target_section not in FEEDBACK_SECTIONS:
            raise ValueError(f"target_section must be one of {FEEDBACK_SECTIONS}")


def check_completeness(blueprint: ScenarioBlueprint) -> ValidationReport:
    """All three sections present and non-empty, properties distinct."""
    report = ValidationReport()
    if blueprint.environment.is_empty():
        report.add("blueprint_completeness", "environment", "environment section is empty")
    if not blueprint.mission_description.strip():
        report.add("blueprint_completeness", "mission_description",
                   "mission description is empty")
    if not blueprint.test_properties:
        report.add("blueprint_completeness", "test_properties", "no test properties")
    else:
        seen = set()
        for i, prop in enumerate(blueprint.test_properties):
            if not prop.strip():
                report.add("blueprint_completeness", f"test_properties[{i}]",
                           "empty test property")
            key = prop.strip().lower()
            if key in seen:
                report.add("blueprint_completeness", f"test_properties[{i}]",
                           "duplicate test property", prop)
            seen.add(key)
    return report


def generate_blueprint(
    user_goal: str,
    k: int = DEFAULT_K,
    *,
    incident_index: VectorIndex,
    gateway: Gateway,
    spec: PromptSpec | None = None,
) -> ScenarioBlueprint:
    """Retrieve top-k incidents, prompt the backend, parse the blueprint.

    One reprompt with the parse error appended is attempted before giving up.
    Provenance records the retrieved chunk ids in rank order.
    """
    if not user_goal.strip():
        raise ValueError("user_goal must be non-empty")
    hits = search(incident_index, user_goal, k)
    base = spec or builtin_spec("scenario")
    prompt_spec = replace(
        base,
        user_goals=user_goal,
        retrieved_context=tuple((c.id, c.text) for c, _score in hits),
    )
    prompt = assemble(prompt_spec)
    provenance = [c.id for c, _score in hits]

    response = gateway.complete([ChatMessage("user", prompt)])
    try:
        return _parse_blueprint(response, user_goal, provenance)
    except UnparseableBlueprint as first_error:
        retry_prompt = (
            f"{prompt}\n\n## PARSE ERROR\nYour previous reply could not be used: "
            f"{first_error}\nRespond again following the expected output format exactly."
        )
        response = gateway.complete([ChatMessage("user", retry_prompt)])
        return _parse_blueprint(response, user_goal, provenance)


def refine_blueprint(
    blueprint: ScenarioBlueprint,
    feedback: FeedbackNote,
    gateway: Gateway,
    *,
    spec: PromptSpec | None = None,
) -> ScenarioBlueprint:
    """Reprompt with the prior output plus feedback targeting one section."""
    completeness = check_completeness(blueprint)
    if not completeness.ok:
        raise ValueError("refine requires a blueprint that passed completeness")
    base = spec or builtin_spec("scenario")
    instruction = (
        f"Revise the blueprint below. Apply this feedback to the "
        f"{feedback.target_section} section and leave the other sections unchanged."
        if feedback.target_section != "all"
        else "Revise the blueprint below according to the feedback."
    )
    prompt = (
        f"{assemble(replace(base, user_goals=instruction))}"
        f"\n\n## PREVIOUS BLUEPRINT\n{blueprint.raw_text}"
        f"\n\n## FEEDBACK\n({feedback.author} on {feedback.target_section}) {feedback.text}"
    )
    response = gateway.complete([ChatMessage("user", prompt)])
    try:
        revised = _parse_blueprint(response, blueprint.use_case, list(blueprint.provenance))
    except UnparseableBlueprint as first_error:
        retry_prompt = (
            f"{prompt}\n\n## PARSE ERROR\nYour previous reply could not be used: "
            f"{first_error}\nRespond again following the expected output format exactly."
        )
        response = gateway.complete([ChatMessage("user", retry_prompt)])
        revised = _parse_blueprint(response, blueprint.use_case, list(blueprint.provenance))
    revised.revision = blueprint.revision + 1
    return revised


# Response parsing

def _parse_blueprint(
    response: str, use_case: str, provenance: list[str]
) -> ScenarioBlueprint:
    data = _extract_json(response)
    if data is not None:
        blueprint = _blueprint_from_json(data, use_case, provenance, response)
    else:
        blueprint = _blueprint_from_prose(response, use_case, provenance)
    report = check_completeness(blueprint)
    if not report.ok:
        raise UnparseableBlueprint(report.summary())
    return blueprint


def _extract_json(response: str) -> dict | None:
    candidates = _FENCE_RE.findall(response)
    brace = response.find("{")
    if brace != -1:
        candidates.append(response[brace:])
    for candidate in candidates:
        try:
            data = json.loads(candidate)
        except json.JSONDecodeError:
            try:
                data = json.loads(_balanced_object(candidate))
            except (json.JSONDecodeError, ValueError):
                continue
        if isinstance(data, dict):
            return data
    return None


def _balanced_object(text: str) -> str:
    start = text.index("{")
    depth = 0
    for i in range(start, len(text)):
        if text[i] == "{":
            depth += 1
        elif text[i] == "}":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    raise ValueError("no balanced JSON object")


def _blueprint_from_json(
    data: dict, use_case: str, provenance: list[str], raw: str
) -> ScenarioBlueprint:
    env_raw = data.get("environment", {})
    if isinstance(env_raw, str):
        env = EnvDescription(narrative=env_raw)
    else:
        weather: dict[str, dict] = {}
        for condition, value in (env_raw.get("weather") or {}).items():
            if isinstance(value, dict):
                weather[condition] = {
                    "magnitude": float(value.get("magnitude", 0.0)),
                    "unit": str(value.get("unit", "")),
                }
            elif isinstance(value, (int, float)):
                weather[condition] = {"magnitude": float(value), "unit": ""}
            else:
                weather[condition] = {"magnitude": 0.0, "unit": str(value)}
        gps = str(env_raw.get("gps_quality", "medium")).lower()
        env = EnvDescription(
            location=str(env_raw.get("location", "")),
            weather=weather,
            gps_quality=gps if gps in GPS_QUALITIES else "medium",
            obstacles=[str(o) for o in env_raw.get("obstacles", [])],
            narrative=str(env_raw.get("narrative", "")),
        )
    mission = str(data.get("mission") or data.get("mission_description") or "")
    properties = [str(p) for p in data.get("test_properties", [])]
    return ScenarioBlueprint(
        use_case=str(data.get("use_case") or use_case),
        environment=env,
        mission_description=mission,
        test_properties=properties,
        provenance=provenance,
        raw_text=raw,
    )


_SECTION_HEADS = {
    "environment": re.compile(r"^\s*#*\s*environment", re.IGNORECASE),
    "mission": re.compile(r"^\s*#*\s*(suas )?mission", re.IGNORECASE),
    "test_properties": re.compile(r"^\s*#*\s*test propert", re.IGNORECASE),
}


def _blueprint_from_prose(
    response: str, use_case: str, provenance: list[str]
) -> ScenarioBlueprint:
    sections: dict[str, list[str]] = {}
    current: str | None = None
    for line in response.splitlines():
        matched = None
        for name, pattern in _SECTION_HEADS.items():
            if pattern.match(line):
                matched = name
                break
        if matched:
            current = matched
            sections[current] = []
            _, _, rest = line.partition(":")
            if rest.strip():
                sections[current].append(rest.strip())
        elif current:
            sections[current].append(line)
    env_text = "\n".join(sections.get("environment", [])).strip()
    mission_text = "\n".join(sections.get("mission", [])).strip()
    prop_lines = [
        line.strip().lstrip("-*").strip()
        for line in sections.get("test_properties", [])
        if line.strip().lstrip("-*").strip()
    ]
    return ScenarioBlueprint(
        use_case=use_case,
        environment=EnvDescription(narrative=env_text),
        mission_description=mission_text,
        test_properties=prop_lines,
        provenance=provenance,
        raw_text=response,
    )
