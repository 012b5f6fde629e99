"""Prompt assembly from the four agent prompt components.

Every agent prompt is built from the same parts: a persona stating the
agent's goals, optional user goals, retrieved context chunks, an optional
sample of the expected output, and a numbered rule list. ``assemble`` lays
them out under fixed uppercase headers so prompts are reproducible and
scripted backends can match on stable substrings.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import EmptyAgentGoals

HEADER_AGENT_GOALS = "## AGENT GOALS"
HEADER_USER_GOALS = "## USER GOALS"
HEADER_CONTEXT = "## CONTEXT"
HEADER_SAMPLE = "## EXPECTED OUTPUT FORMAT"
HEADER_RULES = "## RULES"

_HEADERS = (
    HEADER_AGENT_GOALS,
    HEADER_USER_GOALS,
    HEADER_CONTEXT,
    HEADER_SAMPLE,
    HEADER_RULES,
)

AGENT_NAMES = ("scenario", "mission", "env", "analytics_auto", "analytics_interactive")


@dataclass(frozen=True)
class RuleText:
    id: str
    statement: str
    machine_checkable: bool = False


@dataclass(frozen=True)
class PromptSpec:
    agent_goals: str
    sample_output: str | None = None
    user_goals: str | None = None
    rules: tuple[RuleText, ...] = ()
    retrieved_context: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if not self.agent_goals.strip():
            raise EmptyAgentGoals("agent_goals must be non-empty")
        ids = [r.id for r in self.rules]
        if len(ids) != len(set(ids)):
            raise ValueError("rule ids must be unique within a spec")
        for rule in self.rules:
            if not rule.id or not rule.statement.strip():
                raise ValueError("every rule needs an id and a statement")


def assemble(spec: PromptSpec) -> str:
    """Render a spec into its canonical prompt string.

    Section order is fixed (agent goals, user goals, context, sample, rules);
    empty sections are omitted; context chunks keep retrieval-rank order and
    are each prefixed with their source id; rules are numbered from 1.
    """
    sections: list[str] = [f"{HEADER_AGENT_GOALS}\n{spec.agent_goals.strip()}"]
    if spec.user_goals and spec.user_goals.strip():
        sections.append(f"{HEADER_USER_GOALS}\n{spec.user_goals.strip()}")
    if spec.retrieved_context:
        chunks = "\n\n".join(
            f"[{source_id}]\n{text}" for source_id, text in spec.retrieved_context
        )
        sections.append(f"{HEADER_CONTEXT}\n{chunks}")
    if spec.sample_output and spec.sample_output.strip():
        sections.append(f"{HEADER_SAMPLE}\n{spec.sample_output.strip()}")
    if spec.rules:
        numbered = "\n".join(
            f"{i}. {rule.statement}" for i, rule in enumerate(spec.rules, start=1)
        )
        sections.append(f"{HEADER_RULES}\n{numbered}")
    return "\n\n".join(sections)


def parse_sections(prompt: str) -> dict[str, str]:
    """Split an assembled prompt back into {header: content}.

    Inverse of ``assemble`` provided section contents contain no line equal
    to one of the fixed headers.
    """
    found: dict[str, str] = {}
    current: str | None = None
    buf: list[str] = []
    for line in prompt.split("\n"):
        if line in _HEADERS:
            if current is not None:
                found[current] = "\n".join(buf).strip("\n")
            current, buf = line, []
        elif current is not None:
            buf.append(line)
    if current is not None:
        found[current] = "\n".join(buf).strip("\n")
    return found


# Schema samples shown to the translator agents so their replies parse.

SCENARIO_SAMPLE = """\
Respond with a single fenced JSON object:
```json
{
  "use_case": "<short use-case label>",
  "environment": {
    "location": "<place name>",
    "weather": {"wind": {"magnitude": 10.0, "unit": "m/s"}},
    "gps_quality": "high",
    "obstacles": ["<obstacle>", "..."],
    "narrative": "<one-paragraph environmental description>"
  },
  "mission": "<one-paragraph mission description>",
  "test_properties": ["<property 1>", "<property 2>"]
}
```"""

MISSION_SAMPLE = """\
```json
{
  "mission": {
    "cruiseSpeed": 12,
    "hoverSpeed": 5,
    "items": [
      {
        "AMSLAltAboveTerrain": null,
        "Altitude": 50,
        "AltitudeMode": 1,
        "autoContinue": true,
        "command": 22,
        "frame": 3,
        "params": [15, 0, 0, null, 47.398039859999997, 8.5455725400000003, 50],
        "type": "SimpleItem"
      }
    ],
    "plannedHomePosition": [47.397742, 8.545594, 488]
  }
}
```"""

ENV_SAMPLE = """\
```json
{
  "SimulatorSettings": {
    "Weather": {
      "RainIntensity": 0.5,
      "WindSpeed": 5,
      "WindDirection": 0,
      "Visibility": 0.7
    }
  },
  "Vehicles": {
    "Drone_1": {
      "VehicleType": "Quadrotor",
      "Pose": {"X": 0, "Y": 0, "Z": 10, "Roll": 0, "Pitch": 0, "Yaw": 0},
      "HomeLocation": {"Latitude": 47.641468, "Longitude": -122.140165, "Altitude": 10}
    }
  }
}
```"""

_BUILTIN: dict[str, PromptSpec] = {
    "scenario": PromptSpec(
        agent_goals=(
            "Act as a Test Engineer to generate scenario blueprints that include "
            "an Environmental Description, an sUAS Mission Description, and Test "
            "Properties to evaluate the system under test."
        ),
        sample_output=SCENARIO_SAMPLE,
        rules=(RuleText("blueprint_completeness", "Blueprint Completeness", True),),
    ),
    "mission": PromptSpec(
        agent_goals=(
            "Act as an Automation Engineer to generate a SuT mission script "
            "based on the scenario blueprint."
        ),
        sample_output=MISSION_SAMPLE,
        rules=(
            RuleText("format_validity", "Script Format Validity", True),
            RuleText("lat_lon_valid", "Valid Geo-location", True),
            RuleText("valid_waypoints", "Valid Waypoints", True),
            RuleText("velocity_range", "Velocity = [0,30] mph", True),
            RuleText("altitude_max", "Altitude ≤ 400 ft", True),
        ),
    ),
    "env": PromptSpec(
        agent_goals=(
            "Act as an Automation Engineer to generate a sim tool script "
            "based on the scenario blueprint."
        ),
        sample_output=ENV_SAMPLE,
        rules=(
            RuleText("format_validity", "Script Format Validity", True),
            RuleText("wind_range", "Wind = [0,50] mph", True),
            RuleText("light_range", "Light Intensity = (0,10)", True),
        ),
    ),
    "analytics_auto": PromptSpec(
        agent_goals=(
            "Act as a Data Analyst to analyze simulation log data and explain "
            "how the test properties are affected."
        ),
        rules=(RuleText("analysis_completeness", "Analysis Completeness", False),),
    ),
    "analytics_interactive": PromptSpec(
        # Interactive analysis is driven by the user's question; the persona
        # stays minimal and the question arrives as user goals.
        agent_goals=(
            "Act as a Data Analyst answering the developer's question about "
            "the plotted flight-log parameters."
        ),
        rules=(RuleText("analysis_completeness", "Analysis Completeness", False),),
    ),
}


def builtin_spec(agent: str) -> PromptSpec:
    """Skeleton prompt spec for one of the five built-in agents."""
    if agent not in _BUILTIN:
        raise ValueError(f"unknown agent {agent!r}; expected one of {AGENT_NAMES}")
    return _BUILTIN[agent]


def load_prompt_pack(path: str | Path) -> dict[str, PromptSpec]:
    """Built-in specs overridden by a JSON prompt-pack file keyed by agent.

    Each entry may override any of agent_goals, sample_output, user_goals,
    and rules (list of {id, statement, machine_checkable}).
    """
    pack = json.loads(Path(path).read_text(encoding="utf-8"))
    specs = dict(_BUILTIN)
    for agent, overrides in pack.items():
        if agent not in specs:
            raise ValueError(f"prompt pack references unknown agent {agent!r}")
        base = specs[agent]
        fields: dict = {}
        for key in ("agent_goals", "sample_output", "user_goals"):
            if key in overrides:
                fields[key] = overrides[key]
        if "rules" in overrides:
            fields["rules"] = tuple(
                RuleText(r["id"], r["statement"], bool(r.get("machine_checkable", False)))
                for r in overrides["rules"]
            )
        specs[agent] = replace(base, **fields)
    return specs
