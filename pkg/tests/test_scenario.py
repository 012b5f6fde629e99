"""Blueprint generation, refinement, and completeness checking."""
from __future__ import annotations

import json

import pytest

from astkit.errors import UnparseableBlueprint
from astkit.scenario import (
    EnvDescription,
    FeedbackNote,
    ScenarioBlueprint,
    check_completeness,
    generate_blueprint,
    refine_blueprint,
)

from conftest import scripted_gateway
from fixtures_rag import corpus_index

CITY_BLUEPRINT_JSON = {
    "use_case": "City Surveillance",
    "environment": {
        "location": "New York City",
        "weather": {"wind": {"magnitude": 15, "unit": "m/s"}},
        "gps_quality": "high",
        "obstacles": ["Buildings", "PowerLines"],
        "narrative": "Urban canyon with channelled gusts.",
    },
    "mission": "Monitor traffic patterns, and assist law enforcement in maintaining public safety.",
    "test_properties": ["Flight Stability in Wind"],
}


def fenced(obj) -> str:
    return "```json\n" + json.dumps(obj, indent=2) + "\n```"


def city_blueprint() -> ScenarioBlueprint:
    gw = scripted_gateway([("Test Engineer", fenced(CITY_BLUEPRINT_JSON))])
    return generate_blueprint(
        "Generate a city surveillance scenario",
        incident_index=corpus_index(),
        gateway=gw,
    )


def test_generate_city_surveillance_blueprint():
    blueprint = city_blueprint()
    env = blueprint.environment
    assert env.location == "New York City"
    assert env.weather["wind"] == {"magnitude": 15.0, "unit": "m/s"}
    assert env.gps_quality == "high"
    assert env.obstacles == ["Buildings", "PowerLines"]
    assert blueprint.test_properties == ["Flight Stability in Wind"]
    assert "law enforcement" in blueprint.mission_description


def test_generation_records_provenance_in_rank_order():
    from astkit.knowledge import search

    index = corpus_index()
    gw = scripted_gateway([("Test Engineer", fenced(CITY_BLUEPRINT_JSON))])
    blueprint = generate_blueprint("search and rescue hiker lost", k=4,
                                   incident_index=index, gateway=gw)
    expected = [c.id for c, _s in search(index, "search and rescue hiker lost", 4)]
    assert blueprint.provenance == expected


def test_sar_goal_prose_fallback():
    prose = (
        "Environmental Description: A densely forested area with fog and light rain.\n"
        "sUAS Mission Description: Locate a missing hiker, navigating search "
        "patterns with obstacle avoidance.\n"
        "Test Properties:\n- target detection accuracy\n- mission completion time\n"
    )
    gw = scripted_gateway([("Test Engineer", prose)])
    blueprint = generate_blueprint(
        "track a missing person during a search-and-rescue mission",
        incident_index=corpus_index(),
        gateway=gw,
    )
    assert "missing hiker" in blueprint.mission_description
    assert any("detection accuracy" in p for p in blueprint.test_properties)


def test_missing_test_properties_reprompts_then_fails():
    incomplete = {"environment": {"location": "X", "narrative": "y"}, "mission": "z"}
    gw = scripted_gateway([("Test Engineer", fenced(incomplete))])
    with pytest.raises(UnparseableBlueprint):
        generate_blueprint("goal", incident_index=corpus_index(), gateway=gw)


def test_reprompt_can_recover():
    incomplete = {"environment": {"location": "X", "narrative": "y"}, "mission": "z"}
    gw = scripted_gateway([
        ("PARSE ERROR", fenced(CITY_BLUEPRINT_JSON)),  # second attempt
        ("Test Engineer", fenced(incomplete)),
    ])
    blueprint = generate_blueprint("goal", incident_index=corpus_index(), gateway=gw)
    assert blueprint.test_properties == ["Flight Stability in Wind"]


def test_generated_blueprints_pass_completeness():
    assert check_completeness(city_blueprint()).ok


def test_empty_goal_rejected():
    with pytest.raises(ValueError):
        generate_blueprint("  ", incident_index=corpus_index(),
                           gateway=scripted_gateway([]))


# Completeness


def test_completeness_flags_empty_mission():
    blueprint = city_blueprint()
    blueprint.mission_description = ""
    report = check_completeness(blueprint)
    assert not report.ok
    assert [v.json_path for v in report.violations] == ["mission_description"]


def test_completeness_flags_duplicate_properties():
    blueprint = city_blueprint()
    blueprint.test_properties = ["Stability", "stability"]
    report = check_completeness(blueprint)
    assert any("duplicate" in v.message for v in report.violations)


def test_wind_magnitude_must_be_non_negative():
    with pytest.raises(ValueError):
        EnvDescription(weather={"wind": {"magnitude": -1.0, "unit": "m/s"}})


# Refinement


def test_refine_environment_keeps_mission_verbatim():
    blueprint = city_blueprint()
    revised_json = json.loads(json.dumps(CITY_BLUEPRINT_JSON))
    revised_json["environment"]["narrative"] = "Urban canyon with variable lighting."
    gw = scripted_gateway([("## FEEDBACK", fenced(revised_json))])
    note = FeedbackNote(author="dev", text="add lighting variability",
                        target_section="environment")
    revised = refine_blueprint(blueprint, note, gw)
    assert revised.environment.narrative != blueprint.environment.narrative
    assert revised.mission_description == blueprint.mission_description
    assert revised.revision == blueprint.revision + 1
    assert revised.provenance == blueprint.provenance


def test_refine_can_grow_property_list():
    blueprint = city_blueprint()
    revised_json = json.loads(json.dumps(CITY_BLUEPRINT_JSON))
    revised_json["test_properties"].append("Obstacle Avoidance Efficiency")
    gw = scripted_gateway([("increase the mission complexity", fenced(revised_json))])
    note = FeedbackNote(author="dev", text="increase the mission complexity",
                        target_section="test_properties")
    revised = refine_blueprint(blueprint, note, gw)
    assert len(revised.test_properties) >= len(blueprint.test_properties)


def test_empty_feedback_rejected():
    with pytest.raises(ValueError):
        FeedbackNote(author="dev", text="   ")


def test_refine_requires_complete_blueprint():
    blueprint = city_blueprint()
    blueprint.test_properties = []
    with pytest.raises(ValueError):
        refine_blueprint(blueprint, FeedbackNote("d", "x"), scripted_gateway([]))


def test_blueprint_dict_round_trip():
    blueprint = city_blueprint()
    clone = ScenarioBlueprint.from_dict(blueprint.to_dict(), raw_text=blueprint.raw_text)
    assert clone.to_dict() == blueprint.to_dict()
