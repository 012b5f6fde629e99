"""Mission and simulator-settings generation with rule-based validation.

The two translator agents turn blueprint sections into executable JSON
scripts; a rule engine checks every generated document against a ruleset
and the bounded regeneration loop feeds violations back to the agent until
the script validates or attempts run out.

Rule bounds may be written in mph/ft/mi; they are converted to SI at
ruleset load so all comparisons happen in one unit system.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from .errors import UnparseableScript
from .gateway import ChatMessage, Gateway
from .prompting import assemble, builtin_spec
from .scenario import ScenarioBlueprint, check_completeness
from .validation import ValidationReport

TAKEOFF_COMMAND = 22

UNIT_TO_SI = {
    "": 1.0,
    "m/s": 1.0,
    "m": 1.0,
    "deg": 1.0,
    "ratio": 1.0,
    "mph": 0.44704,
    "ft": 0.3048,
    "km": 1000.0,
    "mi": 1609.344,
}

_FENCE_RE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)


# Domain types

@dataclass
class MissionItem:
    command: int
    frame: int
    altitude: float
    altitude_mode: int = 1
    auto_continue: bool = True
    params: list[float | None] = field(default_factory=lambda: [None] * 7)
    type: str = "SimpleItem"

    def to_document(self) -> dict:
        return {
            "Altitude": self.altitude,
            "AltitudeMode": self.altitude_mode,
            "autoContinue": self.auto_continue,
            "command": self.command,
            "frame": self.frame,
            "params": list(self.params),
            "type": self.type,
        }


@dataclass
class MissionPlan:
    cruise_speed: float
    hover_speed: float
    items: list[MissionItem]
    planned_home_position: tuple[float, float, float]

    def to_document(self) -> dict:
        return {
            "mission": {
                "cruiseSpeed": self.cruise_speed,
                "hoverSpeed": self.hover_speed,
                "items": [item.to_document() for item in self.items],
                "plannedHomePosition": list(self.planned_home_position),
            }
        }

    @classmethod
    def from_document(cls, doc: dict) -> "MissionPlan":
        mission = doc.get("mission", doc)
        if not isinstance(mission, dict):
            raise UnparseableScript("mission document is not an object")
        items_raw = mission.get("items")
        if not isinstance(items_raw, list) or not items_raw:
            raise UnparseableScript("mission document is missing a non-empty items array")
        home = mission.get("plannedHomePosition")
        if not isinstance(home, (list, tuple)) or len(home) != 3:
            raise UnparseableScript("plannedHomePosition must be [lat, lon, alt]")
        try:
            items = [
                MissionItem(
                    command=int(raw["command"]),
                    frame=int(raw["frame"]),
                    altitude=float(raw["Altitude"]),
                    altitude_mode=int(raw.get("AltitudeMode", 1)),
                    auto_continue=bool(raw.get("autoContinue", True)),
                    params=[None if p is None else float(p) for p in raw["params"]],
                    type=str(raw.get("type", "SimpleItem")),
                )
                for raw in items_raw
            ]
            return cls(
                cruise_speed=float(mission["cruiseSpeed"]),
                hover_speed=float(mission["hoverSpeed"]),
                items=items,
                planned_home_position=(float(home[0]), float(home[1]), float(home[2])),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise UnparseableScript(f"mission document field error: {exc}") from exc


@dataclass
class Pose:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0


@dataclass
class Vehicle:
    vehicle_type: str
    pose: Pose
    home_location: tuple[float, float, float]


@dataclass
class Weather:
    rain_intensity: float
    wind_speed: float
    wind_direction: float
    visibility: float
    light_intensity: float | None = None
    wind_unit: str = "m/s"


@dataclass
class SimSettings:
    weather: Weather
    vehicles: dict[str, Vehicle]

    def to_document(self) -> dict:
        weather_doc: dict[str, Any] = {
            "RainIntensity": self.weather.rain_intensity,
            "WindSpeed": self.weather.wind_speed,
            "WindDirection": self.weather.wind_direction,
            "Visibility": self.weather.visibility,
        }
        if self.weather.light_intensity is not None:
            weather_doc["LightIntensity"] = self.weather.light_intensity
        return {
            "SimulatorSettings": {"Weather": weather_doc},
            "Vehicles": {
                name: {
                    "VehicleType": v.vehicle_type,
                    "Pose": {
                        "X": v.pose.x, "Y": v.pose.y, "Z": v.pose.z,
                        "Roll": v.pose.roll, "Pitch": v.pose.pitch, "Yaw": v.pose.yaw,
                    },
                    "HomeLocation": {
                        "Latitude": v.home_location[0],
                        "Longitude": v.home_location[1],
                        "Altitude": v.home_location[2],
                    },
                }
                for name, v in self.vehicles.items()
            },
        }

    @classmethod
    def from_document(cls, doc: dict) -> "SimSettings":
        try:
            weather_doc = doc["SimulatorSettings"]["Weather"]
            vehicles_doc = doc["Vehicles"]
        except (KeyError, TypeError) as exc:
            raise UnparseableScript(f"settings document missing section: {exc}") from exc
        if not isinstance(vehicles_doc, dict) or not vehicles_doc:
            raise UnparseableScript("settings document needs at least one vehicle")
        try:
            weather = Weather(
                rain_intensity=float(weather_doc["RainIntensity"]),
                wind_speed=float(weather_doc["WindSpeed"]),
                wind_direction=float(weather_doc["WindDirection"]),
                visibility=float(weather_doc["Visibility"]),
                light_intensity=(
                    float(weather_doc["LightIntensity"])
                    if "LightIntensity" in weather_doc
                    else None
                ),
            )
            vehicles = {}
            for name, raw in vehicles_doc.items():
                pose = raw.get("Pose", {})
                home = raw["HomeLocation"]
                vehicles[name] = Vehicle(
                    vehicle_type=str(raw["VehicleType"]),
                    pose=Pose(
                        x=float(pose.get("X", 0)), y=float(pose.get("Y", 0)),
                        z=float(pose.get("Z", 0)), roll=float(pose.get("Roll", 0)),
                        pitch=float(pose.get("Pitch", 0)), yaw=float(pose.get("Yaw", 0)),
                    ),
                    home_location=(
                        float(home["Latitude"]), float(home["Longitude"]),
                        float(home["Altitude"]),
                    ),
                )
            return cls(weather=weather, vehicles=vehicles)
        except (KeyError, TypeError, ValueError) as exc:
            raise UnparseableScript(f"settings document field error: {exc}") from exc


# Rule engine

@dataclass(frozen=True)
class Rule:
    id: str
    predicate: str  # range | lat_lon_valid | required | max_distance_from_home | custom
    paths: tuple[str, ...] = ()
    min: float | None = None
    max: float | None = None
    min_exclusive: bool = False
    max_exclusive: bool = False
    unit: str = ""
    args: dict = field(default_factory=dict)
    severity: str = "error"

    def si_bounds(self) -> tuple[float | None, float | None]:
        factor = UNIT_TO_SI.get(self.unit)
        if factor is None:
            raise ValueError(f"rule {self.id}: unknown unit {self.unit!r}")
        lo = None if self.min is None else self.min * factor
        hi = None if self.max is None else self.max * factor
        return lo, hi


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[Rule, ...]

    def __post_init__(self) -> None:
        ids = [r.id for r in self.rules]
        if len(ids) != len(set(ids)):
            raise ValueError("rule ids must be unique")

    @classmethod
    def from_file(cls, path: str | Path) -> "RuleSet":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "RuleSet":
        rules = []
        for raw in data["rules"]:
            paths = raw.get("paths") or ([raw["path"]] if "path" in raw else [])
            rules.append(
                Rule(
                    id=raw["id"],
                    predicate=raw["predicate"],
                    paths=tuple(paths),
                    min=raw.get("min"),
                    max=raw.get("max"),
                    min_exclusive=bool(raw.get("min_exclusive", False)),
                    max_exclusive=bool(raw.get("max_exclusive", False)),
                    unit=raw.get("unit", ""),
                    args=raw.get("args", {}),
                    severity=raw.get("severity", "error"),
                )
            )
        return cls(rules=tuple(rules))


_MISSION_RULES = RuleSet.from_dict({
    "rules": [
        {"id": "format_validity", "predicate": "custom", "args": {"check": "mission_schema"}},
        {"id": "lat_lon_valid", "predicate": "lat_lon_valid",
         "paths": ["mission.items[*].params", "mission.plannedHomePosition"]},
        {"id": "valid_waypoints", "predicate": "custom",
         "args": {"check": "waypoint_validity", "max_leg_m": 10000.0}},
        {"id": "velocity_range", "predicate": "range",
         "paths": ["mission.cruiseSpeed", "mission.hoverSpeed"],
         "min": 0, "max": 30, "unit": "mph"},
        {"id": "altitude_max", "predicate": "range",
         "paths": ["mission.items[*].Altitude"], "max": 400, "unit": "ft"},
    ]
})

_ENV_RULES = RuleSet.from_dict({
    "rules": [
        {"id": "format_validity", "predicate": "custom", "args": {"check": "sim_schema"}},
        {"id": "wind_range", "predicate": "range",
         "paths": ["SimulatorSettings.Weather.WindSpeed"],
         "min": 0, "max": 50, "unit": "mph"},
        {"id": "light_range", "predicate": "range",
         "paths": ["SimulatorSettings.Weather.LightIntensity"],
         "min": 0, "max": 10, "min_exclusive": True, "max_exclusive": True},
        {"id": "rain_range", "predicate": "range",
         "paths": ["SimulatorSettings.Weather.RainIntensity"], "min": 0, "max": 1},
        {"id": "visibility_range", "predicate": "range",
         "paths": ["SimulatorSettings.Weather.Visibility"], "min": 0, "max": 1},
        {"id": "wind_direction_range", "predicate": "range",
         "paths": ["SimulatorSettings.Weather.WindDirection"],
         "min": 0, "max": 360, "max_exclusive": True},
        {"id": "home_lat_lon_valid", "predicate": "lat_lon_valid",
         "paths": ["Vehicles.*.HomeLocation"]},
    ]
})


def default_mission_ruleset() -> RuleSet:
    return _MISSION_RULES


def default_env_ruleset() -> RuleSet:
    return _ENV_RULES


def _resolve(doc: Any, path: str) -> list[tuple[str, Any]]:
    """Resolve a dotted path with [*]/[n] array access and * dict wildcard."""
    parts = path.split(".") if path else []
    results: list[tuple[str, Any]] = [("", doc)]
    for part in parts:
        key, indexes = part, []
        while key.endswith("]"):
            key, _, idx = key.rpartition("[")
            indexes.insert(0, idx.rstrip("]"))
        next_results: list[tuple[str, Any]] = []
        for prefix, node in results:
            if key == "*":
                if isinstance(node, dict):
                    for name, value in node.items():
                        next_results.append((f"{prefix}.{name}".lstrip("."), value))
                continue
            if not isinstance(node, dict) or key not in node:
                continue
            next_results.append((f"{prefix}.{key}".lstrip("."), node[key]))
        for idx in indexes:
            expanded: list[tuple[str, Any]] = []
            for prefix, node in next_results:
                if not isinstance(node, list):
                    continue
                if idx == "*":
                    expanded.extend(
                        (f"{prefix}[{i}]", value) for i, value in enumerate(node)
                    )
                else:
                    i = int(idx)
                    if 0 <= i < len(node):
                        expanded.append((f"{prefix}[{i}]", node[i]))
            next_results = expanded
        results = next_results
    return results


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_range(rule: Rule, doc: Any, report: ValidationReport) -> None:
    lo, hi = rule.si_bounds()
    for path, value in (pair for p in rule.paths for pair in _resolve(doc, p)):
        if not _is_number(value):
            continue  # schema rule owns type errors
        if math.isnan(value):
            continue  # finiteness handled by waypoint/schema checks
        bound_txt = _bounds_text(rule)
        if lo is not None and (value <= lo if rule.min_exclusive else value < lo):
            report.add(rule.id, path, f"value below allowed {bound_txt}", value)
        elif hi is not None and (value >= hi if rule.max_exclusive else value > hi):
            report.add(rule.id, path, f"value above allowed {bound_txt}", value)


def _bounds_text(rule: Rule) -> str:
    lo, hi = rule.si_bounds()
    left = "(" if rule.min_exclusive else "["
    right = ")" if rule.max_exclusive else "]"
    lo_txt = "-inf" if lo is None else f"{lo:g}"
    hi_txt = "inf" if hi is None else f"{hi:g}"
    suffix = " (SI units)" if rule.unit not in ("", "m/s", "m", "deg", "ratio") else ""
    return f"range {left}{lo_txt}, {hi_txt}{right}{suffix}"


def _lat_lon_pairs(path: str, value: Any) -> list[tuple[str, str, float, float]]:
    """Extract (lat_path, lon_path, lat, lon) pairs from a resolved node.

    params arrays use slots 4/5; 3-element position arrays use slots 0/1;
    HomeLocation-style objects use Latitude/Longitude keys.
    """
    if isinstance(value, list) and len(value) == 7:
        lat, lon = value[4], value[5]
        if _is_number(lat) and _is_number(lon):
            return [(f"{path}[4]", f"{path}[5]", float(lat), float(lon))]
        return []
    if isinstance(value, list) and len(value) == 3:
        lat, lon = value[0], value[1]
        if _is_number(lat) and _is_number(lon):
            return [(f"{path}[0]", f"{path}[1]", float(lat), float(lon))]
        return []
    if isinstance(value, dict) and "Latitude" in value and "Longitude" in value:
        lat, lon = value["Latitude"], value["Longitude"]
        if _is_number(lat) and _is_number(lon):
            return [(f"{path}.Latitude", f"{path}.Longitude", float(lat), float(lon))]
    return []


def _check_lat_lon(rule: Rule, doc: Any, report: ValidationReport) -> None:
    for path, value in (pair for p in rule.paths for pair in _resolve(doc, p)):
        for lat_path, lon_path, lat, lon in _lat_lon_pairs(path, value):
            # NaN/inf coordinates are reported by the finiteness check instead.
            if math.isfinite(lat) and not -90.0 <= lat <= 90.0:
                report.add(rule.id, lat_path, "latitude outside [-90, 90]", lat)
            if math.isfinite(lon) and not -180.0 <= lon <= 180.0:
                report.add(rule.id, lon_path, "longitude outside [-180, 180]", lon)


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle ground distance in meters."""
    r = 6371000.0
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = math.radians(lat2 - lat1)
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * r * math.asin(math.sqrt(a))


def _require(report: ValidationReport, rule_id: str, node: dict, path: str,
             key: str, kinds: tuple[type, ...], kind_name: str) -> bool:
    full = f"{path}.{key}" if path else key
    if key not in node:
        report.add(rule_id, full, f"missing required field ({kind_name})")
        return False
    value = node[key]
    if kinds == (bool,):
        ok = isinstance(value, bool)
    else:
        ok = isinstance(value, kinds) and not isinstance(value, bool)
    if not ok:
        report.add(rule_id, full, f"field must be {kind_name}", value)
        return False
    return True


_NUM = (int, float)


def _check_mission_schema(rule: Rule, doc: Any, report: ValidationReport) -> None:
    if not isinstance(doc, dict):
        report.add(rule.id, "", "document is not a JSON object", type(doc).__name__)
        return
    mission = doc.get("mission", doc)
    prefix = "mission" if "mission" in doc else ""
    if not isinstance(mission, dict):
        report.add(rule.id, prefix, "mission section is not an object")
        return
    _require(report, rule.id, mission, prefix, "cruiseSpeed", _NUM, "number")
    _require(report, rule.id, mission, prefix, "hoverSpeed", _NUM, "number")
    home_key = f"{prefix}.plannedHomePosition".lstrip(".")
    home = mission.get("plannedHomePosition")
    if not isinstance(home, list) or len(home) != 3 or not all(_is_number(v) for v in home):
        report.add(rule.id, home_key, "plannedHomePosition must be [lat, lon, alt] numbers",
                   home)
    items = mission.get("items")
    items_key = f"{prefix}.items".lstrip(".")
    if not isinstance(items, list) or not items:
        report.add(rule.id, items_key, "items must be a non-empty array", items)
        return
    for i, item in enumerate(items):
        ipath = f"{items_key}[{i}]"
        if not isinstance(item, dict):
            report.add(rule.id, ipath, "item is not an object", item)
            continue
        _require(report, rule.id, item, ipath, "Altitude", _NUM, "number")
        _require(report, rule.id, item, ipath, "AltitudeMode", (int,), "integer")
        _require(report, rule.id, item, ipath, "autoContinue", (bool,), "boolean")
        _require(report, rule.id, item, ipath, "command", (int,), "integer")
        _require(report, rule.id, item, ipath, "frame", (int,), "integer")
        _require(report, rule.id, item, ipath, "type", (str,), "string")
        params = item.get("params")
        if not isinstance(params, list) or len(params) != 7 or not all(
            p is None or _is_number(p) for p in params
        ):
            report.add(rule.id, f"{ipath}.params",
                       "params must be 7 numbers or nulls", params)
    first = items[0]
    if isinstance(first, dict) and first.get("command") != TAKEOFF_COMMAND:
        report.add(rule.id, f"{items_key}[0].command",
                   f"first item must be a takeoff (command {TAKEOFF_COMMAND})",
                   first.get("command"))


def _check_waypoints(rule: Rule, doc: Any, report: ValidationReport) -> None:
    """Waypoint validity: finite coordinates, positive altitude, bounded legs."""
    mission = doc.get("mission", doc) if isinstance(doc, dict) else {}
    items = mission.get("items") if isinstance(mission, dict) else None
    if not isinstance(items, list):
        return
    prefix = "mission.items" if "mission" in doc else "items"
    max_leg = float(rule.args.get("max_leg_m", 10000.0))
    previous: tuple[int, float, float] | None = None
    for i, item in enumerate(items):
        if not isinstance(item, dict):
            continue
        alt = item.get("Altitude")
        if _is_number(alt):
            if not math.isfinite(alt):
                report.add(rule.id, f"{prefix}[{i}].Altitude",
                           "altitude must be finite", alt)
            elif alt <= 0:
                report.add(rule.id, f"{prefix}[{i}].Altitude",
                           "waypoint altitude must be positive", alt)
        params = item.get("params")
        pairs = _lat_lon_pairs(f"{prefix}[{i}].params", params) if isinstance(params, list) else []
        for lat_path, lon_path, lat, lon in pairs:
            if not math.isfinite(lat) or not math.isfinite(lon):
                report.add(rule.id, lat_path if not math.isfinite(lat) else lon_path,
                           "coordinate must be finite", lat if not math.isfinite(lat) else lon)
                continue
            if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
                continue  # out-of-range coords are lat_lon_valid's finding
            if previous is not None:
                _j, plat, plon = previous
                leg = haversine_m(plat, plon, lat, lon)
                if leg > max_leg:
                    report.add(rule.id, lat_path.rsplit("[", 1)[0],
                               f"leg from item {previous[0]} is {leg:.0f} m, "
                               f"over the {max_leg:.0f} m limit", leg)
            previous = (i, lat, lon)


def _check_sim_schema(rule: Rule, doc: Any, report: ValidationReport) -> None:
    if not isinstance(doc, dict):
        report.add(rule.id, "", "document is not a JSON object", type(doc).__name__)
        return
    sim = doc.get("SimulatorSettings")
    if not isinstance(sim, dict):
        report.add(rule.id, "SimulatorSettings", "missing SimulatorSettings object")
        weather = None
    else:
        weather = sim.get("Weather")
    wpath = "SimulatorSettings.Weather"
    if weather is not None or sim is not None:
        if not isinstance(weather, dict):
            if sim is not None:
                report.add(rule.id, wpath, "missing Weather object")
        else:
            for key in ("RainIntensity", "WindSpeed", "WindDirection", "Visibility"):
                _require(report, rule.id, weather, wpath, key, _NUM, "number")
            if "LightIntensity" in weather and not _is_number(weather["LightIntensity"]):
                report.add(rule.id, f"{wpath}.LightIntensity",
                           "field must be number", weather["LightIntensity"])
    vehicles = doc.get("Vehicles")
    if not isinstance(vehicles, dict) or not vehicles:
        report.add(rule.id, "Vehicles", "at least one vehicle is required", vehicles)
        return
    for name, vehicle in vehicles.items():
        vpath = f"Vehicles.{name}"
        if not isinstance(vehicle, dict):
            report.add(rule.id, vpath, "vehicle is not an object", vehicle)
            continue
        _require(report, rule.id, vehicle, vpath, "VehicleType", (str,), "string")
        pose = vehicle.get("Pose")
        if not isinstance(pose, dict):
            report.add(rule.id, f"{vpath}.Pose", "missing Pose object")
        else:
            for key in ("X", "Y", "Z", "Roll", "Pitch", "Yaw"):
                _require(report, rule.id, pose, f"{vpath}.Pose", key, _NUM, "number")
        home = vehicle.get("HomeLocation")
        if not isinstance(home, dict):
            report.add(rule.id, f"{vpath}.HomeLocation", "missing HomeLocation object")
        else:
            for key in ("Latitude", "Longitude", "Altitude"):
                _require(report, rule.id, home, f"{vpath}.HomeLocation", key, _NUM, "number")


def _check_max_distance_from_home(rule: Rule, doc: Any, report: ValidationReport) -> None:
    """Every geolocated item must stay within args/max of the planned home."""
    mission = doc.get("mission", doc) if isinstance(doc, dict) else {}
    home = mission.get("plannedHomePosition") if isinstance(mission, dict) else None
    if not (isinstance(home, list) and len(home) == 3 and all(_is_number(v) for v in home)):
        return
    lo, hi = rule.si_bounds()
    limit = hi if hi is not None else float(rule.args.get("max_m", math.inf))
    items = mission.get("items") or []
    prefix = "mission.items" if "mission" in doc else "items"
    for i, item in enumerate(items):
        if not isinstance(item, dict) or not isinstance(item.get("params"), list):
            continue
        for _lat_path, _lon_path, lat, lon in _lat_lon_pairs(f"{prefix}[{i}].params",
                                                             item["params"]):
            if not (math.isfinite(lat) and math.isfinite(lon)):
                continue
            dist = haversine_m(float(home[0]), float(home[1]), lat, lon)
            if dist > limit:
                report.add(rule.id, f"{prefix}[{i}].params",
                           f"{dist:.0f} m from home exceeds {limit:.0f} m", dist)


_CUSTOM_CHECKS = {
    "mission_schema": _check_mission_schema,
    "waypoint_validity": _check_waypoints,
    "sim_schema": _check_sim_schema,
}

_PREDICATES = {
    "range": _check_range,
    "lat_lon_valid": _check_lat_lon,
    "max_distance_from_home": _check_max_distance_from_home,
}


def _apply_ruleset(doc: dict, ruleset: RuleSet, report: ValidationReport) -> None:
    for rule in ruleset.rules:
        if rule.predicate == "custom":
            check = _CUSTOM_CHECKS.get(rule.args.get("check", ""))
            if check is None:
                raise ValueError(f"rule {rule.id}: unknown custom check {rule.args}")
            check(rule, doc, report)
        elif rule.predicate == "required":
            for path in rule.paths:
                if not _resolve(doc, path):
                    report.add(rule.id, path, "missing required field")
        elif rule.predicate in _PREDICATES:
            _PREDICATES[rule.predicate](rule, doc, report)
        else:
            raise ValueError(f"rule {rule.id}: unknown predicate {rule.predicate!r}")


def validate_mission(plan: MissionPlan | dict, ruleset: RuleSet | None = None) -> ValidationReport:
    """Check a mission plan (or raw document) against the ruleset.

    All violations are reported, never just the first; well-typed input
    never raises.
    """
    doc = plan.to_document() if isinstance(plan, MissionPlan) else plan
    report = ValidationReport()
    _apply_ruleset(doc, ruleset or default_mission_ruleset(), report)
    return report


def validate_sim_settings(settings: SimSettings | dict,
                          ruleset: RuleSet | None = None) -> ValidationReport:
    doc = settings.to_document() if isinstance(settings, SimSettings) else settings
    report = ValidationReport()
    _apply_ruleset(doc, ruleset or default_env_ruleset(), report)
    return report


# Generation

def _extract_json_document(response: str) -> dict:
    candidates = _FENCE_RE.findall(response)
    brace = response.find("{")
    if brace != -1:
        candidates.append(response[brace:])
    for candidate in candidates:
        for attempt in (candidate, _balanced(candidate)):
            if attempt is None:
                continue
            try:
                data = json.loads(attempt)
            except json.JSONDecodeError:
                continue
            if isinstance(data, dict):
                return data
    raise UnparseableScript("response contains no JSON object")


def _balanced(text: str) -> str | None:
    start = text.find("{")
    if start == -1:
        return None
    depth = 0
    for i in range(start, len(text)):
        if text[i] == "{":
            depth += 1
        elif text[i] == "}":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    return None


def _mission_prompt(blueprint: ScenarioBlueprint, schema_sample: str | None,
                    ruleset: RuleSet | None) -> str:
    spec = builtin_spec("mission")
    if schema_sample:
        spec = replace(spec, sample_output=schema_sample)
    return assemble(replace(spec, user_goals=blueprint.mission_description))


def _env_prompt(blueprint: ScenarioBlueprint, schema_sample: str | None,
                ruleset: RuleSet | None) -> str:
    spec = builtin_spec("env")
    if schema_sample:
        spec = replace(spec, sample_output=schema_sample)
    return assemble(replace(spec, user_goals=blueprint.environment.render()))


def generate_mission(
    blueprint: ScenarioBlueprint,
    gateway: Gateway,
    schema_sample: str | None = None,
    ruleset: RuleSet | None = None,
) -> MissionPlan:
    """One-shot mission translation of the blueprint's mission description."""
    if not check_completeness(blueprint).ok:
        raise ValueError("blueprint must pass completeness before script generation")
    response = gateway.complete([ChatMessage("user", _mission_prompt(blueprint, schema_sample, ruleset))])
    return MissionPlan.from_document(_extract_json_document(response))


def generate_sim_settings(
    blueprint: ScenarioBlueprint,
    gateway: Gateway,
    schema_sample: str | None = None,
    ruleset: RuleSet | None = None,
) -> SimSettings:
    """One-shot simulator configuration from the blueprint's environment."""
    if blueprint.environment.is_empty():
        raise ValueError("blueprint environment is empty")
    response = gateway.complete([ChatMessage("user", _env_prompt(blueprint, schema_sample, ruleset))])
    return SimSettings.from_document(_extract_json_document(response))


def generate_validated(
    kind: str,
    blueprint: ScenarioBlueprint,
    gateway: Gateway,
    ruleset: RuleSet | None = None,
    max_attempts: int = 3,
    schema_sample: str | None = None,
) -> tuple[MissionPlan | SimSettings | None, ValidationReport, int]:
    """Generate-validate loop with violation feedback.

    On violations the agent is reprompted with the full violation list under
    a VALIDATION ERRORS section; the first validating artifact wins, else the
    last artifact and its failing report come back after max_attempts.
    """
    if kind not in ("mission", "env"):
        raise ValueError("kind must be 'mission' or 'env'")
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    if kind == "mission":
        base_prompt = _mission_prompt(blueprint, schema_sample, ruleset)
        parse = MissionPlan.from_document
        validate = lambda artifact: validate_mission(artifact, ruleset)  # noqa: E731
        if not check_completeness(blueprint).ok:
            raise ValueError("blueprint must pass completeness before script generation")
    else:
        base_prompt = _env_prompt(blueprint, schema_sample, ruleset)
        parse = SimSettings.from_document
        validate = lambda artifact: validate_sim_settings(artifact, ruleset)  # noqa: E731
        if blueprint.environment.is_empty():
            raise ValueError("blueprint environment is empty")

    prompt = base_prompt
    artifact: MissionPlan | SimSettings | None = None
    report = ValidationReport()
    last_parse_error: UnparseableScript | None = None
    for attempt in range(1, max_attempts + 1):
        response = gateway.complete([ChatMessage("user", prompt)])
        try:
            artifact = parse(_extract_json_document(response))
        except UnparseableScript as exc:
            last_parse_error = exc
            report = ValidationReport()
            report.add("format_validity", "", f"response did not parse: {exc}")
        else:
            last_parse_error = None
            report = validate(artifact)
            if report.ok:
                return artifact, report, attempt
        prompt = f"{base_prompt}\n\n## VALIDATION ERRORS\n{report.summary()}"
    if artifact is None:
        raise UnparseableScript(
            f"no parseable {kind} script in {max_attempts} attempts"
        ) from last_parse_error
    return artifact, report, max_attempts


# Optional use-case rules, loadable on top of the mission defaults.

USE_CASE_RULES = RuleSet.from_dict({
    "rules": [
        # search-and-rescue: the target must be a valid geolocation
        {"id": "sar_missing_person_geolocated", "predicate": "lat_lon_valid",
         "paths": ["mission.items[*].params"]},
        # package delivery: stay within 2 miles of home
        {"id": "delivery_within_2_miles", "predicate": "max_distance_from_home",
         "paths": [], "max": 2, "unit": "mi"},
    ]
})
