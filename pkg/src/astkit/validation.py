"""Validation report shared by the blueprint and script validators."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


@dataclass(frozen=True)
class Violation:
    rule_id: str
    json_path: str
    message: str
    observed_value: Any = None


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, rule_id: str, json_path: str, message: str, observed: Any = None) -> None:
        self.violations.append(Violation(rule_id, json_path, message, observed))

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "violations": [
                {
                    "rule_id": v.rule_id,
                    "json_path": v.json_path,
                    "message": v.message,
                    "observed_value": v.observed_value,
                }
                for v in self.violations
            ],
        }

    def summary(self) -> str:
        return "\n".join(
            f"{i}. [{v.rule_id}] {v.json_path}: {v.message} (observed: {v.observed_value!r})"
            for i, v in enumerate(self.violations, start=1)
        )
