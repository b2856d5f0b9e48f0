"""JSON-serializable reports returned by weaving and by attribute updates."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field


@dataclass
class TriggerReport:
    fired: list[tuple[str, int]] = field(default_factory=list)
    evaluated: int = 0
    errors: list[dict] = field(default_factory=list)
    cascade_depth: int = 0

    def merge(self, other: "TriggerReport") -> None:
        self.fired.extend(other.fired)
        self.evaluated += other.evaluated
        self.errors.extend(other.errors)
        self.cascade_depth = max(self.cascade_depth, other.cascade_depth)

    def to_dict(self) -> dict:
        return {
            "fired": [[name, node] for name, node in self.fired],
            "evaluated": self.evaluated,
            "errors": list(self.errors),
            "cascade_depth": self.cascade_depth,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class WeaveReport:
    rules_woven: list[str] = field(default_factory=list)
    nodes_created: int = 0
    rule_nodes_created: int = 0
    dictionary_size: int = 0
    errors: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)
