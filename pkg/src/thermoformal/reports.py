"""Check records shared by the hypothesis checkers and the CLI report writer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

SCHEMA_VERSION = 1


@dataclass
class Check:
    name: str
    value: float
    bound: float
    margin: float
    passed: bool
    note: str = ""
    # informational checks are reported but do not decide the exit status
    informational: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "value": _json_float(self.value),
            "bound": _json_float(self.bound),
            "margin": _json_float(self.margin),
            "pass": bool(self.passed),
            "note": self.note,
            "informational": bool(self.informational),
        }


@dataclass
class HypothesisReport:
    checks: list[Check] = field(default_factory=list)
    extras: dict[str, Any] = field(default_factory=dict)

    def add(self, name, value, bound, margin, passed, note="", informational=False):
        chk = Check(name, float(value), float(bound), float(margin), bool(passed), note,
                    bool(informational))
        self.checks.append(chk)
        return chk

    def __getitem__(self, name: str) -> Check:
        for chk in self.checks:
            if chk.name == name:
                return chk
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(c.name == name for c in self.checks)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if not c.informational)

    def extend(self, other: "HypothesisReport") -> None:
        self.checks.extend(other.checks)
        self.extras.update(other.extras)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "pass": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "extras": jsonable(self.extras),
        }


def _json_float(x: float):
    # JSON has no infinities; keep them readable and round-trippable
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(x)


def jsonable(obj):
    """Recursively convert numpy scalars/arrays and non-finite floats for json.dump."""
    import numpy as np

    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _json_float(float(obj))
    if isinstance(obj, complex):
        return [float(obj.real), float(obj.imag)]
    return obj
