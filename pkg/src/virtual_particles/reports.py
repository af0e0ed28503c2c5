"""Pass/fail reports with a versioned JSON serialisation."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

REPORT_FORMAT_VERSION = 1


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


@dataclass
class Report:
    """Outcome of a diagnostic: a verdict plus the statistics and thresholds behind it."""

    kind: str
    passed: bool
    statistics: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _clean({"format_version": REPORT_FORMAT_VERSION, **asdict(self)})

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def __bool__(self):
        return bool(self.passed)


@dataclass
class AssumptionCheck:
    name: str
    passed: bool | None  # None: not checkable with the supplied inputs
    value: float | None = None
    threshold: float | None = None
    margin: float | None = None
    detail: str = ""


@dataclass
class AssumptionReport:
    functional: str
    checks: list
    constants: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.checks)

    def __getitem__(self, name) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return _clean(
            {
                "format_version": REPORT_FORMAT_VERSION,
                "kind": "assumptions",
                "functional": self.functional,
                "passed": self.passed,
                "checks": [asdict(c) for c in self.checks],
                "constants": self.constants,
            }
        )

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)
