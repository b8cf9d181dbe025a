"""Result containers for condition checks and empirical path comparisons."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

SAMPLING_NOTE = (
    "conditions are checked on a finite sample of points: a failure is a "
    "concrete counterexample, a pass is supporting evidence only"
)


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.generic):
        return v.item()
    return v


@dataclass
class ConditionResult:
    name: str
    passed: bool
    value: float
    threshold: float
    witness: dict | None = None
    detail: str = ""


@dataclass
class ConditionReport:
    conditions: list[ConditionResult] = field(default_factory=list)
    note: str = SAMPLING_NOTE

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def __getitem__(self, name: str) -> ConditionResult:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def add(self, cond: ConditionResult):
        self.conditions.append(cond)
        return cond

    def to_dict(self) -> dict:
        return _plain({"passed": self.passed, "note": self.note, "conditions": [asdict(c) for c in self.conditions]})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class ViolationStats:
    """Node-wise violation counts of an ordering or domain constraint."""

    n_paths: int
    n_nodes: int
    n_violations: int
    max_violation: float
    path_flags: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def violation_fraction(self) -> float:
        return self.n_violations / float(self.n_paths * self.n_nodes)

    def summary(self) -> dict:
        return _plain(
            {
                "n_paths": self.n_paths,
                "n_nodes": self.n_nodes,
                "n_violations": self.n_violations,
                "violation_fraction": self.violation_fraction,
                "max_violation": self.max_violation,
                "paths_violating": int(np.sum(self.path_flags)),
                **{k: v for k, v in self.extra.items() if not isinstance(v, np.ndarray)},
            }
        )

    def to_csv(self) -> str:
        """One row per path: ``path,violated,max_violation``."""
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["path", "violated", "max_violation"])
        per_path = self.extra.get("per_path_max")
        for p, flag in enumerate(self.path_flags):
            mv = per_path[p] if per_path is not None else (self.max_violation if flag else 0.0)
            w.writerow([p, int(flag), repr(float(mv))])
        return out.getvalue()
