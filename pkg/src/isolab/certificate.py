"""Structured pass/fail records for the inequality chains.

A certificate is an ordered list of stages. Each stage names the inequality
it checks (``anchor``), carries node-wise statistics and/or integrated
values, the tolerance used, and a verdict. The overall verdict is the
conjunction of the stages. Serialisation is deterministic: no timestamps, fixed
key order, floats written with ``repr`` precision.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from isolab import __version__

PROOF_PATHS = ("knothe", "transport", "abp", "michael_simon", "alpha_chain", "sobolev", "isoperimetric")


def node_stats(values, mask=None) -> dict:
    a = np.asarray(values, dtype=float)
    if mask is not None:
        a = a[mask]
    a = a[np.isfinite(a)]
    if a.size == 0:
        return {"min": None, "median": None, "max": None, "count": 0}
    return {
        "min": float(a.min()),
        "median": float(np.median(a)),
        "max": float(a.max()),
        "count": int(a.size),
    }


def _clean(v: Any) -> Any:
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        x = float(v)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    return v


@dataclass
class Stage:
    name: str
    anchor: str
    passed: bool
    tolerance: float | None = None
    node_stats: dict | None = None
    values: dict = field(default_factory=dict)
    note: str = ""

    def to_dict(self) -> dict:
        d = {
            "stage": self.name,
            "anchor": self.anchor,
            "node_stats": self.node_stats,
            "integrated_values": self.values,
            "tolerance": self.tolerance,
            "pass": bool(self.passed),
        }
        if self.note:
            d["note"] = self.note
        return _clean(d)


@dataclass
class Certificate:
    proof_path: str
    stages: list[Stage] = field(default_factory=list)
    environment: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.proof_path not in PROOF_PATHS:
            raise ValueError(f"unknown proof path {self.proof_path!r}")
        self.environment.setdefault("version", __version__)

    def add(self, name: str, anchor: str, passed: bool, **kw) -> Stage:
        if not anchor:
            raise ValueError(f"stage {name!r} needs an anchor")
        st = Stage(name, anchor, bool(passed), **kw)
        self.stages.append(st)
        return st

    @property
    def passed(self) -> bool:
        return bool(self.stages) and all(s.passed for s in self.stages)

    def stage(self, name: str) -> Stage:
        for s in self.stages:
            if s.name == name:
                return s
        raise KeyError(name)

    def failures(self) -> list[str]:
        return [s.name for s in self.stages if not s.passed]

    def to_dict(self) -> dict:
        return {
            "proof_path": self.proof_path,
            "pass": self.passed,
            "environment": _clean(self.environment),
            "stages": [s.to_dict() for s in self.stages],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def summary(self) -> str:
        lines = [f"[{self.proof_path}] {'PASS' if self.passed else 'FAIL'}"]
        for s in self.stages:
            lines.append(f"  {'ok  ' if s.passed else 'FAIL'} {s.name}")
        return "\n".join(lines)
