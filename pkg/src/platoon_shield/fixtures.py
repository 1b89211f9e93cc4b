"""Bundled data: the baseline design fixtures and the case-study config."""

from __future__ import annotations

import json
from importlib import resources

import numpy as np


def _load_json(name: str) -> dict:
    text = resources.files("platoon_shield.data").joinpath(name).read_text()
    return json.loads(text)


def _as_design(raw: dict) -> dict:
    out = {k: v for k, v in raw.items() if not k.startswith("_")}
    for key in ("L", "Pi", "K"):
        out[key] = np.asarray(raw[key], dtype=float)
    return out


def baseline_design() -> dict:
    """Security-agnostic design: H-infinity estimator gain (level 1.0425),
    its monitor, and the string-stability controller gain [0.2, 0.7]."""
    return _as_design(_load_json("baseline_design.json"))


def reference_tuned_design() -> dict:
    """Previously reported security-aware gains, for diagnostics."""
    return _as_design(_load_json("reference_tuned_design.json"))


def case_study_config_path() -> str:
    return str(resources.files("platoon_shield.data")
               .joinpath("two_vehicle_case_study.cfg"))
