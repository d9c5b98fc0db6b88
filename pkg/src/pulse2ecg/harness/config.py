"""Run configuration: named profiles, JSON config files, config hashing.

Config files are UTF-8 JSON objects whose top-level keys mirror the CLI
sections: {"synth": {...SynthParams fields}, "stage1": {...Stage1Config},
"stage2": {...FlowConfig}, "sampler_T": int, "seed": int}. CLI flags
override file values, which override the selected profile.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

from ..errors import UsageError
from ..stage1 import Stage1Config
from ..stage2 import FlowConfig

# "paper" mirrors the published optimization settings; "desk" is sized so
# the full pipeline trains in minutes on a laptop-class CPU
PROFILES: dict[str, dict] = {
    "paper": {
        "stage1": {"batch": 128, "iters": 40_000, "lr": 2e-5, "widths": (32, 64, 64, 128, 128)},
        "stage2": {"batch": 128, "iters": 40_000, "lr": 1e-4},
    },
    "desk": {
        "stage1": {"batch": 32, "iters": 3000, "lr": 1e-3, "widths": (16, 32, 32, 64, 64)},
        "stage2": {"batch": 32, "iters": 3000, "lr": 3e-4},
    },
}


def profile_section(profile: str, section: str) -> dict:
    if profile not in PROFILES:
        raise UsageError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    return dict(PROFILES[profile].get(section, {}))


def _filter_fields(cls, values: dict) -> dict:
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise UsageError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return values


def make_stage1_config(profile: str = "desk", file_values: dict | None = None, **overrides) -> Stage1Config:
    merged = profile_section(profile, "stage1")
    merged.update(file_values or {})
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return Stage1Config(**_filter_fields(Stage1Config, merged))


def make_flow_config(profile: str = "desk", file_values: dict | None = None, **overrides) -> FlowConfig:
    merged = profile_section(profile, "stage2")
    merged.update(file_values or {})
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return FlowConfig(**_filter_fields(FlowConfig, merged))


def load_config_file(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    try:
        with open(p, encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {p} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError(f"config file {p} must hold a JSON object")
    return data


def canonical_json(obj) -> str:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        obj = dataclasses.asdict(obj)
    return json.dumps(obj, sort_keys=True, default=str)


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]
