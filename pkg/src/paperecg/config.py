"""Run configuration: defaults, provenance tags, JSON overrides, resolved echo.

Every default carries a provenance tag: ``published`` for values stated in the
method description, ``calibrated`` for values tuned on the synthetic corpus,
``convention`` for plain engineering defaults.
"""
from __future__ import annotations

import copy
import json

from .edgeline import HoughConfig
from .layout import DEFAULT_PROFILES, SheetType

PUBLISHED, CALIBRATED, CONVENTION = "published", "calibrated", "convention"


def _hough_defaults() -> dict:
    return HoughConfig().to_dict()


def _profile_defaults() -> dict:
    return {st.label: p.to_dict() for st, p in DEFAULT_PROFILES.items()}


DEFAULTS = {
    "seed": 0,
    "jobs": 1,
    "deskew": {"hough": _hough_defaults(), "sigma_fraction": 0.33},
    "profiles": _profile_defaults(),
    "extract": {"speed_mm_s": 25.0, "gain_mm_mv": 10.0, "trailing_threshold": 200, "upsample": 8},
    "train": {"epochs": 15, "lr": 1e-3, "hidden": 150, "layers": 1, "dropout": 0.25,
              "window": 500, "record_length": 3000, "fractions": [0.70, 0.15, 0.15],
              "lead_set": "V1", "pos_weight": "auto"},
    "search": {"epochs": [5, 10, 15], "lr": [1e-2, 1e-3, 1e-4, 1e-5], "hidden": [100, 150, 200],
               "layers": [1, 2, 3], "lead_sets": ["V1", "V2", "both"]},
}

# dotted key -> provenance; anything not listed inherits from its nearest parent
PROVENANCE = {
    "seed": CONVENTION,
    "jobs": CONVENTION,
    "deskew.hough": CALIBRATED,
    "deskew.sigma_fraction": PUBLISHED,
    "profiles": CALIBRATED,
    "profiles.type1.threshold": CALIBRATED,
    "profiles.type1.lookup": CALIBRATED,
    "extract.speed_mm_s": PUBLISHED,
    "extract.gain_mm_mv": PUBLISHED,
    "extract.trailing_threshold": CALIBRATED,
    "extract.upsample": PUBLISHED,
    "train": PUBLISHED,
    "train.record_length": PUBLISHED,
    "train.pos_weight": PUBLISHED,
    "search": PUBLISHED,
}


def provenance(key: str) -> str:
    parts = key.split(".")
    while parts:
        k = ".".join(parts)
        if k in PROVENANCE:
            return PROVENANCE[k]
        parts.pop()
    return CONVENTION


def merge(base: dict, override: dict, path: str = "") -> dict:
    """Deep merge; unknown keys are rejected so typos do not pass silently."""
    out = copy.deepcopy(base)
    for k, v in override.items():
        here = f"{path}.{k}" if path else k
        if k not in out:
            raise ValueError(f"unknown config key {here!r}")
        if isinstance(out[k], dict) and isinstance(v, dict):
            out[k] = merge(out[k], v, here)
        else:
            out[k] = v
    return out


def load(path=None, overrides: dict | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        with open(path, encoding="utf-8") as fh:
            try:
                user = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        if not isinstance(user, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        if "values" in user and "provenance" in user:
            user = user["values"]      # a resolved-config echo from an earlier run
        cfg = merge(cfg, user)
    if overrides:
        cfg = merge(cfg, overrides)
    return cfg


def hough_config(cfg: dict) -> HoughConfig:
    return HoughConfig(**cfg["deskew"]["hough"])


def profile_overrides(cfg: dict, sheet_type) -> dict:
    """Fields of the configured profile that differ from the shipped default."""
    st = SheetType.parse(sheet_type)
    want = cfg["profiles"][st.label]
    have = DEFAULT_PROFILES[st].to_dict()
    return {k: v for k, v in want.items() if k != "sheet_type" and v != have[k]}


def _annotate(node, path=""):
    if isinstance(node, dict):
        return {k: _annotate(v, f"{path}.{k}" if path else k) for k, v in node.items()}
    return {"value": node, "provenance": provenance(path)}


def resolved_json(cfg: dict, command: str, args: dict | None = None) -> str:
    """Fully resolved parameters with provenance; ``--config`` accepts this file back."""
    doc = {"command": command, "args": args or {}, "values": cfg, "provenance": _annotate(cfg)}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def from_resolved(text: str) -> dict:
    doc = json.loads(text)
    return merge(DEFAULTS, doc["values"])
