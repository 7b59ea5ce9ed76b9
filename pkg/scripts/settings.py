"""
Project settings: ``settings.json`` deep-merged over built-in defaults, with a
few keys overridable from the environment (or a ``.env`` file).
"""

import copy
import json
import os
from typing import Optional

from dotenv import load_dotenv

DEFAULT_SETTINGS = {
    "project": {
        "name": "MLC-EVM",
        "description": "ML-style contracts compiled to EVM bytecode with static gas checking",
    },
    "paths": {
        "out_dir": "out",
        "logs_dir": "logs",
        "diagrams_dir": "out/diagrams",
        "templates_dir": "templates",
        "corpus_dir": "corpus",
    },
    "gas": {
        "schedule": "data/gas_schedule.txt",
        "path_cap": 100000,
        "gas_limit": 10000000,
    },
    "interpreter": {
        "stack_limit": 1024,
        "stipend": 2300,
        "max_steps": 2000000,
    },
    "corpus": {
        "floating_point_correction": 0x10000000,
        "scenario_dir": "corpus/scenarios",
    },
    "diagrams": {
        "plotly_template": "plotly_white",
    },
    "performance": {
        "max_workers": 4,
    },
}

# environment variable -> (section, key, converter)
ENV_OVERRIDES = {
    "MLC_EVM_SCHEDULE": ("gas", "schedule", str),
    "MLC_EVM_PATH_CAP": ("gas", "path_cap", int),
    "MLC_EVM_OUT_DIR": ("paths", "out_dir", str),
}


def _deep_merge(default_dict, override_dict):
    """Deep merge two dictionaries."""
    result = copy.deepcopy(default_dict)
    for key, value in override_dict.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = _deep_merge(result[key], value)
        else:
            result[key] = value
    return result


def apply_environment(settings: dict) -> dict:
    for variable, (section, key, convert) in ENV_OVERRIDES.items():
        raw = os.getenv(variable)
        if raw is None or raw == "":
            continue
        try:
            settings.setdefault(section, {})[key] = convert(raw)
        except ValueError:
            print(f"Ignoring {variable}={raw!r}: not a valid {convert.__name__}")
    return settings


def load_settings(settings_file: Optional[str] = "settings.json", quiet: bool = True) -> dict:
    """Load settings with fallback to defaults; environment overrides win."""
    load_dotenv()
    settings = copy.deepcopy(DEFAULT_SETTINGS)
    if settings_file:
        try:
            with open(settings_file, "r", encoding="utf-8") as f:
                settings = _deep_merge(settings, json.load(f))
            if not quiet:
                print(f"Loaded settings from: {settings_file}")
        except FileNotFoundError:
            if not quiet:
                print(f"Settings file '{settings_file}' not found. Using defaults.")
        except (OSError, ValueError) as e:
            print(f"Error loading settings: {e}. Using defaults.")
    return apply_environment(settings)
