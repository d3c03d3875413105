# macad_config.py
from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any, Dict, Optional

_CFG_PATH = Path(__file__).with_name("config.json")
_config: dict = {}


def load_config(config_file: str | Path | None = None) -> dict:
    """Load the runtime defaults from *config_file* (``config.json`` by default)."""
    global _config
    path = Path(config_file) if config_file else _CFG_PATH
    _config = json.loads(path.read_text(encoding="utf-8"))
    return _config


def get_config_value(setting_name: str, default=None):
    """Retrieve a configuration value by name."""
    if not _config:
        load_config()
    return _config.get(setting_name, default)


def get_section(section: str) -> Dict[str, Any]:
    """Return a copy of one nested block (``learner``, ``env``, ``adversarial``)."""
    return copy.deepcopy(get_config_value(section, {}) or {})


def merge_overrides(base: Dict[str, Any], overrides: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    """Shallow-merge *overrides* into a copy of *base*; nested dicts merge one level deep."""
    merged = copy.deepcopy(base)
    for key, value in (overrides or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = {**merged[key], **value}
        else:
            merged[key] = value
    return merged
