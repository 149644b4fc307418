# File: app/config.py (Q2FMM)
"""
Run configuration.

Precedence: command-line flag > JSON config file > Q2FMM_* environment
variable (a .env file is honoured) > built-in default. The resolved
configuration is validated once, before any work starts, and written next to
every artifact as run_config.json.
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from app.models import RunConfig
from scripts.errors import ConfigError

load_dotenv()

logger = logging.getLogger(__name__)

LOG_LEVEL = os.getenv("Q2FMM_LOG_LEVEL", "INFO")
STATEVECTOR_QUBIT_CAP = int(os.getenv("Q2FMM_STATEVECTOR_CAP", "22"))
DENSE_MODE_CAP = int(os.getenv("Q2FMM_DENSE_QUBIT_CAP", "12"))


def _env_defaults() -> Dict[str, Any]:
    env: Dict[str, Any] = {}
    if os.getenv("Q2FMM_JOBS"):
        env["jobs"] = os.getenv("Q2FMM_JOBS")
    if os.getenv("Q2FMM_OUT_DIR"):
        env["out_dir"] = os.getenv("Q2FMM_OUT_DIR")
    return env


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Nested dict merge; None values in `override` leave the base untouched."""
    out = dict(base)
    for key, value in override.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_run_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Resolves and validates the run configuration.

    Args:
        path (str, optional): JSON config file.
        overrides (dict, optional): values from command-line flags, nested like RunConfig.

    Returns:
        RunConfig: validated configuration.

    Raises:
        ConfigError: unreadable file or any invalid value.
    """
    data = _env_defaults()
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
            data = _merge(data, json.loads(text))
        except OSError as e:
            raise ConfigError(f"cannot read config file '{path}': {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file '{path}' is not valid JSON: {e}") from e
    data = _merge(data, overrides or {})
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e
    logger.debug(f"Resolved configuration: {config.model_dump_json()}")
    return config


def parse_run_config(text: str) -> RunConfig:
    """Validates a JSON document (for example a stored run_config.json)."""
    try:
        return RunConfig.model_validate_json(text)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e


def write_run_config(config: RunConfig, out_dir: str) -> Path:
    """Writes run_config.json (sorted keys) into out_dir and returns its path."""
    target = Path(out_dir)
    target.mkdir(parents=True, exist_ok=True)
    path = target / "run_config.json"
    payload = json.dumps(config.model_dump(mode="json"), sort_keys=True, indent=2)
    path.write_text(payload + "\n", encoding="utf-8")
    return path
