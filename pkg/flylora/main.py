#!/usr/bin/env python3
"""
flylora - main entry point.

Loads ``.env``, resolves the layered application config and hands over to
the Typer CLI.
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv
from rich.logging import RichHandler

from .core.errors import ConfigError

CONFIG_DIR = Path(__file__).parent / 'config'
DEFAULT_ENV = 'quick'

LEVELS = {0: logging.WARNING, 1: logging.INFO}


def deep_merge(base: Dict[str, Any], overlay: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _read_json(path: Path, key: str) -> Dict[str, Any]:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(key, f"{path} not found") from e
    except json.JSONDecodeError as e:
        raise ConfigError(key, f"{path} is not valid JSON: {e}") from e


def load_app_config(env: Optional[str] = None) -> Dict[str, Any]:
    """
    Load ``config/app_config.json`` overlaid with ``config/environments/<env>.json``.

    Args:
        env: environment name; defaults to ``FLYLORA_ENV`` or ``quick``

    Returns:
        Merged configuration dictionary
    """
    env = env or os.getenv('FLYLORA_ENV', DEFAULT_ENV)
    config = _read_json(CONFIG_DIR / 'app_config.json', 'app_config')
    overlay = _read_json(CONFIG_DIR / 'environments' / f"{env}.json", 'FLYLORA_ENV')
    overlay.pop('environment', None)
    config = deep_merge(config, overlay)
    config['environment'] = env
    return config


def setup_logging(verbosity: int = 0) -> None:
    """WARNING by default, INFO with -v, DEBUG with -vv."""
    level = LEVELS.get(verbosity, logging.DEBUG)
    logger = logging.getLogger('flylora')
    logger.handlers.clear()
    handler = RichHandler(rich_tracebacks=verbosity > 1, show_path=verbosity > 1)
    handler.setFormatter(logging.Formatter('%(message)s'))
    logger.addHandler(handler)
    logger.setLevel(level)
    logger.propagate = False


def start():
    """Console entry point."""
    load_dotenv()
    from .cli import app
    app()


if __name__ == "__main__":
    start()
