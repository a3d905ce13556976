"""
System registry and construction from names or parameter files.
"""

import json
from pathlib import Path
from typing import Any, Dict, Optional, Type

import yaml

from app.conns.exceptions import ConfigError
from app.conns.logging_config import setup_logger
from app.conns.systems.base_system import DynamicalSystem
from app.conns.systems.kundur import KundurSystem
from app.conns.systems.oscillators import CubicOscillator, HopfNormalForm, LinearSystem

logger = setup_logger()

SYSTEM_REGISTRY: Dict[str, Type[DynamicalSystem]] = {
    "cubic_oscillator": CubicOscillator,
    "hopf": HopfNormalForm,
    "kundur": KundurSystem,
    "linear": LinearSystem,
}


def register_system(name: str, system_class: Type[DynamicalSystem]) -> None:
    """Make a user-defined system available to make_system and the CLI."""
    if not issubclass(system_class, DynamicalSystem):
        raise ConfigError(f"{system_class!r} is not a DynamicalSystem")
    SYSTEM_REGISTRY[name] = system_class


def get_system_class(name: str) -> Type[DynamicalSystem]:
    """Return the system class for a given name."""
    system_class = SYSTEM_REGISTRY.get(name)
    if not system_class:
        raise ConfigError(f"Unknown system: {name}. Known systems: {', '.join(sorted(SYSTEM_REGISTRY))}")
    return system_class


def make_system(name: str, params: Optional[Dict[str, Any]] = None) -> DynamicalSystem:
    """
    Build a fully wired system.

    Args:
        name: Registered system name.
        params: Parameter record; required entries depend on the system.

    Returns:
        The system instance.
    """
    system_class = get_system_class(name)
    try:
        return system_class(params or {})
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"Invalid parameters for system '{name}': {e}") from e


def load_system_file(path: Path) -> DynamicalSystem:
    """
    Build a system from a parameter file of the form {"name": ..., "params": {...}}.

    JSON is read through the YAML loader, so either format is accepted.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            spec = yaml.safe_load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"System parameter file not found at {path}") from exc
    except yaml.YAMLError as e:
        raise ConfigError(f"Error parsing system parameter file {path}: {e}") from e

    if not isinstance(spec, dict) or "name" not in spec:
        raise ConfigError(f"System parameter file {path} must contain 'name' and 'params'")
    logger.info("Registry: loading system '%s' from %s", spec["name"], path)
    return make_system(spec["name"], spec.get("params") or {})


def dump_system_file(system: DynamicalSystem, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(system.to_dict(), f, indent=2)
