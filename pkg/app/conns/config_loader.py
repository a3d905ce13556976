"""
Config Loader module - run configuration for the toolkit commands
"""

import copy
import os
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import yaml

from .exceptions import ArgumentError, ConfigError, ConnsError
from .models import (
    INIT_POLICIES,
    Architecture,
    FixedPointConfig,
    GridSpec,
    NewtonConfig,
    ProjectionSpec,
    TrainingConfig,
)
from .systems.base_system import DynamicalSystem
from .systems.registry import SYSTEM_REGISTRY, load_system_file, make_system
from .systems.sampler import InitialConditionSampler

DEFAULTS_PATH = Path(__file__).resolve().parent.parent / "config.yaml"
BLOCKS = ("system", "integration", "data", "train", "fixed_point", "eval")
MAX_DT = 0.1


def _read_yaml(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            config = yaml.safe_load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"Config file not found at {path}") from exc
    except yaml.YAMLError as e:
        raise ConfigError(f"Error parsing config file {path}: {e}") from e
    if config is None:
        return {}
    if not isinstance(config, dict):
        raise ConfigError(f"Config file {path} must contain a mapping")
    return config


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge ``override`` into a copy of ``base``."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


class RunConfig:
    """
    Run config object to access config blocks and build solver settings
    """

    def __init__(self, config: Dict[str, Any], base_dir: Optional[Path] = None):
        self._config = config
        self.base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
        self.validate()

    def __getattr__(self, name: str) -> Any:
        """Look up config values as blocks, then as keys inside any block."""
        if name.startswith("_"):
            raise AttributeError(name)
        config = self.__dict__.get("_config", {})
        if name in config:
            return config[name]
        for block in BLOCKS:
            if name in config.get(block, {}):
                return config[block][name]
        raise AttributeError(f"Config has no attribute '{name}'")

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self._config)

    # paths

    @property
    def out_dir(self) -> Path:
        return self._resolve(self._config["out_dir"])

    def output_path(self, relative: str) -> Path:
        path = Path(relative)
        return path if path.is_absolute() else self.out_dir / path

    def _resolve(self, value: str) -> Path:
        path = Path(value)
        return path if path.is_absolute() else self.base_dir / path

    @property
    def params_path(self) -> Optional[Path]:
        value = self.system.get("params_path")
        return self._resolve(value) if value else None

    # builders

    def make_system(self) -> DynamicalSystem:
        if self.params_path is not None:
            return load_system_file(self.params_path)
        return make_system(self.system["name"], self.system.get("params") or {})

    def sampler(self, system: DynamicalSystem, split: str = "train") -> InitialConditionSampler:
        """Train draws use data.seed; test draws use data.seed + 1 and the test_scale factor."""
        base = self.system.get("base_state")
        base = system.default_base_state() if base is None else np.asarray(base, dtype=float)
        if base.shape != (system.n,):
            raise ConfigError(f"system.base_state must have length {system.n}")
        try:
            scale = np.broadcast_to(np.asarray(self.system["perturbation_scale"], dtype=float), base.shape)
            sampler = InitialConditionSampler(base, scale, seed=int(self.data["seed"]))
        except (ValueError, ArgumentError) as e:
            raise ConfigError(f"system.perturbation_scale: {e}") from e
        if split == "test":
            return sampler.scaled(float(self.system["test_scale"])).reseeded(int(self.data["seed"]) + 1)
        return sampler

    def newton_config(self) -> NewtonConfig:
        block = self.integration
        return NewtonConfig(tol=block["tol"], max_iter=block["max_iter"], k2_init_policy=block["k2_init_policy"])

    def fixed_point_config(self, kind: str) -> FixedPointConfig:
        block = self.fixed_point[kind]
        return FixedPointConfig(
            tol=block["tol"],
            max_iter=block["max_iter"],
            init_policy=block["init_policy"],
            fallback_tol=block.get("fallback_tol"),
        )

    def architecture(self) -> Architecture:
        block = self.train
        return Architecture(width=block["width"], hidden_layers=block["hidden_layers"], final_linear=block["final_linear"])

    def projection_spec(self) -> ProjectionSpec:
        block = self.train["projection"]
        return ProjectionSpec(mode=block["mode"], eps=block["eps"])

    def training_config(self, constrained: bool, loss_target: Optional[float] = None) -> TrainingConfig:
        block = self.train
        spec = self.projection_spec()
        return TrainingConfig(
            lr=block["lr"],
            epochs=block["epochs"],
            beta1=block["beta1"],
            beta2=block["beta2"],
            eps_adam=block["eps_adam"],
            projection_mode=spec.mode if constrained else "none",
            eps_proj=spec.eps,
            seed=block["seed"],
            loss_target=loss_target if loss_target is not None else block.get("loss_target"),
            log_every=block["log_every"],
            standardize=block["standardize"],
        )

    def grid_spec(self) -> GridSpec:
        block = self.eval["vector_field"]
        return GridSpec(points=block["points"], span=block["span"])

    # validation

    def validate(self) -> None:
        """
        Validates every field against its stated range.
        Raises ConfigError naming the offending field path.
        """
        errors: List[str] = []

        def check(ok: bool, path: str, message: str) -> None:
            if not ok:
                errors.append(f"{path}: {message}")

        def number(path: str) -> Any:
            block, *keys = path.split(".")
            value = self._config.get(block, {})
            for key in keys:
                value = value.get(key) if isinstance(value, dict) else None
            return value

        missing = [block for block in BLOCKS if not isinstance(self._config.get(block), dict)]
        if missing:
            raise ConfigError(f"Config is missing blocks: {', '.join(missing)}")

        system = self._config["system"]
        if system.get("params_path"):
            check(self._resolve(system["params_path"]).is_file(), "system.params_path", f"file not found: {system['params_path']}")
        else:
            check(system.get("name") in SYSTEM_REGISTRY, "system.name", f"unknown system '{system.get('name')}'")
        check(_is_number(system.get("test_scale")) and system["test_scale"] > 0, "system.test_scale", "must be > 0")

        dt, t_end = number("integration.dt"), number("integration.t_end")
        check(_is_number(dt) and 0 < dt <= MAX_DT, "integration.dt", f"must be in (0, {MAX_DT}]")
        check(_is_number(t_end) and t_end > 0, "integration.t_end", "must be > 0")
        check(_is_number(number("integration.tol")) and number("integration.tol") > 0, "integration.tol", "must be > 0")
        check(_is_int(number("integration.max_iter")) and number("integration.max_iter") >= 1, "integration.max_iter", "must be an integer >= 1")
        check(number("integration.k2_init_policy") in ("previous_step", "f_of_x"), "integration.k2_init_policy", "must be previous_step or f_of_x")

        for key in ("train_trajectories", "test_trajectories"):
            check(_is_int(number(f"data.{key}")) and number(f"data.{key}") >= 1, f"data.{key}", "must be an integer >= 1")
        fraction = number("data.test_fraction")
        check(fraction is None or (_is_number(fraction) and 0 < fraction < 1), "data.test_fraction", "must be in (0, 1)")
        check(_is_int(number("data.seed")) and number("data.seed") >= 0, "data.seed", "must be a non-negative integer")

        check(_is_int(number("train.width")) and number("train.width") >= 1, "train.width", "must be an integer >= 1")
        check(_is_int(number("train.hidden_layers")) and number("train.hidden_layers") >= 1, "train.hidden_layers", "must be an integer >= 1")
        check(_is_number(number("train.lr")) and number("train.lr") > 0, "train.lr", "must be > 0")
        check(_is_int(number("train.epochs")) and number("train.epochs") >= 1, "train.epochs", "must be an integer >= 1")
        target = number("train.loss_target")
        check(target is None or (_is_number(target) and target > 0), "train.loss_target", "must be > 0")
        check(number("train.projection.mode") in ("symmetric", "spectral"), "train.projection.mode", "must be symmetric or spectral")
        eps = number("train.projection.eps")
        check(_is_number(eps) and 0 < eps <= 0.5, "train.projection.eps", "must be in (0, 0.5]")

        for kind in ("constrained", "unconstrained"):
            prefix = f"fixed_point.{kind}"
            tol = number(f"{prefix}.tol")
            check(_is_number(tol) and tol > 0, f"{prefix}.tol", "must be > 0")
            check(_is_int(number(f"{prefix}.max_iter")) and number(f"{prefix}.max_iter") >= 1, f"{prefix}.max_iter", "must be an integer >= 1")
            check(number(f"{prefix}.init_policy") in INIT_POLICIES, f"{prefix}.init_policy", f"must be one of {', '.join(INIT_POLICIES)}")
            fallback = number(f"{prefix}.fallback_tol")
            check(fallback is None or (_is_number(fallback) and _is_number(tol) and fallback >= tol), f"{prefix}.fallback_tol", "must be >= tol")

        axes = number("eval.vector_field.axes")
        check(isinstance(axes, list) and len(axes) == 2 and all(_is_int(a) for a in axes) and axes[0] != axes[1], "eval.vector_field.axes", "must be two distinct indices")
        check(_is_int(number("eval.vector_field.points")) and number("eval.vector_field.points") >= 2, "eval.vector_field.points", "must be an integer >= 2")

        if errors:
            raise ConfigError("Invalid configuration: " + "; ".join(errors))


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def load_run_config(path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Build a RunConfig from the global defaults, an optional run config file and overrides.

    Relative paths in the run file resolve against the file's directory;
    ``out_dir`` may also be set with the ``CONNS_OUT_DIR`` environment variable.
    """
    config = _read_yaml(DEFAULTS_PATH)
    base_dir = Path.cwd()
    if path is not None:
        config = deep_merge(config, _read_yaml(Path(path)))
        base_dir = Path(path).resolve().parent
    if os.environ.get("CONNS_OUT_DIR"):
        config["out_dir"] = os.environ["CONNS_OUT_DIR"]
    if overrides:
        config = deep_merge(config, overrides)
    try:
        return RunConfig(config, base_dir=base_dir)
    except ConfigError:
        raise
    except ConnsError as e:
        raise ConfigError(str(e)) from e
