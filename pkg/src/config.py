# ----------------------------------------------------------------
# RapidStab 1.0 - Configuration Manager (GPLv3)
# Copyright (C) 2025 The RapidStab Authors
# License: GNU GPL v3+ <https://www.gnu.org/licenses/gpl-3.0.txt>
# This is free software with NO WARRANTY.
# ----------------------------------------------------------------

# Standard library imports
import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

# Third party imports
import numpy as np
import pandas as pd

# Local application imports
from errors import UsageError
from spectral_core import SpectralState

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MODES = ("plain", "shifted-rotating")
N_COHERENCE_FLOOR = 8


class ConfigManager:
    """One JSON run document merged over the built-in defaults"""

    def __init__(self) -> None:
        self.config_file: Optional[Path] = None
        self._config: Dict[str, Any] = self._get_default_config()

    def load(self, path: str) -> None:
        """Load configuration from a JSON file"""
        config_path = Path(path)
        try:
            with open(config_path, "r") as f:
                document = json.load(f)
        except FileNotFoundError as e:
            raise UsageError(f"Config file not found: {config_path}") from e
        except json.JSONDecodeError as e:
            raise UsageError(f"Malformed JSON in {config_path}: {e}") from e
        if not isinstance(document, dict):
            raise UsageError(f"{config_path}: the top level must be a JSON object")
        self.config_file = config_path.resolve()
        self._config = self._deep_merge(self._get_default_config(), document)
        logger.debug("Loaded configuration from %s", self.config_file)

    def reset(self) -> None:
        self.config_file = None
        self._config = self._get_default_config()

    def save(self, path: str) -> None:
        """Save configuration to JSON file"""
        try:
            with open(path, "w") as f:
                json.dump(self._config, f, indent=4)
        except IOError as e:
            raise UsageError(f"Error saving config: {e}") from e

    def _get_default_config(self) -> Dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "mu": {"kind": "polynomial", "coefficients": [0.0, 0.0, 1.0]},
            "lambda": 1.0,
            "N": 64,
            "mode": "plain",
            "sim": {
                "dt": 1e-3,
                "t_final": None,
                "sample_every": 10,
                "initial": {"mode": 2, "component": "q"},
                "check_half_dt": True,
                "strict_domain": False,
            },
            "output_dir": "out",
            "seed": 0,
            "kernel": {"grid": 65},
            "finite_dim": {"input": None, "A": None, "B": None, "lambda": None, "random_trials": 0, "max_dim": 8},
            "saint_venant": {
                "lambda": 0.5,
                "M": 400,
                "t_final": 8.0,
                "profile": {"h_amplitude": 1.0, "v_amplitude": 0.5},
                "n_modes": 8,
            },
        }

    @staticmethod
    def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
        merged = copy.deepcopy(base)
        for key, value in override.items():
            if isinstance(value, dict) and isinstance(merged.get(key), dict):
                merged[key] = ConfigManager._deep_merge(merged[key], value)
            else:
                merged[key] = copy.deepcopy(value)
        return merged

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value using dot notation"""
        value: Any = self._config
        try:
            for k in key.split("."):
                value = value[k]
            return value
        except (KeyError, TypeError):
            return default

    def set(self, key: str, value: Any) -> None:
        """Set configuration value using dot notation"""
        keys = key.split(".")
        current = self._config
        for k in keys[:-1]:
            if not isinstance(current.get(k), dict):
                current[k] = {}
            current = current[k]
        current[keys[-1]] = value

    @property
    def base_dir(self) -> Path:
        """Relative paths in the document resolve against the document's directory"""
        return self.config_file.parent if self.config_file is not None else Path.cwd()


# =============================================================================
# RUN CONFIG
# =============================================================================


def _number(manager: ConfigManager, key: str) -> float:
    value = manager.get(key)
    try:
        return float(value)
    except (TypeError, ValueError) as e:
        raise UsageError(f"'{key}' must be a number, got {value!r}") from e


def _integer(manager: ConfigManager, key: str) -> int:
    value = manager.get(key)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise UsageError(f"'{key}' must be an integer, got {value!r}")
    return int(value)


@dataclass
class RunConfig:
    command: str
    mu: Dict[str, Any]
    decay: float
    N: int
    mode: str
    dt: float
    t_final: float
    sample_every: int
    initial: Dict[str, Any]
    check_half_dt: bool
    strict_domain: bool
    output_dir: Path
    seed: int
    kernel_grid: int
    finite_dim: Dict[str, Any]
    saint_venant: Dict[str, Any]
    base_dir: Path
    warnings: List[str] = field(default_factory=list)

    @property
    def shifted(self) -> bool:
        return self.mode == "shifted-rotating"

    @classmethod
    def from_manager(cls, manager: ConfigManager, command: str) -> "RunConfig":
        warnings: List[str] = []
        decay = _number(manager, "lambda")
        if not decay > 0.0:
            raise UsageError(f"lambda must be positive, got {decay}")
        N = _integer(manager, "N")
        if N < 1:
            raise UsageError(f"N must be at least 1, got {N}")
        if N < N_COHERENCE_FLOOR:
            message = f"N={N} is below {N_COHERENCE_FLOOR}: low-mode gains are not N-coherent"
            logger.warning(message)
            warnings.append(message)
        mode = str(manager.get("mode"))
        if mode not in MODES:
            raise UsageError(f"mode must be one of {', '.join(MODES)}, got '{mode}'")
        dt = _number(manager, "sim.dt")
        if not dt > 0.0:
            raise UsageError(f"sim.dt must be positive, got {dt}")
        t_final = 6.0 / decay if manager.get("sim.t_final") is None else _number(manager, "sim.t_final")
        if not t_final > 0.0:
            raise UsageError(f"sim.t_final must be positive, got {t_final}")
        sample_every = _integer(manager, "sim.sample_every")
        if sample_every < 1:
            raise UsageError("sim.sample_every must be at least 1")
        grid = _integer(manager, "kernel.grid")
        if grid < 2:
            raise UsageError("kernel.grid must be at least 2")
        base_dir = manager.base_dir
        output_dir = Path(str(manager.get("output_dir")))
        if not output_dir.is_absolute():
            output_dir = base_dir / output_dir
        return cls(
            command=command,
            mu=dict(manager.get("mu")),
            decay=decay,
            N=N,
            mode=mode,
            dt=dt,
            t_final=t_final,
            sample_every=sample_every,
            initial=dict(manager.get("sim.initial") or {}),
            check_half_dt=bool(manager.get("sim.check_half_dt")),
            strict_domain=bool(manager.get("sim.strict_domain")),
            output_dir=output_dir,
            seed=_integer(manager, "seed"),
            kernel_grid=grid,
            finite_dim=dict(manager.get("finite_dim")),
            saint_venant=dict(manager.get("saint_venant")),
            base_dir=base_dir,
            warnings=warnings,
        )

    def initial_state(self) -> SpectralState:
        """Ψ₀ from a unit mode or a CSV of (p, q) rows; p₁ is forced to 0 in the shifted mode"""
        spec = self.initial
        if "path" in spec:
            path = Path(str(spec["path"]))
            if not path.is_absolute():
                path = self.base_dir / path
            try:
                frame = pd.read_csv(path)
            except (OSError, pd.errors.ParserError) as e:
                raise UsageError(f"Cannot read initial coefficients from {path}: {e}") from e
            if not {"p", "q"}.issubset(frame.columns):
                raise UsageError(f"{path}: expected columns 'p' and 'q'")
            p = np.zeros(self.N)
            q = np.zeros(self.N)
            rows = min(self.N, len(frame))
            if len(frame) > self.N:
                self.warnings.append(f"Initial coefficients truncated from {len(frame)} to {self.N} modes")
            p[:rows] = frame["p"].to_numpy(dtype=float)[:rows]
            q[:rows] = frame["q"].to_numpy(dtype=float)[:rows]
            state = SpectralState(p, q)
        else:
            k = int(spec.get("mode", 2))
            component = str(spec.get("component", "q"))
            if component not in ("p", "q"):
                raise UsageError(f"initial component must be 'p' or 'q', got '{component}'")
            try:
                state = SpectralState.unit_mode(self.N, k, component)
            except ValueError as e:
                raise UsageError(str(e)) from e
        if self.shifted and state.p[0] != 0.0:
            self.warnings.append("Shifted-rotating mode: p₁ of the initial state set to 0")
            state.p[0] = 0.0
            if not np.any(state.p) and not np.any(state.q):
                raise UsageError("Initial state vanishes once p₁ = 0 is enforced")
        return state


# Singleton instance
config_manager: ConfigManager = ConfigManager()
