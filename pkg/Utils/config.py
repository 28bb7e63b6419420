"""
Run configuration for the laboratory.

Values are layered: built-in defaults, then ``WINTER_NLS_*`` environment
variables (``.env`` is read with python-dotenv), then a ``--config`` file,
then explicit command-line flags.
"""

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

from dotenv import dotenv_values, load_dotenv

from Utils import constants
from Utils.errors import ConfigError

# Load environment variables
load_dotenv()

SUBCOMMANDS = ["spectrum", "stationary", "bifurcation", "evolve", "dispersive-check", "figure1"]
PSI0_KINDS = ["eigenstate", "gaussian", "stationary-state-file"]
BACKENDS = ["pde", "kernel"]

# Dotted keys used in config files and in the echoed configuration
KEY_ALIASES = {
    "psi0.kind": "psi0_kind",
    "psi0.center": "psi0_center",
    "psi0.width": "psi0_width",
    "psi0.momentum": "psi0_momentum",
    "psi0.file": "psi0_file",
    "observers.stride": "observers_stride",
    "output.path": "output_path",
    "output.format": "output_format",
}
_FIELD_TO_KEY = {value: key for key, value in KEY_ALIASES.items()}

# Fields that never appear in the echoed configuration
_NOT_ECHOED = {"output_path", "timestamp", "snapshot_path"}


@dataclass
class RunConfig:
    """Effective configuration of one CLI run. Every knob has a default."""

    subcommand: str = "spectrum"
    a: float = constants.DEFAULT_A
    alpha: float = constants.DEFAULT_ALPHA
    eta: float = constants.DEFAULT_ETA
    sigma: float = constants.DEFAULT_SIGMA
    g: int = -1
    L: Optional[float] = None
    dx: float = constants.DEFAULT_DX
    dt: float = constants.DEFAULT_DT
    t_final: float = constants.DEFAULT_T_FINAL
    q: Optional[float] = None
    psi0_kind: str = "gaussian"
    psi0_center: float = 5.0
    psi0_width: float = 0.5
    psi0_momentum: float = 0.0
    psi0_file: Optional[str] = None
    observers_stride: int = constants.OBSERVER_STRIDE
    renormalize: bool = True
    p_points: int = constants.P_POINTS
    lambda_max: Optional[float] = None
    n: Optional[int] = None
    eta_min: float = constants.FIGURE1_ETA_RANGE[0]
    ell: Optional[int] = None
    backend: str = "pde"
    seed: int = 0
    times: List[float] = field(default_factory=lambda: list(constants.DISPERSIVE_TIMES))
    output_path: Optional[str] = None
    output_format: str = "json"
    snapshot_path: Optional[str] = None
    timestamp: bool = False

    def __post_init__(self):
        """Validate the configuration after construction."""
        if self.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"Unknown subcommand '{self.subcommand}'")
        if not self.a > 0:
            raise ConfigError(f"a must be positive, got {self.a}")
        if self.g not in (-1, 1):
            raise ConfigError(f"g must be -1 (focusing) or +1 (defocusing), got {self.g}")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if not self.dx > 0 or not self.dt > 0:
            raise ConfigError("dx and dt must be positive")
        if not self.t_final > 0:
            raise ConfigError(f"t_final must be positive, got {self.t_final}")
        if self.L is not None and self.L <= self.a:
            raise ConfigError(f"L must exceed a, got L={self.L}")
        if self.psi0_kind not in PSI0_KINDS:
            raise ConfigError(f"psi0.kind must be one of {PSI0_KINDS}")
        if self.psi0_kind == "stationary-state-file" and not self.psi0_file:
            raise ConfigError("psi0.kind=stationary-state-file needs psi0.file")
        if self.observers_stride < 1:
            raise ConfigError("observers.stride must be at least 1")
        if self.ell is not None and self.ell not in (1, 2):
            raise ConfigError(f"ell must be 1 or 2, got {self.ell}")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}")
        if self.output_format not in ("csv", "json"):
            raise ConfigError("output.format must be csv or json")
        if self.p_points < 8:
            raise ConfigError("p_points must be at least 8")
        if not self.times or any(t <= 0 for t in self.times):
            raise ConfigError("times must be a non-empty list of positive values")

    @property
    def regime(self) -> str:
        return "focusing" if self.g == -1 else "defocusing"

    @property
    def effective_L(self) -> float:
        return self.L if self.L is not None else self.a + constants.DEFAULT_L_MARGIN

    @property
    def effective_q(self) -> float:
        return self.q if self.q is not None else self.a

    def to_echo(self) -> Dict[str, Any]:
        """Configuration as written into artifact headers (dotted keys)."""
        echo = {}
        for name, value in asdict(self).items():
            if name in _NOT_ECHOED:
                continue
            echo[_FIELD_TO_KEY.get(name, name)] = value
        return echo

    @classmethod
    def from_sources(cls, subcommand: str,
                     file_values: Optional[Dict[str, Any]] = None,
                     cli_values: Optional[Dict[str, Any]] = None,
                     environ: Optional[Dict[str, str]] = None) -> "RunConfig":
        """
        Build a RunConfig from layered sources.

        Args:
            subcommand: CLI subcommand name
            file_values: Values read from a --config file
            cli_values: Values given explicitly on the command line (None entries are ignored)
            environ: Environment mapping (defaults to os.environ)

        Returns:
            Validated RunConfig
        """
        merged: Dict[str, Any] = {}
        merged.update(_environment_values(os.environ if environ is None else environ))
        merged.update(_normalize_keys(file_values or {}))
        merged.update({k: v for k, v in _normalize_keys(cli_values or {}).items() if v is not None})
        merged.pop("subcommand", None)

        known = {f.name: f for f in fields(cls)}
        kwargs = {"subcommand": subcommand}
        for name, raw in merged.items():
            if name not in known:
                raise ConfigError(f"Unknown configuration key '{_FIELD_TO_KEY.get(name, name)}'")
            kwargs[name] = _coerce(name, raw)
        return cls(**kwargs)


def _normalize_keys(values: Dict[str, Any]) -> Dict[str, Any]:
    return {KEY_ALIASES.get(key, key.replace("-", "_")): value for key, value in values.items()}


def _environment_values(environ: Dict[str, str]) -> Dict[str, Any]:
    """Pick WINTER_NLS_<KEY> variables that name configuration fields."""
    names = {f.name for f in fields(RunConfig)} - {"subcommand"}
    values = {}
    for name in names:
        raw = environ.get(constants.ENV_PREFIX + name.upper())
        if raw not in (None, ""):
            values[name] = raw
    return values


_INT_FIELDS = {"g", "seed", "observers_stride", "p_points", "n", "ell"}
_BOOL_FIELDS = {"renormalize", "timestamp"}
_FLOAT_FIELDS = {"a", "alpha", "eta", "sigma", "L", "dx", "dt", "t_final", "q",
                 "psi0_center", "psi0_width", "psi0_momentum", "lambda_max", "eta_min"}


def _coerce(name: str, raw: Any) -> Any:
    """Convert a raw (usually string) value to the field's type."""
    if raw is None:
        return None
    try:
        if name in _FLOAT_FIELDS:
            if isinstance(raw, str) and raw.strip().lower() in ("", "none", "null"):
                return None
            return float(raw)
        if name in _INT_FIELDS:
            if isinstance(raw, str) and raw.strip().lower() in ("", "none", "null"):
                return None
            value = float(raw)
            if value != int(value):
                raise ValueError(f"not an integer: {raw}")
            return int(value)
        if name in _BOOL_FIELDS:
            if isinstance(raw, bool):
                return raw
            text = str(raw).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw}")
        if name == "times":
            if isinstance(raw, str):
                return [float(item) for item in raw.replace(";", ",").split(",") if item.strip()]
            return [float(item) for item in raw]
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid value for '{_FIELD_TO_KEY.get(name, name)}': {e}") from e
    return raw


def load_config_file(path: str) -> Dict[str, Any]:
    """
    Read a configuration file.

    Accepts flat key=value text, plain JSON, a JSON artifact written by the
    CLI (its ``config`` block is used) or a CSV artifact written by the CLI
    (its ``# config:`` header line is used).

    Args:
        path: Path to the configuration file

    Returns:
        Dictionary of raw configuration values
    """
    file_path = Path(path)
    if not file_path.is_file():
        raise ConfigError(f"Config file not found: {path}")

    text = file_path.read_text(encoding="utf-8")
    stripped = text.lstrip()

    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Invalid JSON config {path}: {e}") from e
        if isinstance(data.get("config"), dict):
            data = data["config"]
        return dict(data)

    if stripped.startswith("#"):
        for line in text.splitlines():
            if line.startswith("# config:"):
                try:
                    return dict(json.loads(line[len("# config:"):]))
                except json.JSONDecodeError as e:
                    raise ConfigError(f"Corrupt config header in {path}: {e}") from e
        raise ConfigError(f"No '# config:' header in {path}")

    return {key: value for key, value in dotenv_values(file_path).items() if value is not None}


def worker_count() -> int:
    """Worker pool size for parameter sweeps (WINTER_NLS_THREADS caps it)."""
    cores = os.cpu_count() or 1
    raw = os.getenv(constants.THREADS_ENV, "")
    if not raw:
        return cores
    try:
        requested = int(raw)
    except ValueError as e:
        raise ConfigError(f"{constants.THREADS_ENV} must be an integer, got '{raw}'") from e
    if requested < 1:
        raise ConfigError(f"{constants.THREADS_ENV} must be at least 1")
    return min(requested, cores)


def configure_logging(level: Optional[str] = None) -> None:
    """Install a single stream handler on the root logger."""
    level_name = (level or os.getenv(constants.LOG_LEVEL_ENV, "WARNING")).upper()
    numeric = getattr(logging, level_name, None)
    if not isinstance(numeric, int):
        raise ConfigError(f"Unknown log level '{level_name}'")
    logging.basicConfig(
        level=numeric,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        force=True,
    )
