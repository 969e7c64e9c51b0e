"""Scenario configuration: flat ``key = value`` files with strict validation.

Every recognized key has a documented default; unknown keys, bad values and
violated invariants all fail loudly naming the offending key.  Paths are
resolved against the config file's own directory so a config loads the same
way from any working directory, and the resolved form can be echoed back out
and reloaded identically.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

from .dispatch import DispatchParams
from .mip import SolverConfig
from .reposition import RepositionError, RepositionParams

MODE_NONE = "none"
MODE_REACT = "react"
MODE_FDR = "fdr"
MODES = (MODE_NONE, MODE_REACT, MODE_FDR)

FORECAST_PERFECT = "perfect"
FORECAST_NAIVE = "naive"
FORECASTS = (FORECAST_PERFECT, FORECAST_NAIVE)

DEFAULT_SPEED_MPS = 8.33  # ~30 km/h urban average


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully resolved scenario description.

    ``max_wait_s`` doubles as the planner's reach limit: a parked vehicle is
    considered able to serve an area exactly when it can get there within
    the waiting time customers accept.
    """

    dataset: str
    fleet_base: int
    bbox: tuple[float, float, float, float] | None = None
    cell_size_m: float = 1000.0
    speed_mps: float = DEFAULT_SPEED_MPS
    matrix_path: str | None = None
    vehicle_factor: float = 1.0
    capacity: int = 4
    max_wait_s: float = 480.0
    ride_factor: float = 1.5
    ride_buffer_s: float = 300.0
    dwell_s: float = 30.0
    horizon_s: float = 1800.0
    interval_s: float = 180.0
    requests_per_horizon: float = 5.0
    touring_discount: float = 0.7
    coverage_time_factor: float = 1.05
    coverage_weight: float = 1000.0
    movement_weight: float = 10.0
    mode: str = MODE_NONE
    forecast: str | None = None
    start_time: float = 0.0
    end_time: float = 86400.0
    warmup_s: float = 21600.0
    seed: int = 1
    out_dir: str = "out"
    position_update_s: float = 30.0
    solver_time_limit_s: float = 30.0
    solver_node_limit: int = 100_000
    solver_gap_rel: float = 0.005
    sanity_margin_m: float = 5000.0

    @property
    def fleet_size(self) -> int:
        return int(round(self.fleet_base * self.vehicle_factor))

    def dispatch_params(self) -> DispatchParams:
        return DispatchParams(capacity=self.capacity, max_wait_s=self.max_wait_s,
                              ride_factor=self.ride_factor,
                              ride_buffer_s=self.ride_buffer_s, dwell_s=self.dwell_s)

    def reposition_params(self) -> RepositionParams:
        return RepositionParams(horizon_s=self.horizon_s, interval_s=self.interval_s,
                                requests_per_horizon=self.requests_per_horizon,
                                reach_limit_s=self.max_wait_s,
                                touring_discount=self.touring_discount,
                                coverage_time_factor=self.coverage_time_factor,
                                coverage_weight=self.coverage_weight,
                                movement_weight=self.movement_weight)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(time_limit_s=self.solver_time_limit_s,
                            node_limit=self.solver_node_limit,
                            gap_rel=self.solver_gap_rel)


_PATH_KEYS = ("dataset", "matrix_path", "out_dir")
_STR_KEYS = _PATH_KEYS + ("mode", "forecast")
_INT_KEYS = ("fleet_base", "capacity", "seed", "solver_node_limit")
_FLOAT_KEYS = ("cell_size_m", "speed_mps", "vehicle_factor", "max_wait_s",
               "ride_factor", "ride_buffer_s", "dwell_s", "horizon_s",
               "interval_s", "requests_per_horizon", "touring_discount",
               "coverage_time_factor", "coverage_weight", "movement_weight",
               "start_time", "end_time", "warmup_s", "position_update_s",
               "solver_time_limit_s", "solver_gap_rel", "sanity_margin_m")
_ALL_KEYS = ("bbox",) + _STR_KEYS + _INT_KEYS + _FLOAT_KEYS

# order used when echoing a resolved config back to disk
_ECHO_ORDER = tuple(f.name for f in dataclasses.fields(ScenarioConfig))


def _convert(key: str, raw: str):
    try:
        if key == "bbox":
            parts = [float(p) for p in raw.split(",")]
            if len(parts) != 4:
                raise ValueError
            return tuple(parts)
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            value = float(raw)
            if value != value or value in (float("inf"), float("-inf")):
                raise ValueError
            return value
        return raw
    except ValueError:
        raise ConfigError(f"bad value for key {key!r}: {raw!r}") from None


def validate_config(cfg: ScenarioConfig) -> None:
    def bad(key: str, why: str):
        return ConfigError(f"invalid value for key {key!r}: {why}")

    if cfg.mode not in MODES:
        raise bad("mode", f"must be one of {', '.join(MODES)}")
    if cfg.forecast is not None and cfg.forecast not in FORECASTS:
        raise bad("forecast", f"must be one of {', '.join(FORECASTS)}")
    if cfg.mode == MODE_FDR and cfg.forecast is None:
        raise ConfigError("mode = fdr requires the key 'forecast' (perfect or naive)")
    if cfg.fleet_base < 1:
        raise bad("fleet_base", "must be at least 1")
    if cfg.vehicle_factor <= 0:
        raise bad("vehicle_factor", "must be positive")
    if cfg.fleet_size < 1:
        raise bad("vehicle_factor", "scaled fleet size rounds to zero")
    if cfg.cell_size_m <= 0:
        raise bad("cell_size_m", "must be positive")
    if cfg.speed_mps <= 0:
        raise bad("speed_mps", "must be positive")
    if cfg.bbox is not None:
        min_lat, min_lon, max_lat, max_lon = cfg.bbox
        if not (min_lat < max_lat and min_lon < max_lon):
            raise bad("bbox", "expected min_lat,min_lon,max_lat,max_lon with "
                              "positive extent")
    if cfg.capacity < 1:
        raise bad("capacity", "must be at least 1")
    for key in ("max_wait_s", "ride_buffer_s", "horizon_s", "interval_s",
                "position_update_s", "solver_time_limit_s"):
        if getattr(cfg, key) <= 0:
            raise bad(key, "must be positive")
    if cfg.ride_factor < 1.0:
        raise bad("ride_factor", "must be at least 1")
    if cfg.dwell_s < 0 or cfg.sanity_margin_m < 0 or cfg.warmup_s < 0:
        key = ("dwell_s" if cfg.dwell_s < 0 else
               "sanity_margin_m" if cfg.sanity_margin_m < 0 else "warmup_s")
        raise bad(key, "must not be negative")
    if cfg.end_time <= cfg.start_time:
        raise bad("end_time", "must be after start_time")
    if cfg.start_time + cfg.warmup_s > cfg.end_time:
        raise bad("warmup_s", "warm-up extends past end_time")
    if cfg.solver_node_limit < 1:
        raise bad("solver_node_limit", "must be at least 1")
    if not 0.0 <= cfg.solver_gap_rel < 1.0:
        raise bad("solver_gap_rel", "must be in [0, 1)")
    try:
        cfg.reposition_params().validate()
    except RepositionError as exc:
        raise ConfigError(f"invalid repositioning parameters: {exc}") from None
    if not os.path.isfile(cfg.dataset):
        raise bad("dataset", f"file not found: {cfg.dataset}")
    if cfg.matrix_path is not None and not os.path.isfile(cfg.matrix_path):
        raise bad("matrix_path", f"file not found: {cfg.matrix_path}")


def parse_config_text(text: str, base_dir: str = ".") -> ScenarioConfig:
    """Parse config text into a validated ScenarioConfig.

    Relative paths are resolved against ``base_dir``.
    """
    values: dict = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not raw:
            raise ConfigError(f"line {lineno}: empty value for key {key!r}")
        values[key] = _convert(key, raw)
    for key in ("dataset", "fleet_base"):
        if key not in values:
            raise ConfigError(f"missing required key {key!r}")
    values.setdefault("out_dir", "out")
    for key in _PATH_KEYS:
        if key in values:
            values[key] = os.path.normpath(os.path.join(base_dir, values[key]))
    cfg = ScenarioConfig(**values)
    validate_config(cfg)
    return cfg


def load_config(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return parse_config_text(text, base_dir=os.path.dirname(os.path.abspath(path)))


def _format_value(value) -> str:
    if isinstance(value, tuple):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: ScenarioConfig) -> str:
    """Render a config as text that reloads to an equal config."""
    lines = []
    for key in _ECHO_ORDER:
        value = getattr(cfg, key)
        if value is None:
            continue
        lines.append(f"{key} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


def write_config(cfg: ScenarioConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_config(cfg))
