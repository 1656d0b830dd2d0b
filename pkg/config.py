#!/usr/bin/env python3
"""
Configuration management for the imaging gateway simulator

One structured YAML document mirrors the module hierarchy (workload, network,
cache, sensors, patterns, prefetch, experiment, logging). Values resolve with
precedence flags > file > environment > defaults.
"""

import dataclasses
import logging
import math
import os
import typing
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml

from errors import ConfigurationError

logger = logging.getLogger(__name__)

GB = 1_000_000_000
MB = 1_000_000

# 2.5, 10, 20, 50 and 100 GB of a 2 TB archive
DEFAULT_CACHE_FRACTIONS = (0.00125, 0.005, 0.01, 0.025, 0.05)


@dataclass
class WorkloadConfig:
    """Synthetic workload generator parameters"""

    duration_days: int = 90
    n_studies: int = 2000
    total_repo_bytes: int = 20 * GB
    n_workstations: int = 3
    # PatientRevising, ModalityRevising, InconsequentQuery, Other
    class_mix: Tuple[float, float, float, float] = (0.5, 0.3, 0.1, 0.1)
    session_rate_per_day: float = 18.5
    # (min, max, mean) retrieves for sessions that retrieve anything
    retrieves_per_session: Tuple[int, int, float] = (1, 8, 3.0)
    seed: int = 20160104
    working_set_skew: float = 0.8
    n_patients: Optional[int] = None
    n_institutions: int = 3
    start_date: str = "2016-01-04"
    history_days: int = 1095
    recent_study_fraction: float = 0.45
    recent_patient_bias: float = 0.6
    weekend_factor: float = 0.3
    work_hours: Tuple[int, int] = (8, 19)
    modality_mix: Dict[str, float] = field(default_factory=lambda: {
        "CT": 0.20, "MR": 0.15, "CR": 0.22, "US": 0.15, "DX": 0.10,
        "XA": 0.05, "MG": 0.06, "NM": 0.04, "PT": 0.03,
    })
    size_medians_mb: Dict[str, float] = field(default_factory=lambda: {
        "CT": 150.0, "MR": 80.0, "CR": 12.0, "US": 15.0, "DX": 12.0,
        "XA": 60.0, "MG": 40.0, "NM": 30.0, "PT": 100.0,
    })
    image_size_mb: Dict[str, float] = field(default_factory=lambda: {
        "CT": 0.5, "MR": 0.25, "CR": 6.0, "US": 0.8, "DX": 6.0,
        "XA": 1.0, "MG": 10.0, "NM": 0.25, "PT": 0.3,
    })
    size_sigma: float = 0.6

    @property
    def patient_count(self) -> int:
        return self.n_patients or max(1, self.n_studies // 4)

    def validate(self) -> None:
        for name in ("duration_days", "n_studies", "total_repo_bytes", "n_workstations", "n_institutions"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"must be positive, got {getattr(self, name)}", key=f"workload.{name}")
        if self.n_patients is not None and self.n_patients <= 0:
            raise ConfigurationError("must be positive", key="workload.n_patients")
        if len(self.class_mix) != 4 or any(p < 0 for p in self.class_mix):
            raise ConfigurationError("needs four non-negative probabilities", key="workload.class_mix")
        if abs(sum(self.class_mix) - 1.0) > 1e-9:
            raise ConfigurationError(f"must sum to 1, got {sum(self.class_mix)}", key="workload.class_mix")
        if not self.session_rate_per_day > 0:
            raise ConfigurationError("must be positive", key="workload.session_rate_per_day")
        if len(self.retrieves_per_session) != 3:
            raise ConfigurationError("expected (min, max, mean)", key="workload.retrieves_per_session")
        k_min, k_max, k_mean = self.retrieves_per_session
        if not (1 <= k_min <= k_mean <= k_max):
            raise ConfigurationError("requires 1 <= min <= mean <= max", key="workload.retrieves_per_session")
        if self.working_set_skew < 0:
            raise ConfigurationError("Zipf exponent must be >= 0", key="workload.working_set_skew")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigurationError("must be a 64-bit unsigned integer", key="workload.seed")
        for name in ("recent_study_fraction", "recent_patient_bias", "weekend_factor"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigurationError("must lie in [0, 1]", key=f"workload.{name}")
        start_hour, end_hour = self.work_hours
        if not 0 <= start_hour < end_hour <= 23:
            raise ConfigurationError("requires 0 <= start < end <= 23", key="workload.work_hours")
        if not self.modality_mix or any(w < 0 for w in self.modality_mix.values()) \
                or sum(self.modality_mix.values()) <= 0:
            raise ConfigurationError("needs non-negative weights with a positive sum", key="workload.modality_mix")
        for modality in self.modality_mix:
            if self.size_medians_mb.get(modality, 0) <= 0:
                raise ConfigurationError(f"missing or non-positive median for {modality}",
                                         key="workload.size_medians_mb")
            if self.image_size_mb.get(modality, 0) <= 0:
                raise ConfigurationError(f"missing or non-positive image size for {modality}",
                                         key="workload.image_size_mb")
        if self.size_sigma < 0:
            raise ConfigurationError("must be >= 0", key="workload.size_sigma")
        try:
            _parse_date(self.start_date)
        except ValueError as e:
            raise ConfigurationError(f"invalid ISO date: {e}", key="workload.start_date") from e


@dataclass
class NetworkModel:
    """WAN link to the cloud archive and LAN link to the workstations"""

    wan_bandwidth_bytes_per_s: float = 12.5 * MB
    wan_rtt_s: float = 0.2
    lan_bandwidth_bytes_per_s: float = 125 * MB
    lan_overhead_s: float = 0.01

    def wan_time(self, size_bytes: int) -> float:
        return self.wan_rtt_s + size_bytes / self.wan_bandwidth_bytes_per_s

    def lan_time(self, size_bytes: int) -> float:
        return self.lan_overhead_s + size_bytes / self.lan_bandwidth_bytes_per_s

    def validate(self) -> None:
        for f in dataclasses.fields(self):
            if not getattr(self, f.name) > 0:
                raise ConfigurationError("must be positive", key=f"network.{f.name}")
        if self.lan_bandwidth_bytes_per_s <= self.wan_bandwidth_bytes_per_s:
            logger.warning("LAN bandwidth is not faster than WAN bandwidth; cache hits will not pay off")


@dataclass
class CacheSettings:
    high_watermark: float = 0.95
    low_watermark: float = 0.85

    def validate(self) -> None:
        if not 0 < self.high_watermark <= 1:
            raise ConfigurationError("must lie in (0, 1]", key="cache.high_watermark")
        if not 0 <= self.low_watermark < self.high_watermark:
            raise ConfigurationError("must lie in [0, high_watermark)", key="cache.low_watermark")


@dataclass
class MlpSettings:
    """Network topology and training schedule for one family of models"""

    hidden_sizes: Tuple[int, ...] = (16,)
    learning_rate: float = 0.05
    epochs: int = 5
    weight_decay: float = 0.0
    # 1 = per-sample SGD; 0 = full batch
    batch_size: int = 1

    def validate(self, prefix: str) -> None:
        if any(h <= 0 for h in self.hidden_sizes):
            raise ConfigurationError("hidden layer widths must be positive", key=f"{prefix}.hidden_sizes")
        if self.learning_rate < 0:
            raise ConfigurationError("must be >= 0", key=f"{prefix}.learning_rate")
        if self.epochs < 0:
            raise ConfigurationError("must be >= 0", key=f"{prefix}.epochs")
        if self.weight_decay < 0:
            raise ConfigurationError("must be >= 0", key=f"{prefix}.weight_decay")
        if self.batch_size < 0:
            raise ConfigurationError("must be >= 0", key=f"{prefix}.batch_size")


@dataclass
class SensorSettings:
    window_seconds: int = 600
    idle_threshold: float = 0.3
    gateway_ae: str = "GATEWAY"
    archive_ae: str = "CLOUD_PACS"

    def validate(self) -> None:
        if self.window_seconds <= 0:
            raise ConfigurationError("must be positive", key="sensors.window_seconds")
        if not 0 <= self.idle_threshold <= 1:
            raise ConfigurationError("must lie in [0, 1]", key="sensors.idle_threshold")


@dataclass
class PatternSettings:
    window_seconds: int = 3600
    history_cap: int = 20
    per_node_classifier: bool = False
    mlp: MlpSettings = field(default_factory=MlpSettings)

    def validate(self) -> None:
        if self.window_seconds <= 0:
            raise ConfigurationError("must be positive", key="patterns.window_seconds")
        if self.history_cap <= 0:
            raise ConfigurationError("must be positive", key="patterns.history_cap")
        self.mlp.validate("patterns.mlp")


@dataclass
class PrefetchSettings:
    enabled: bool = True
    top_k: int = 2
    score_floor: float = 0.5
    fill_fraction: float = 0.5
    short_term_budget_fraction: float = 0.25
    counter_decay_days: int = 30
    scorer_training_period_days: int = 1
    static_rules: bool = False
    mlp: MlpSettings = field(default_factory=MlpSettings)

    def validate(self) -> None:
        if self.top_k <= 0:
            raise ConfigurationError("must be positive", key="prefetch.top_k")
        for name in ("score_floor", "fill_fraction", "short_term_budget_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigurationError("must lie in [0, 1]", key=f"prefetch.{name}")
        if self.counter_decay_days <= 0:
            raise ConfigurationError("must be positive", key="prefetch.counter_decay_days")
        if self.scorer_training_period_days not in (1, 7):
            raise ConfigurationError("must be 1 (daily) or 7 (weekly)", key="prefetch.scorer_training_period_days")
        self.mlp.validate("prefetch.mlp")


@dataclass
class ExperimentSettings:
    cache_fractions: Tuple[float, ...] = DEFAULT_CACHE_FRACTIONS
    repetitions: int = 10
    seed: int = 7
    workers: int = 1
    per_image_normalization: bool = False

    def validate(self) -> None:
        if not self.cache_fractions or any(not 0 < f <= 1 for f in self.cache_fractions):
            raise ConfigurationError("fractions must lie in (0, 1]", key="experiment.cache_fractions")
        if self.repetitions <= 0:
            raise ConfigurationError("must be positive", key="experiment.repetitions")
        if self.workers <= 0:
            raise ConfigurationError("must be positive", key="experiment.workers")


@dataclass
class LoggingSettings:
    level: str = "INFO"
    debug: bool = False

    def validate(self) -> None:
        if self.level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ConfigurationError(f"unknown level {self.level!r}", key="logging.level")


@dataclass
class SimConfig:
    """Everything one simulation run needs, resolved from Config"""

    cache_capacity_bytes: int
    eviction: str = "LRU"
    prefetch_enabled: bool = True
    static_rules: bool = False
    passive_population: bool = True
    network: NetworkModel = field(default_factory=NetworkModel)
    cache: CacheSettings = field(default_factory=CacheSettings)
    sensors: SensorSettings = field(default_factory=SensorSettings)
    patterns: PatternSettings = field(default_factory=PatternSettings)
    prefetch: PrefetchSettings = field(default_factory=PrefetchSettings)
    seed: int = 7
    per_image_normalization: bool = False

    @property
    def label(self) -> str:
        if self.static_rules:
            return "static"
        return "config2" if self.prefetch_enabled else "config1"

    def validate(self) -> None:
        if self.cache_capacity_bytes < 0:
            raise ConfigurationError("must be >= 0", key="sim.cache_capacity_bytes")
        if self.eviction != "LRU":
            raise ConfigurationError("only LRU eviction is supported", key="sim.eviction")
        if not self.passive_population:
            raise ConfigurationError("passive population cannot be disabled", key="sim.passive_population")
        if self.prefetch_enabled and self.static_rules:
            raise ConfigurationError("learned prefetching and static rules are exclusive", key="sim.static_rules")
        self.network.validate()
        self.cache.validate()
        self.sensors.validate()
        self.patterns.validate()
        self.prefetch.validate()


BLOCKS = {
    "workload": WorkloadConfig,
    "network": NetworkModel,
    "cache": CacheSettings,
    "sensors": SensorSettings,
    "patterns": PatternSettings,
    "prefetch": PrefetchSettings,
    "experiment": ExperimentSettings,
    "logging": LoggingSettings,
}


class Config:
    """Simulator configuration management"""

    def __init__(self, path: Optional[Union[str, Path]] = None,
                 overrides: Optional[Dict[str, Any]] = None):
        self.workload = WorkloadConfig()
        self.network = NetworkModel()
        self.cache = CacheSettings()
        self.sensors = SensorSettings()
        self.patterns = PatternSettings()
        self.prefetch = PrefetchSettings()
        self.experiment = ExperimentSettings()
        self.logging = LoggingSettings()
        self.source_path: Optional[Path] = None

        self._load_from_env()
        if path is not None:
            self._load_from_file(Path(path))
        if overrides:
            self.apply_overrides(overrides)
        self.validate()

    def _load_from_env(self) -> None:
        """Load logging settings from environment variables or a .env file"""
        values = _read_env_file(Path(".env"))
        values.update({k: v for k, v in os.environ.items() if k in ("LOG_LEVEL", "DEBUG")})
        if values.get("LOG_LEVEL"):
            self.logging.level = values["LOG_LEVEL"].strip()
        if values.get("DEBUG"):
            self.logging.debug = values["DEBUG"].strip().lower() == "true"

    def _load_from_file(self, path: Path) -> None:
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigurationError(f"cannot read configuration file {path}: {e.strerror}") from e
        try:
            data = yaml.safe_load(text)
            lines = _key_lines(yaml.compose(text)) if data else {}
        except yaml.YAMLError as e:
            line = e.problem_mark.line + 1 if getattr(e, "problem_mark", None) else None
            raise ConfigurationError(f"invalid YAML in {path}", line=line, key="<document>") from e
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigurationError("top level must be a mapping", key="<document>", line=1)

        for section, values in data.items():
            block_type = BLOCKS.get(section)
            if block_type is None:
                raise ConfigurationError("unknown configuration key", key=str(section), line=lines.get(str(section)))
            if values is None:
                continue
            if not isinstance(values, dict):
                raise ConfigurationError("expected a mapping", key=str(section), line=lines.get(str(section)))
            _apply_mapping(getattr(self, section), values, str(section), lines)

        self.source_path = path
        logger.info(f"Loaded configuration from {path}")

    def apply_overrides(self, overrides: Dict[str, Any]) -> None:
        """Apply dotted-key overrides (command-line flags), highest precedence"""
        for dotted, value in overrides.items():
            if value is None:
                continue
            section, _, rest = dotted.partition(".")
            if section not in BLOCKS or not rest:
                raise ConfigurationError("unknown configuration key", key=dotted)
            target = getattr(self, section)
            *parents, leaf = rest.split(".")
            prefix = section
            for parent in parents:
                prefix = f"{prefix}.{parent}"
                target = getattr(target, parent, None)
                if not dataclasses.is_dataclass(target):
                    raise ConfigurationError("unknown configuration key", key=prefix)
            _apply_mapping(target, {leaf: value}, prefix, {})

    def validate(self) -> None:
        self.workload.validate()
        self.network.validate()
        self.cache.validate()
        self.sensors.validate()
        self.patterns.validate()
        self.prefetch.validate()
        self.experiment.validate()
        self.logging.validate()

    def sim_config(self, cache_capacity_bytes: int, prefetch_enabled: bool,
                   seed: Optional[int] = None, static_rules: bool = False) -> SimConfig:
        """Resolve the parameters of one simulation run"""
        sim_cfg = SimConfig(
            cache_capacity_bytes=int(cache_capacity_bytes),
            prefetch_enabled=prefetch_enabled,
            static_rules=static_rules,
            network=dataclasses.replace(self.network),
            cache=dataclasses.replace(self.cache),
            sensors=dataclasses.replace(self.sensors),
            patterns=dataclasses.replace(self.patterns, mlp=dataclasses.replace(self.patterns.mlp)),
            prefetch=dataclasses.replace(self.prefetch, mlp=dataclasses.replace(self.prefetch.mlp)),
            seed=self.experiment.seed if seed is None else seed,
            per_image_normalization=self.experiment.per_image_normalization,
        )
        sim_cfg.validate()
        return sim_cfg

    def to_dict(self) -> Dict[str, Any]:
        """Convert configuration to a plain dictionary"""
        return {name: _plain(dataclasses.asdict(getattr(self, name))) for name in BLOCKS}

    def dump(self, path: Union[str, Path]) -> Path:
        """Write the resolved configuration so a run can be reproduced from it alone"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            yaml.safe_dump(self.to_dict(), f, sort_keys=False, default_flow_style=None)
        return path


def _read_env_file(path: Path) -> Dict[str, str]:
    """Load KEY=VALUE pairs from a .env file manually"""
    values: Dict[str, str] = {}
    try:
        with open(path, "r") as f:
            for line in f:
                line = line.strip()
                if line and not line.startswith('#') and '=' in line:
                    key, value = line.split('=', 1)
                    values[key.strip()] = value.strip()
    except FileNotFoundError:
        pass
    return values


def _key_lines(node, prefix: str = "") -> Dict[str, int]:
    """Map dotted keys of a composed YAML document to 1-based line numbers"""
    lines: Dict[str, int] = {}
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            dotted = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
            lines[dotted] = key_node.start_mark.line + 1
            lines.update(_key_lines(value_node, dotted))
    return lines


def _apply_mapping(target: Any, values: Dict[str, Any], prefix: str, lines: Dict[str, int]) -> None:
    hints = typing.get_type_hints(type(target))
    names = {f.name for f in dataclasses.fields(target)}
    for key, raw in values.items():
        dotted = f"{prefix}.{key}"
        if key not in names:
            raise ConfigurationError("unknown configuration key", key=dotted, line=lines.get(dotted))
        current = getattr(target, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(raw, dict):
                raise ConfigurationError("expected a mapping", key=dotted, line=lines.get(dotted))
            _apply_mapping(current, raw, dotted, lines)
            continue
        setattr(target, key, _coerce(raw, hints[key], dotted, lines.get(dotted)))


def _coerce(value: Any, hint: Any, key: str, line: Optional[int]) -> Any:
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)

    if origin is Union:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], key, line)
    if hint is bool:
        if isinstance(value, bool):
            return value
        raise ConfigurationError(f"expected true/false, got {value!r}", key=key, line=line)
    if hint is int:
        if isinstance(value, bool):
            raise ConfigurationError(f"expected an integer, got {value!r}", key=key, line=line)
        if isinstance(value, int):
            return value
        if isinstance(value, float) and math.isfinite(value) and value.is_integer():
            return int(value)
        raise ConfigurationError(f"expected an integer, got {value!r}", key=key, line=line)
    if hint is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value):
            return float(value)
        raise ConfigurationError(f"expected a number, got {value!r}", key=key, line=line)
    if hint is str:
        if isinstance(value, str):
            return value
        raise ConfigurationError(f"expected a string, got {value!r}", key=key, line=line)
    if origin in (tuple, list, List, Tuple):
        if isinstance(value, str):
            value = [yaml.safe_load(v) for v in value.split(",") if v.strip()]
        if not isinstance(value, (list, tuple)):
            raise ConfigurationError(f"expected a list, got {value!r}", key=key, line=line)
        if args and args[-1] is not Ellipsis and origin is tuple:
            if len(args) != len(value):
                raise ConfigurationError(f"expected {len(args)} values, got {len(value)}", key=key, line=line)
            return tuple(_coerce(v, a, key, line) for v, a in zip(value, args))
        item = args[0] if args else Any
        return tuple(_coerce(v, item, key, line) for v in value)
    if origin in (dict, Dict):
        if not isinstance(value, dict):
            raise ConfigurationError(f"expected a mapping, got {value!r}", key=key, line=line)
        key_type, value_type = args if args else (Any, Any)
        return {_coerce(k, key_type, key, line): _coerce(v, value_type, key, line) for k, v in value.items()}
    return value


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def _parse_date(text: str) -> date:
    return date.fromisoformat(text)
