"""Scenario configuration: YAML on disk, validated by JSON schema, loaded into dataclasses."""
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import jsonschema
import yaml

from src.config import DEFAULT_SCENARIO_PATH, Config
from src.errors import ConfigError
from src.utils.durations import parse_duration

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_DURATION = {"type": "string", "pattern": "^[0-9]+(s|m|h|d)$"}
_RATIO = {"type": "number", "minimum": 0, "maximum": 1}


def _object(properties: Dict[str, Any], required: Optional[List[str]] = None) -> Dict[str, Any]:
    return {
        "type": "object",
        "additionalProperties": False,
        "properties": properties,
        "required": required or [],
    }


SCENARIO_SCHEMA: Dict[str, Any] = _object(
    {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "clock": {"enum": ["simulated", "wall"]},
        "start_ms": {"type": "integer", "minimum": 0},
        "duration": _DURATION,
        "scrape_interval": _DURATION,
        "services": {
            "type": "array",
            "minItems": 1,
            "items": _object(
                {
                    "name": {"type": "string", "pattern": "^[a-zA-Z][a-zA-Z0-9_-]*$"},
                    "port": {"type": "integer", "minimum": 0, "maximum": 65535},
                    "endpoints": {
                        "type": "array",
                        "minItems": 1,
                        "items": _object(
                            {
                                "path": {"type": "string"},
                                "base_rate": {"type": "number", "minimum": 0},
                                "error_ratio": _RATIO,
                                "latency_mu": {"type": "number"},
                                "latency_sigma": {"type": "number", "minimum": 0},
                            },
                            ["path", "base_rate", "error_ratio"],
                        ),
                    },
                    "fault_schedule": {
                        "type": "array",
                        "items": _object(
                            {
                                "start": _DURATION,
                                "duration": _DURATION,
                                "path": {"type": ["string", "null"]},
                                "error_ratio_override": {"oneOf": [_RATIO, {"type": "null"}]},
                                "latency_scale": {"type": ["number", "null"], "exclusiveMinimum": 0},
                            },
                            ["start", "duration"],
                        ),
                    },
                },
                ["name", "endpoints"],
            ),
        },
        "fl": _object(
            {
                "peers": {"type": "integer", "minimum": 1},
                "rounds": {"type": "integer", "minimum": 1},
                "epochs": {"type": "integer", "minimum": 1},
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "hidden_units": {"type": "integer", "minimum": 1},
                "window": _DURATION,
                "sample_every": _DURATION,
                "permutations": {"type": "integer", "minimum": 1},
            }
        ),
        "slos": {
            "type": "array",
            "items": _object(
                {
                    "service": {"type": "string"},
                    "kind": {"enum": ["availability", "latency"]},
                    "target": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                    "window": _DURATION,
                    "threshold_seconds": {"type": ["number", "null"], "exclusiveMinimum": 0},
                    "description": {"type": "string"},
                    "name": {"type": "string"},
                },
                ["service", "kind", "target", "window"],
            ),
        },
        "ledger": _object(
            {
                "peer_count": {"type": "integer", "minimum": 1},
                "block_interval_ms": {"type": "integer", "minimum": 1},
                "max_block_txs": {"type": "integer", "minimum": 1},
                "latency_ms": {"type": "integer", "minimum": 0},
            }
        ),
        "backend": _object(
            {
                "kind": {"enum": ["template", "llm"]},
                "endpoint": {"type": "string"},
                "model": {"type": "string"},
                "max_repair_attempts": {"type": "integer", "minimum": 0},
            }
        ),
        "monitor": _object(
            {
                "interval": _DURATION,
                "horizon": _DURATION,
                "ticks": {"type": "integer", "minimum": 0},
                "current_window": _DURATION,
            }
        ),
    },
    ["schema_version", "services"],
)


@dataclass
class EndpointConfig:
    path: str
    base_rate: float
    error_ratio: float
    latency_mu: float = -2.5
    latency_sigma: float = 0.5


@dataclass
class FaultConfig:
    start: str
    duration: str
    path: Optional[str] = None
    error_ratio_override: Optional[float] = None
    latency_scale: Optional[float] = None

    @property
    def start_s(self) -> int:
        return parse_duration(self.start)

    @property
    def end_s(self) -> int:
        return self.start_s + parse_duration(self.duration)

    def active(self, elapsed_s: float, path: str) -> bool:
        return self.start_s <= elapsed_s < self.end_s and (self.path is None or self.path == path)


@dataclass
class ServiceConfig:
    name: str
    endpoints: List[EndpointConfig]
    port: int = 0
    fault_schedule: List[FaultConfig] = field(default_factory=list)


@dataclass
class FLConfig:
    peers: int = 3
    rounds: int = 3
    epochs: int = 100
    lr: float = 0.5
    seed: int = 0
    hidden_units: int = Config.HIDDEN_UNITS
    window: str = "5m"
    sample_every: str = "1m"
    permutations: int = Config.PERMUTATIONS


@dataclass
class ObjectiveConfig:
    service: str
    kind: str
    target: float
    window: str
    threshold_seconds: Optional[float] = None
    description: str = ""
    name: str = ""


@dataclass
class LedgerConfig:
    peer_count: int = 3
    block_interval_ms: int = Config.BLOCK_INTERVAL_MS
    max_block_txs: int = Config.MAX_BLOCK_TXS
    latency_ms: int = Config.NETWORK_LATENCY_MS


@dataclass
class BackendConfig:
    kind: str = "template"
    endpoint: str = Config.LLM_ENDPOINT
    model: str = Config.LLM_MODEL
    max_repair_attempts: int = Config.MAX_REPAIR_ATTEMPTS


@dataclass
class MonitorConfig:
    interval: str = Config.MONITOR_INTERVAL
    horizon: str = Config.MONITOR_HORIZON
    ticks: int = 30
    current_window: str = Config.CURRENT_BURN_WINDOW


@dataclass
class ScenarioConfig:
    services: List[ServiceConfig]
    schema_version: int = SCHEMA_VERSION
    name: str = "scenario"
    seed: int = 0
    clock: str = "simulated"
    start_ms: int = 0
    duration: str = "2h"
    scrape_interval: str = Config.SCRAPE_INTERVAL
    fl: FLConfig = field(default_factory=FLConfig)
    slos: List[ObjectiveConfig] = field(default_factory=list)
    ledger: LedgerConfig = field(default_factory=LedgerConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    monitor: MonitorConfig = field(default_factory=MonitorConfig)

    def service(self, name: str) -> ServiceConfig:
        for service in self.services:
            if service.name == name:
                return service
        raise ConfigError(f"Unknown service {name}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _build(data: Dict[str, Any]) -> ScenarioConfig:
    services = [
        ServiceConfig(
            name=s["name"],
            endpoints=[EndpointConfig(**e) for e in s["endpoints"]],
            port=s.get("port", 0),
            fault_schedule=[FaultConfig(**f) for f in s.get("fault_schedule", [])],
        )
        for s in data["services"]
    ]
    config = ScenarioConfig(
        services=services,
        schema_version=data["schema_version"],
        name=data.get("name", "scenario"),
        seed=data.get("seed", 0),
        clock=data.get("clock", "simulated"),
        start_ms=data.get("start_ms", 0),
        duration=data.get("duration", "2h"),
        scrape_interval=data.get("scrape_interval", Config.SCRAPE_INTERVAL),
        fl=FLConfig(**data.get("fl", {})),
        slos=[ObjectiveConfig(**o) for o in data.get("slos", [])],
        ledger=LedgerConfig(**data.get("ledger", {})),
        backend=BackendConfig(**data.get("backend", {})),
        monitor=MonitorConfig(**data.get("monitor", {})),
    )
    names = [s.name for s in services]
    if len(set(names)) != len(names):
        raise ConfigError(f"Duplicate service names: {names}")
    for objective in config.slos:
        config.service(objective.service)
        if objective.kind == "latency" and not objective.threshold_seconds:
            raise ConfigError(f"Latency objective for {objective.service} needs threshold_seconds")
    if parse_duration(config.scrape_interval) < 1:
        raise ConfigError("scrape_interval must be at least 1s")
    return config


def from_dict(data: Dict[str, Any]) -> ScenarioConfig:
    """Validate against SCENARIO_SCHEMA and build the dataclasses; unknown keys are rejected."""
    try:
        jsonschema.validate(data, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as e:
        path = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"Invalid scenario at {path}: {e.message}") from e
    return _build(data)


def resolve_path(path: Union[str, Path, None]) -> Path:
    """``default`` (or nothing) names the built-in default scenario."""
    if path is None or str(path) == "default":
        return DEFAULT_SCENARIO_PATH
    return Path(path)


def load(path: Union[str, Path, None] = None) -> ScenarioConfig:
    path = resolve_path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        logger.error(f"Error reading scenario {path}: {str(e)}")
        raise ConfigError(f"Cannot read scenario {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Scenario {path} must hold a mapping")
    config = from_dict(data)
    logger.info(f"Loaded scenario '{config.name}' with {len(config.services)} services from {path}")
    return config


def dump(config: ScenarioConfig, path: Optional[Path] = None) -> str:
    """YAML text of ``config``; ``load`` of the result equals ``config``."""
    text = yaml.safe_dump(config.to_dict(), sort_keys=False, default_flow_style=False)
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")
    return text
