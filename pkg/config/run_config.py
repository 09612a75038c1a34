from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional

from config.settings import Settings
from schemas.file_schemas import RUN_CONFIG_SCHEMA, missing_fields
from utils.file_validation import FileValidation


class ConfigError(ValueError):
    """Raised for unreadable or inconsistent run configuration."""


@dataclass
class RunConfig:
    """Options of one CLI invocation: the JSON ``--config`` file merged with flag overrides."""

    topology: str = 'n7'
    dataset: Optional[str] = None
    model_store: Optional[str] = None
    out: str = Settings.OUTPUT_DIR
    seed: int = field(default_factory=Settings.default_seed)
    solver: str = 'greedy'
    scenario: str = 'obsv'
    jobs: int = field(default_factory=Settings.default_jobs)
    verbose: bool = False
    weights: str = 'joint'
    periods: int = 60
    flows_per_pair: List[int] = field(default_factory=lambda: [1, 3])
    # None draws chain lengths uniformly in 1..10
    chain_length: Optional[int] = None
    server_capacity: Optional[float] = None
    rmse_periods: List[int] = field(default_factory=list)
    prior_solution: Optional[str] = None
    forecast: Dict[str, Any] = field(default_factory=dict)
    path_options: Dict[str, int] = field(default_factory=dict)
    exact_limits: Dict[str, int] = field(default_factory=dict)
    scenario_options: Dict[str, Any] = field(default_factory=dict)
    sweep: Dict[str, Any] = field(default_factory=dict)

    def topology_path(self) -> Path:
        """A ``.json`` path as given, otherwise a shipped topology name."""
        if self.topology.endswith('.json'):
            return Path(self.topology)
        return Path(Settings.TOPOLOGY_DIR) / f"{self.topology.lower()}.json"

    def out_dir(self) -> Path:
        return Path(self.out)


def load_run_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Build a RunConfig from an optional JSON file and flag overrides (None values are ignored).

    Raises:
        ConfigError: If the file cannot be read or names unknown options
    """
    document: Dict[str, Any] = {}
    if path is not None:
        ok, document, error = FileValidation.load_json_file(path, 'config')
        if not ok:
            raise ConfigError(error)
        if not isinstance(document, dict) or missing_fields(document, RUN_CONFIG_SCHEMA):
            raise ConfigError(f"Config file {path} must hold a JSON object")
    document = dict(document)
    document.update({k: v for k, v in (overrides or {}).items() if v is not None})

    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(document) - known)
    if unknown:
        raise ConfigError(f"Unknown config options: {', '.join(unknown)}")
    config = RunConfig(**document)

    enums = {k: v['enum'] for k, v in RUN_CONFIG_SCHEMA['properties'].items() if 'enum' in v}
    for key, allowed in enums.items():
        if getattr(config, key) not in allowed:
            raise ConfigError(f"{key} must be one of {', '.join(allowed)}, got {getattr(config, key)}")
    if config.jobs < 1:
        raise ConfigError("jobs must be at least 1")
    return config
