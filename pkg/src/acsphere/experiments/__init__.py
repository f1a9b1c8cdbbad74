from ..snapshot import read_snapshot, write_snapshot
from .config import ExperimentConfig, load_config, parse_config

__all__ = ["ExperimentConfig", "load_config", "parse_config", "read_snapshot", "write_snapshot"]
