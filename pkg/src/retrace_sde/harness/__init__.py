"""Configuration, dataset persistence and experiment running."""
from .config import ExperimentConfig, dump_config, dumps_config, load_config, loads_config
from .io import load_ensemble, save_ensemble
from .runner import ResultRow, calibrate, run_experiment

__all__ = ["ExperimentConfig", "ResultRow", "calibrate", "dump_config", "dumps_config", "load_config",
           "load_ensemble", "loads_config", "run_experiment", "save_ensemble"]
