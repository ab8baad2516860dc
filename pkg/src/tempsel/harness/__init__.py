"""Experiment harness: configuration, data, orchestration, persistence and the CLI."""
from tempsel.harness.config import DataConfig, RunConfig, derive_seed, load_config, save_config
from tempsel.harness.pipeline import RunReport, run_grid, run_pipeline

__all__ = ["DataConfig", "RunConfig", "derive_seed", "load_config", "save_config", "RunReport", "run_grid",
           "run_pipeline"]
