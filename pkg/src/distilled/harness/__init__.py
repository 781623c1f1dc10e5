"""Configuration, experiment drivers and the command-line entry point."""

from distilled.harness.config import ConfigError, ExperimentConfig, load_config, preset
from distilled.harness.experiments import run, run_baselines, run_medical, run_mixar, run_pinn
