"""Experiment orchestration: configuration, persistence, protocols, reports."""

from .config import RunConfig, derive_rng, derive_seed
from .datasets import dataset_load, dataset_save
from .experiments import run_experiment
from .report import RunReport, emit_report, reaggregate, summarize
