"""Configuration, single runs, sweeps and plots."""

from .config import (RunConfig, SweepGrid, load_config, parse_run_config, parse_sweep_config,
                     serialize_run_config, serialize_sweep_config)
from .runner import CSV_COLUMNS, ensure_selftest, execute, run_single
from .sweep import run_sweep
