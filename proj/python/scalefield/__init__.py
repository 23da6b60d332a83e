"""Python access to the scalefield experiments and a few core routines."""

import csv
import io

from ._core import (
    ConfigError,
    emit_plot_data,
    experiment_names,
    fit_loglog,
    format_double,
    free_quartic_second_moment,
    jonckheere_decreasing,
    run,
    terminal_field,
    theta_horizon,
    wick_polynomial,
)

__all__ = [
    "ConfigError",
    "emit_plot_data",
    "experiment_names",
    "fit_loglog",
    "format_double",
    "free_quartic_second_moment",
    "jonckheere_decreasing",
    "read_table",
    "run",
    "terminal_field",
    "theta_horizon",
    "wick_polynomial",
]


def read_table(text):
    """Parse a CSV table from run() into a list of dicts (values stay strings)."""
    return list(csv.DictReader(io.StringIO(text)))
