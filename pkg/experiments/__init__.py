"""Experiments package exports"""

from .monte_carlo import MonteCarloReport, McRun, error_histogram, export_report, monte_carlo_experiment, run_monte_carlo
from .scenarios import compare_laws, run_fixed_scenario
