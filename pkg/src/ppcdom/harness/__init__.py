"""Scenarios, closed-loop runs, comparisons and file output."""

from .output import read_babble, read_csv, result_dict, write_babble, write_csv, write_summary
from .runner import (METHODS, BabbleLog, ComparisonSummary, RunLog, RunResult, babble, compare,
                     prepare, record_target, run, simulate)
from .scenario import PRESETS, Scenario, Stage, load_scenario, scenario_from_dict

__all__ = [
    "METHODS", "PRESETS", "BabbleLog", "ComparisonSummary", "RunLog", "RunResult", "Scenario",
    "Stage", "babble", "compare", "load_scenario", "prepare", "read_babble", "read_csv",
    "record_target", "result_dict", "run", "scenario_from_dict", "simulate", "write_babble",
    "write_csv", "write_summary",
]
