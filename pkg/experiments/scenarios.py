"""
Fixed-scenario experiments: the desired-impact-time sweep for the learned
law and the four-law comparison under identical conditions.

Both return the structure {"result": ..., "stats": ..., "additional_info": ...}
and write their CSVs into `out_dir`.
"""

import logging
import math
import os
import time
from typing import Any, Dict, List, Sequence

import pandas as pd

from agents.coordinator_agent import GUIDANCE_LAWS, GuidanceModels, build_controller, fly
from config import EngagementConfig
from errors import ConfigurationError
from physics.dynamics import Outcome, TerminationRecord, Trajectory, write_trajectory_csv
from utils import fan_out, write_csv

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["law", "t_d", "t_f", "outcome", "impact_error", "miss_distance", "max_abs_bias", "stalled"]


def trajectory_filename(law: str, t_d: float) -> str:
    return f"trajectory_{law}_td{t_d:g}.csv"


def summary_row(law: str, t_d: float, trajectory: Trajectory, record: TerminationRecord) -> Dict[str, Any]:
    hit = record.outcome is Outcome.HIT
    return {
        "law": law,
        "t_d": t_d,
        "t_f": record.final_time,
        "outcome": record.outcome.value,
        "impact_error": t_d - record.final_time if hit else math.nan,
        "miss_distance": record.miss_distance,
        "max_abs_bias": max((abs(c.bias) for _, c in trajectory), default=0.0),
        "stalled": record.stalled,
    }


def _fly_job(job):
    law, config, t_d, models = job
    sim = config.sim_settings()
    return fly(law, config.fixed_initial_state(), config.engagement(), sim, t_d, models)


def _check_models(law: str, config: EngagementConfig, models: GuidanceModels) -> None:
    # fail before any file is written
    build_controller(law, config.engagement(), config.sim_settings(), 0.0, models)


def run_fixed_scenario(
    config: EngagementConfig,
    models: GuidanceModels,
    t_d_list: Sequence[float],
    out_dir: str,
    law: str = "proposed",
    workers: int = 1,
) -> Dict[str, Any]:
    """
    Fly the fixed initial condition once per desired impact time.

    Writes one trajectory CSV per t_d and `fixed_scenario_summary.csv`
    (t_d, achieved t_f, impact error, max |a_b|, ...).

    Raises:
        ConfigurationError: the law needs models that are not loaded.
    """
    if not t_d_list:
        raise ConfigurationError("empty desired impact time list")
    _check_models(law, config, models)
    started = time.time()
    results = fan_out(_fly_job, [(law, config, float(t_d), models) for t_d in t_d_list], workers)

    engagement = config.engagement()
    files: List[str] = []
    rows = []
    for t_d, (trajectory, record) in zip(t_d_list, results):
        path = os.path.join(out_dir, trajectory_filename(law, t_d))
        write_trajectory_csv(path, trajectory, engagement)
        files.append(path)
        rows.append(summary_row(law, float(t_d), trajectory, record))
        logger.info("%s t_d=%g s: %s at t_f=%.2f s", law, t_d, record.outcome.value, record.final_time)

    summary = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
    files.append(write_csv(os.path.join(out_dir, "fixed_scenario_summary.csv"), summary))
    ordered = summary.sort_values("t_d")["max_abs_bias"].tolist()
    return {
        "result": {"summary": rows, "files": files},
        "stats": {
            "runs": len(rows),
            "hits": int((summary["outcome"] == Outcome.HIT.value).sum()),
            "bias_non_decreasing": all(b >= a for a, b in zip(ordered, ordered[1:])),
        },
        "additional_info": {"law": law, "elapsed_s": time.time() - started},
    }


def compare_laws(
    config: EngagementConfig,
    models: GuidanceModels,
    t_d: float,
    out_dir: str,
    laws: Sequence[str] = GUIDANCE_LAWS,
    workers: int = 1,
) -> Dict[str, Any]:
    """
    Fly every law from the fixed initial condition with the same t_d.
    Writes `compare_<law>.csv` per law and `compare_summary.csv`; stats
    report pass/fail (Hit) per law.
    """
    for law in laws:
        _check_models(law, config, models)
    started = time.time()
    results = fan_out(_fly_job, [(law, config, float(t_d), models) for law in laws], workers)

    engagement = config.engagement()
    files = []
    rows = []
    for law, (trajectory, record) in zip(laws, results):
        path = os.path.join(out_dir, f"compare_{law}.csv")
        write_trajectory_csv(path, trajectory, engagement)
        files.append(path)
        rows.append(summary_row(law, float(t_d), trajectory, record))

    files.append(write_csv(os.path.join(out_dir, "compare_summary.csv"), pd.DataFrame(rows, columns=SUMMARY_COLUMNS)))
    return {
        "result": {"summary": rows, "files": files},
        "stats": {"hit": {r["law"]: r["outcome"] == Outcome.HIT.value for r in rows}},
        "additional_info": {"t_d": t_d, "elapsed_s": time.time() - started},
    }
