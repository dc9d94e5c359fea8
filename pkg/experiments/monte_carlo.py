"""
Monte-Carlo evaluation: independent engagements with random initial
conditions and random desired impact times, flown by one guidance law.

Each run owns a SeedSequence spawned from the master seed, so the report
does not depend on the worker count. Impact-time error is t_d - t_f and is
only defined for runs that Hit; aggregates are taken over those runs.
"""

import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from agents.analytic.itcg_laws import approx_tgo_png
from agents.coordinator_agent import GuidanceModels, build_controller, fly
from agents.corrector.env import TgoEstimator
from agents.corrector.ppo_agent import select_estimators
from config import EngagementConfig
from errors import ConfigurationError
from physics.dynamics import Outcome
from utils import fan_out, spawn_seeds, write_csv

logger = logging.getLogger(__name__)

HISTOGRAM_BIN = 0.5  # s
SUCCESS_TOLERANCE = 1.0  # s


@dataclass(frozen=True)
class McRun:
    run: int
    x0: float
    y0: float
    v0: float
    gamma0: float
    t_d: float
    impact_time: float
    impact_error: float
    outcome: str
    miss_distance: float
    stalled: bool


@dataclass
class MonteCarloReport:
    runs: List[McRun]
    mean_error: float
    std_error: float
    max_abs_error: float
    mean_abs_error: float
    hit_fraction: float
    success_fraction: float
    under_half_second: float
    series: List[Tuple[int, float, float]] = field(default_factory=list)

    @classmethod
    def from_runs(
        cls,
        runs: Sequence[McRun],
        series: Optional[List[Tuple[int, float, float]]] = None,
        tolerance: float = SUCCESS_TOLERANCE,
    ) -> "MonteCarloReport":
        """Aggregate per-run records; error statistics are over Hit runs (nan when none)."""
        n = len(runs)
        errors = np.array([r.impact_error for r in runs if r.outcome == Outcome.HIT.value], dtype=np.float64)
        if errors.size:
            mean, std = float(errors.mean()), float(errors.std())
            max_abs, mean_abs = float(np.abs(errors).max()), float(np.abs(errors).mean())
        else:
            mean = std = max_abs = mean_abs = math.nan
        return cls(
            runs=list(runs),
            mean_error=mean,
            std_error=std,
            max_abs_error=max_abs,
            mean_abs_error=mean_abs,
            hit_fraction=errors.size / n if n else 0.0,
            success_fraction=int(np.sum(np.abs(errors) <= tolerance)) / n if n else 0.0,
            under_half_second=int(np.sum(np.abs(errors) < 0.5)) / n if n else 0.0,
            series=list(series or []),
        )

    def stats(self) -> Dict[str, float]:
        return {
            "runs": len(self.runs),
            "mean_error": self.mean_error,
            "std_error": self.std_error,
            "max_abs_error": self.max_abs_error,
            "mean_abs_error": self.mean_abs_error,
            "hit_fraction": self.hit_fraction,
            "success_fraction": self.success_fraction,
            "under_half_second": self.under_half_second,
        }


def schedule_estimator(models: GuidanceModels, law: str) -> TgoEstimator:
    """Time-to-go estimate used to draw t_d and to trace eps_t; the learned law uses its training schedule."""
    if law == "proposed" and models.corrector is not None:
        return select_estimators(models.corrector.cfg, models.predictor).schedule
    return models.predictor or approx_tgo_png


def _mc_run(job) -> Tuple[McRun, List[Tuple[int, float, float]]]:
    index, config, models, law, seed_seq = job
    rng = np.random.default_rng(seed_seq)
    engagement = config.engagement()
    sim = config.sim_settings()
    estimator = schedule_estimator(models, law)

    initial = config.sample_initial(rng)
    t_d = config.desired_time(rng, estimator(initial, engagement))
    trajectory, record = fly(law, initial, engagement, sim, t_d, models)

    hit = record.outcome is Outcome.HIT
    run = McRun(
        run=index,
        x0=initial.x,
        y0=initial.y,
        v0=initial.speed,
        gamma0=initial.gamma,
        t_d=t_d,
        impact_time=record.final_time,
        impact_error=t_d - record.final_time if hit else math.nan,
        outcome=record.outcome.value,
        miss_distance=record.miss_distance,
        stalled=record.stalled,
    )
    # eps_t = t_d - (t + t_go_hat) along the flight, time normalized by t_d
    series = [(index, s.time / t_d, t_d - (s.time + estimator(s, engagement))) for s, _ in trajectory]
    return run, series


def run_monte_carlo(
    config: EngagementConfig,
    models: GuidanceModels,
    n_runs: int,
    seed: int,
    law: str = "proposed",
    workers: int = 1,
) -> MonteCarloReport:
    """
    Raises:
        ConfigurationError: n_runs < 1 or the law's models are missing.
    """
    if n_runs < 1:
        raise ConfigurationError(f"n_runs must be >= 1, got {n_runs}")
    build_controller(law, config.engagement(), config.sim_settings(), 0.0, models)
    jobs = [(i, config, models, law, s) for i, s in enumerate(spawn_seeds(seed, n_runs))]
    results = fan_out(_mc_run, jobs, workers)

    runs = [r for r, _ in results]
    series = [row for _, rows in results for row in rows]
    report = MonteCarloReport.from_runs(runs, series)
    logger.info("monte-carlo %s: %d runs, hit %.0f%%, success %.0f%%, mean error %.4f s",
                law, n_runs, 100 * report.hit_fraction, 100 * report.success_fraction, report.mean_error)
    return report


def error_histogram(errors: np.ndarray, bin_width: float = HISTOGRAM_BIN) -> pd.DataFrame:
    """Counts of impact-time error in fixed-width bins aligned to multiples of bin_width."""
    errors = np.asarray(errors, dtype=np.float64)
    errors = errors[np.isfinite(errors)]
    if errors.size == 0:
        return pd.DataFrame(columns=["bin_left", "bin_right", "count"])
    lo = math.floor(errors.min() / bin_width) * bin_width
    hi = math.ceil(errors.max() / bin_width) * bin_width
    if hi <= lo:
        hi = lo + bin_width
    n_bins = int(round((hi - lo) / bin_width))
    counts, edges = np.histogram(errors, bins=n_bins, range=(lo, hi))
    return pd.DataFrame({"bin_left": edges[:-1], "bin_right": edges[1:], "count": counts})


def export_report(report: MonteCarloReport, out_dir: str) -> List[str]:
    """monte_carlo_runs.csv, monte_carlo_histogram.csv, monte_carlo_series.csv."""
    runs = pd.DataFrame([asdict(r) for r in report.runs])
    errors = runs["impact_error"].to_numpy() if len(runs) else np.zeros(0)
    series = pd.DataFrame(report.series, columns=["run", "t_norm", "eps_t"])
    return [
        write_csv(os.path.join(out_dir, "monte_carlo_runs.csv"), runs),
        write_csv(os.path.join(out_dir, "monte_carlo_histogram.csv"), error_histogram(errors)),
        write_csv(os.path.join(out_dir, "monte_carlo_series.csv"), series),
    ]


def monte_carlo_experiment(
    config: EngagementConfig,
    models: GuidanceModels,
    n_runs: int,
    seed: int,
    out_dir: str,
    law: str = "proposed",
    workers: int = 1,
) -> Dict[str, Any]:
    report = run_monte_carlo(config, models, n_runs, seed, law=law, workers=workers)
    files = export_report(report, out_dir)
    return {
        "result": {"report": report, "files": files},
        "stats": report.stats(),
        "additional_info": {"law": law, "seed": seed, "histogram_bin_s": HISTOGRAM_BIN},
    }
