"""Seed sweeps and order-statistic summaries for simulator experiments."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .monitor import error_series_from_bins
from .simulator import DEFAULT_SEED, Scenario, replay_mb, run


def seeds(n=10, base=DEFAULT_SEED) -> list:
    return [base + i for i in range(n)]


def _median_of(sc: Scenario) -> float:
    return run(sc).errors.median()


def run_many(scenarios, workers=1) -> list:
    """Run scenarios (optionally in worker processes); results keep input order."""
    scenarios = list(scenarios)
    if workers <= 1:
        return [run(sc) for sc in scenarios]
    with ProcessPoolExecutor(workers) as pool:
        return list(pool.map(run, scenarios))


def seed_medians(sc: Scenario, seed_list=None, workers=1) -> np.ndarray:
    """Median error of one run per seed."""
    seed_list = seed_list if seed_list is not None else seeds()
    points = [sc.replace(seed=s) for s in seed_list]
    if workers <= 1:
        return np.array([_median_of(p) for p in points])
    with ProcessPoolExecutor(workers) as pool:
        return np.array(list(pool.map(_median_of, points)))


def timescale_medians(result, timescales, step=1.0) -> np.ndarray:
    """Median error of one run's link bins re-evaluated at several averaging timescales."""
    sc = result.scenario
    return np.array([error_series_from_bins(result.bins, I, step, sc.small_window, sc.duration).median()
                     for I in timescales])


def replay_medians(result, windows, timescale=None) -> np.ndarray:
    """Median error when replaying one run's trace with each window size."""
    sc = result.scenario
    timescale = timescale if timescale is not None else sc.timescale
    return np.array([replay_mb(result.trace, W, timescale, sc.step, sc.small_window, sc.link_count,
                               duration=sc.duration).median() for W in windows])


def wins(a, b) -> int:
    """Number of paired seeds where ``a < b``."""
    return int(np.sum(np.asarray(a) < np.asarray(b)))
