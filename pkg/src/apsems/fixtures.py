"""Synthetic systems and time series used by the demos and tests.

All fixtures are deterministic functions of their arguments. The checked-in
files under ``data/`` were written by :func:`write_canonical_data`.
"""

from __future__ import annotations

import json
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .core_types import System, system_from_dict
from .forecast import TimeSeries, write_timeseries_csv

EPOCH = datetime(2024, 1, 1, tzinfo=timezone.utc)
STEPS_PER_DAY = 96
CANONICAL_HISTORY = 20 * STEPS_PER_DAY + 28
CANONICAL_STEPS = 24


def system_dict(n_g: int = 3, k_steps: int = 8, e_max: float = 20.0) -> dict:
    gens = []
    for g in range(n_g):
        gens.append({
            "name": f"GT{g + 1}",
            "inertia_m": 0.8 + 0.1 * g,
            "p_min": 0.10,
            "p_opt": 0.35,
            "p_max": 0.55,
            "droop_min": 1.0,
            "droop_max": 4.0,
            "default_droop": 1.0,
            "fuel_a": 20.0 + 2.0 * g,
            "fuel_b": 150.0 + 5.0 * g,
            "startup_cost": 40.0,
        })
    return {
        "generators": gens,
        "ess": {"p_max": 0.4, "e_max": e_max, "soc_min": 0.2, "soc_max": 0.9,
                "eta_ch": 0.95, "eta_dis": 0.95, "lambda": 0.03,
                "vinertia_max": 5.0, "vdroop_max": 8.0},
        "grid": {"s_base": 10.0, "f_nom": 50.0, "r_ss": 0.03, "r_tr": 0.05, "rocof_max": 0.05},
        "horizon": {"step_seconds": 900.0, "k_steps": k_steps},
    }


def canonical_system(n_g: int = 3, k_steps: int = 8) -> System:
    return system_from_dict(system_dict(n_g, k_steps))


def stress_system(n_g: int = 3, k_steps: int = 8) -> System:
    """Small battery: the energy-deviation rows bind hard at low SoC."""
    return system_from_dict(system_dict(n_g, k_steps, e_max=1.0))


def _timestamps(n: int, step_seconds: float) -> tuple:
    return tuple(EPOCH + timedelta(seconds=i * step_seconds) for i in range(n))


def step_day_profile(n_days: int, seed: int = 0, base_mw: float = 5.5, step_mw: float = 1.0,
                     step_start: int = 40, step_len: int = 12, event_prob: float = 0.5,
                     noise_mw: float = 0.08, daily_amp_mw: float = 1.0) -> np.ndarray:
    """Load series with a daily sinusoid and, on some days, a block step.

    The sinusoid's slope lets a short window of lagged values identify the
    time of day. The block starts at a fixed phase; whether it happens on a
    given day is random. The last day always has the step so rolling-horizon
    runs that end there see one.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(n_days * STEPS_PER_DAY)
    phase = t % STEPS_PER_DAY
    daily = daily_amp_mw * np.sin(2.0 * np.pi * phase / STEPS_PER_DAY)
    y = base_mw + daily + noise_mw * rng.standard_normal(t.size)
    events = rng.random(n_days) < event_prob
    events[-1] = True
    for d in np.flatnonzero(events):
        lo = d * STEPS_PER_DAY + step_start
        y[lo: lo + step_len] += step_mw
    return y


def wind_profile(n: int, seed: int = 1, mean_mw: float = 0.5,
                 noise_mw: float = 0.05) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.clip(mean_mw + noise_mw * rng.standard_normal(n), 0.0, None)


def canonical_series(n_days: int = 21, seed: int = 0,
                     step_seconds: float = 900.0) -> tuple[TimeSeries, TimeSeries]:
    load = step_day_profile(n_days, seed)
    wind = wind_profile(load.size, seed + 1)
    ts = _timestamps(load.size, step_seconds)
    return TimeSeries(ts, load), TimeSeries(ts, wind)


def canonical_split(n_steps: int = CANONICAL_STEPS):
    """(history, realized) pairs: realized starts 12 steps before the last day's step."""
    load, wind = canonical_series()
    h = CANONICAL_HISTORY
    return ((load.slice(0, h), wind.slice(0, h)),
            (load.slice(h, h + n_steps), wind.slice(h, h + n_steps)))


def write_canonical_data(root: str | Path) -> None:
    """Write the fixture files: system variants and the canonical series
    truncated to history plus the run window."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for name, doc in (("system.json", system_dict()),
                      ("system_stress.json", system_dict(e_max=1.0)),
                      ("system_small.json", system_dict(n_g=2, k_steps=3))):
        (root / name).write_text(json.dumps(doc, indent=2) + "\n")
    load, wind = canonical_series()
    n = CANONICAL_HISTORY + CANONICAL_STEPS
    write_timeseries_csv(root / "canonical.csv", load.slice(0, n), wind.slice(0, n))
