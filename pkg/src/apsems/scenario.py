"""Scenario-approach sampling of net-load perturbations.

Index convention: ``samples[i, k]`` holds the sampled net load for lead time
``k + 1`` and ``perturbations[i, k] = |xi[k] - samples[i, k]|``, i.e. the jump
from the mean value at step ``k`` (``xi[0]`` is the live measurement) to the
sampled value one step later.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .forecast import NetLoadForecast, sample_inverse_cdf


@dataclass(frozen=True)
class ScenarioParams:
    epsilon: float = 0.1
    beta: float = 1e-4
    expansion_e: float = math.e
    n_override: int | None = None

    def __post_init__(self):
        problems = []
        if not 0 < self.epsilon < 1:
            problems.append("epsilon must lie in (0, 1)")
        if not 0 < self.beta < 1:
            problems.append("beta must lie in (0, 1)")
        if not self.expansion_e > 1:
            problems.append("expansion_e must be > 1")
        if self.n_override is not None and self.n_override < 1:
            problems.append("n_override must be ≥ 1")
        if problems:
            raise ValueError("; ".join(problems))


def scenario_bound(epsilon: float, beta: float, K: int, expansion_e: float = math.e) -> float:
    """Right-hand side of the sample-size inequality (before rounding up)."""
    e = expansion_e
    return (1.0 / epsilon) * (e / (e - 1.0)) * (math.log(1.0 / beta) + 4 * K - 1)


def scenario_count(p: ScenarioParams, K: int) -> int:
    """Smallest N with N >= (1/eps) * e/(e-1) * (ln(1/beta) + 4K - 1)."""
    if K < 1:
        raise ValueError("K must be ≥ 1")
    bound = scenario_bound(p.epsilon, p.beta, K, p.expansion_e)
    n = math.ceil(bound)
    # guard against the bound landing a hair above an integer through rounding
    if n - 1 >= bound:
        n -= 1
    return max(n, 1)


@dataclass(frozen=True)
class ScenarioSet:
    samples: np.ndarray = field(repr=False)  # [N, K] pu
    perturbations: np.ndarray = field(repr=False)  # [N, K] pu, >= 0
    seed: int | None = None

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        p = np.asarray(self.perturbations, dtype=float)
        if s.ndim != 2 or s.shape != p.shape or s.shape[0] < 1:
            raise ValueError("samples and perturbations must be equal-shape [N, K] with N ≥ 1")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(p))):
            raise ValueError("scenario values must be finite")
        if np.any(p < 0):
            raise ValueError("perturbations must be non-negative")
        s.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "perturbations", p)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def horizon(self) -> int:
        return self.samples.shape[1]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["scenario", "k", "delta_pu", "perturbation_pu"])
            for i in range(self.n):
                for k in range(self.horizon):
                    w.writerow([i, k, repr(float(self.samples[i, k])),
                                repr(float(self.perturbations[i, k]))])

    @classmethod
    def from_csv(cls, path: str | Path, seed: int | None = None) -> "ScenarioSet":
        rows = []
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["scenario", "k", "delta_pu", "perturbation_pu"]:
                raise ValueError(f"{path}:1: bad scenario header {header!r}")
            for row in reader:
                if not row:
                    continue
                try:
                    rows.append((int(row[0]), int(row[1]), float(row[2]), float(row[3])))
                except (ValueError, IndexError):
                    raise ValueError(f"{path}:{reader.line_num}: malformed row") from None
        if not rows:
            raise ValueError(f"{path}: no scenario rows")
        n = max(r[0] for r in rows) + 1
        K = max(r[1] for r in rows) + 1
        if len(rows) != n * K:
            raise ValueError(f"{path}: expected {n * K} rows, found {len(rows)}")
        s = np.full((n, K), np.nan)
        p = np.full((n, K), np.nan)
        for i, k, d, q in rows:
            s[i, k], p[i, k] = d, q
        return cls(s, p, seed)


def perturbations_from(xi: np.ndarray, samples: np.ndarray) -> np.ndarray:
    """``|xi[k] - samples[:, k]|`` for k = 0..K-1."""
    K = samples.shape[1]
    return np.abs(np.asarray(xi, dtype=float)[:K][None, :] - samples)


def _scenario_rng(seed: int, i: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(i)]))


def draw_scenarios(fc: NetLoadForecast, n: int, seed: int = 0) -> ScenarioSet:
    """Draw ``n`` multi-samples over the horizon by independent inverse-CDF
    sampling of load and renewable forecasts (2K uniforms per scenario).

    Each scenario has its own generator derived from ``(seed, i)`` so rows can
    be produced in any order.
    """
    if n < 1:
        raise ValueError("n must be ≥ 1")
    K = fc.horizon
    samples = np.empty((n, K))
    for i in range(n):
        rng = _scenario_rng(seed, i)
        u = rng.random((2, K))
        # open interval: random() is in [0, 1)
        u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
        for k in range(1, K + 1):
            load = sample_inverse_cdf(fc.load_fc, k, u[0, k - 1])
            ren = sample_inverse_cdf(fc.ren_fc, k, u[1, k - 1])
            samples[i, k - 1] = (load - ren) / fc.s_base
    return ScenarioSet(samples, perturbations_from(fc.xi, samples), seed)


def build_scenarios(fc: NetLoadForecast, params: ScenarioParams, seed: int = 0) -> ScenarioSet:
    n = params.n_override if params.n_override is not None else scenario_count(params, fc.horizon)
    return draw_scenarios(fc, n, seed)


def worst_case_perturbation(scen: ScenarioSet, k: int) -> float:
    if not 0 <= k < scen.horizon:
        raise IndexError(f"step {k} outside 0..{scen.horizon - 1}")
    return float(np.max(scen.perturbations[:, k]))
