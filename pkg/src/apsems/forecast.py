"""Adaptive probabilistic forecasting of load and renewable injection.

The default estimator is an analog (k-nearest-neighbour) quantile model: the
lag vectors in the history closest to the current one are collected and the
realized values ``k`` steps after each of them form the empirical conditional
distribution for lead time ``k``. Quantiles use linear interpolation of order
statistics (``h = (n - 1) * tau``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

DEFAULT_TAU_GRID = (0.025, 0.05, 0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.975)


class ForecastFitError(ValueError):
    pass


class DataFormatError(ValueError):
    """Malformed time-series input; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}".strip())


@dataclass(frozen=True)
class TimeSeries:
    timestamps: tuple[datetime, ...]
    values: np.ndarray = field(repr=False)  # MW

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or len(values) != len(self.timestamps):
            raise ValueError("timestamps and values must be 1-D and of equal length")
        if not np.all(np.isfinite(values)):
            raise ValueError("time series contains missing or non-finite values")
        if len(self.timestamps) >= 2:
            steps = {b - a for a, b in zip(self.timestamps, self.timestamps[1:])}
            if len(steps) != 1 or next(iter(steps)) <= timedelta(0):
                raise ValueError("timestamps must be strictly increasing with constant spacing")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def step(self) -> timedelta | None:
        if len(self.timestamps) < 2:
            return None
        return self.timestamps[1] - self.timestamps[0]

    def slice(self, start: int, stop: int) -> "TimeSeries":
        return TimeSeries(self.timestamps[start:stop], self.values[start:stop])

    @classmethod
    def regular(cls, values: Sequence[float], step_seconds: float = 900.0,
                start: datetime = datetime(2024, 1, 1)) -> "TimeSeries":
        ts = tuple(start + timedelta(seconds=step_seconds * i) for i in range(len(values)))
        return cls(ts, np.asarray(values, dtype=float))


CSV_HEADER = ["timestamp", "load_mw", "wind_mw"]


def read_timeseries_csv(path: str | Path,
                        step_seconds: float | None = None) -> tuple[TimeSeries, TimeSeries]:
    """Read ``timestamp,load_mw,wind_mw`` rows into (load, wind) series.

    Rejects malformed rows with their line number. When ``step_seconds`` is
    given the spacing must match it.
    """
    path = str(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot open: {exc.strerror}", path=path) from exc
    stamps: list[datetime] = []
    load: list[float] = []
    wind: list[float] = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != CSV_HEADER:
            raise DataFormatError(f"expected header {','.join(CSV_HEADER)!r}", 1, path)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise DataFormatError(f"expected 3 fields, got {len(row)}", line, path)
            try:
                ts = datetime.fromisoformat(row[0].strip())
            except ValueError:
                raise DataFormatError(f"bad ISO-8601 timestamp {row[0]!r}", line, path) from None
            try:
                lv, wv = float(row[1]), float(row[2])
            except ValueError:
                raise DataFormatError("non-numeric power value", line, path) from None
            if not (np.isfinite(lv) and np.isfinite(wv)):
                raise DataFormatError("missing or non-finite power value", line, path)
            if stamps:
                delta = ts - stamps[-1]
                if delta <= timedelta(0):
                    raise DataFormatError("timestamps must be strictly increasing", line, path)
                if len(stamps) >= 2 and delta != stamps[1] - stamps[0]:
                    raise DataFormatError("non-constant time step", line, path)
                if step_seconds is not None and delta.total_seconds() != step_seconds:
                    raise DataFormatError(
                        f"time step {delta.total_seconds()} s differs from {step_seconds} s",
                        line, path)
            stamps.append(ts)
            load.append(lv)
            wind.append(wv)
    if not stamps:
        raise DataFormatError("no data rows", path=path)
    ts = tuple(stamps)
    return TimeSeries(ts, np.array(load)), TimeSeries(ts, np.array(wind))


def write_timeseries_csv(path: str | Path, load: TimeSeries, wind: TimeSeries) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for ts, lv, wv in zip(load.timestamps, load.values, wind.values):
            w.writerow([ts.isoformat(), repr(float(lv)), repr(float(wv))])


@dataclass(frozen=True)
class QuantileForecast:
    issue_time: datetime | int | None
    tau_grid: np.ndarray
    quantiles: np.ndarray  # [K, n_tau], MW
    variable_kind: str = "load"

    @property
    def horizon(self) -> int:
        return self.quantiles.shape[0]

    @property
    def lead_times(self) -> range:
        return range(1, self.horizon + 1)

    def median(self) -> np.ndarray:
        idx = np.flatnonzero(np.isclose(self.tau_grid, 0.5))
        if idx.size == 0:
            raise ValueError("tau grid has no median")
        return self.quantiles[:, idx[0]].copy()

    def interval(self, k: int, lo: float, hi: float) -> tuple[float, float]:
        return (float(sample_inverse_cdf(self, k, lo)), float(sample_inverse_cdf(self, k, hi)))


def _validated_tau_grid(tau_grid: Sequence[float]) -> np.ndarray:
    tau = np.asarray(tau_grid, dtype=float)
    if tau.ndim != 1 or tau.size == 0:
        raise ValueError("tau_grid must be a non-empty 1-D sequence")
    if np.any((tau <= 0) | (tau >= 1)):
        raise ValueError("quantile levels must lie in (0, 1)")
    if np.any(np.diff(tau) <= 0):
        raise ValueError("tau_grid must be strictly ascending")
    if not np.any(np.isclose(tau, 0.5)):
        raise ValueError("tau_grid must contain the median 0.5")
    return tau


class AnalogQuantileForecaster(BaseEstimator):
    """Nearest-analog conditional quantiles over lagged values.

    Parameters
    ----------
    n_lags : int
        Length of the lag vector (regressor made only of past values).
    n_neighbors : int
        Number of historical analogs whose future values form the sample.
    tau_grid : sequence of float
        Ascending quantile levels in (0, 1); must include 0.5.
    max_horizon : int
        Largest lead time that can be requested from :meth:`predict`.
    """

    def __init__(self, n_lags: int = 6, n_neighbors: int = 30,
                 tau_grid: Sequence[float] = DEFAULT_TAU_GRID, max_horizon: int = 8):
        self.n_lags = n_lags
        self.n_neighbors = n_neighbors
        self.tau_grid = tau_grid
        self.max_horizon = max_horizon

    def fit(self, X, y=None):
        """Store lag windows and their future values from a 1-D history ``X``."""
        if isinstance(X, TimeSeries):
            X = X.values
        series = check_array(np.asarray(X, dtype=float).reshape(-1, 1), ensure_min_samples=1,
                             input_name="X").ravel()
        if self.n_lags < 1:
            raise ForecastFitError("n_lags must be ≥ 1")
        if self.n_neighbors < 1:
            raise ForecastFitError("n_neighbors must be ≥ 1")
        if self.max_horizon < 1:
            raise ForecastFitError("max_horizon must be ≥ 1")
        if len(series) < 10 * self.n_lags:
            raise ForecastFitError(
                f"history has {len(series)} points; need at least {10 * self.n_lags} "
                f"(10 x n_lags)")
        if len(series) < self.n_lags + 1:
            raise ForecastFitError("history too short to form a single lag/target pair")
        self.tau_grid_ = _validated_tau_grid(self.tau_grid)
        n = self.n_lags
        # window w covers series[w : w + n] and ends at time index w + n - 1
        self.windows_ = np.lib.stride_tricks.sliding_window_view(series, n).copy()
        self.series_ = series
        self.n_features_in_ = n
        return self

    def _neighbors(self, lags: np.ndarray, k: int) -> np.ndarray:
        n = self.n_lags
        # windows with a realized value k steps after their last point
        n_valid = len(self.series_) - n - k + 1
        if n_valid < 1:
            raise ValueError(f"history too short for lead time {k}")
        cand = self.windows_[:n_valid]
        dist = np.sqrt(np.sum((cand - lags) ** 2, axis=1))
        order = np.argsort(dist, kind="stable")[: self.n_neighbors]
        return self.series_[order + n - 1 + k]

    def predict(self, X, horizon: int | None = None) -> np.ndarray:
        """Quantiles for each query lag vector: shape ``[n_queries, horizon, n_tau]``."""
        check_is_fitted(self, "windows_")
        X = check_array(X, ensure_2d=False, input_name="X")
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_lags:
            raise ValueError(f"lag vector length {X.shape[1]} != n_lags {self.n_lags}")
        K = self.max_horizon if horizon is None else horizon
        if not 1 <= K <= self.max_horizon:
            raise ValueError(f"horizon must be in [1, {self.max_horizon}]")
        out = np.empty((X.shape[0], K, len(self.tau_grid_)))
        for q, lags in enumerate(X):
            for k in range(1, K + 1):
                targets = self._neighbors(lags, k)
                row = np.quantile(targets, self.tau_grid_, method="linear")
                out[q, k - 1] = np.sort(row)  # monotone rearrangement
        return out

    def predict_quantiles(self, current_lags, horizon: int, issue_time=None,
                          variable_kind: str = "load") -> QuantileForecast:
        q = self.predict(np.asarray(current_lags, dtype=float)[None, :], horizon)[0]
        return QuantileForecast(issue_time, self.tau_grid_.copy(), q, variable_kind)

    def analog_targets(self, current_lags, k: int) -> np.ndarray:
        """Realized k-step-ahead values of the selected analogs (for diagnostics)."""
        check_is_fitted(self, "windows_")
        return self._neighbors(np.asarray(current_lags, dtype=float), k)


def fit_quantile_estimator(history: TimeSeries | Sequence[float], n_lags: int = 6,
                           tau_grid: Sequence[float] = DEFAULT_TAU_GRID, n_neighbors: int = 30,
                           max_horizon: int = 8) -> AnalogQuantileForecaster:
    values = history.values if isinstance(history, TimeSeries) else history
    return AnalogQuantileForecaster(n_lags=n_lags, n_neighbors=n_neighbors, tau_grid=tau_grid,
                                    max_horizon=max_horizon).fit(values)


def predict_quantiles(estimator: AnalogQuantileForecaster, current_lags, K: int,
                      issue_time=None, variable_kind: str = "load") -> QuantileForecast:
    return estimator.predict_quantiles(current_lags, K, issue_time, variable_kind)


def sample_inverse_cdf(qf: QuantileForecast, k: int, u):
    """Piecewise-linear inverse CDF through (tau, quantile) at lead time ``k``.

    Draws below the first or above the last level are clamped to the extreme
    quantiles. ``u`` may be a scalar or an array.
    """
    if not 1 <= k <= qf.horizon:
        raise ValueError(f"lead time {k} outside 1..{qf.horizon}")
    u_arr = np.asarray(u, dtype=float)
    if np.any((u_arr <= 0) | (u_arr >= 1)):
        raise ValueError("u must lie in (0, 1)")
    row = qf.quantiles[k - 1]
    if len(qf.tau_grid) == 1:
        res = np.full(u_arr.shape, row[0])
    else:
        res = np.interp(u_arr, qf.tau_grid, row)
    return float(res) if res.ndim == 0 else res


def inverse_cdf_cdf(qf: QuantileForecast, k: int, value) -> np.ndarray:
    """CDF matching :func:`sample_inverse_cdf`: probability mass at or below ``value``.

    Flat quantile segments become jumps; mass below the first level sits at
    the lowest quantile and mass above the last at the highest.
    """
    row = qf.quantiles[k - 1]
    tau = qf.tau_grid
    v = np.atleast_1d(np.asarray(value, dtype=float))
    out = np.empty_like(v)
    for i, x in enumerate(v):
        if x < row[0]:
            out[i] = 0.0
        elif x >= row[-1]:
            out[i] = 1.0
        else:
            j = int(np.searchsorted(row, x, side="right"))  # row[j-1] <= x < row[j]
            out[i] = tau[j - 1] + (tau[j] - tau[j - 1]) * (x - row[j - 1]) / (row[j] - row[j - 1])
    return out


@dataclass(frozen=True)
class NetLoadForecast:
    """Median net-load trajectory in pu plus the two source forecasts.

    ``xi[0]`` is the measured net load at issue time; ``xi[k]`` for k >= 1 is
    the median load minus the median renewable injection at lead time k.
    """

    xi: np.ndarray
    load_fc: QuantileForecast
    ren_fc: QuantileForecast
    s_base: float = 1.0

    @property
    def horizon(self) -> int:
        return len(self.xi) - 1


def net_load_forecast(load_qf: QuantileForecast, ren_qf: QuantileForecast, measured_xi0: float,
                      s_base: float = 1.0) -> NetLoadForecast:
    """Combine load and renewable forecasts; ``s_base`` converts MW to pu."""
    if load_qf.horizon != ren_qf.horizon:
        raise ValueError(f"horizon mismatch: load K={load_qf.horizon}, "
                         f"renewable K={ren_qf.horizon}")
    if load_qf.issue_time != ren_qf.issue_time:
        raise ValueError("load and renewable forecasts have different issue times")
    xi = np.empty(load_qf.horizon + 1)
    xi[0] = measured_xi0
    xi[1:] = (load_qf.median() - ren_qf.median()) / s_base
    return NetLoadForecast(xi, load_qf, ren_qf, s_base)


def constant_forecast(value: float, horizon: int, tau_grid: Sequence[float] = DEFAULT_TAU_GRID,
                      issue_time=None, variable_kind: str = "renewable") -> QuantileForecast:
    tau = _validated_tau_grid(tau_grid)
    return QuantileForecast(issue_time, tau, np.full((horizon, len(tau)), float(value)),
                            variable_kind)


def interval_coverage(estimator: AnalogQuantileForecaster, series: Sequence[float], start: int,
                      lo: float = 0.1, hi: float = 0.9, k: int = 1) -> float:
    """Fraction of issue times in ``series[start:]`` whose [lo, hi] interval at
    lead ``k`` contains the realized value."""
    series = np.asarray(series, dtype=float)
    n = estimator.n_lags
    hits = total = 0
    for t in range(max(start, n - 1), len(series) - k):
        qf = estimator.predict_quantiles(series[t - n + 1: t + 1], k, issue_time=t)
        a, b = qf.interval(k, lo, hi)
        total += 1
        hits += a <= series[t + k] <= b
    return hits / total if total else float("nan")


def rolling_interval_coverage(series: Sequence[float], start: int, n_lags: int = 6,
                              n_neighbors: int = 30, lo: float = 0.1, hi: float = 0.9,
                              k: int = 1, tau_grid: Sequence[float] = DEFAULT_TAU_GRID) -> float:
    """Out-of-sample coverage: each issue time refits on data up to itself."""
    series = np.asarray(series, dtype=float)
    hits = total = 0
    for t in range(max(start, 10 * n_lags - 1), len(series) - k):
        est = AnalogQuantileForecaster(n_lags, n_neighbors, tau_grid, max_horizon=k)
        est.fit(series[: t + 1])
        qf = est.predict_quantiles(series[t - n_lags + 1: t + 1], k, issue_time=t)
        a, b = qf.interval(k, lo, hi)
        total += 1
        hits += a <= series[t + k] <= b
    return hits / total if total else float("nan")
