"""Center-of-inertia swing dynamics with droop and virtual inertia.

The state is the frequency deviation ``dx = X - 1`` where ``X = omega/omega_s``.
Dynamics (negative-feedback convention)::

    d(dx)/dt = -(D/M) * dx - P_nl(t) / ((1 + dx) * M)

integrated with fixed-step classical RK4. The ESS primary-control power is
``M_b * d(dx)/dt + D_b * dx`` and its time integral is accumulated with the
trapezoidal rule.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np

from .core_types import GridSpec
from .freqres import EnergyDeviationBound


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Disturbance:
    """Net-load imbalance profile in pu.

    ``kind="step"``: piecewise constant, value of the last event at or before t
    (zero before the first event). ``kind="ramp"``: piecewise linear through the
    knots, held constant outside them.
    """

    events: tuple[tuple[float, float], ...]
    kind: str = "step"

    def __post_init__(self):
        if self.kind not in ("step", "ramp"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        times = [t for t, _ in self.events]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("disturbance event times must be non-decreasing")

    @classmethod
    def step(cls, size: float, t_event: float = 0.0) -> "Disturbance":
        return cls(((float(t_event), float(size)),))

    @classmethod
    def ramp(cls, size: float, t_start: float, t_end: float) -> "Disturbance":
        return cls(((float(t_start), 0.0), (float(t_end), float(size))), kind="ramp")

    def value(self, t: float) -> float:
        if not self.events:
            return 0.0
        if self.kind == "step":
            v = 0.0
            for te, pe in self.events:
                if te <= t:
                    v = pe
                else:
                    break
            return v
        times = [e[0] for e in self.events]
        vals = [e[1] for e in self.events]
        return float(np.interp(t, times, vals))

    @property
    def peak(self) -> float:
        return max((abs(v) for _, v in self.events), default=0.0)


@dataclass(frozen=True)
class SwingScenario:
    m_total: float  # s
    d_total: float  # pu / pu
    disturbance: Disturbance
    duration: float = 60.0
    dt: float = 1e-3
    ess_droop: float = 0.0
    ess_vinertia: float = 0.0
    gt_droop_sum: float | None = None

    def __post_init__(self):
        problems = []
        if not self.m_total > 0:
            problems.append("m_total must be > 0")
        if not self.d_total >= 0:
            problems.append("d_total must be ≥ 0")
        if not self.dt > 0:
            problems.append("dt must be > 0")
        if not self.duration > 0:
            problems.append("duration must be > 0")
        if self.ess_droop < 0 or self.ess_vinertia < 0:
            problems.append("ESS droop and virtual inertia must be ≥ 0")
        if self.ess_droop > self.d_total * (1 + 1e-12) + 1e-12:
            problems.append("ess_droop exceeds d_total")
        if self.ess_vinertia > self.m_total * (1 + 1e-12) + 1e-12:
            problems.append("ess_vinertia exceeds m_total")
        if self.gt_droop_sum is not None and not math.isclose(
                self.gt_droop_sum + self.ess_droop, self.d_total, rel_tol=1e-9, abs_tol=1e-12):
            problems.append("gt_droop_sum + ess_droop must equal d_total")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def gt_inertia_sum(self) -> float:
        return self.m_total - self.ess_vinertia


@dataclass
class SwingTrace:
    t: np.ndarray
    x: np.ndarray  # frequency ratio
    rocof: np.ndarray  # pu / s
    p_ess: np.ndarray  # pu
    energy_dev: np.ndarray  # pu*s
    metrics: dict[str, float] = field(default_factory=dict)

    @property
    def dx(self) -> np.ndarray:
        return self.x - 1.0

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "x", "rocof", "p_ess_pu", "energy_dev_pu_s"])
            for row in zip(self.t, self.x, self.rocof, self.p_ess, self.energy_dev):
                w.writerow([repr(float(v)) for v in row])


def steady_state_deviation(p_nl: float, d_total: float) -> float:
    """Equilibrium of the swing equation: root of dx * (1 + dx) = -p_nl / D near 0."""
    if p_nl == 0:
        return 0.0
    if d_total <= 0:
        raise ValueError("a non-zero imbalance has no equilibrium without damping")
    c = p_nl / d_total
    disc = 1.0 - 4.0 * c
    if disc < 0:
        raise ValueError("no real equilibrium: damping too small for this imbalance")
    # numerically stable form of (-1 + sqrt(disc)) / 2
    return -2.0 * c / (1.0 + math.sqrt(disc))


def simulate(sc: SwingScenario, record_every: int = 1) -> SwingTrace:
    """Integrate the swing equation over ``sc.duration`` with step ``sc.dt``.

    RoCoF is taken from the right-hand side, so the value stored at an event
    instant is the post-event derivative. Raises :class:`SimulationError` if
    ``|dx|`` exceeds 1.
    """
    n = int(round(sc.duration / sc.dt))
    if n < 1:
        raise ValueError("duration shorter than one step")
    dt = sc.dt
    inv_m = 1.0 / sc.m_total
    a = sc.d_total * inv_m
    m_b, d_b = sc.ess_vinertia, sc.ess_droop
    dist = sc.disturbance
    step_kind = dist.kind == "step"

    def f(d: float, p: float) -> float:
        return -a * d - p * inv_m / (1.0 + d)

    m_rec = n // record_every + 1
    ts = np.empty(m_rec)
    xs = np.empty(m_rec)
    rs = np.empty(m_rec)
    ps = np.empty(m_rec)
    es = np.empty(m_rec)

    d = 0.0
    energy = 0.0
    max_rocof = 0.0
    zenith = nadir = 0.0
    p0 = dist.value(0.0)
    r0 = f(0.0, p0)
    ts[0], xs[0], rs[0], ps[0], es[0] = 0.0, 1.0, r0, m_b * r0, 0.0
    max_rocof = abs(r0)
    j = 1
    for i in range(n):
        t = i * dt
        if step_kind:
            # hold the segment value over the whole step so events on the grid are exact
            p1 = p2 = p3 = dist.value(t + 0.5 * dt)
        else:
            p1, p2, p3 = dist.value(t), dist.value(t + 0.5 * dt), dist.value(t + dt)
        k1 = f(d, p1)
        k2 = f(d + 0.5 * dt * k1, p2)
        k3 = f(d + 0.5 * dt * k2, p2)
        k4 = f(d + dt * k3, p3)
        d_new = d + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not (abs(d_new) <= 1.0):
            raise SimulationError(f"frequency deviation diverged at t={t + dt:.6g} s; reduce dt")
        # trapezoid over the segment using the same disturbance value at both ends
        r_end_seg = f(d_new, p3)
        energy += 0.5 * dt * ((m_b * k1 + d_b * d) + (m_b * r_end_seg + d_b * d_new))
        d = d_new
        t_new = (i + 1) * dt
        p_next = dist.value(t_new)
        r = f(d, p_next)
        if abs(r) > max_rocof:
            max_rocof = abs(r)
        if abs(k1) > max_rocof:
            max_rocof = abs(k1)
        if d > zenith:
            zenith = d
        if d < nadir:
            nadir = d
        if (i + 1) % record_every == 0:
            ts[j] = t_new
            xs[j] = 1.0 + d
            rs[j] = r
            ps[j] = m_b * r + d_b * d
            es[j] = energy
            j += 1
    trace = SwingTrace(t=ts[:j], x=xs[:j], rocof=rs[:j], p_ess=ps[:j], energy_dev=es[:j])
    trace.metrics = {
        "nadir": nadir,
        "zenith": zenith,
        "max_abs_dev": max(abs(nadir), abs(zenith)),
        "max_abs_rocof": max_rocof,
        "steady_state_dev": d,
        "energy_dev": energy,
        "abs_energy_dev": abs(energy),
    }
    return trace


@dataclass(frozen=True)
class BoundsReport:
    steady_state_ok: bool
    transient_ok: bool
    rocof_ok: bool
    energy_ok: bool
    margins: dict[str, float]

    @property
    def all_ok(self) -> bool:
        return self.steady_state_ok and self.transient_ok and self.rocof_ok and self.energy_ok

    def lines(self) -> list[str]:
        names = [("steady_state", self.steady_state_ok), ("transient", self.transient_ok),
                 ("rocof", self.rocof_ok), ("energy", self.energy_ok)]
        return [f"{name:<13} {'PASS' if ok else 'FAIL'}  margin={self.margins[name]:+.6g}"
                for name, ok in names]


def verify_bounds(trace: SwingTrace, grid: GridSpec, bound: EnergyDeviationBound | None = None,
                  rtol: float = 1e-6) -> BoundsReport:
    """Compare trace metrics with the grid limits and, if given, the energy bound.

    Margins are limit minus observed value (positive means slack).
    """
    m = trace.metrics
    ss = abs(m["steady_state_dev"])
    margins = {
        "steady_state": grid.r_ss - ss,
        "transient": grid.r_tr - m["max_abs_dev"],
        "rocof": grid.rocof_max - m["max_abs_rocof"],
    }
    if bound is None:
        margins["energy"] = math.inf
        energy_ok = True
    else:
        limit = min(bound.hat_delta_e, bound.allowed)
        margins["energy"] = limit - m["abs_energy_dev"]
        energy_ok = m["abs_energy_dev"] <= limit * (1 + rtol) + 1e-12
    return BoundsReport(
        steady_state_ok=ss <= grid.r_ss * (1 + rtol),
        transient_ok=m["max_abs_dev"] <= grid.r_tr * (1 + rtol),
        rocof_ok=m["max_abs_rocof"] <= grid.rocof_max * (1 + rtol),
        energy_ok=energy_ok,
        margins=margins,
    )


@dataclass(frozen=True)
class ConvergenceResult:
    error_coarse: float
    error_fine: float
    ratio: float
    order: float


def convergence_check(sc: SwingScenario) -> ConvergenceResult:
    """Estimate the observed order from runs at dt and dt/2 against a dt/8 reference.

    Errors are the max deviation difference on the coarse time grid.
    """
    def run(dt: float) -> np.ndarray:
        return simulate(SwingScenario(sc.m_total, sc.d_total, sc.disturbance, sc.duration, dt,
                                      sc.ess_droop, sc.ess_vinertia, sc.gt_droop_sum)).x

    ref = run(sc.dt / 8)[::8]
    coarse = run(sc.dt)
    fine = run(sc.dt / 2)[::2]
    e1 = float(np.max(np.abs(coarse - ref)))
    e2 = float(np.max(np.abs(fine - ref)))
    if e2 == 0.0:
        ratio = math.inf if e1 > 0 else 1.0
    else:
        ratio = e1 / e2
    order = math.log2(ratio) if 0 < ratio < math.inf else (math.inf if ratio == math.inf else 0.0)
    return ConvergenceResult(e1, e2, ratio, order)


def scenario_from_totals(m_total: float, d_total: float, step_pu: float, t_event: float = 2.0,
                         m_b: float = 0.0, d_b: float = 0.0, duration: float = 60.0,
                         dt: float = 1e-3) -> SwingScenario:
    return SwingScenario(m_total=m_total, d_total=d_total,
                         disturbance=Disturbance.step(step_pu, t_event), duration=duration,
                         dt=dt, ess_droop=d_b, ess_vinertia=m_b, gt_droop_sum=d_total - d_b)

