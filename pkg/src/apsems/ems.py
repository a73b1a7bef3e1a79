"""Rolling-horizon energy management.

Each step: measure the net load, forecast load and wind, draw scenarios,
build and solve the scheduling MILP, apply the first-step decision, replay
the worst sampled disturbance through the swing simulator, and carry the SoC
and commitment over to the next step.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core_types import System
from .forecast import (
    AnalogQuantileForecaster,
    NetLoadForecast,
    TimeSeries,
    fit_quantile_estimator,
    net_load_forecast,
)
from .freqres import (
    EnergyDeviationBound,
    ReserveAllocation,
    aggregate,
    energy_bound,
    min_damping,
    min_inertia,
)
from .milp.formulation import CostWeights, EmsDecision, build_model, extract_decision
from .milp.model import MilpModel
from .scenario import ScenarioParams, ScenarioSet, build_scenarios
from .solver.backend import solve_model
from .solver.bnb import MipResult
from .solver.simplex import BoundedSimplex
from .swingsim import (
    BoundsReport,
    Disturbance,
    SwingScenario,
    SwingTrace,
    simulate,
    verify_bounds,
)


class EmsError(RuntimeError):
    pass


@dataclass
class EmsOptions:
    scenario: ScenarioParams = field(default_factory=lambda: ScenarioParams(n_override=50))
    weights: CostWeights = field(default_factory=CostWeights)
    backend: str = "highs"
    max_seconds: float = 60.0  # per MILP
    n_lags: int = 6
    n_neighbors: int = 30
    soc0: float = 0.5
    prev_states: tuple[int, ...] | None = None  # defaults to all units online
    collapse_scenarios: bool = True
    polish: bool = True
    simulate: bool = True
    sim_dt: float = 0.01
    sim_duration: float | None = None  # defaults to the EMS step length
    sim_t_event: float = 2.0
    trace_every: int = 10
    keep_traces: bool = False


@dataclass
class StepInputs:
    fc: NetLoadForecast
    scen: ScenarioSet
    soc0: float
    prev_states: tuple[int, ...]


@dataclass
class StepRecord:
    step: int
    issue_index: int
    xi0: float
    status: str
    inputs: StepInputs
    objective: float = math.nan
    solve_seconds: float = 0.0
    nodes: int = 0
    decision: EmsDecision | None = None
    soc_start: float = math.nan
    soc_end: float = math.nan
    realized_jump: float = math.nan
    validation_p_nl: float = 0.0
    bound: EnergyDeviationBound | None = None
    sim_metrics: dict | None = None
    sim_report: BoundsReport | None = None
    trace: SwingTrace | None = None
    diagnostics: str = ""

    # applied (first-step) quantities
    @property
    def gt_states(self) -> np.ndarray:
        return self.decision.gt_states[0]

    @property
    def gt_powers(self) -> np.ndarray:
        return self.decision.gt_powers[0]

    @property
    def ess_charge(self) -> float:
        return float(self.decision.ess_charge[0])

    @property
    def ess_discharge(self) -> float:
        return float(self.decision.ess_discharge[0])

    @property
    def gt_droops(self) -> np.ndarray:
        return self.decision.gt_droops[0]

    @property
    def ess_droop(self) -> float:
        return float(self.decision.ess_droop[0])

    @property
    def ess_vinertia(self) -> float:
        return float(self.decision.ess_vinertia[0])

    def allocation(self) -> ReserveAllocation:
        return ReserveAllocation(tuple(map(float, self.gt_droops)),
                                 tuple(map(int, self.gt_states)), self.ess_droop,
                                 self.ess_vinertia)


@dataclass
class KpiReport:
    fuel_consumption: float = 0.0
    operating_cost: float = 0.0
    gt_hours: float = 0.0
    gt_startups: int = 0
    ess_degradation: float = 0.0
    bound_violations: int = 0

    def to_dict(self) -> dict:
        return {"fuel_consumption": self.fuel_consumption, "operating_cost": self.operating_cost,
                "gt_hours": self.gt_hours, "gt_startups": self.gt_startups,
                "ess_degradation": self.ess_degradation,
                "bound_violations": self.bound_violations}


@dataclass
class EmsRun:
    variant: str
    system: System
    seed: int
    initial_states: tuple[int, ...]
    initial_soc: float
    steps: list[StepRecord] = field(default_factory=list)
    status: str = "complete"  # complete | infeasible | limit
    diagnostics: str = ""
    kpis: KpiReport = field(default_factory=KpiReport)

    @property
    def solved_steps(self) -> list[StepRecord]:
        return [s for s in self.steps if s.decision is not None]


# --------------------------------------------------------------------- helpers

def step_seed(seed: int, step: int) -> int:
    """Independent scenario seed per EMS step, derived from the run seed."""
    return int(np.random.SeedSequence([int(seed), int(step)]).generate_state(1, np.uint64)[0])


def polish_solution(model: MilpModel, x: np.ndarray) -> np.ndarray:
    """Re-solve the LP with the binaries fixed, returning a clean vertex.

    Backends with looser feasibility tolerances can leave tiny residuals;
    the native simplex works to 1e-9. Falls back to ``x`` if the fixed LP
    does not solve.
    """
    lb, ub = model.bounds()
    mask = model.binary_mask()
    xb = np.round(x[mask])
    lb[mask] = xb
    ub[mask] = xb
    sol = BoundedSimplex(model.matrix(), model.rhs(), model.senses(),
                         model.cost_vector()).solve(lb, ub)
    if sol.status != "optimal":
        return x
    return sol.x


def infeasible_groups(model: MilpModel, backend: str = "highs",
                      max_seconds: float = 10.0) -> list[str]:
    """Constraint groups whose removal alone makes the model feasible."""
    groups = model.metadata.get("groups", {})
    culprits = []
    for name, rows in groups.items():
        res = solve_model(model.without_rows(rows), backend, max_seconds=max_seconds)
        if res.status != "infeasible":
            culprits.append(name)
    return culprits


def security_violations(decision: EmsDecision, system: System, scen: ScenarioSet,
                        rtol: float = 1e-6) -> list[str]:
    """Re-check minimum damping and inertia for every scenario and step.

    Uses the closed-form requirements, independent of the MILP rows.
    """
    grid = system.grid
    out = []
    for k in range(decision.horizon):
        alloc = ReserveAllocation(tuple(map(float, decision.gt_droops[k])),
                                  tuple(map(int, decision.gt_states[k])),
                                  float(decision.ess_droop[k]), float(decision.ess_vinertia[k]))
        d_tot, m_tot = aggregate(alloc, system.gens)
        for i, p_nl in enumerate(scen.perturbations[:, k]):
            d_req = min_damping(float(p_nl), grid.r_ss, grid.r_tr)
            m_req = min_inertia(float(p_nl), grid.rocof_max)
            if d_tot < d_req * (1 - rtol) - 1e-9:
                out.append(f"step {k} scenario {i}: damping {d_tot:.6g} < {d_req:.6g}")
            if m_tot < m_req * (1 - rtol) - 1e-9:
                out.append(f"step {k} scenario {i}: inertia {m_tot:.6g} < {m_req:.6g}")
    return out


def offline_power_violations(decision: EmsDecision, tol: float = 1e-9) -> list[str]:
    out = []
    for k in range(decision.horizon):
        for g in range(decision.gt_states.shape[1]):
            if decision.gt_states[k, g] == 0 and abs(decision.gt_powers[k, g]) > tol:
                out.append(f"step {k} unit {g}: offline with power {decision.gt_powers[k, g]:.3g}")
    return out


def energy_bound_lhs(system: System, ess_droop: float, ess_vinertia: float) -> float:
    return system.nu * (ess_vinertia + ess_droop * system.horizon.step_seconds)


def is_bound_violation(system: System, ess_droop: float, ess_vinertia: float, soc: float,
                       tol: float = 1e-9) -> bool:
    return energy_bound_lhs(system, ess_droop, ess_vinertia) > system.ess.lam * soc + tol


def solve_step(system: System, inputs: StepInputs, variant: str, options: EmsOptions,
               ) -> tuple[MilpModel, MipResult, EmsDecision | None]:
    model = build_model(system, inputs.fc, inputs.scen, inputs.soc0, inputs.prev_states, variant,
                        options.weights, collapse_scenarios=options.collapse_scenarios)
    res = solve_model(model, options.backend, max_seconds=options.max_seconds)
    if res.incumbent is None:
        return model, res, None
    x = res.incumbent
    if options.polish:
        x = polish_solution(model, x)
    return model, res, extract_decision(model, x)


def _simulate_step(system: System, rec: StepRecord, options: EmsOptions) -> None:
    alloc = rec.allocation()
    d_tot, m_tot = aggregate(alloc, system.gens)
    rec.bound = energy_bound(alloc, system.grid, system.horizon, system.ess, rec.soc_start)
    if not options.simulate:
        return
    if m_tot <= 0:
        rec.diagnostics = "no inertia online; swing validation skipped"
        return
    duration = options.sim_duration or system.horizon.step_seconds
    sc = SwingScenario(m_total=m_tot, d_total=d_tot,
                       disturbance=Disturbance.step(rec.validation_p_nl, options.sim_t_event),
                       duration=duration, dt=options.sim_dt, ess_droop=alloc.ess_droop,
                       ess_vinertia=alloc.ess_vinertia, gt_droop_sum=d_tot - alloc.ess_droop)
    trace = simulate(sc, record_every=options.trace_every)
    rec.sim_metrics = dict(trace.metrics)
    rec.sim_report = verify_bounds(trace, system.grid, rec.bound)
    if options.keep_traces:
        rec.trace = trace


# ------------------------------------------------------------------ main loop

def fit_forecasters(history: tuple[TimeSeries, TimeSeries], K: int, options: EmsOptions,
                    ) -> tuple[AnalogQuantileForecaster, AnalogQuantileForecaster]:
    load, wind = history
    lf = fit_quantile_estimator(load, options.n_lags, n_neighbors=options.n_neighbors,
                                max_horizon=K)
    wf = fit_quantile_estimator(wind, options.n_lags, n_neighbors=options.n_neighbors,
                                max_horizon=K)
    return lf, wf


def run_rolling_horizon(system: System, history: tuple[TimeSeries, TimeSeries],
                        realized: tuple[TimeSeries, TimeSeries], variant: str = "III",
                        seed: int = 0, options: EmsOptions | None = None,
                        n_steps: int | None = None) -> EmsRun:
    """Run the EMS over the realized window.

    ``history`` trains the forecasters; ``realized`` provides the measured net
    load at each issue time (the lag vector reaches back into ``history``).
    """
    options = options or EmsOptions()
    K, S_b = system.horizon.k_steps, system.grid.s_base
    load_r, wind_r = realized
    if len(load_r) != len(wind_r):
        raise EmsError("realized load and wind series differ in length")
    n_steps = len(load_r) if n_steps is None else n_steps
    if n_steps > len(load_r):
        raise EmsError(f"realized series has {len(load_r)} points, run needs {n_steps}")
    lf, wf = fit_forecasters(history, K, options)
    load_all = np.concatenate([history[0].values, load_r.values])
    wind_all = np.concatenate([history[1].values, wind_r.values])
    offset = len(history[0])
    n = options.n_lags

    prev = tuple(options.prev_states) if options.prev_states is not None else (1,) * system.n_g
    soc = float(options.soc0)
    run = EmsRun(variant, system, seed, prev, soc)
    for step in range(n_steps):
        t = offset + step
        xi0 = (load_all[t] - wind_all[t]) / S_b
        lq = lf.predict_quantiles(load_all[t - n + 1: t + 1], K, issue_time=step)
        wq = wf.predict_quantiles(wind_all[t - n + 1: t + 1], K, issue_time=step,
                                  variable_kind="renewable")
        fc = net_load_forecast(lq, wq, xi0, S_b)
        scen = build_scenarios(fc, options.scenario, step_seed(seed, step))
        inputs = StepInputs(fc, scen, soc, prev)
        rec = StepRecord(step, t, xi0, "optimal", inputs, soc_start=soc)
        if t + 1 < len(load_all):
            rec.realized_jump = abs((load_all[t + 1] - wind_all[t + 1]) / S_b - xi0)
        model, res, decision = solve_step(system, inputs, variant, options)
        rec.status, rec.nodes, rec.solve_seconds = res.status, res.nodes, res.wall_time
        run.steps.append(rec)
        if decision is None:
            if res.status == "infeasible":
                groups = infeasible_groups(model, options.backend)
                rec.diagnostics = ("infeasible; groups whose removal restores feasibility: "
                                   + (", ".join(groups) if groups else "none single-handedly"))
                run.status = "infeasible"
            else:
                rec.diagnostics = "solver limit reached without an incumbent"
                run.status = "limit"
            run.diagnostics = f"step {step}: {rec.diagnostics}"
            break
        if res.status == "limit":
            run.status = "limit"
            run.diagnostics = f"step {step}: solver limit, gap {res.gap:.3g}"
        rec.decision = decision
        rec.objective = decision.objective
        rec.soc_end = float(decision.soc[0])
        rec.validation_p_nl = float(np.max(scen.perturbations[:, 0]))
        _simulate_step(system, rec, options)
        soc = rec.soc_end
        prev = tuple(int(v) for v in decision.gt_states[0])
    run.kpis = compute_kpis(run)
    return run


def compute_kpis(run: EmsRun) -> KpiReport:
    """Aggregate the applied first-step actions of every solved step."""
    system = run.system
    T_h = system.horizon.step_seconds / 3600.0
    ess = system.ess
    rep = KpiReport()
    prev = np.asarray(run.initial_states, dtype=int)
    startup = fuel = hours = throughput = 0.0
    starts = violations = 0
    for rec in run.solved_steps:
        x = np.asarray(rec.gt_states, dtype=int)
        p = np.asarray(rec.gt_powers, dtype=float)
        for g, gen in enumerate(system.gens):
            fuel += (gen.fuel_a * x[g] + gen.fuel_b * p[g]) * T_h
            if x[g] == 1 and prev[g] == 0:
                starts += 1
                startup += gen.startup_cost
        hours += float(x.sum()) * T_h
        throughput += rec.ess_charge + rec.ess_discharge
        if is_bound_violation(system, rec.ess_droop, rec.ess_vinertia, rec.soc_end):
            violations += 1
        prev = x
    rep.fuel_consumption = fuel
    rep.operating_cost = fuel + startup
    rep.gt_hours = hours
    rep.gt_startups = starts
    rep.ess_degradation = throughput * T_h / (2.0 * ess.e_max / system.grid.s_base)
    rep.bound_violations = violations
    return rep


# ------------------------------------------------------------------ comparison

@dataclass
class VariantComparison:
    runs: dict[str, EmsRun]
    nested: list[dict[str, float]]  # per step: objective of each variant on identical inputs

    def trajectory_rows(self) -> list[dict]:
        rows = []
        for v, run in self.runs.items():
            for rec in run.solved_steps:
                d_tot, m_tot = aggregate(rec.allocation(), run.system.gens)
                rows.append({"variant": v, "step": rec.step, "m_total": m_tot,
                             "d_total": d_tot, "m_b": rec.ess_vinertia, "d_b": rec.ess_droop,
                             "objective": rec.objective})
        return rows

    def kpi_deltas(self, reference: str = "I") -> dict[str, dict[str, float]]:
        ref = self.runs[reference].kpis.to_dict()
        return {v: {k: val - ref[k] for k, val in run.kpis.to_dict().items()}
                for v, run in self.runs.items()}

    def peak_ess_droop(self, variant: str) -> float:
        return max((r.ess_droop for r in self.runs[variant].solved_steps), default=0.0)


def nested_objectives(system: System, inputs: Sequence[StepInputs],
                      options: EmsOptions, variants: Sequence[str] = ("I", "II", "III"),
                      ) -> list[dict[str, float]]:
    """Solve every variant on the same recorded step inputs."""
    out = []
    for inp in inputs:
        row = {}
        for v in variants:
            _, res, dec = solve_step(system, inp, v, options)
            row[v] = dec.objective if dec is not None else math.inf
        out.append(row)
    return out


def compare_variants(system: System, history, realized, seed: int = 0,
                     options: EmsOptions | None = None, n_steps: int | None = None,
                     check_nesting: bool = True) -> VariantComparison:
    """Run I, II and III on identical inputs.

    The runs diverge once their decisions differ, so the objective ordering is
    also assessed on the step inputs recorded by the variant III run.
    """
    options = options or EmsOptions()
    variants = ("I", "II", "III")
    with ThreadPoolExecutor(max_workers=min(thread_cap(), len(variants))) as pool:
        futures = {v: pool.submit(run_rolling_horizon, system, history, realized, v, seed,
                                  options, n_steps) for v in variants}
        runs = {v: futures[v].result() for v in variants}
    nested = []
    if check_nesting:
        nested = nested_objectives(system, [r.inputs for r in runs["III"].solved_steps],
                                   options)
    return VariantComparison(runs, nested)


# ------------------------------------------------------------------- artifacts

def schedule_rows(run: EmsRun) -> list[dict]:
    system = run.system
    names = [g.name for g in system.gens]
    rows = []
    T = system.horizon.step_seconds
    for rec in run.solved_steps:
        d = rec.decision
        for k in range(d.horizon):
            soc_prev = rec.soc_start if k == 0 else float(d.soc[k - 1])
            alloc = ReserveAllocation(tuple(map(float, d.gt_droops[k])),
                                      tuple(map(int, d.gt_states[k])), float(d.ess_droop[k]),
                                      float(d.ess_vinertia[k]))
            d_tot, m_tot = aggregate(alloc, system.gens)
            p_nl = float(np.max(rec.inputs.scen.perturbations[:, k]))
            row = {"step": rec.step, "k": k, "applied": int(k == 0),
                   "xi": float(rec.inputs.fc.xi[k]), "worst_p_nl": p_nl}
            for g, nm in enumerate(names):
                row[f"x_{nm}"] = int(d.gt_states[k, g])
            for g, nm in enumerate(names):
                row[f"p_{nm}"] = float(d.gt_powers[k, g])
            row.update({"p_ch": float(d.ess_charge[k]), "p_dis": float(d.ess_discharge[k]),
                        "soc": float(d.soc[k])})
            for g, nm in enumerate(names):
                row[f"dg_{nm}"] = float(d.gt_droops[k, g] * d.gt_states[k, g])
            lhs = system.nu * (float(d.ess_vinertia[k]) + float(d.ess_droop[k]) * T)
            row.update({
                "d_b": float(d.ess_droop[k]), "m_b": float(d.ess_vinertia[k]),
                "d_total": d_tot, "m_total": m_tot,
                "d_required": min_damping(p_nl, system.grid.r_ss, system.grid.r_tr),
                "m_required": min_inertia(p_nl, system.grid.rocof_max),
                "bound_lhs": lhs,
                "bound_rhs_up": system.ess.soc_max - soc_prev,
                "bound_rhs_lo": soc_prev - system.ess.soc_min,
                "bound_rhs_lambda": system.ess.lam * float(d.soc[k]),
                "objective": rec.objective if k == 0 else "",
            })
            if k == 0 and rec.sim_report is not None:
                row.update({"sim_steady_state_dev": rec.sim_metrics["steady_state_dev"],
                            "sim_max_abs_rocof": rec.sim_metrics["max_abs_rocof"],
                            "sim_abs_energy_dev": rec.sim_metrics["abs_energy_dev"],
                            "sim_ok": int(rec.sim_report.all_ok)})
            else:
                row.update({"sim_steady_state_dev": "", "sim_max_abs_rocof": "",
                            "sim_abs_energy_dev": "", "sim_ok": ""})
            rows.append(row)
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(path: str | Path, rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if not rows:
            return
        w = csv.writer(fh)
        w.writerow(list(rows[0]))
        for r in rows:
            w.writerow([_fmt(v) for v in r.values()])


def write_run_artifacts(run: EmsRun, out_dir: str | Path, options: EmsOptions | None = None,
                        traces: bool = True) -> None:
    """Write ``schedule.csv``, ``kpi.json`` and ``traces/step_<k>.csv``."""
    options = options or EmsOptions()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_rows(out / "schedule.csv", schedule_rows(run))
    doc = {"variant": run.variant, "seed": run.seed, "status": run.status,
           "diagnostics": run.diagnostics, "n_steps": len(run.solved_steps),
           "objective_total": float(sum(r.objective for r in run.solved_steps)),
           **run.kpis.to_dict()}
    (out / "kpi.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if not traces:
        return
    tdir = out / "traces"
    tdir.mkdir(exist_ok=True)
    for rec in run.solved_steps:
        trace = rec.trace
        if trace is None and rec.sim_metrics is not None:
            d_tot, m_tot = aggregate(rec.allocation(), run.system.gens)
            sc = SwingScenario(m_tot, d_tot,
                               Disturbance.step(rec.validation_p_nl, options.sim_t_event),
                               options.sim_duration or run.system.horizon.step_seconds,
                               options.sim_dt, rec.ess_droop, rec.ess_vinertia,
                               d_tot - rec.ess_droop)
            trace = simulate(sc, record_every=options.trace_every)
        if trace is not None:
            trace.to_csv(tdir / f"step_{rec.step}.csv")


def thread_cap() -> int:
    """Parallelism cap from ``EMS_THREADS`` (default 1)."""
    raw = os.environ.get("EMS_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise EmsError(f"EMS_THREADS must be a positive integer, got {raw!r}") from None
