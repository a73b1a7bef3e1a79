"""Command-line entry point: ``apsems {forecast,schedule,simulate,compare}``.

Exit codes: 0 success, 1 configuration or ingestion error, 2 bound or
constraint violation detected, 3 solver limit reached.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

from .core_types import SystemConfigError, load_system
from .ems import (
    EmsError,
    EmsOptions,
    compare_variants,
    offline_power_violations,
    run_rolling_horizon,
    security_violations,
    write_rows,
    write_run_artifacts,
)
from .forecast import DataFormatError, ForecastFitError, fit_quantile_estimator, read_timeseries_csv
from .freqres import ReserveAllocation, energy_bound
from .milp.formulation import BuildError, build_model
from .scenario import ScenarioParams
from .solver.backend import BACKENDS
from .solver.mps import write_mps
from .swingsim import Disturbance, SwingScenario, simulate, verify_bounds

EXIT_OK, EXIT_CONFIG, EXIT_VIOLATION, EXIT_LIMIT = 0, 1, 2, 3


@dataclass
class RunConfig:
    config: Path | None
    data: Path | None
    variant: str
    seed: int
    out: Path
    steps: int
    epsilon: float
    beta: float
    expansion_e: float
    n_override: int | None
    max_seconds: float
    solver: str
    soc0: float
    export_model: Path | None = None

    def validate(self, need_data: bool = True) -> None:
        if self.config is None or not self.config.is_file():
            raise SystemConfigError([f"--config: file not found: {self.config}"])
        if need_data and (self.data is None or not self.data.is_file()):
            raise DataFormatError("file not found", path=str(self.data))
        self.out.mkdir(parents=True, exist_ok=True)

    def scenario_params(self) -> ScenarioParams:
        return ScenarioParams(self.epsilon, self.beta, self.expansion_e, self.n_override)

    def ems_options(self) -> EmsOptions:
        return EmsOptions(scenario=self.scenario_params(), backend=self.solver,
                          max_seconds=self.max_seconds, soc0=self.soc0)


def _add_common(p: argparse.ArgumentParser, data: bool = True) -> None:
    p.add_argument("--config", type=Path, required=True, help="system JSON file")
    if data:
        p.add_argument("--data", type=Path, required=True,
                       help="CSV with timestamp,load_mw,wind_mw")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("out"))


def _add_run(p: argparse.ArgumentParser) -> None:
    p.add_argument("--steps", type=int, default=24,
                   help="EMS steps; the last STEPS rows of --data are the realized window")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--beta", type=float, default=1e-4)
    p.add_argument("--expansion-e", type=float, default=math.e)
    p.add_argument("--n-override", type=int, default=50,
                   help="scenario count (0 uses the sample-size formula)")
    p.add_argument("--max-seconds", type=float, default=60.0, help="time limit per MILP")
    p.add_argument("--solver", choices=BACKENDS, default="highs")
    p.add_argument("--soc0", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="apsems", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("forecast", help="write quantile forecasts per lead time")
    _add_common(p)
    p.add_argument("--issue-index", type=int, default=None,
                   help="row index of the issue time (default: last row)")
    p.add_argument("--horizon", type=int, default=None, help="lead times (default: k_steps)")
    p.add_argument("--n-lags", type=int, default=6)
    p.add_argument("--n-neighbors", type=int, default=30)

    p = sub.add_parser("schedule", help="rolling-horizon EMS run")
    _add_common(p)
    _add_run(p)
    p.add_argument("--variant", choices=("I", "II", "III"), default="III")
    p.add_argument("--export-model", type=Path, default=None,
                   help="write the first step's MILP as free-form MPS")
    p.add_argument("--no-traces", action="store_true")

    p = sub.add_parser("simulate", help="single swing-equation run with bound checks")
    p.add_argument("--config", type=Path, default=None,
                   help="system JSON (grid limits; enables the energy bound)")
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--m-total", type=float, required=True)
    p.add_argument("--d-total", type=float, required=True)
    p.add_argument("--m-b", type=float, default=0.0)
    p.add_argument("--d-b", type=float, default=0.0)
    p.add_argument("--step-pu", type=float, required=True)
    p.add_argument("--t-event", type=float, default=2.0)
    p.add_argument("--duration", type=float, default=60.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--soc", type=float, default=0.5)
    p.add_argument("--r-ss", type=float, default=0.03)
    p.add_argument("--r-tr", type=float, default=0.1)
    p.add_argument("--rocof-max", type=float, default=0.1)

    p = sub.add_parser("compare", help="run variants I, II, III on identical inputs")
    _add_common(p)
    _add_run(p)
    return ap


def _run_config(args) -> RunConfig:
    n_override = getattr(args, "n_override", None)
    return RunConfig(
        config=args.config, data=getattr(args, "data", None),
        variant=getattr(args, "variant", "III"), seed=getattr(args, "seed", 0), out=args.out,
        steps=getattr(args, "steps", 0), epsilon=getattr(args, "epsilon", 0.1),
        beta=getattr(args, "beta", 1e-4), expansion_e=getattr(args, "expansion_e", math.e),
        n_override=n_override if n_override else None,
        max_seconds=getattr(args, "max_seconds", 60.0), solver=getattr(args, "solver", "highs"),
        soc0=getattr(args, "soc0", 0.5), export_model=getattr(args, "export_model", None))


def _split(cfg: RunConfig, system):
    load, wind = read_timeseries_csv(cfg.data, system.horizon.step_seconds)
    n = len(load)
    if not 1 <= cfg.steps < n:
        raise DataFormatError(f"--steps {cfg.steps} must lie in [1, {n - 1}]", path=str(cfg.data))
    h = n - cfg.steps
    return (load.slice(0, h), wind.slice(0, h)), (load.slice(h, n), wind.slice(h, n))


def cmd_forecast(args) -> int:
    cfg = _run_config(args)
    cfg.validate()
    system = load_system(cfg.config)
    load, wind = read_timeseries_csv(cfg.data, system.horizon.step_seconds)
    K = args.horizon or system.horizon.k_steps
    t = len(load) - 1 if args.issue_index is None else args.issue_index
    if not args.n_lags - 1 <= t < len(load):
        raise DataFormatError(f"--issue-index {t} outside [{args.n_lags - 1}, {len(load) - 1}]",
                              path=str(cfg.data))
    for series, prefix in ((load, "forecast"), (wind, "wind_forecast")):
        est = fit_quantile_estimator(series.values[: t + 1], args.n_lags,
                                     n_neighbors=args.n_neighbors, max_horizon=K)
        qf = est.predict_quantiles(series.values[t - args.n_lags + 1: t + 1], K, issue_time=t)
        for k in qf.lead_times:
            with open(cfg.out / f"{prefix}_k{k}.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["tau", "value_mw"])
                for tau, v in zip(qf.tau_grid, qf.quantiles[k - 1]):
                    w.writerow([repr(float(tau)), repr(float(v))])
    print(f"wrote {K} lead times issued at row {t} to {cfg.out}")
    return EXIT_OK


def _export_first_model(cfg: RunConfig, system, run) -> None:
    rec = run.steps[0]
    inp = rec.inputs
    model = build_model(system, inp.fc, inp.scen, inp.soc0, inp.prev_states, cfg.variant,
                        cfg.ems_options().weights,
                        collapse_scenarios=cfg.ems_options().collapse_scenarios)
    write_mps(model, cfg.export_model)


def cmd_schedule(args) -> int:
    cfg = _run_config(args)
    cfg.validate()
    system = load_system(cfg.config)
    history, realized = _split(cfg, system)
    options = cfg.ems_options()
    run = run_rolling_horizon(system, history, realized, cfg.variant, cfg.seed, options,
                              n_steps=cfg.steps)
    write_run_artifacts(run, cfg.out, options, traces=not args.no_traces)
    if cfg.export_model is not None and run.steps:
        _export_first_model(cfg, system, run)
    k = run.kpis
    print(f"variant {cfg.variant}: {len(run.solved_steps)}/{cfg.steps} steps, status {run.status}")
    print(f"objective {sum(r.objective for r in run.solved_steps):.6f}  fuel "
          f"{k.fuel_consumption:.4f}  startups {k.gt_startups}  "
          f"bound violations {k.bound_violations}")
    if run.status == "infeasible":
        print(f"error: {run.diagnostics}", file=sys.stderr)
        return EXIT_VIOLATION
    problems = []
    for rec in run.solved_steps:
        problems += offline_power_violations(rec.decision)
        if cfg.variant in ("II", "III"):
            problems += security_violations(rec.decision, system, rec.inputs.scen)
    if cfg.variant == "III" and k.bound_violations:
        problems.append(f"{k.bound_violations} energy-bound violations")
    if problems:
        for p in problems[:20]:
            print(f"violation: {p}", file=sys.stderr)
        return EXIT_VIOLATION
    if run.status == "limit":
        print(f"warning: {run.diagnostics}", file=sys.stderr)
        return EXIT_LIMIT
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .core_types import GridSpec

    bound = None
    if args.config is not None:
        if not args.config.is_file():
            raise SystemConfigError([f"--config: file not found: {args.config}"])
        system = load_system(args.config)
        grid = system.grid
        alloc = ReserveAllocation((), (), args.d_b, args.m_b)
        bound = energy_bound(alloc, grid, system.horizon, system.ess, args.soc)
    else:
        grid = GridSpec(1.0, 50.0, args.r_ss, args.r_tr, args.rocof_max)
    try:
        sc = SwingScenario(args.m_total, args.d_total, Disturbance.step(args.step_pu, args.t_event),
                           args.duration, args.dt, args.d_b, args.m_b, args.d_total - args.d_b)
    except ValueError as exc:
        raise SystemConfigError([str(exc)]) from exc
    trace = simulate(sc, record_every=max(1, int(round(0.01 / args.dt))))
    args.out.mkdir(parents=True, exist_ok=True)
    trace.to_csv(args.out / "trace.csv")
    report = verify_bounds(trace, grid, bound)
    for line in report.lines():
        print(line)
    (args.out / "bounds.json").write_text(json.dumps({
        "steady_state_ok": report.steady_state_ok, "transient_ok": report.transient_ok,
        "rocof_ok": report.rocof_ok, "energy_ok": report.energy_ok,
        "margins": {k: (v if math.isfinite(v) else None) for k, v in report.margins.items()},
        "metrics": trace.metrics}, indent=2, sort_keys=True) + "\n")
    return EXIT_OK if report.all_ok else EXIT_VIOLATION


def cmd_compare(args) -> int:
    cfg = _run_config(args)
    cfg.validate()
    system = load_system(cfg.config)
    history, realized = _split(cfg, system)
    cmp = compare_variants(system, history, realized, cfg.seed, cfg.ems_options(),
                           n_steps=cfg.steps)
    rows = []
    for r in cmp.trajectory_rows():
        for metric in ("m_total", "d_total", "m_b", "d_b", "objective"):
            rows.append({"section": "trajectory", "variant": r["variant"], "step": r["step"],
                         "metric": metric, "value": float(r[metric])})
    for v, run in cmp.runs.items():
        for metric, val in run.kpis.to_dict().items():
            rows.append({"section": "kpi", "variant": v, "step": "", "metric": metric,
                         "value": float(val)})
    for v, deltas in cmp.kpi_deltas().items():
        for metric, val in deltas.items():
            rows.append({"section": "kpi_delta_vs_I", "variant": v, "step": "",
                         "metric": metric, "value": float(val)})
    for step, objs in enumerate(cmp.nested):
        for v, val in objs.items():
            rows.append({"section": "same_inputs_objective", "variant": v, "step": step,
                         "metric": "objective", "value": float(val)})
    write_rows(cfg.out / "variants.csv", rows)
    for v in cmp.runs:
        print(f"variant {v}: status {cmp.runs[v].status}, peak D_b {cmp.peak_ess_droop(v):.6f}, "
              f"bound violations {cmp.runs[v].kpis.bound_violations}")
    if any(r.status == "infeasible" for r in cmp.runs.values()):
        return EXIT_VIOLATION
    if any(r.status == "limit" for r in cmp.runs.values()):
        return EXIT_LIMIT
    return EXIT_OK


COMMANDS = {"forecast": cmd_forecast, "schedule": cmd_schedule, "simulate": cmd_simulate,
            "compare": cmd_compare}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except SystemConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataFormatError, ForecastFitError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BuildError, EmsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
