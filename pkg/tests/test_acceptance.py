"""Acceptance criteria, one test each, with pinned tolerances and runtimes.

Every test logs a single PASS/FAIL line through ``acceptance_log``; the lines
are repeated in pytest's terminal summary.
"""

import math
import time

import numpy as np
import pytest

from apsems.cli import main
from apsems.core_types import EssSpec, GridSpec, HorizonSpec, load_system
from apsems.ems import (
    EmsOptions,
    compare_variants,
    fit_forecasters,
    offline_power_violations,
    run_rolling_horizon,
    security_violations,
)
from apsems.fixtures import STEPS_PER_DAY, canonical_series
from apsems.forecast import (
    fit_quantile_estimator,
    net_load_forecast,
    read_timeseries_csv,
    rolling_interval_coverage,
)
from apsems.freqres import (
    ReserveAllocation,
    energy_bound,
    min_damping,
    min_inertia,
    pu_seconds_to_mwh,
)
from apsems.milp import build_model, extract_decision
from apsems.scenario import ScenarioParams, build_scenarios, scenario_count
from apsems.solver import read_mps, solve_mip, solve_model, write_mps
from apsems.swingsim import (
    Disturbance,
    SwingScenario,
    convergence_check,
    scenario_from_totals,
    simulate,
    verify_bounds,
)

from oracles import enumerate_milp, random_small_instance

CANONICAL_STEPS = 24


def _canonical_inputs(data_dir, config="system.json"):
    system = load_system(data_dir / config)
    load, wind = read_timeseries_csv(data_dir / "canonical.csv", system.horizon.step_seconds)
    h, n = len(load) - CANONICAL_STEPS, len(load)
    return system, (load.slice(0, h), wind.slice(0, h)), (load.slice(h, n), wind.slice(h, n))


@pytest.fixture(scope="module")
def canonical_comparison():
    from conftest import DATA

    system, hist, real = _canonical_inputs(DATA)
    t0 = time.perf_counter()
    cmp = compare_variants(system, hist, real, seed=0, options=EmsOptions())
    return cmp, time.perf_counter() - t0


def test_criterion_1_formulas(acceptance_log):
    t0 = time.perf_counter()
    d = min_damping(0.4, 0.03, 0.10)
    m = min_inertia(0.4, 0.1)
    n = scenario_count(ScenarioParams(0.1, 1e-4, math.e), 8)
    elapsed = time.perf_counter() - t0
    ok = abs(d - 14.814815) <= 1e-6 and abs(d - 0.4 / (0.03 * 0.9)) <= 1e-9 and m == 4.0 \
        and n == 637 and elapsed < 1.0
    acceptance_log(1, ok, f"D_min={d:.9f} M_min={m} N={n} ({elapsed:.3f} s)")
    assert abs(d - 14.814815) <= 1e-6  # the six-decimal literal itself
    assert abs(d - 0.4 / (0.03 * 0.9)) <= 1e-9
    assert m == 4.0 and n == 637
    assert elapsed < 1.0


def test_criterion_2_security_sweep(acceptance_log):
    grid = GridSpec(10.0, 50.0, 0.03, 0.05, 0.05)
    rng = np.random.default_rng(2024)
    # (0, 0.5]: draw from [0, 0.5) and reflect
    steps = 0.5 - rng.uniform(0.0, 0.5, 200)
    t0 = time.perf_counter()
    worst_ss = worst_rocof = 0.0
    failures = 0
    for p in steps:
        d = min_damping(p, grid.r_ss, grid.r_tr)
        m = min_inertia(p, grid.rocof_max)
        tr = simulate(scenario_from_totals(m, d, p, t_event=0.5, duration=15.0, dt=0.01))
        ss = abs(tr.metrics["steady_state_dev"]) / grid.r_ss
        rf = tr.metrics["max_abs_rocof"] / grid.rocof_max
        worst_ss, worst_rocof = max(worst_ss, ss), max(worst_rocof, rf)
        failures += not (ss <= 1 + 1e-4 and rf <= 1 + 1e-6)
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and elapsed < 60
    acceptance_log(2, ok, f"{200 - failures}/200 traces inside limits, worst steady-state "
                          f"{worst_ss:.6f} r_ss, worst RoCoF {worst_rocof:.9f} limit "
                          f"({elapsed:.1f} s)")
    assert failures == 0
    assert elapsed < 60


def test_criterion_3_step_replication(acceptance_log):
    grid = GridSpec(10.0, 50.0, 0.03, 0.05, 0.05)
    hz = HorizonSpec(900.0, 8)
    m_gt, d_gt, p = 0.8, 4.0, 0.4  # one GT at its maximum droop
    t0 = time.perf_counter()
    alone = simulate(scenario_from_totals(m_gt, d_gt, p, t_event=2.0, duration=60.0, dt=0.01))
    rep_alone = verify_bounds(alone, grid)
    violates = not (rep_alone.steady_state_ok and rep_alone.rocof_ok)

    d_b = min_damping(p, grid.r_ss, grid.r_tr) - d_gt
    m_b = min_inertia(p, grid.rocof_max) - m_gt
    # 60 MWh battery at half charge: 3% of its stored energy exceeds the worst case
    ess = EssSpec(p_max=1.0, e_max=60.0, soc_min=0.1, soc_max=0.9, lam=0.03)
    bound = energy_bound(ReserveAllocation((d_gt,), (1,), d_b, m_b), grid, hz, ess, 0.5)
    sc = SwingScenario(m_gt + m_b, d_gt + d_b, Disturbance.step(p, 2.0), hz.step_seconds, 0.01,
                       ess_droop=d_b, ess_vinertia=m_b, gt_droop_sum=d_gt)
    tr = simulate(sc, record_every=100)
    rep = verify_bounds(tr, grid, bound)
    used = tr.metrics["abs_energy_dev"]
    elapsed = time.perf_counter() - t0
    ok = (violates and rep.steady_state_ok and rep.rocof_ok and used <= bound.hat_delta_e
          and used <= bound.allowed and elapsed < 30)
    acceptance_log(3, ok, f"GT alone: steady-state {alone.metrics['steady_state_dev']:.4f}, "
                          f"RoCoF {alone.metrics['max_abs_rocof']:.4f}; with ESS "
                          f"(M_b={m_b:.3f}, D_b={d_b:.3f}) |dE|="
                          f"{pu_seconds_to_mwh(used, grid.s_base):.4f} MWh <= hat "
                          f"{pu_seconds_to_mwh(bound.hat_delta_e, grid.s_base):.4f} MWh <= "
                          f"lambda*E {pu_seconds_to_mwh(bound.allowed, grid.s_base):.4f} MWh "
                          f"({elapsed:.1f} s)")
    assert violates
    assert rep.steady_state_ok and rep.rocof_ok and rep.transient_ok
    assert used <= bound.hat_delta_e <= bound.allowed
    assert elapsed < 30


def test_criterion_4_oracle_equivalence(acceptance_log):
    t0 = time.perf_counter()
    worst = 0.0
    agree = 0
    statuses = []
    for seed in range(20):
        system, fc, scen, soc0, prev = random_small_instance(seed, n_g=2, k_steps=3, n_scen=5)
        model = build_model(system, fc, scen, soc0, prev, ("I", "II", "III")[seed % 3])
        ref, _, _ = enumerate_milp(model)
        res = solve_mip(model)
        statuses.append(res.status)
        if math.isinf(ref):
            agree += res.status == "infeasible"
            continue
        rel = abs(res.objective - ref) / max(1.0, abs(ref))
        worst = max(worst, rel)
        agree += res.status == "optimal" and rel <= 1e-6
    elapsed = time.perf_counter() - t0
    ok = agree == 20 and elapsed < 300
    acceptance_log(4, ok, f"{agree}/20 instances match enumeration ({statuses.count('optimal')} "
                          f"feasible), worst relative gap {worst:.2e} ({elapsed:.1f} s)")
    assert agree == 20
    assert elapsed < 300


def test_criterion_5_reformulation_rechecks(acceptance_log, canonical_comparison):
    cmp, _ = canonical_comparison
    checked = 0
    problems = []
    for v in ("II", "III"):
        for rec in cmp.runs[v].solved_steps:
            problems += security_violations(rec.decision, cmp.runs[v].system, rec.inputs.scen)
            problems += offline_power_violations(rec.decision)
            checked += 1
    for seed in range(20):
        system, fc, scen, soc0, prev = random_small_instance(seed)
        for v in ("II", "III"):
            model = build_model(system, fc, scen, soc0, prev, v)
            res = solve_model(model, "native")
            if res.status != "optimal":
                continue
            dec = extract_decision(model, res.incumbent)
            problems += security_violations(dec, system, scen)
            problems += offline_power_violations(dec)
            checked += 1
    ok = not problems and checked > 0
    acceptance_log(5, ok, f"{checked} solved II/III instances, {len(problems)} damping, "
                          f"inertia or offline-power violations")
    assert checked > 0
    assert problems == []


def test_criterion_6_variant_ordering(acceptance_log, canonical_comparison, data_dir):
    cmp, elapsed_cmp = canonical_comparison
    t0 = time.perf_counter()
    complete = all(r.status == "complete" and len(r.solved_steps) == CANONICAL_STEPS
                   for r in cmp.runs.values())
    gap = 1e-6
    bad = [i for i, o in enumerate(cmp.nested)
           if not (o["I"] <= o["II"] + gap * abs(o["II"]) and
                   o["II"] <= o["III"] + gap * abs(o["III"]))]
    iii_viol = cmp.runs["III"].kpis.bound_violations
    peak_ii, peak_iii = cmp.peak_ess_droop("II"), cmp.peak_ess_droop("III")

    stress, hist, real = _canonical_inputs(data_dir, "system_stress.json")
    stress_run = run_rolling_horizon(stress, hist, real, "II", 0, EmsOptions(soc0=0.3))
    stress_viol = stress_run.kpis.bound_violations
    elapsed = elapsed_cmp + time.perf_counter() - t0
    ok = (complete and not bad and iii_viol == 0 and stress_viol >= 1
          and peak_iii <= peak_ii + 1e-9 and elapsed < 600)
    acceptance_log(6, ok, f"ordering I<=II<=III holds on {len(cmp.nested) - len(bad)}/"
                          f"{len(cmp.nested)} steps; III bound violations {iii_viol}; stress II "
                          f"violations {stress_viol}; peak D_b III {peak_iii:.4f} <= II "
                          f"{peak_ii:.4f} ({elapsed:.0f} s)")
    assert complete
    assert bad == []
    assert iii_viol == 0
    assert stress_viol >= 1
    assert peak_iii <= peak_ii + 1e-9
    assert elapsed < 600


def test_criterion_7_forecast_adaptivity(acceptance_log):
    t0 = time.perf_counter()
    load, _ = canonical_series()
    y = load.values
    t_step = 20 * STEPS_PER_DAY + 40  # first slot of the last day's block
    est = fit_quantile_estimator(y[:t_step], n_lags=6, max_horizon=1)

    def interval(t):
        return est.predict_quantiles(y[t - 5: t + 1], 1).interval(1, 0.1, 0.9)

    lo, hi = interval(t_step - 1)
    covers = lo <= y[t_step] <= hi
    quiet = np.mean([np.subtract(*interval(t)[::-1]) for t in range(t_step - 24, t_step - 7)])
    ratio = (hi - lo) / quiet
    coverage = rolling_interval_coverage(y, start=STEPS_PER_DAY)
    elapsed = time.perf_counter() - t0
    ok = covers and ratio >= 2.0 and coverage >= 0.75 and elapsed < 30
    acceptance_log(7, ok, f"pre-step interval [{lo:.3f}, {hi:.3f}] vs realized {y[t_step]:.3f}; "
                          f"width {hi - lo:.3f} = {ratio:.2f}x quiescent {quiet:.3f}; "
                          f"rolling coverage {coverage:.3f} ({elapsed:.1f} s)")
    assert covers
    assert ratio >= 2.0
    assert coverage >= 0.75
    assert elapsed < 30


def test_criterion_8_numerical_hygiene(acceptance_log, data_dir, tmp_path):
    conv = convergence_check(SwingScenario(4.0, 15.0, Disturbance.ramp(0.3, 0.5, 3.0),
                                           duration=6.0, dt=0.05))
    order_ok = 11 <= conv.ratio <= 21

    system, hist, real = _canonical_inputs(data_dir)
    opts = EmsOptions()
    lf, wf = fit_forecasters(hist, system.horizon.k_steps, opts)
    L, W, K = hist[0].values, hist[1].values, system.horizon.k_steps
    fc = net_load_forecast(lf.predict_quantiles(L[-6:], K),
                           wf.predict_quantiles(W[-6:], K, variable_kind="renewable"),
                           (L[-1] - W[-1]) / system.grid.s_base, system.grid.s_base)
    scen = build_scenarios(fc, ScenarioParams(n_override=50), 0)
    model = build_model(system, fc, scen, 0.5, (1, 1, 1), "III")
    a, b = tmp_path / "a.mps", tmp_path / "b.mps"
    write_mps(model, a)
    write_mps(read_mps(a), b)
    mps_ok = a.read_bytes() == b.read_bytes()

    t0 = time.perf_counter()
    code = main(["schedule", "--config", str(data_dir / "system.json"), "--data",
                 str(data_dir / "canonical.csv"), "--variant", "III", "--steps",
                 str(CANONICAL_STEPS), "--n-override", "50", "--out", str(tmp_path / "run")])
    run_s = time.perf_counter() - t0
    ok = order_ok and mps_ok and code == 0 and run_s < 120
    acceptance_log(8, ok, f"RK4 error ratio {conv.ratio:.2f}; MPS round trip "
                          f"{'identical' if mps_ok else 'differs'} ({a.stat().st_size} bytes); "
                          f"24-step schedule exit {code} in {run_s:.1f} s")
    assert order_ok
    assert mps_ok
    assert code == 0
    assert run_s < 120
