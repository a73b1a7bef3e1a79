import decimal
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from apsems.forecast import QuantileForecast, constant_forecast, net_load_forecast
from apsems.scenario import (
    ScenarioParams,
    ScenarioSet,
    build_scenarios,
    draw_scenarios,
    perturbations_from,
    scenario_bound,
    scenario_count,
    worst_case_perturbation,
)


def _exact_count(eps, beta, K, e=math.e):
    """Ceiling of the sample-size bound evaluated with 50 significant digits."""
    decimal.getcontext().prec = 50
    D = decimal.Decimal
    ed = D(repr(e))
    bound = (1 / D(repr(eps))) * (ed / (ed - 1)) * ((1 / D(repr(beta))).ln() + 4 * K - 1)
    return int(bound.to_integral_value(rounding=decimal.ROUND_CEILING)), Fraction(str(bound))


def test_count_examples():
    assert scenario_count(ScenarioParams(0.1, 1e-4, 2.718281828459045), 8) == 637
    assert _exact_count(0.1, 1e-4, 8)[0] == 637
    # beta close to 1 makes the log term vanish: ceil(1.581977 * 3) = 5
    assert scenario_count(ScenarioParams(0.999999, 1 - 1e-12), 1) == 5


def test_halving_epsilon_doubles_bound():
    assert scenario_bound(0.05, 1e-3, 4) == pytest.approx(2 * scenario_bound(0.1, 1e-3, 4),
                                                          rel=1e-15)


@given(st.floats(0.01, 0.99), st.floats(1e-8, 0.5), st.integers(1, 48))
def test_count_matches_high_precision(eps, beta, K):
    n = scenario_count(ScenarioParams(eps, beta), K)
    exact, bound = _exact_count(eps, beta, K)
    # disagreement is only possible when the bound sits within rounding of an integer
    assert n == exact or abs(float(bound) - round(float(bound))) < 1e-9


def test_count_monotone_on_lattice():
    eps = [0.05, 0.1, 0.2, 0.4]
    betas = [1e-6, 1e-4, 1e-2, 0.2]
    Ks = [1, 2, 4, 8, 16]
    for e in eps:
        for b in betas:
            counts = [scenario_count(ScenarioParams(e, b), K) for K in Ks]
            assert counts == sorted(counts)
    for K in Ks:
        for b in betas:
            counts = [scenario_count(ScenarioParams(e, b), K) for e in eps]
            assert counts == sorted(counts, reverse=True)
        for e in eps:
            counts = [scenario_count(ScenarioParams(e, b), K) for b in betas]
            assert counts == sorted(counts, reverse=True)


@pytest.mark.parametrize("kwargs", [dict(epsilon=0), dict(beta=1), dict(expansion_e=1.0),
                                    dict(n_override=0)])
def test_param_validation(kwargs):
    with pytest.raises(ValueError):
        ScenarioParams(**kwargs)


def _flat_fc(levels, s_base=1.0):
    K = len(levels) - 1
    load = QuantileForecast(0, np.array([0.25, 0.5, 0.75]),
                            np.repeat(np.asarray(levels[1:], float)[:, None], 3, axis=1))
    return net_load_forecast(load, constant_forecast(0.0, K, (0.25, 0.5, 0.75), 0),
                             levels[0], s_base)


def test_degenerate_forecast_gives_deterministic_jumps():
    fc = _flat_fc([5.0, 5.5, 5.2, 6.0])
    scen = draw_scenarios(fc, 4, seed=1)
    assert np.all(scen.samples == fc.xi[1:])
    np.testing.assert_allclose(scen.perturbations, np.tile(np.abs(np.diff(fc.xi)), (4, 1)))


def test_determinism_and_independence_of_order():
    load = QuantileForecast(0, np.array([0.1, 0.5, 0.9]), np.array([[1.0, 2.0, 3.0]] * 3))
    fc = net_load_forecast(load, constant_forecast(0.0, 3, (0.1, 0.5, 0.9), 0), 2.0)
    a = draw_scenarios(fc, 1, seed=9)
    b = draw_scenarios(fc, 1, seed=9)
    assert np.array_equal(a.samples, b.samples)
    many = draw_scenarios(fc, 5, seed=9)
    assert np.array_equal(many.samples[0], a.samples[0])


def test_two_point_frequencies():
    # 30% of the mass at 0 and 70% at 1: a jump between tau = 0.3 and 0.30001
    tau = np.array([0.01, 0.3, 0.30001, 0.5, 0.99])
    load = QuantileForecast(0, tau, np.array([[0.0, 0.0, 1.0, 1.0, 1.0]]))
    ren = QuantileForecast(0, tau, np.zeros((1, 5)), "renewable")
    scen = draw_scenarios(net_load_forecast(load, ren, 0.0), 10_000, seed=5)
    share_low = np.mean(scen.samples[:, 0] < 0.5)
    assert abs(share_low - 0.3) < 0.03


def test_perturbations_recomputable():
    load = QuantileForecast(0, np.array([0.1, 0.5, 0.9]), np.array([[1.0, 2.0, 4.0]] * 4))
    fc = net_load_forecast(load, constant_forecast(0.5, 4, (0.1, 0.5, 0.9), 0), 1.2, 2.0)
    scen = draw_scenarios(fc, 20, seed=3)
    np.testing.assert_array_equal(scen.perturbations, perturbations_from(fc.xi, scen.samples))


def test_build_uses_formula_without_override():
    fc = _flat_fc([1.0, 1.0])
    p = ScenarioParams(0.5, 0.1)
    assert build_scenarios(fc, p).n == scenario_count(p, 1)
    assert build_scenarios(fc, ScenarioParams(n_override=3)).n == 3


def test_worst_case_examples():
    zero = ScenarioSet(np.zeros((3, 2)), np.zeros((3, 2)))
    assert worst_case_perturbation(zero, 1) == 0.0
    col = ScenarioSet(np.zeros((3, 1)), np.array([[0.1], [0.4], [0.2]]))
    assert worst_case_perturbation(col, 0) == 0.4
    rng = np.random.default_rng(0)
    p = rng.random((7, 5))
    s = ScenarioSet(np.zeros_like(p), p)
    for k in range(5):
        assert worst_case_perturbation(s, k) == max(p[i, k] for i in range(7))
    with pytest.raises(IndexError):
        worst_case_perturbation(s, 5)


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    s = ScenarioSet(rng.normal(size=(4, 3)), rng.random((4, 3)), seed=2)
    s.to_csv(tmp_path / "s.csv")
    back = ScenarioSet.from_csv(tmp_path / "s.csv", seed=2)
    assert np.array_equal(back.samples, s.samples)
    assert np.array_equal(back.perturbations, s.perturbations)
    assert (tmp_path / "s.csv").read_text().startswith("scenario,k,delta_pu,perturbation_pu")


def test_scenario_set_validation():
    with pytest.raises(ValueError):
        ScenarioSet(np.zeros((2, 2)), -np.ones((2, 2)))
    with pytest.raises(ValueError):
        ScenarioSet(np.zeros((2, 2)), np.zeros((2, 3)))
