import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apsems.milp import ModelBuilder, build_model
from apsems.solver import MpsParseError, read_mps, solve_lp, solve_mip, solve_model, write_mps
from apsems.solver.mps import mps_string, parse_mps

from oracles import enumerate_milp, random_small_instance


def _lp(rows, costs, bounds):
    mb = ModelBuilder("lp")
    for name, (lo, hi) in bounds.items():
        mb.var(name, lo, hi, cost=costs.get(name, 0.0))
    idx = {name: i for i, name in enumerate(bounds)}
    for k, (coefs, sense, rhs) in enumerate(rows):
        mb.row(f"r{k}", {idx[n]: a for n, a in coefs.items()}, sense, rhs)
    return mb.build()


def test_lp_examples():
    box = solve_lp(_lp([], {"x": -1.0, "y": -1.0}, {"x": (0, 1), "y": (0, 1)}))
    assert box.status == "optimal" and box.objective == pytest.approx(-2.0)
    eq = solve_lp(_lp([({"x": -1.0, "y": -1.0}, "E", -1.0)], {"x": 1.0, "y": 2.0},
                      {"x": (0, np.inf), "y": (0, np.inf)}))
    assert eq.objective == pytest.approx(1.0)
    np.testing.assert_allclose(eq.x, [1.0, 0.0], atol=1e-12)
    bad = solve_lp(_lp([({"x": 1.0}, "G", 2.0), ({"x": 1.0}, "L", 1.0)], {"x": 1.0},
                       {"x": (-np.inf, np.inf)}))
    assert bad.status == "infeasible"


def test_lp_unbounded():
    res = solve_lp(_lp([({"x": 1.0, "y": -1.0}, "L", 1.0)], {"x": -1.0},
                       {"x": (0, np.inf), "y": (0, np.inf)}))
    assert res.status == "unbounded"


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_lp_matches_scipy(seed):
    from scipy.optimize import linprog

    rng = np.random.default_rng(seed)
    n, m = 5, 4
    A = rng.normal(size=(m, n))
    x0 = rng.random(n)
    b = A @ x0 + rng.random(m)  # x0 is strictly feasible for A x <= b
    c = rng.normal(size=n)
    names = [f"x{i}" for i in range(n)]
    model = _lp([(dict(zip(names, A[i])), "L", b[i]) for i in range(m)], dict(zip(names, c)),
                {nm: (0.0, 2.0) for nm in names})
    ref = linprog(c, A_ub=A, b_ub=b, bounds=[(0, 2)] * n, method="highs")
    ours = solve_lp(model)
    assert ours.status == "optimal"
    assert ours.objective == pytest.approx(ref.fun, abs=1e-8)


def _knapsack(values, weights, cap):
    mb = ModelBuilder("knap")
    ids = [mb.var(f"y{i}", binary=True, cost=-v) for i, v in enumerate(values)]
    mb.row("cap", dict(zip(ids, weights)), "L", cap)
    return mb.build()


def test_knapsack_against_brute_force():
    rng = np.random.default_rng(4)
    values, weights = rng.integers(1, 20, 6), rng.integers(1, 10, 6)
    cap = int(weights.sum() // 2)
    best = max(sum(v for v, t in zip(values, pick) if t)
               for pick in itertools.product((0, 1), repeat=6)
               if sum(w for w, t in zip(weights, pick) if t) <= cap)
    res = solve_mip(_knapsack(values, weights, cap))
    assert res.status == "optimal"
    assert res.objective == pytest.approx(-best)
    assert np.all(np.diff(res.bound_trace) >= -1e-9)


def test_binary_infeasible():
    mb = ModelBuilder("half")
    a, b = mb.var("a", binary=True), mb.var("b", binary=True)
    mb.row("sum", {a: 1.0, b: 1.0}, "E", 1.5)
    res = solve_mip(mb.build())
    assert res.status == "infeasible" and res.incumbent is None


def test_sos_is_enforced():
    mb = ModelBuilder("sos")
    ids = [mb.var(f"z{i}", binary=True, cost=-float(i + 1)) for i in range(3)]
    mb.row("cap", {j: 1.0 for j in ids}, "L", 2.0)
    mb.sos1(ids)
    res = solve_mip(mb.build())
    assert res.objective == pytest.approx(-3.0)
    np.testing.assert_array_equal(np.round(res.incumbent), [0, 0, 1])


HAND_MPS = """NAME tiny
ROWS
 N obj
 L cap
 G floor
COLUMNS
 MARKER 'MARKER' 'INTORG'
 z0 obj -1.0 cap 1.0
 z1 obj -2.0 cap 1.0
 z2 obj -3.0 cap 1.0
 MARKER 'MARKER' 'INTEND'
 w obj 1.0 floor 1.0
RHS
 RHS cap 2.0 floor 0.5
BOUNDS
 BV BND z0
 BV BND z1
 BV BND z2
 UP BND w 4.0
SOS
 S1 SOS s0 1
 z0 1
 z1 2
 z2 3
ENDATA
"""


def test_hand_written_mps():
    model = parse_mps(HAND_MPS)
    assert model.n_vars == 4 and model.n_binary == 3
    assert model.sos1_sets == ((0, 1, 2),)
    assert solve_mip(model).objective == pytest.approx(-2.5)
    assert solve_model(model, "highs").objective == pytest.approx(-2.5)


def test_highs_rejects_continuous_sos():
    mb = ModelBuilder("c")
    ids = [mb.var("u", 0.0, 1.0), mb.var("v", 0.0, 1.0)]
    mb.sos1(ids)
    with pytest.raises(ValueError, match="binaries"):
        solve_model(mb.build(), "highs")


@pytest.mark.parametrize("text, line", [
    (HAND_MPS.replace("BOUNDS", "BOUNDZ"), 15),
    (HAND_MPS.replace(" z1 obj -2.0", " z1 obj two"), 9),
    (HAND_MPS.replace("ENDATA\n", ""), None),
])
def test_mps_parse_errors(text, line):
    with pytest.raises(MpsParseError) as info:
        parse_mps(text)
    assert info.value.line == line


def test_mps_round_trip_is_byte_identical(tmp_path):
    system, fc, scen, soc0, prev = random_small_instance(2)
    model = build_model(system, fc, scen, soc0, prev, "III")
    first = tmp_path / "a.mps"
    write_mps(model, first)
    again = tmp_path / "b.mps"
    write_mps(read_mps(first), again)
    assert first.read_bytes() == again.read_bytes()
    assert mps_string(parse_mps(HAND_MPS)) == mps_string(parse_mps(mps_string(
        parse_mps(HAND_MPS))))
    back = read_mps(first)
    assert solve_mip(back).objective == pytest.approx(solve_mip(model).objective, rel=1e-9)


def test_fixing_binaries_reproduces_mip_optimum():
    system, fc, scen, soc0, prev = random_small_instance(7)
    model = build_model(system, fc, scen, soc0, prev, "II")
    res = solve_mip(model)
    mask = model.binary_mask()
    fixes = {int(j): (round(res.incumbent[j]),) * 2 for j in np.flatnonzero(mask)}
    lp = solve_lp(model.with_bounds(fixes))
    assert lp.objective == pytest.approx(res.objective, rel=1e-9)


def test_search_is_deterministic():
    system, fc, scen, soc0, prev = random_small_instance(8)
    model = build_model(system, fc, scen, soc0, prev, "III")
    a, b = solve_mip(model), solve_mip(model)
    assert a.nodes == b.nodes
    assert np.array_equal(a.incumbent, b.incumbent)
    assert np.all(np.diff(a.bound_trace) >= -1e-9)


@pytest.mark.parametrize("seed", range(4))
def test_matches_enumeration_on_tiny_models(seed):
    system, fc, scen, soc0, prev = random_small_instance(seed, n_g=1, k_steps=2, n_scen=3)
    model = build_model(system, fc, scen, soc0, prev, ("I", "II", "III")[seed % 3])
    assert model.n_binary <= 14
    ref, _, _ = enumerate_milp(model)
    res = solve_mip(model)
    if np.isinf(ref):
        assert res.status == "infeasible"
    else:
        assert res.objective == pytest.approx(ref, rel=1e-7, abs=1e-7)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_highs_backend_agrees(seed):
    system, fc, scen, soc0, prev = random_small_instance(seed)
    model = build_model(system, fc, scen, soc0, prev, "III")
    a = solve_model(model, "native")
    b = solve_model(model, "highs")
    assert a.status == b.status
    if a.status == "optimal":
        assert b.objective == pytest.approx(a.objective, rel=1e-6)


def test_unknown_backend():
    with pytest.raises(ValueError, match="backend"):
        solve_model(_knapsack([1], [1], 1), "gurobi")
