"""Independent reference computations for the test suite.

Nothing here calls the package's own simplex or branch-and-bound code.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linprog

from apsems.core_types import system_from_dict
from apsems.fixtures import system_dict
from apsems.forecast import DEFAULT_TAU_GRID, QuantileForecast, net_load_forecast
from apsems.scenario import draw_scenarios


def enumerate_milp(model, tol: float = 1e-9):
    """Best objective over every binary assignment, each completed by an LP.

    Rows whose columns are all binary are checked with interval arithmetic
    while assigning, so infeasible partial assignments are cut early. Returns
    ``(objective, x, leaves)``; objective is ``inf`` when nothing is feasible.
    """
    A = model.matrix().tocsc()
    A_rows = model.matrix().tocsr()
    b = model.rhs()
    senses = model.senses()
    lb, ub = model.bounds()
    c = model.cost_vector()
    is_bin = model.binary_mask()
    bins = np.flatnonzero(is_bin)
    cont = np.flatnonzero(~is_bin)

    bin_rows = [i for i in range(model.n_rows)
                if np.all(is_bin[A_rows.indices[A_rows.indptr[i]:A_rows.indptr[i + 1]]])]
    rows_of = {int(j): [] for j in bins}
    for i in bin_rows:
        for j in A_rows.indices[A_rows.indptr[i]:A_rows.indptr[i + 1]]:
            rows_of[int(j)].append(i)
    order = sorted(bins, key=lambda j: (-len(rows_of[int(j)]), j))
    sos_sets = [tuple(s) for s in model.sos1_sets]

    val = np.full(model.n_vars, np.nan)

    def row_ok(i):
        lo = hi = 0.0
        for j, a in zip(A_rows.indices[A_rows.indptr[i]:A_rows.indptr[i + 1]],
                        A_rows.data[A_rows.indptr[i]:A_rows.indptr[i + 1]]):
            if np.isnan(val[j]):
                lo += min(a * lb[j], a * ub[j])
                hi += max(a * lb[j], a * ub[j])
            else:
                lo += a * val[j]
                hi += a * val[j]
        if senses[i] == "L":
            return lo <= b[i] + tol
        if senses[i] == "G":
            return hi >= b[i] - tol
        return lo <= b[i] + tol and hi >= b[i] - tol

    Ac = A[:, cont].toarray()
    A_bin = A[:, bins]
    is_le, is_ge, is_eq = senses == "L", senses == "G", senses == "E"
    best = [math.inf, None]
    leaves = [0]

    def leaf():
        leaves[0] += 1
        for s in sos_sets:
            if sum(val[j] > 0.5 for j in s) > 1:
                return
        xb = val[bins]
        rhs = b - A_bin @ xb
        kw = {}
        if is_le.any() or is_ge.any():
            kw["A_ub"] = np.vstack([Ac[is_le], -Ac[is_ge]])
            kw["b_ub"] = np.concatenate([rhs[is_le], -rhs[is_ge]])
        if is_eq.any():
            kw["A_eq"], kw["b_eq"] = Ac[is_eq], rhs[is_eq]
        if cont.size == 0:
            resid = rhs
            ok = all((s == "L" and r >= -tol) or (s == "G" and r <= tol)
                     or (s == "E" and abs(r) <= tol) for s, r in zip(senses, resid))
            if ok:
                obj = float(c[bins] @ xb) + model.obj_constant
                if obj < best[0]:
                    best[0], best[1] = obj, val.copy()
            return
        res = linprog(c[cont], bounds=list(zip(lb[cont], ub[cont])), method="highs", **kw)
        if res.status != 0:
            return
        obj = float(res.fun + c[bins] @ xb) + model.obj_constant
        if obj < best[0]:
            x = val.copy()
            x[cont] = res.x
            best[0], best[1] = obj, x

    def dfs(depth):
        if depth == len(order):
            leaf()
            return
        j = order[depth]
        for v in (0.0, 1.0):
            if v < lb[j] or v > ub[j]:
                continue
            val[j] = v
            if all(row_ok(i) for i in rows_of[int(j)]):
                dfs(depth + 1)
        val[j] = np.nan

    dfs(0)
    return best[0], best[1], leaves[0]


def random_small_instance(seed: int, n_g: int = 2, k_steps: int = 3, n_scen: int = 5):
    """Randomized scheduling instance small enough for :func:`enumerate_milp`.

    Returns ``(system, fc, scen, soc0, prev_states)``.
    """
    rng = np.random.default_rng(seed)
    doc = system_dict(n_g, k_steps, e_max=float(rng.uniform(1.0, 20.0)))
    for g in doc["generators"]:
        p_min = float(rng.uniform(0.05, 0.2))
        p_max = float(rng.uniform(0.35, 0.6))
        g.update(p_min=p_min, p_max=p_max, p_opt=float(rng.uniform(p_min + 0.05, p_max)),
                 inertia_m=float(rng.uniform(0.5, 1.5)), droop_max=float(rng.uniform(2.0, 6.0)),
                 fuel_a=float(rng.uniform(10, 40)), fuel_b=float(rng.uniform(100, 200)),
                 startup_cost=float(rng.uniform(0, 80)))
    doc["ess"]["lambda"] = float(rng.uniform(0.02, 0.1))
    system = system_from_dict(doc)
    s_base = system.grid.s_base
    tau = np.array(DEFAULT_TAU_GRID)
    # a level plus small moves keeps the required inertia within reach
    med = rng.uniform(3.0, 0.4 * n_g * s_base) + np.cumsum(rng.normal(0.0, 0.2, k_steps))
    spread = rng.uniform(0.0, 0.6, k_steps)
    q = med[:, None] + spread[:, None] * (tau - 0.5)[None, :] * 2.0
    wind = QuantileForecast(None, tau, np.full((k_steps, tau.size), 0.3), "renewable")
    fc = net_load_forecast(QuantileForecast(None, tau, q, "load"), wind,
                           float(med[0] - 0.3) / s_base, s_base)
    scen = draw_scenarios(fc, n_scen, seed)
    soc0 = float(rng.uniform(0.3, 0.8))
    prev = tuple(int(v) for v in rng.integers(0, 2, n_g))
    return system, fc, scen, soc0, prev
