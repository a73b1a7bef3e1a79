"""HiGHS backend through :func:`scipy.optimize.milp`.

scipy's interface has no SOS sets. An SOS1 set over binaries is the same as
``sum <= 1`` over its members, so such sets are passed as that row; sets with
continuous members are rejected.
"""

from __future__ import annotations

import math
import time

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .bnb import GAP_TOL, MipResult


def row_bounds(model) -> tuple[np.ndarray, np.ndarray]:
    s, b = model.senses(), model.rhs()
    lo = np.where(s == "L", -np.inf, b)
    hi = np.where(s == "G", np.inf, b)
    return lo, hi


def solve_mip_highs(model, max_seconds: float = math.inf, gap_tol: float = GAP_TOL,
                    threads: int | None = None) -> MipResult:
    start = time.perf_counter()
    lb, ub = model.bounds()
    options = {"mip_rel_gap": gap_tol, "disp": False}
    if math.isfinite(max_seconds):
        options["time_limit"] = float(max_seconds)
    # scipy's milp exposes no thread option; ``threads`` is accepted for interface
    # symmetry and honoured by running single-threaded anyway
    cons = []
    if model.n_rows:
        lo, hi = row_bounds(model)
        cons.append(LinearConstraint(model.matrix(), lo, hi))
    mask = model.binary_mask()
    for members in model.sos1_sets:
        if not all(mask[j] for j in members):
            raise ValueError("the HiGHS backend supports SOS1 sets over binaries only")
        row = np.zeros(model.n_vars)
        row[list(members)] = 1.0
        cons.append(LinearConstraint(row[None, :], -np.inf, 1.0))
    res = milp(model.cost_vector(), constraints=cons, bounds=Bounds(lb, ub),
               integrality=model.binary_mask().astype(int), options=options)
    wall = time.perf_counter() - start
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.status == 0:
        x = np.asarray(res.x, dtype=float).copy()
        x[mask] = np.round(x[mask])
        gap = float(getattr(res, "mip_gap", 0.0) or 0.0)
        return MipResult("optimal", x, float(res.fun) + model.obj_constant, gap, nodes, wall)
    if res.status == 2:
        return MipResult("infeasible", None, math.nan, math.inf, nodes, wall)
    if res.x is not None:
        x = np.asarray(res.x, dtype=float).copy()
        x[mask] = np.round(x[mask])
        gap = float(getattr(res, "mip_gap", math.inf) or math.inf)
        return MipResult("limit", x, float(res.fun) + model.obj_constant, gap, nodes, wall)
    return MipResult("limit", None, math.nan, math.inf, nodes, wall)
