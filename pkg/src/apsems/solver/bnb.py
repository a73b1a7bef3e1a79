"""Best-first branch-and-bound over binary variables.

Nodes are ordered by their parent's LP bound (ties: lower node id first), so
the global lower bound is non-decreasing in processing order. The branching
variable is the most fractional binary (ties: lowest index). When it belongs
to an SOS1 set with at least two non-zero members the set is split into two
halves instead; otherwise the variable is fixed to 0 and to 1.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .simplex import Basis, BoundedSimplex

INT_TOL = 1e-6
GAP_TOL = 1e-6


@dataclass
class MipResult:
    status: str  # "optimal" | "infeasible" | "limit"
    incumbent: np.ndarray | None
    objective: float
    gap: float
    nodes: int
    wall_time: float
    bound_trace: list[float] = field(default_factory=list, repr=False)
    lp_iterations: int = 0


@dataclass(order=True)
class _Node:
    key: float
    node_id: int
    fixes: dict = field(compare=False)  # var index -> fixed value
    basis: Basis | None = field(compare=False, default=None)


def relative_gap(incumbent: float, bound: float) -> float:
    if not math.isfinite(incumbent):
        return math.inf
    return max(0.0, incumbent - bound) / max(1.0, abs(incumbent))


def _sos_split(x, members, fixes, ub):
    """Split an SOS1 set whose free members carry two or more nonzeros."""
    free = [j for j in members if fixes.get(j, ub[j]) > 0 and ub[j] > 0]
    nz = [p for p, j in enumerate(free) if x[j] > INT_TOL]
    if len(nz) < 2:
        return None
    weights = np.array([x[free[p]] for p in nz])
    centre = float(np.dot(weights, nz) / weights.sum())
    split = min(max(int(math.floor(centre)) + 1, nz[0] + 1), nz[-1])
    left = dict(fixes)
    right = dict(fixes)
    for j in free[:split]:
        left[j] = 0.0
    for j in free[split:]:
        right[j] = 0.0
    return [left, right]


def _branch_children(x, binary_idx, fixes, sos_of, sos_sets, lb, ub):
    """Return a list of fixing dicts (one per child) or None if x is feasible."""
    xb = x[binary_idx]
    frac = np.minimum(xb - np.floor(xb), np.ceil(xb) - xb)
    if np.all(frac <= INT_TOL):
        # integral, but an SOS1 set may still hold several nonzeros
        for members in sos_sets:
            children = _sos_split(x, members, fixes, ub)
            if children is not None:
                return children
        return None
    best = int(np.argmax(frac))  # first maximum: lowest index on ties
    v = int(binary_idx[best])
    g = sos_of.get(v)
    if g is not None:
        children = _sos_split(x, sos_sets[g], fixes, ub)
        if children is not None:
            return children
    down = dict(fixes)
    down[v] = 0.0
    up = dict(fixes)
    up[v] = 1.0
    return [down, up]


def solve_mip_arrays(c, A, b, senses, lb, ub, binary_mask, sos_sets=(), obj_constant=0.0,
                     max_nodes: int = 100_000, max_seconds: float = math.inf,
                     gap_tol: float = GAP_TOL) -> MipResult:
    start = time.perf_counter()
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    binary_idx = np.flatnonzero(np.asarray(binary_mask, dtype=bool))
    sos_sets = [tuple(s) for s in sos_sets]
    sos_of = {}
    for g, members in enumerate(sos_sets):
        for j in members:
            sos_of.setdefault(j, g)
    ws = BoundedSimplex(A, b, senses, c)

    incumbent = None
    inc_obj = math.inf
    heap: list[_Node] = [_Node(-math.inf, 0, {}, None)]
    next_id = 1
    nodes = 0
    trace: list[float] = []
    status = "optimal"

    while heap:
        node = heap[0]
        if incumbent is not None and relative_gap(inc_obj, node.key) <= gap_tol:
            break
        if nodes >= max_nodes or time.perf_counter() - start > max_seconds:
            status = "limit"
            break
        heapq.heappop(heap)
        trace.append(node.key)
        nodes += 1
        nlb, nub = lb.copy(), ub.copy()
        for j, val in node.fixes.items():
            nlb[j] = nub[j] = val
        sol = ws.solve(nlb, nub, basis=node.basis)
        if sol.status == "unbounded":
            # a binary-bounded MILP with an unbounded relaxation is unbounded for
            # any assignment of the binaries that is feasible; report as limit
            status = "limit"
            break
        if sol.status != "optimal":
            continue
        obj = sol.objective
        if incumbent is not None and obj >= inc_obj - gap_tol * max(1.0, abs(inc_obj)):
            continue
        children = _branch_children(sol.x, binary_idx, node.fixes, sos_of, sos_sets, lb, ub)
        if children is None:
            x = sol.x.copy()
            x[binary_idx] = np.round(x[binary_idx])
            incumbent, inc_obj = x, obj
            continue
        for fixes in children:
            heapq.heappush(heap, _Node(obj, next_id, fixes, sol.basis))
            next_id += 1

    wall = time.perf_counter() - start
    if incumbent is None:
        if status == "optimal":
            return MipResult("infeasible", None, math.nan, math.inf, nodes, wall, trace,
                             ws.iterations)
        return MipResult("limit", None, math.nan, math.inf, nodes, wall, trace, ws.iterations)
    bound = heap[0].key if heap else inc_obj
    gap = relative_gap(inc_obj, min(bound, inc_obj))
    if status == "limit" and gap <= gap_tol:
        status = "optimal"
    return MipResult(status, incumbent, inc_obj + obj_constant, gap, nodes, wall, trace,
                     ws.iterations)


def solve_mip(model, max_nodes: int = 100_000, max_seconds: float = math.inf,
              gap_tol: float = GAP_TOL) -> MipResult:
    """Solve a :class:`~apsems.milp.model.MilpModel` whose integer variables are binary."""
    lb, ub = model.bounds()
    return solve_mip_arrays(model.cost_vector(), model.matrix(), model.rhs(), model.senses(),
                            lb, ub, model.binary_mask(), model.sos1_sets, model.obj_constant,
                            max_nodes=max_nodes, max_seconds=max_seconds, gap_tol=gap_tol)
