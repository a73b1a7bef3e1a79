"""Dense bounded-variable simplex.

Rows ``A x (<=|=|>=) b`` are turned into ``A x + s = b`` with one logical
column per row whose bounds encode the sense. Cold starts use one artificial
column per row that is initially infeasible (phase 1 minimizes their sum).
Warm starts from a previous basis after bound changes run the dual simplex,
which keeps dual feasibility of the parent basis; the primal simplex then
polishes the result.

The basis inverse is kept explicitly and updated by elementary row
operations, with a full refactorization every ``REFACTOR_EVERY`` pivots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 50
BLAND_AFTER = 60

AT_LOWER, AT_UPPER, FREE_ZERO, BASIC = 0, 1, 2, 3


@dataclass(frozen=True)
class Basis:
    head: np.ndarray  # column index of the basic variable in each row
    status: np.ndarray  # per column: AT_LOWER, AT_UPPER, FREE_ZERO or BASIC
    sigma: np.ndarray  # artificial column signs


@dataclass
class LpSolution:
    status: str  # "optimal" | "infeasible" | "unbounded" | "iteration_limit"
    x: np.ndarray | None
    objective: float
    basis: Basis | None = None
    iterations: int = 0


class BoundedSimplex:
    """LP workspace for ``min c.x`` s.t. ``A x (sense) b``, ``lb <= x <= ub``.

    One workspace can be re-solved under different bounds, which is what
    branch-and-bound does.
    """

    def __init__(self, A, b, senses, c):
        A = np.asarray(A.toarray() if hasattr(A, "toarray") else A, dtype=float)
        self.A = A
        self.m, self.n = A.shape
        self.b = np.asarray(b, dtype=float).copy()
        self.c = np.asarray(c, dtype=float).copy()
        senses = np.asarray(senses)
        m, n = self.m, self.n
        self.n_tot = n + 2 * m
        self.slack_lb = np.where(senses == "G", -np.inf, 0.0)
        self.slack_ub = np.where(senses == "L", np.inf, 0.0)
        self.iterations = 0

    # ------------------------------------------------------------------ helpers
    def _column(self, j: int) -> np.ndarray:
        n, m = self.n, self.m
        if j < n:
            return self.A[:, j]
        col = np.zeros(m)
        if j < n + m:
            col[j - n] = 1.0
        else:
            col[j - n - m] = self.sigma[j - n - m]
        return col

    def _refactor(self) -> None:
        """Rebuild the basis inverse.

        Logical and artificial columns are signed unit vectors, so only the
        block of structural columns on the rows not covered by a unit column
        needs a dense inverse.
        """
        n, m = self.n, self.m
        head = self.head
        unit_pos = np.flatnonzero(head >= n)
        unit_rows = np.where(head[unit_pos] < n + m, head[unit_pos] - n, head[unit_pos] - n - m)
        unit_sign = np.where(head[unit_pos] < n + m, 1.0, self.sigma[unit_rows])
        struct_pos = np.flatnonzero(head < n)
        covered = np.zeros(m, dtype=bool)
        covered[unit_rows] = True
        struct_rows = np.flatnonzero(~covered)
        if len(np.unique(unit_rows)) != len(unit_rows) or len(struct_rows) != len(struct_pos):
            raise np.linalg.LinAlgError("singular basis")
        cols = head[struct_pos]
        Binv = np.zeros((m, m))
        if len(struct_pos):
            try:
                C = np.linalg.inv(self.A[np.ix_(struct_rows, cols)])
            except np.linalg.LinAlgError as exc:
                raise np.linalg.LinAlgError("singular basis") from exc
            if not np.all(np.isfinite(C)):
                raise np.linalg.LinAlgError("singular basis")
            Binv[np.ix_(struct_pos, struct_rows)] = C
            if len(unit_pos):
                coupling = self.A[np.ix_(unit_rows, cols)] @ C
                Binv[np.ix_(unit_pos, struct_rows)] = -unit_sign[:, None] * coupling
        Binv[unit_pos, unit_rows] = unit_sign
        self.Binv = Binv
        self._recompute_xb()
        self._since_refactor = 0

    def _recompute_xb(self) -> None:
        n, m = self.n, self.m
        xn = self.x.copy()
        xn[self.head] = 0.0
        r = self.b - self.A @ xn[:n] - xn[n:n + m] - self.sigma * xn[n + m:]
        self.x[self.head] = self.Binv @ r

    def _reduced_costs(self, cost: np.ndarray) -> np.ndarray:
        n, m = self.n, self.m
        y = cost[self.head] @ self.Binv
        d = np.empty(self.n_tot)
        d[:n] = cost[:n] - self.A.T @ y
        d[n:n + m] = cost[n:n + m] - y
        d[n + m:] = cost[n + m:] - self.sigma * y
        d[self.head] = 0.0
        return d

    def _row_alpha(self, r: int) -> np.ndarray:
        n, m = self.n, self.m
        rho = self.Binv[r]
        alpha = np.empty(self.n_tot)
        alpha[:n] = rho @ self.A
        alpha[n:n + m] = rho
        alpha[n + m:] = rho * self.sigma
        return alpha

    def _pivot(self, r: int, q: int, alpha_q: np.ndarray, leave_to_upper: bool) -> None:
        piv = alpha_q[r]
        row = self.Binv[r] / piv
        nz = np.flatnonzero(alpha_q)
        self.Binv[nz] -= np.outer(alpha_q[nz], row)
        self.Binv[r] = row
        leave = int(self.head[r])
        self.head[r] = q
        self.status[q] = BASIC
        self._set_nonbasic(leave, leave_to_upper)
        self._since_refactor += 1
        self.iterations += 1
        if self._since_refactor >= REFACTOR_EVERY:
            self._refactor()

    def _set_nonbasic(self, j: int, at_upper: bool) -> None:
        lo, hi = self.L[j], self.U[j]
        if at_upper and math.isfinite(hi):
            self.status[j] = AT_UPPER
            self.x[j] = hi
        elif math.isfinite(lo):
            self.status[j] = AT_LOWER
            self.x[j] = lo
        elif math.isfinite(hi):
            self.status[j] = AT_UPPER
            self.x[j] = hi
        else:
            self.status[j] = FREE_ZERO
            self.x[j] = 0.0

    # ---------------------------------------------------------------- setup
    def _set_bounds(self, lb: np.ndarray, ub: np.ndarray) -> None:
        m = self.m
        self.L = np.concatenate([lb, self.slack_lb, np.zeros(m)])
        self.U = np.concatenate([ub, self.slack_ub, np.zeros(m)])

    def _cold_start(self) -> None:
        n, m = self.n, self.m
        self.x = np.zeros(self.n_tot)
        self.status = np.empty(self.n_tot, dtype=np.int8)
        self.sigma = np.ones(m)
        for j in range(n):
            self._set_nonbasic(j, False)
        res = self.b - self.A @ self.x[:n]
        self.head = np.empty(m, dtype=np.int64)
        self.art_active = np.zeros(m, dtype=bool)
        for r in range(m):
            s = n + r
            a = n + m + r
            lo, hi = self.slack_lb[r], self.slack_ub[r]
            if lo - FEAS_TOL <= res[r] <= hi + FEAS_TOL:
                self.head[r] = s
                self.status[s] = BASIC
                self.x[s] = res[r]
                self.status[a] = AT_LOWER
                self.x[a] = 0.0
            else:
                clipped = min(max(res[r], lo), hi)
                self.x[s] = clipped
                self.status[s] = AT_LOWER if clipped == lo else AT_UPPER
                gap = res[r] - clipped
                self.sigma[r] = 1.0 if gap > 0 else -1.0
                self.U[a] = np.inf
                self.head[r] = a
                self.status[a] = BASIC
                self.x[a] = abs(gap)
                self.art_active[r] = True
        self._refactor()

    def _load_basis(self, basis: Basis) -> None:
        self.head = basis.head.copy()
        self.status = basis.status.copy()
        self.sigma = basis.sigma.copy()
        self.x = np.zeros(self.n_tot)
        for j in np.flatnonzero(self.status != BASIC):
            st = self.status[j]
            lo, hi = self.L[j], self.U[j]
            if lo == hi:
                self.status[j] = AT_LOWER
                self.x[j] = lo
            elif st == AT_UPPER and math.isfinite(hi):
                self.x[j] = hi
            elif st == AT_LOWER and math.isfinite(lo):
                self.x[j] = lo
            else:
                self._set_nonbasic(j, st == AT_UPPER)
        self._refactor()

    # ---------------------------------------------------------- primal simplex
    def _primal(self, cost: np.ndarray, max_iter: int) -> str:
        L, U = self.L, self.U
        bland = False
        best_obj = math.inf
        stall = 0
        start = self.iterations
        while True:
            if self.iterations - start > max_iter:
                return "iteration_limit"
            d = self._reduced_costs(cost)
            st = self.status
            movable = (U - L) > 0
            can_inc = movable & (((st == AT_LOWER) | (st == FREE_ZERO)) & (d < -OPT_TOL))
            can_dec = movable & (((st == AT_UPPER) | (st == FREE_ZERO)) & (d > OPT_TOL))
            elig = can_inc | can_dec
            if not elig.any():
                return "optimal"
            if bland:
                q = int(np.flatnonzero(elig)[0])
            else:
                score = np.where(elig, np.abs(d), -1.0)
                q = int(np.argmax(score))
            direction = 1.0 if can_inc[q] else -1.0
            alpha = self.Binv @ self._column(q)
            # x_B moves by -direction * theta * alpha
            xb = self.x[self.head]
            lb_b, ub_b = L[self.head], U[self.head]
            delta = direction * alpha
            dec = delta > PIVOT_TOL  # basic values decrease
            inc = delta < -PIVOT_TOL
            ratios = np.full(self.m, np.inf)
            ratios_tol = np.full(self.m, np.inf)
            with np.errstate(invalid="ignore", divide="ignore"):
                ratios[dec] = (xb[dec] - lb_b[dec]) / delta[dec]
                ratios_tol[dec] = (xb[dec] - lb_b[dec] + FEAS_TOL) / delta[dec]
                ratios[inc] = (ub_b[inc] - xb[inc]) / (-delta[inc])
                ratios_tol[inc] = (ub_b[inc] - xb[inc] + FEAS_TOL) / (-delta[inc])
            flip = U[q] - L[q]
            min_ratio = float(np.min(ratios, initial=np.inf))
            theta_max = min(float(np.min(ratios_tol, initial=np.inf)), flip)
            if not math.isfinite(theta_max):
                return "unbounded"
            if flip <= theta_max and flip <= min_ratio:
                theta = flip
                r = -1
            else:
                cand = np.flatnonzero(ratios <= theta_max)
                if bland:
                    r = int(cand[np.argmin(self.head[cand])])
                else:
                    r = int(cand[np.argmax(np.abs(alpha[cand]))])
                theta = max(float(ratios[r]), 0.0)
            self.x[self.head] = xb - theta * delta
            self.x[q] += direction * theta
            if r < 0:
                self.status[q] = AT_UPPER if direction > 0 else AT_LOWER
                self.x[q] = U[q] if direction > 0 else L[q]
                self.iterations += 1
            else:
                self._pivot(r, q, alpha, bool(inc[r]))
            obj = float(cost @ self.x)
            if obj < best_obj - 1e-12 * max(1.0, abs(best_obj)):
                best_obj = obj
                stall = 0
                bland = False
            else:
                stall += 1
                if stall > BLAND_AFTER:
                    bland = True

    # ------------------------------------------------------------ dual simplex
    def _dual_feasible(self, d: np.ndarray) -> bool:
        st = self.status
        movable = (self.U - self.L) > 0
        bad = movable & (((st == AT_LOWER) & (d < -OPT_TOL)) | ((st == AT_UPPER) & (d > OPT_TOL))
                         | ((st == FREE_ZERO) & (np.abs(d) > OPT_TOL)))
        return not bad.any()

    def _dual(self, cost: np.ndarray, max_iter: int) -> str:
        L, U = self.L, self.U
        start = self.iterations
        while True:
            if self.iterations - start > max_iter:
                return "iteration_limit"
            xb = self.x[self.head]
            lb_b, ub_b = L[self.head], U[self.head]
            below = lb_b - xb
            above = xb - ub_b
            infeas = np.maximum(below, above)
            r = int(np.argmax(infeas))
            if infeas[r] <= FEAS_TOL:
                return "optimal"
            increase = below[r] > above[r]
            target = lb_b[r] if increase else ub_b[r]
            d = self._reduced_costs(cost)
            alpha_r = self._row_alpha(r)
            st = self.status
            movable = (U - L) > 0
            up_ok = movable & ((st == AT_LOWER) | (st == FREE_ZERO))
            down_ok = movable & ((st == AT_UPPER) | (st == FREE_ZERO))
            if increase:
                elig = (up_ok & (alpha_r < -PIVOT_TOL)) | (down_ok & (alpha_r > PIVOT_TOL))
            else:
                elig = (up_ok & (alpha_r > PIVOT_TOL)) | (down_ok & (alpha_r < -PIVOT_TOL))
            elig[self.head] = False
            if not elig.any():
                self._dual_fail = (r, bool(increase))
                return "infeasible"
            idx = np.flatnonzero(elig)
            a = np.abs(alpha_r[idx])
            dd = np.abs(d[idx])
            theta_max = float(np.min((dd + OPT_TOL) / a))
            cand = dd / a <= theta_max
            q = int(idx[cand][np.argmax(a[cand])])
            alpha_q = self.Binv @ self._column(q)
            step = (self.x[self.head[r]] - target) / alpha_q[r]
            self.x[self.head] = self.x[self.head] - step * alpha_q
            self.x[q] += step
            self._pivot(r, q, alpha_q, not increase)

    # ---------------------------------------------------------------- driver
    def _phase2_cost(self) -> np.ndarray:
        cost = np.zeros(self.n_tot)
        cost[: self.n] = self.c
        return cost

    def _finish(self, status: str) -> LpSolution:
        n = self.n
        if status != "optimal":
            return LpSolution(status, None, math.nan, None, self.iterations)
        x = self.x[:n].copy()
        # snap values within tolerance onto their bounds
        lo, hi = self.L[:n], self.U[:n]
        x = np.where(np.abs(x - lo) <= FEAS_TOL, lo, x)
        x = np.where(np.abs(x - hi) <= FEAS_TOL, hi, x)
        basis = Basis(self.head.copy(), self.status.copy(), self.sigma.copy())
        return LpSolution("optimal", x, float(self.c @ x), basis, self.iterations)

    def _solve_cold(self, max_iter: int) -> LpSolution:
        n, m = self.n, self.m
        self._cold_start()
        if self.art_active.any():
            cost1 = np.zeros(self.n_tot)
            cost1[n + m:] = 1.0
            status = self._primal(cost1, max_iter)
            if status == "iteration_limit":
                return LpSolution(status, None, math.nan, None, self.iterations)
            self._refactor()
            infeas = float(np.sum(self.x[n + m:]))
            scale = max(1.0, float(np.max(np.abs(self.b), initial=0.0)))
            if infeas > 1e-7 * scale:
                return LpSolution("infeasible", None, math.nan, None, self.iterations)
        self.U[n + m:] = 0.0
        self.x[n + m:] = np.where(self.status[n + m:] == BASIC, self.x[n + m:], 0.0)
        for j in range(n + m, self.n_tot):
            if self.status[j] != BASIC:
                self.status[j] = AT_LOWER
                self.x[j] = 0.0
        self._refactor()
        return self._phase2(max_iter)

    def _phase2(self, max_iter: int) -> LpSolution:
        cost = self._phase2_cost()
        for _ in range(4):
            status = self._primal(cost, max_iter)
            if status != "optimal":
                return self._finish(status)
            self._refactor()
            xb = self.x[self.head]
            viol = np.maximum(self.L[self.head] - xb, xb - self.U[self.head])
            if np.max(viol, initial=0.0) > FEAS_TOL:
                status = self._dual(cost, max_iter)
                if status != "optimal":
                    return self._finish(status)
                self._refactor()
                continue
            d = self._reduced_costs(cost)
            if self._dual_feasible(d):
                return self._finish("optimal")
        return self._finish("optimal")

    def solve(self, lb=None, ub=None, basis: Basis | None = None,
              max_iter: int | None = None) -> LpSolution:
        """Solve under the given variable bounds, warm-starting from ``basis`` if given."""
        n = self.n
        lb = np.full(n, 0.0) if lb is None else np.asarray(lb, dtype=float)
        ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
        if np.any(lb > ub):
            return LpSolution("infeasible", None, math.nan, None, self.iterations)
        if max_iter is None:
            max_iter = 50 * (self.m + self.n) + 1000
        self._set_bounds(lb, ub)
        if basis is not None:
            try:
                self._load_basis(basis)
            except np.linalg.LinAlgError:
                basis = None
        if basis is not None:
            cost = self._phase2_cost()
            d = self._reduced_costs(cost)
            if self._dual_feasible(d):
                status = self._dual(cost, max_iter)
                if status == "optimal":
                    self._refactor()
                    return self._phase2(max_iter)
                if status == "infeasible":
                    return self._confirm_infeasible(lb, ub, max_iter)
            self._set_bounds(lb, ub)
        return self._solve_cold(max_iter)

    def _confirm_infeasible(self, lb, ub, max_iter) -> LpSolution:
        # Farkas check on the failing tableau row with a fresh inverse; fall back
        # to a cold solve when round-off makes the certificate inconclusive.
        r, increase = self._dual_fail
        try:
            self._refactor()
        except np.linalg.LinAlgError:
            self._set_bounds(lb, ub)
            return self._solve_cold(max_iter)
        rho = self.Binv[r]
        alpha = self._row_alpha(r)
        nb = self.status != BASIC
        a, lo, hi = alpha[nb], self.L[nb], self.U[nb]
        with np.errstate(invalid="ignore"):
            if increase:
                worst = np.where(a > 0, a * lo, a * hi)  # smallest subtraction
            else:
                worst = np.where(a > 0, a * hi, a * lo)
        worst = np.where(a == 0.0, 0.0, worst)
        reach = float(rho @ self.b - np.sum(worst))
        jr = self.head[r]
        tol = 1e-7 * max(1.0, float(np.max(np.abs(self.b), initial=0.0)))
        if math.isfinite(reach) and ((increase and reach < self.L[jr] - tol)
                                     or (not increase and reach > self.U[jr] + tol)):
            return LpSolution("infeasible", None, math.nan, None, self.iterations)
        self._set_bounds(lb, ub)
        return self._solve_cold(max_iter)


def solve_lp_arrays(c, A, b, senses, lb=None, ub=None) -> LpSolution:
    return BoundedSimplex(A, b, senses, c).solve(lb, ub)


def solve_lp(model) -> LpSolution:
    """Solve the continuous relaxation of a :class:`~apsems.milp.model.MilpModel`."""
    lb, ub = model.bounds()
    ws = BoundedSimplex(model.matrix(), model.rhs(), model.senses(), model.cost_vector())
    sol = ws.solve(lb, ub)
    if sol.status == "optimal":
        sol.objective += model.obj_constant
    return sol
