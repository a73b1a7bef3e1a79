"""Solver-independent mixed-integer linear program container."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

import numpy as np
from scipy import sparse

SENSES = ("L", "E", "G")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Variable:
    name: str
    lb: float = 0.0
    ub: float = math.inf
    binary: bool = False


@dataclass(frozen=True)
class Constraint:
    name: str
    coefs: tuple[tuple[int, float], ...]
    sense: str  # "L" (<=), "E" (=), "G" (>=)
    rhs: float


@dataclass(frozen=True)
class MilpModel:
    """Minimization MILP: ``min c.x + const`` subject to rows, bounds, SOS1 sets."""

    name: str
    variables: tuple[Variable, ...]
    constraints: tuple[Constraint, ...]
    objective: tuple[tuple[int, float], ...]
    sos1_sets: tuple[tuple[int, ...], ...] = ()
    obj_constant: float = 0.0
    metadata: Mapping[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        n = len(self.variables)
        names = set()
        for v in self.variables:
            if v.name in names:
                raise ModelError(f"duplicate variable name {v.name!r}")
            names.add(v.name)
            if v.lb > v.ub:
                raise ModelError(f"variable {v.name}: lower bound {v.lb} > upper bound {v.ub}")
            if v.binary and not (v.lb in (0.0, 1.0) and v.ub in (0.0, 1.0)):
                raise ModelError(f"binary variable {v.name} needs bounds within {{0, 1}}")
        rnames = set()
        for c in self.constraints:
            if c.name in rnames:
                raise ModelError(f"duplicate constraint name {c.name!r}")
            rnames.add(c.name)
            if c.sense not in SENSES:
                raise ModelError(f"constraint {c.name}: unknown sense {c.sense!r}")
            if not math.isfinite(c.rhs):
                raise ModelError(f"constraint {c.name}: non-finite rhs")
            for j, a in c.coefs:
                if not 0 <= j < n:
                    raise ModelError(f"constraint {c.name} references undeclared variable {j}")
                if not math.isfinite(a):
                    raise ModelError(f"constraint {c.name}: non-finite coefficient")
        for j, a in self.objective:
            if not 0 <= j < n:
                raise ModelError(f"objective references undeclared variable {j}")
        for g in self.sos1_sets:
            if len(g) < 2:
                raise ModelError("SOS1 sets need at least two members")
            if any(not 0 <= j < n for j in g):
                raise ModelError("SOS1 set references undeclared variable")

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_rows(self) -> int:
        return len(self.constraints)

    @property
    def n_binary(self) -> int:
        return sum(v.binary for v in self.variables)

    def var_index(self, name: str) -> int:
        idx = self.metadata.get("_name_index")
        if idx is None:
            idx = {v.name: i for i, v in enumerate(self.variables)}
        return idx[name]

    def cost_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for j, a in self.objective:
            c[j] += a
        return c

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lb = np.array([v.lb for v in self.variables], dtype=float)
        ub = np.array([v.ub for v in self.variables], dtype=float)
        return lb, ub

    def binary_mask(self) -> np.ndarray:
        return np.array([v.binary for v in self.variables], dtype=bool)

    def matrix(self) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for i, c in enumerate(self.constraints):
            for j, a in c.coefs:
                rows.append(i)
                cols.append(j)
                vals.append(a)
        return sparse.csr_matrix((vals, (rows, cols)), shape=(self.n_rows, self.n_vars))

    def rhs(self) -> np.ndarray:
        return np.array([c.rhs for c in self.constraints], dtype=float)

    def senses(self) -> np.ndarray:
        return np.array([c.sense for c in self.constraints])

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.cost_vector() @ np.asarray(x, dtype=float)) + self.obj_constant

    def activities(self, x: np.ndarray) -> np.ndarray:
        return self.matrix() @ np.asarray(x, dtype=float)

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """Per-row violation (>= 0); zero when the row holds."""
        act = self.activities(x)
        b = self.rhs()
        s = self.senses()
        viol = np.zeros(len(b))
        viol[s == "L"] = np.maximum(act[s == "L"] - b[s == "L"], 0.0)
        viol[s == "G"] = np.maximum(b[s == "G"] - act[s == "G"], 0.0)
        viol[s == "E"] = np.abs(act[s == "E"] - b[s == "E"])
        return viol

    def bound_violations(self, x: np.ndarray) -> np.ndarray:
        lb, ub = self.bounds()
        x = np.asarray(x, dtype=float)
        return np.maximum(np.maximum(lb - x, x - ub), 0.0)

    def with_bounds(self, fixes: Mapping[int, tuple[float, float]]) -> "MilpModel":
        vs = list(self.variables)
        for j, (lo, hi) in fixes.items():
            v = vs[j]
            vs[j] = Variable(v.name, lo, hi, v.binary)
        return MilpModel(self.name, tuple(vs), self.constraints, self.objective, self.sos1_sets,
                         self.obj_constant, self.metadata)

    def without_rows(self, rows: Iterable[int]) -> "MilpModel":
        drop = set(rows)
        kept = tuple(c for i, c in enumerate(self.constraints) if i not in drop)
        return MilpModel(self.name, self.variables, kept, self.objective, self.sos1_sets,
                         self.obj_constant, {k: v for k, v in self.metadata.items()
                                             if k != "groups"})

    def relaxed(self) -> "MilpModel":
        vs = tuple(Variable(v.name, v.lb, v.ub, False) for v in self.variables)
        return MilpModel(self.name, vs, self.constraints, self.objective, (), self.obj_constant,
                         self.metadata)


class ModelBuilder:
    """Incremental construction of a :class:`MilpModel`."""

    def __init__(self, name: str = "model"):
        self.name = name
        self._vars: list[Variable] = []
        self._index: dict[str, int] = {}
        self._rows: list[Constraint] = []
        self._obj: dict[int, float] = {}
        self._sos: list[tuple[int, ...]] = []
        self.obj_constant = 0.0
        self.groups: dict[str, list[int]] = {}

    def var(self, name: str, lb: float = 0.0, ub: float = math.inf, binary: bool = False,
            cost: float = 0.0) -> int:
        if name in self._index:
            raise ModelError(f"duplicate variable name {name!r}")
        if binary:
            lb, ub = float(max(lb, 0.0)), float(min(ub, 1.0))
        if lb > ub:
            raise ModelError(f"variable {name}: lower bound {lb} > upper bound {ub}")
        j = len(self._vars)
        self._vars.append(Variable(name, float(lb), float(ub), binary))
        self._index[name] = j
        if cost:
            self._obj[j] = self._obj.get(j, 0.0) + float(cost)
        return j

    def cost(self, j: int, c: float) -> None:
        if c:
            self._obj[j] = self._obj.get(j, 0.0) + float(c)

    def row(self, name: str, coefs: Mapping[int, float] | Iterable[tuple[int, float]],
            sense: str, rhs: float, group: str | None = None) -> int:
        items = coefs.items() if isinstance(coefs, Mapping) else coefs
        merged: dict[int, float] = {}
        for j, a in items:
            merged[j] = merged.get(j, 0.0) + float(a)
        cs = tuple((j, a) for j, a in merged.items() if a != 0.0)
        i = len(self._rows)
        self._rows.append(Constraint(name, cs, sense, float(rhs)))
        if group is not None:
            self.groups.setdefault(group, []).append(i)
        return i

    def sos1(self, members: Iterable[int]) -> None:
        self._sos.append(tuple(members))

    def build(self, metadata: Mapping[str, Any] | None = None) -> MilpModel:
        meta = dict(metadata or {})
        meta.setdefault("groups", {k: tuple(v) for k, v in self.groups.items()})
        meta["_name_index"] = dict(self._index)
        obj = tuple(sorted(self._obj.items()))
        return MilpModel(self.name, tuple(self._vars), tuple(self._rows), obj, tuple(self._sos),
                         self.obj_constant, meta)
