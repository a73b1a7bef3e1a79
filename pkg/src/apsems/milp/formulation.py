"""Robust frequency-constrained scheduling MILP.

Decision step ``k = 0..K-1`` covers ``[t0 + kT, t0 + (k+1)T]``: dispatch must
meet the mean net load ``xi[k]`` and reserves must cover the sampled jump
``|xi[k] - delta_{k+1}|`` (column ``k`` of the scenario perturbations).

Row groups (row names start with the group name):

``dyn``/``excl``/``soc_dyn``
    commitment and state-of-charge dynamics
``balance``/``gate``/``zdef``
    power balance, commitment-gated GT limits, deviation from p_opt
``link``/``sos_sum``
    configuration indicators tied to the commitment pattern (plus SOS1 sets)
``dlin``
    damping of each configuration, linear in the droop variables
``freq_d``/``freq_m``
    big-M minimum damping / minimum inertia rows (variants II and III)
``hr``
    GT headroom for the assigned droop, big-M over configurations
``ess_res``
    ESS charge/discharge exclusivity and reserve headroom
``ebound``
    ESS energy-deviation bound (variant III)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core_types import System
from ..forecast import NetLoadForecast
from ..scenario import ScenarioSet
from .model import MilpModel, ModelBuilder, ModelError

VARIANTS = ("I", "II", "III")


class BuildError(ValueError):
    pass


class DecisionError(ValueError):
    def __init__(self, message: str, rows: Sequence[str] = (), step: int | None = None):
        self.rows = list(rows)
        self.step = step
        super().__init__(message)


@dataclass(frozen=True)
class CostWeights:
    c_dev: float = 1.0  # cost per pu of |P - p_opt| per step
    w_dg: float = 0.01  # cost per unit of GT droop per step
    w_db: float = 0.05  # cost per unit of ESS droop per step
    w_mb: float = 0.05  # cost per second of ESS virtual inertia per step
    # Price of stored energy per pu*h drawn from the ESS over the horizon.
    # None prices it at the cheapest incremental fuel cost; 0 leaves storage free.
    soc_value: float | None = None

    def stored_energy_price(self, gens) -> float:
        if self.soc_value is not None:
            return float(self.soc_value)
        return min(g.fuel_b for g in gens)


def big_m_value(scen: ScenarioSet, grid) -> float:
    """Big-M for the damping rows: twice the largest required damping plus one."""
    p_max = float(np.max(scen.perturbations)) if scen.perturbations.size else 0.0
    return 2.0 * p_max / (grid.r_ss * (1.0 - grid.r_tr)) + 1.0


def closed_form_counts(n_g: int, K: int, n_freq_rows: int, variant: str) -> dict[str, int]:
    """Variable and row counts of :func:`build_model`, derived independently.

    ``n_freq_rows`` is the number of scenario rows per (config, step): N when
    every scenario is written out, 1 when they are collapsed to the worst one.
    """
    J = 2**n_g
    binary = K * (3 * n_g + 1 + J)
    continuous = K * (4 * n_g + 5 + J)
    per_step = (n_g + n_g + 1  # dyn, excl, soc_dyn
                + 1 + 2 * n_g + n_g  # balance, gate, zdef
                + n_g * J + 1  # link, sos_sum
                + J  # dlin
                + 2 * n_g * J  # hr
                + 4)  # ess_res
    if variant in ("II", "III"):
        per_step += n_freq_rows * J + n_freq_rows
    if variant == "III":
        per_step += 3
    return {"binary": binary, "continuous": continuous, "variables": binary + continuous,
            "rows": K * per_step, "sos1": K}


def build_model(system: System, fc: NetLoadForecast, scen: ScenarioSet, soc0: float,
                prev_states: Sequence[int], variant: str = "III",
                weights: CostWeights | None = None,
                collapse_scenarios: bool = False) -> MilpModel:
    """Assemble the scheduling MILP for one EMS step.

    With ``collapse_scenarios`` only the worst perturbation per step is written
    to the frequency rows; every other scenario row has the same coefficients
    and a looser right-hand side, so the feasible set is unchanged.
    """
    if variant not in VARIANTS:
        raise BuildError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    weights = weights or CostWeights()
    gens, ess, grid, hz = system.gens, system.ess, system.grid, system.horizon
    n_g, K, T = system.n_g, hz.k_steps, hz.step_seconds
    A_cf = system.configs.rows
    J = A_cf.shape[0]
    if fc.horizon != K:
        raise BuildError(f"forecast horizon {fc.horizon} != k_steps {K}")
    if scen.horizon != K:
        raise BuildError(f"scenario horizon {scen.horizon} != k_steps {K}")
    if len(prev_states) != n_g or any(s not in (0, 1) for s in prev_states):
        raise BuildError("prev_states must be a binary vector with one entry per generator")
    if not ess.soc_min - 1e-12 <= soc0 <= ess.soc_max + 1e-12:
        raise BuildError(f"initial SoC {soc0} outside [{ess.soc_min}, {ess.soc_max}]")
    for g in gens:
        if g.p_min > g.p_max:
            raise BuildError(f"{g.name}: p_min > p_max")
    soc0 = min(max(soc0, ess.soc_min), ess.soc_max)
    xi = np.asarray(fc.xi, dtype=float)
    r_ss, r_tr, gamma = grid.r_ss, grid.r_tr, grid.rocof_max
    kappa = r_ss * (1.0 - r_tr)
    M_B = big_m_value(scen, grid)
    dg_hi = [g.default_droop if variant == "I" else g.droop_max for g in gens]
    M_hr = [max(M_B, g.p_max, g.p_min + r_tr * dmax) for g, dmax in zip(gens, dg_hi)]
    soc_gain = T * grid.s_base / (3600.0 * ess.e_max)
    nu = system.nu
    hours = T / 3600.0
    # value of one unit of SoC, charged as soc0 - soc[K-1] so the objective keeps
    # the meaning of an operating cost including the energy taken from storage
    soc_worth = weights.stored_energy_price(gens) * ess.e_max / grid.s_base

    mb = ModelBuilder(f"ems_{variant}")
    mb.obj_constant = soc_worth * soc0
    idx: dict[tuple, int] = {}

    def V(key, *args, **kw):
        name = f"{key[0]}[{','.join(str(a) for a in key[1:])}]"
        try:
            idx[key] = mb.var(name, *args, **kw)
        except ModelError as exc:
            raise BuildError(str(exc)) from exc
        return idx[key]

    for k in range(K):
        for g, gen in enumerate(gens):
            V(("x", g, k), binary=True, cost=gen.fuel_a * hours)
            V(("uon", g, k), binary=True, cost=gen.startup_cost)
            V(("uoff", g, k), binary=True)
        V(("s", k), binary=True)
        for j in range(J):
            V(("b", j, k), binary=True)
        for g, gen in enumerate(gens):
            V(("p", g, k), 0.0, gen.p_max, cost=gen.fuel_b * hours)
            V(("zp", g, k), 0.0, math.inf, cost=weights.c_dev)
            V(("zm", g, k), 0.0, math.inf, cost=weights.c_dev)
            if variant == "I":
                V(("dg", g, k), gen.default_droop, gen.default_droop, cost=weights.w_dg)
            else:
                V(("dg", g, k), gen.droop_min, gen.droop_max, cost=weights.w_dg)
        V(("pch", k), 0.0, ess.p_max)
        V(("pdis", k), 0.0, ess.p_max)
        V(("soc", k), ess.soc_min, ess.soc_max, cost=-soc_worth if k == K - 1 else 0.0)
        if variant == "I":
            V(("db", k), 0.0, 0.0)
            V(("mb", k), 0.0, 0.0)
        else:
            V(("db", k), 0.0, ess.vdroop_max, cost=weights.w_db)
            V(("mb", k), 0.0, ess.vinertia_max, cost=weights.w_mb)
        for j in range(J):
            V(("dtot", j, k), 0.0, math.inf)

    if collapse_scenarios:
        freq_levels = [[float(np.max(scen.perturbations[:, k]))] for k in range(K)]
    else:
        freq_levels = [list(map(float, scen.perturbations[:, k])) for k in range(K)]

    for k in range(K):
        # (a) state dynamics
        for g in range(n_g):
            coefs = {idx["x", g, k]: 1.0, idx["uon", g, k]: -1.0, idx["uoff", g, k]: 1.0}
            rhs = float(prev_states[g])
            if k > 0:
                coefs[idx["x", g, k - 1]] = -1.0
                rhs = 0.0
            mb.row(f"dyn_x[{g},{k}]", coefs, "E", rhs, "dyn")
            mb.row(f"excl_u[{g},{k}]", {idx["uon", g, k]: 1.0, idx["uoff", g, k]: 1.0}, "L", 1.0,
                   "excl")
        coefs = {idx["soc", k]: 1.0, idx["pch", k]: -ess.eta_ch * soc_gain,
                 idx["pdis", k]: soc_gain / ess.eta_dis}
        rhs = soc0
        if k > 0:
            coefs[idx["soc", k - 1]] = -1.0
            rhs = 0.0
        mb.row(f"soc_dyn[{k}]", coefs, "E", rhs, "soc_dyn")

        # (b) operating set
        coefs = {idx["p", g, k]: 1.0 for g in range(n_g)}
        coefs[idx["pdis", k]] = 1.0
        coefs[idx["pch", k]] = -1.0
        mb.row(f"balance[{k}]", coefs, "E", float(xi[k]), "balance")
        for g, gen in enumerate(gens):
            mb.row(f"gate_hi[{g},{k}]", {idx["p", g, k]: 1.0, idx["x", g, k]: -gen.p_max}, "L",
                   0.0, "gate")
            mb.row(f"gate_lo[{g},{k}]", {idx["p", g, k]: 1.0, idx["x", g, k]: -gen.p_min}, "G",
                   0.0, "gate")
            mb.row(f"zdef[{g},{k}]", {idx["zp", g, k]: 1.0, idx["zm", g, k]: -1.0,
                                      idx["p", g, k]: -1.0, idx["x", g, k]: gen.p_opt},
                   "E", 0.0, "zdef")

        # (c) configuration linking
        for j in range(J):
            for g in range(n_g):
                if A_cf[j, g] == 1:
                    mb.row(f"link_on[{j},{g},{k}]", {idx["x", g, k]: 1.0, idx["b", j, k]: -1.0},
                           "G", 0.0, "link")
                else:
                    mb.row(f"link_off[{j},{g},{k}]", {idx["x", g, k]: 1.0, idx["b", j, k]: 1.0},
                           "L", 1.0, "link")
        mb.row(f"sos_sum[{k}]", {idx["b", j, k]: 1.0 for j in range(J)}, "E", 1.0, "sos_sum")
        mb.sos1([idx["b", j, k] for j in range(J)])

        # (d) damping of each configuration
        for j in range(J):
            coefs = {idx["dtot", j, k]: 1.0, idx["db", k]: -1.0}
            for g in range(n_g):
                if A_cf[j, g] == 1:
                    coefs[idx["dg", g, k]] = -1.0
            mb.row(f"dlin[{j},{k}]", coefs, "E", 0.0, "dlin")

        # (e) robust minimum damping / inertia
        if variant in ("II", "III"):
            for i, p_nl in enumerate(freq_levels[k]):
                for j in range(J):
                    mb.row(f"freq_d[{i},{j},{k}]",
                           {idx["b", j, k]: M_B, idx["dtot", j, k]: -kappa}, "L", M_B - p_nl,
                           "freq_d")
                coefs = {idx["x", g, k]: gens[g].inertia_m for g in range(n_g)}
                coefs[idx["mb", k]] = 1.0
                mb.row(f"freq_m[{i},{k}]", coefs, "G", p_nl / gamma, "freq_m")

        # (f) GT headroom for the assigned droop
        for j in range(J):
            for g, gen in enumerate(gens):
                M = M_hr[g]
                p, b, dg = idx["p", g, k], idx["b", j, k], idx["dg", g, k]
                if A_cf[j, g] == 1:
                    mb.row(f"hr_up[{j},{g},{k}]", {p: 1.0, b: M, dg: r_tr}, "L", gen.p_max + M,
                           "hr")
                    mb.row(f"hr_lo[{j},{g},{k}]", {p: 1.0, b: -M, dg: -r_tr}, "G", gen.p_min - M,
                           "hr")
                else:
                    mb.row(f"hr_off_up[{j},{g},{k}]", {p: 1.0, b: M}, "L", M, "hr")
                    mb.row(f"hr_off_lo[{j},{g},{k}]", {p: 1.0, b: -M}, "G", -M, "hr")

        # (g) ESS exclusivity and reserve headroom
        s, pch, pdis = idx["s", k], idx["pch", k], idx["pdis", k]
        res = {idx["db", k]: r_tr, idx["mb", k]: gamma}
        mb.row(f"ess_dis[{k}]", {pdis: 1.0, s: -ess.p_max}, "L", 0.0, "ess_res")
        mb.row(f"ess_dis_res[{k}]", {pdis: 1.0, **res}, "L", ess.p_max, "ess_res")
        mb.row(f"ess_ch[{k}]", {pch: 1.0, s: ess.p_max}, "L", ess.p_max, "ess_res")
        mb.row(f"ess_ch_res[{k}]", {pch: 1.0, **res}, "L", ess.p_max, "ess_res")

        # (h) energy-deviation bound
        if variant == "III":
            use = {idx["mb", k]: nu, idx["db", k]: nu * T}
            if k == 0:
                mb.row(f"ebound_up[{k}]", use, "L", ess.soc_max - soc0, "ebound")
                mb.row(f"ebound_lo[{k}]", use, "L", soc0 - ess.soc_min, "ebound")
            else:
                prev = idx["soc", k - 1]
                mb.row(f"ebound_up[{k}]", {**use, prev: 1.0}, "L", ess.soc_max, "ebound")
                mb.row(f"ebound_lo[{k}]", {**use, prev: -1.0}, "L", -ess.soc_min, "ebound")
            mb.row(f"ebound_lam[{k}]", {**use, idx["soc", k]: -ess.lam}, "L", 0.0, "ebound")

    n_freq = (1 if collapse_scenarios else scen.n) if variant != "I" else 0
    meta = {
        "variant": variant,
        "index": idx,
        "n_g": n_g,
        "K": K,
        "J": J,
        "big_m": M_B,
        "big_m_headroom": tuple(M_hr),
        "nu": nu,
        "soc0": soc0,
        "prev_states": tuple(int(s) for s in prev_states),
        "xi": tuple(map(float, xi)),
        "perturbations": np.array(scen.perturbations),
        "collapse_scenarios": collapse_scenarios,
        "n_freq_rows": n_freq,
        "weights": weights,
        "step_seconds": T,
    }
    return mb.build(meta)


@dataclass
class EmsDecision:
    gt_states: np.ndarray  # [K, Ng]
    u_on: np.ndarray
    u_off: np.ndarray
    gt_powers: np.ndarray  # [K, Ng] pu
    ess_charge: np.ndarray  # [K] pu
    ess_discharge: np.ndarray
    discharging: np.ndarray  # [K] binary
    soc: np.ndarray  # [K], end of step
    configs: np.ndarray  # [K, J] binary indicators
    gt_droops: np.ndarray  # [K, Ng]
    ess_droop: np.ndarray  # [K]
    ess_vinertia: np.ndarray  # [K]
    config_damping: np.ndarray  # [K, J]
    dev_plus: np.ndarray  # [K, Ng]
    dev_minus: np.ndarray
    objective: float
    breakdown: dict[str, float] = field(default_factory=dict)

    @property
    def selected_config(self) -> np.ndarray:
        return np.argmax(self.configs, axis=1)

    @property
    def horizon(self) -> int:
        return self.gt_states.shape[0]

    def total_damping(self) -> np.ndarray:
        return np.sum(self.gt_states * self.gt_droops, axis=1) + self.ess_droop

    def total_inertia(self, inertia_m: Sequence[float]) -> np.ndarray:
        return self.gt_states @ np.asarray(inertia_m, dtype=float) + self.ess_vinertia

    def to_vector(self, model: MilpModel) -> np.ndarray:
        """Rebuild the model's variable vector from the decision."""
        idx = model.metadata["index"]
        x = np.zeros(model.n_vars)
        fields = {"x": self.gt_states, "uon": self.u_on, "uoff": self.u_off, "p": self.gt_powers,
                  "zp": self.dev_plus, "zm": self.dev_minus, "dg": self.gt_droops}
        for key, j in idx.items():
            name = key[0]
            if name in fields:
                x[j] = fields[name][key[2], key[1]]
            elif name == "b":
                x[j] = self.configs[key[2], key[1]]
            elif name == "dtot":
                x[j] = self.config_damping[key[2], key[1]]
            else:
                arr = {"s": self.discharging, "pch": self.ess_charge, "pdis": self.ess_discharge,
                       "soc": self.soc, "db": self.ess_droop, "mb": self.ess_vinertia}[name]
                x[j] = arr[key[1]]
        return x


def objective_breakdown(model: MilpModel, x: np.ndarray) -> dict[str, float]:
    idx = model.metadata["index"]
    c = model.cost_vector()
    terms = {"online": ("x",), "fuel": ("p",), "startup": ("uon",), "deviation": ("zp", "zm"),
             "reserves": ("dg", "db", "mb"), "stored_energy": ("soc",)}
    out = {}
    for term, names in terms.items():
        out[term] = float(sum(c[j] * x[j] for key, j in idx.items() if key[0] in names))
    out["stored_energy"] += model.obj_constant
    return out


def extract_decision(model: MilpModel, x: np.ndarray, tol: float = 1e-6) -> EmsDecision:
    """Turn a solution vector into an :class:`EmsDecision`, re-verifying feasibility."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n_vars,):
        raise DecisionError(f"solution has {x.size} entries, model has {model.n_vars}")
    viol = model.residuals(x)
    bad = np.flatnonzero(viol > tol)
    if bad.size:
        names = [model.constraints[i].name for i in bad]
        raise DecisionError(f"{len(names)} constraint(s) violated beyond {tol}: "
                            f"{', '.join(names[:10])}", rows=names)
    bviol = model.bound_violations(x)
    if np.any(bviol > tol):
        names = [model.variables[j].name for j in np.flatnonzero(bviol > tol)]
        raise DecisionError(f"bound violations: {', '.join(names[:10])}", rows=names)
    binary = model.binary_mask()
    xb = x[binary]
    if np.any(np.abs(xb - np.round(xb)) > tol):
        names = [model.variables[j].name for j in np.flatnonzero(binary)
                 if abs(x[j] - round(x[j])) > tol]
        raise DecisionError(f"non-integral binaries: {', '.join(names[:10])}", rows=names)
    x = x.copy()
    x[binary] = np.round(xb)

    meta = model.metadata
    idx, n_g, K, J = meta["index"], meta["n_g"], meta["K"], meta["J"]

    def grid(name, width):
        return np.array([[x[idx[name, a, k]] for a in range(width)] for k in range(K)])

    def line(name):
        return np.array([x[idx[name, k]] for k in range(K)])

    d = EmsDecision(
        gt_states=grid("x", n_g).astype(int), u_on=grid("uon", n_g).astype(int),
        u_off=grid("uoff", n_g).astype(int), gt_powers=grid("p", n_g),
        ess_charge=line("pch"), ess_discharge=line("pdis"),
        discharging=line("s").astype(int), soc=line("soc"), configs=grid("b", J).astype(int),
        gt_droops=grid("dg", n_g), ess_droop=line("db"), ess_vinertia=line("mb"),
        config_damping=grid("dtot", J), dev_plus=grid("zp", n_g), dev_minus=grid("zm", n_g),
        objective=model.objective_value(x), breakdown=objective_breakdown(model, x))

    n_on = d.configs.sum(axis=1)
    for k in range(K):
        if n_on[k] != 1:
            raise DecisionError(f"step {k}: {n_on[k]} configuration indicators set (need 1)",
                                step=k)
        j = int(np.argmax(d.configs[k]))
        if meta.get("A_cf_check", True):
            pattern = [(j >> (n_g - 1 - g)) & 1 for g in range(n_g)]
            if list(d.gt_states[k]) != pattern:
                raise DecisionError(f"step {k}: selected configuration {j} disagrees with "
                                    f"commitment {list(d.gt_states[k])}", step=k)
        if d.discharging[k] == 0 and d.ess_discharge[k] > tol:
            raise DecisionError(f"step {k}: discharging while s=0", step=k)
        if d.discharging[k] == 1 and d.ess_charge[k] > tol:
            raise DecisionError(f"step {k}: charging while s=1", step=k)
    return d
