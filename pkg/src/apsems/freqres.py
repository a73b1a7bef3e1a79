"""Closed-form frequency-security quantities.

Minimum damping and inertia for a step imbalance, aggregation over online
units, per-device reserve headroom and the ESS energy-deviation bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core_types import EssSpec, GeneratorSpec, GridSpec, HorizonSpec


@dataclass(frozen=True)
class ReserveAllocation:
    gt_droops: tuple[float, ...]
    gt_states: tuple[int, ...]
    ess_droop: float = 0.0
    ess_vinertia: float = 0.0

    def __post_init__(self):
        if len(self.gt_droops) != len(self.gt_states):
            raise ValueError("gt_droops and gt_states must have equal length")
        if min(self.gt_droops, default=0.0) < 0 or self.ess_droop < 0 or self.ess_vinertia < 0:
            raise ValueError("reserve allocations must be non-negative")
        if any(s not in (0, 1) for s in self.gt_states):
            raise ValueError("gt_states must be binary")


@dataclass(frozen=True)
class EnergyDeviationBound:
    hat_delta_e: float  # pu*s, worst-case energy used over one step
    allowed: float  # pu*s, lambda * SoE
    nu: float
    milp_rhs: float  # min{soc_max - soc, soc - soc_min, lambda * soc}
    milp_lhs: float  # nu * (M_b + D_b * T)

    @property
    def satisfied(self) -> bool:
        return self.hat_delta_e <= self.allowed


def min_damping(p_nl: float, r_ss: float, r_tr: float) -> float:
    """Total damping that keeps the steady-state deviation within ``r_ss``."""
    if not r_ss > 0:
        raise ValueError("r_ss must be positive")
    if not 0 <= r_tr < 1:
        raise ValueError("r_tr must lie in [0, 1)")
    return p_nl / (r_ss * (1.0 - r_tr))


def min_inertia(p_nl: float, rocof_max: float) -> float:
    """Total inertia that keeps the initial RoCoF within ``rocof_max``."""
    if not rocof_max > 0:
        raise ValueError("rocof_max must be positive")
    return p_nl / rocof_max


def aggregate(alloc: ReserveAllocation, gens: Sequence[GeneratorSpec]) -> tuple[float, float]:
    """Return (total damping, total inertia) of the online units plus the ESS."""
    if len(gens) != len(alloc.gt_states):
        raise ValueError("allocation and generator list lengths differ")
    x = np.asarray(alloc.gt_states, dtype=float)
    damping = float(x @ np.asarray(alloc.gt_droops, dtype=float)) + alloc.ess_droop
    inertia = float(x @ np.array([g.inertia_m for g in gens])) + alloc.ess_vinertia
    return damping, inertia


@dataclass(frozen=True)
class HeadroomReport:
    ess_ok: bool
    ess_budget: float
    ess_headroom: float
    gt_ok: tuple[bool, ...]
    gt_budget: tuple[float, ...]
    gt_headroom: tuple[float, ...]
    details: list[str] = field(default_factory=list)

    @property
    def all_ok(self) -> bool:
        return self.ess_ok and all(self.gt_ok)


def device_headroom_ok(alloc: ReserveAllocation, gens: Sequence[GeneratorSpec], ess: EssSpec,
                       grid: GridSpec, gt_powers: Sequence[float] | None = None,
                       ess_dispatch: float = 0.0, tol: float = 1e-9) -> HeadroomReport:
    """Check that each device can deliver its assigned primary-control power.

    ``gt_powers`` defaults to each unit's preferred operating point when online;
    ``ess_dispatch`` is the scheduled ESS power (sign ignored).
    """
    if gt_powers is None:
        gt_powers = [g.p_opt * s for g, s in zip(gens, alloc.gt_states)]
    details = []
    ess_budget = alloc.ess_vinertia * grid.rocof_max + alloc.ess_droop * grid.r_tr
    ess_headroom = ess.p_max - abs(ess_dispatch)
    ess_ok = ess_budget <= ess_headroom + tol
    if not ess_ok:
        details.append(f"ess: reserve {ess_budget:.6g} pu exceeds headroom {ess_headroom:.6g} pu")
    gt_ok, gt_budget, gt_room = [], [], []
    for g, s, d, p in zip(gens, alloc.gt_states, alloc.gt_droops, gt_powers):
        budget = s * d * grid.r_tr
        if s:
            room = min(g.p_max - p, p - g.p_min)
        else:
            # offline units cannot carry droop; their contribution is gated to zero
            room = 0.0
        ok = budget <= room + tol
        if not ok:
            details.append(f"{g.name}: reserve {budget:.6g} pu exceeds headroom {room:.6g} pu")
        gt_ok.append(ok)
        gt_budget.append(budget)
        gt_room.append(room)
    return HeadroomReport(ess_ok, ess_budget, ess_headroom, tuple(gt_ok), tuple(gt_budget),
                          tuple(gt_room), details)


def energy_bound(alloc: ReserveAllocation, grid: GridSpec, horizon: HorizonSpec, ess: EssSpec,
                 soc_now: float) -> EnergyDeviationBound:
    """Worst-case ESS energy use for one EMS step and the allowance it must fit in.

    ``hat_delta_e`` uses r_tr on the inertia term; the MILP row (``milp_lhs``)
    uses ``nu = r_ss * S_b / (3600 * E_max)`` on both terms.
    """
    if not 0 <= soc_now <= 1:
        raise ValueError("soc_now must lie in [0, 1]")
    T = horizon.step_seconds
    m_b, d_b = alloc.ess_vinertia, alloc.ess_droop
    hat = m_b * grid.r_tr + d_b * grid.r_ss * T
    allowed = ess.lam * soc_now * ess.e_max * 3600.0 / grid.s_base
    nu = grid.r_ss * grid.s_base / (3600.0 * ess.e_max)
    rhs = min(ess.soc_max - soc_now, soc_now - ess.soc_min, ess.lam * soc_now)
    return EnergyDeviationBound(hat_delta_e=hat, allowed=allowed, nu=nu, milp_rhs=rhs,
                                milp_lhs=nu * (m_b + d_b * T))


def pu_seconds_to_mwh(energy_pu_s: float, s_base: float) -> float:
    return energy_pu_s * s_base / 3600.0


def mwh_to_pu_seconds(energy_mwh: float, s_base: float) -> float:
    return energy_mwh * 3600.0 / s_base
