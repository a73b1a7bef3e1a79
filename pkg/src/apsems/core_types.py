"""Equipment, grid and horizon descriptions shared by every module.

Conventions: powers are per unit of ``GridSpec.s_base``; inertia and virtual
inertia are time constants in seconds (so energies come out in pu*s);
frequency is the dimensionless ratio omega / omega_nominal.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

MAX_GENERATORS = 16


class SystemConfigError(ValueError):
    """Raised when a system description violates one or more invariants.

    ``problems`` holds one ``"<field path>: <message>"`` string per violation.
    """

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class GeneratorSpec:
    name: str
    inertia_m: float  # s, on system base
    p_min: float  # pu
    p_max: float  # pu
    p_opt: float  # pu, preferred operating point
    droop_min: float  # pu power / pu frequency
    droop_max: float
    default_droop: float
    fuel_a: float = 0.0  # cost / h while online
    fuel_b: float = 0.0  # cost / (pu h)
    startup_cost: float = 0.0


@dataclass(frozen=True)
class EssSpec:
    p_max: float  # pu
    e_max: float  # MWh
    soc_min: float
    soc_max: float
    eta_ch: float = 0.95
    eta_dis: float = 0.95
    lam: float = 0.03  # allowed SoC-proportional energy deviation
    vinertia_max: float = 10.0  # s
    vdroop_max: float = 50.0  # pu / pu


@dataclass(frozen=True)
class GridSpec:
    s_base: float  # MVA
    f_nom: float  # Hz
    r_ss: float  # pu frequency, steady-state bound
    r_tr: float  # pu frequency, transient bound
    rocof_max: float  # pu / s


@dataclass(frozen=True)
class HorizonSpec:
    step_seconds: float = 900.0
    k_steps: int = 8


@dataclass(frozen=True)
class ConfigTable:
    """All 2**n_g on/off patterns; row j is the binary expansion of j
    with generator 0 as the most significant digit."""

    n_g: int
    rows: np.ndarray = field(repr=False, compare=False)  # determined by n_g

    @property
    def n_configs(self) -> int:
        return self.rows.shape[0]

    def index_of(self, states: Sequence[int]) -> int:
        j = 0
        for s in states:
            j = 2 * j + int(round(s))
        return j


def config_table(n_g: int) -> ConfigTable:
    if isinstance(n_g, bool) or not isinstance(n_g, (int, np.integer)):
        raise SystemConfigError([f"n_g: expected an integer, got {n_g!r}"])
    if not 1 <= n_g <= MAX_GENERATORS:
        raise SystemConfigError([f"n_g: must be in [1, {MAX_GENERATORS}], got {n_g}"])
    j = np.arange(2**n_g, dtype=np.int64)[:, None]
    shifts = np.arange(n_g - 1, -1, -1, dtype=np.int64)[None, :]
    rows = ((j >> shifts) & 1).astype(np.int8)
    rows.setflags(write=False)
    return ConfigTable(n_g=int(n_g), rows=rows)


@dataclass(frozen=True)
class System:
    """Validated, immutable system description."""

    gens: tuple[GeneratorSpec, ...]
    ess: EssSpec
    grid: GridSpec
    horizon: HorizonSpec
    configs: ConfigTable = field(repr=False)

    @property
    def n_g(self) -> int:
        return len(self.gens)

    @property
    def nu(self) -> float:
        """SoC fraction per pu*s of ESS reserve, scaled by r_ss."""
        return self.grid.r_ss * self.grid.s_base / (3600.0 * self.ess.e_max)

    @property
    def soc_per_pu_step(self) -> float:
        """SoC change caused by 1 pu of net charging held for one step."""
        return self.horizon.step_seconds * self.grid.s_base / (3600.0 * self.ess.e_max)


def _finite(path: str, value: Any, problems: list[str]) -> bool:
    try:
        ok = math.isfinite(float(value))
    except (TypeError, ValueError):
        ok = False
    if not ok:
        problems.append(f"{path}: not a finite number ({value!r})")
    return ok


def _check_generator(i: int, g: GeneratorSpec, problems: list[str]) -> None:
    p = f"generators[{i}]"
    numeric = ("inertia_m", "p_min", "p_max", "p_opt", "droop_min", "droop_max",
               "default_droop", "fuel_a", "fuel_b", "startup_cost")
    if not all(_finite(f"{p}.{name}", getattr(g, name), problems) for name in numeric):
        return
    if not (0 <= g.p_min < g.p_opt <= g.p_max):
        problems.append(f"{p}: 0 ≤ p_min < p_opt ≤ p_max violated "
                        f"(p_min={g.p_min}, p_opt={g.p_opt}, p_max={g.p_max})")
    if not (0 <= g.droop_min <= g.default_droop <= g.droop_max):
        problems.append(f"{p}: 0 ≤ droop_min ≤ default_droop ≤ droop_max violated")
    if g.inertia_m <= 0:
        problems.append(f"{p}.inertia_m: must be > 0")
    for name in ("fuel_a", "fuel_b", "startup_cost"):
        if getattr(g, name) < 0:
            problems.append(f"{p}.{name}: must be ≥ 0")


def _check_ess(e: EssSpec, problems: list[str]) -> None:
    numeric = ("p_max", "e_max", "soc_min", "soc_max", "eta_ch", "eta_dis", "lam",
               "vinertia_max", "vdroop_max")
    if not all(_finite(f"ess.{name}", getattr(e, name), problems) for name in numeric):
        return
    if not (0 <= e.soc_min < e.soc_max <= 1):
        problems.append(f"ess: 0 ≤ soc_min < soc_max ≤ 1 violated "
                        f"(soc_min={e.soc_min}, soc_max={e.soc_max})")
    if not (0 < e.lam < 1):
        problems.append("ess.lambda: must lie in (0, 1)")
    if e.p_max <= 0:
        problems.append("ess.p_max: must be > 0")
    if e.e_max <= 0:
        problems.append("ess.e_max: must be > 0")
    for name in ("eta_ch", "eta_dis"):
        if not (0 < getattr(e, name) <= 1):
            problems.append(f"ess.{name}: must lie in (0, 1]")
    for name in ("vinertia_max", "vdroop_max"):
        if getattr(e, name) < 0:
            problems.append(f"ess.{name}: must be ≥ 0")


def _check_grid(g: GridSpec, problems: list[str]) -> None:
    numeric = ("s_base", "f_nom", "r_ss", "r_tr", "rocof_max")
    if not all(_finite(f"grid.{name}", getattr(g, name), problems) for name in numeric):
        return
    if not (0 < g.r_ss):
        problems.append("grid.r_ss: must be > 0")
    if not (g.r_ss <= g.r_tr):
        problems.append("grid: r_ss ≤ r_tr violated")
    if not (g.r_tr < 1):
        problems.append("grid.r_tr: must be < 1")
    if g.rocof_max <= 0:
        problems.append("grid.rocof_max: must be > 0")
    if g.s_base <= 0:
        problems.append("grid.s_base: must be > 0")
    if g.f_nom <= 0:
        problems.append("grid.f_nom: must be > 0")


def _check_horizon(h: HorizonSpec, problems: list[str]) -> None:
    if _finite("horizon.step_seconds", h.step_seconds, problems) and h.step_seconds <= 0:
        problems.append("horizon.step_seconds: must be > 0")
    if isinstance(h.k_steps, bool) or not isinstance(h.k_steps, (int, np.integer)):
        problems.append(f"horizon.k_steps: expected an integer, got {h.k_steps!r}")
    elif h.k_steps < 1:
        problems.append("horizon.k_steps: must be ≥ 1")


def validate_system(gens: Sequence[GeneratorSpec], ess: EssSpec, grid: GridSpec,
                    horizon: HorizonSpec) -> System:
    """Check every invariant and return an immutable :class:`System`.

    All violations are collected before raising so a bad configuration file
    can be fixed in one pass.
    """
    problems: list[str] = []
    gens = tuple(gens)
    if not 1 <= len(gens) <= MAX_GENERATORS:
        problems.append(f"generators: need between 1 and {MAX_GENERATORS} units, got {len(gens)}")
    names = [g.name for g in gens]
    if len(set(names)) != len(names):
        problems.append("generators: names must be unique")
    for i, g in enumerate(gens):
        _check_generator(i, g, problems)
    _check_ess(ess, problems)
    _check_grid(grid, problems)
    _check_horizon(horizon, problems)
    if problems:
        raise SystemConfigError(problems)
    return System(gens=gens, ess=ess, grid=grid, horizon=horizon,
                  configs=config_table(len(gens)))


_GEN_KEYS = {f for f in GeneratorSpec.__dataclass_fields__}
_ESS_KEYS = {f for f in EssSpec.__dataclass_fields__} - {"lam"} | {"lambda"}
_GRID_KEYS = {f for f in GridSpec.__dataclass_fields__}
_HORIZON_KEYS = {f for f in HorizonSpec.__dataclass_fields__}


def _build(cls, data: Any, path: str, allowed: set[str], problems: list[str],
           rename: Mapping[str, str] | None = None):
    if not isinstance(data, Mapping):
        problems.append(f"{path}: expected an object")
        return None
    unknown = sorted(set(data) - allowed)
    if unknown:
        problems.append(f"{path}: unknown keys {unknown}")
    kwargs = {(rename or {}).get(k, k): v for k, v in data.items() if k in allowed}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        problems.append(f"{path}: {exc}")
        return None


def system_from_dict(data: Mapping[str, Any]) -> System:
    """Build a validated system from the JSON document layout."""
    problems: list[str] = []
    for key in ("generators", "ess", "grid", "horizon"):
        if key not in data:
            problems.append(f"{key}: missing")
    if problems:
        raise SystemConfigError(problems)
    raw_gens = data["generators"]
    if not isinstance(raw_gens, list):
        raise SystemConfigError(["generators: expected a list"])
    gens = [_build(GeneratorSpec, g, f"generators[{i}]", _GEN_KEYS, problems)
            for i, g in enumerate(raw_gens)]
    ess = _build(EssSpec, data["ess"], "ess", _ESS_KEYS, problems, {"lambda": "lam"})
    grid = _build(GridSpec, data["grid"], "grid", _GRID_KEYS, problems)
    horizon = _build(HorizonSpec, data["horizon"], "horizon", _HORIZON_KEYS, problems)
    if problems:
        raise SystemConfigError(problems)
    return validate_system(gens, ess, grid, horizon)


def system_to_dict(system: System) -> dict[str, Any]:
    def ess_dict(e: EssSpec) -> dict[str, Any]:
        d = dict(e.__dict__)
        d["lambda"] = d.pop("lam")
        return d

    return {
        "generators": [dict(g.__dict__) for g in system.gens],
        "ess": ess_dict(system.ess),
        "grid": dict(system.grid.__dict__),
        "horizon": dict(system.horizon.__dict__),
    }


def load_system(path: str | Path) -> System:
    """Read a JSON system file (keys ``generators``, ``ess``, ``grid``, ``horizon``)."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            problem = f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}"
            raise SystemConfigError([problem]) from exc
    return system_from_dict(data)
