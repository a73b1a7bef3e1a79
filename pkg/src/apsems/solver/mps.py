"""Free-form MPS export and import.

Layout written by :func:`write_mps`::

    NAME <model>
    ROWS / COLUMNS (with INTORG/INTEND markers) / RHS / BOUNDS / SOS / ENDATA

Numbers are written with ``repr`` so every float survives a round trip
exactly and write -> read -> write is byte-identical. The objective constant
is stored as the negated RHS entry of the objective row.
"""

from __future__ import annotations

import math
from pathlib import Path

from ..milp.model import Constraint, MilpModel, Variable

OBJ_ROW = "OBJ"
_SECTIONS = ("NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "SOS", "ENDATA")


class MpsParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _num(v: float) -> str:
    return repr(float(v))


def mps_string(model: MilpModel) -> str:
    out = [f"NAME {model.name or 'model'}", "ROWS", f" N {OBJ_ROW}"]
    for c in model.constraints:
        out.append(f" {c.sense} {c.name}")
    by_col: list[list[tuple[int, float]]] = [[] for _ in model.variables]
    for i, c in enumerate(model.constraints):
        for j, a in c.coefs:
            by_col[j].append((i, a))
    obj = dict(model.objective)
    out.append("COLUMNS")
    in_int = False
    for j, v in enumerate(model.variables):
        if v.binary and not in_int:
            out.append(" MARKER 'MARKER' 'INTORG'")
            in_int = True
        elif not v.binary and in_int:
            out.append(" MARKER 'MARKER' 'INTEND'")
            in_int = False
        entries = []
        if obj.get(j, 0.0) != 0.0:
            entries.append(f" {v.name} {OBJ_ROW} {_num(obj[j])}")
        for i, a in sorted(by_col[j]):
            entries.append(f" {v.name} {model.constraints[i].name} {_num(a)}")
        if not entries:
            entries.append(f" {v.name} {OBJ_ROW} {_num(0.0)}")
        out.extend(entries)
    if in_int:
        out.append(" MARKER 'MARKER' 'INTEND'")
    out.append("RHS")
    if model.obj_constant != 0.0:
        out.append(f" RHS {OBJ_ROW} {_num(-model.obj_constant)}")
    for c in model.constraints:
        if c.rhs != 0.0:
            out.append(f" RHS {c.name} {_num(c.rhs)}")
    out.append("BOUNDS")
    for v in model.variables:
        lo, hi = v.lb, v.ub
        if v.binary:
            if lo == 0.0 and hi == 1.0:
                out.append(f" BV BND {v.name}")
            else:
                out.append(f" FX BND {v.name} {_num(lo)}")
            continue
        if lo == hi:
            out.append(f" FX BND {v.name} {_num(lo)}")
            continue
        if lo == -math.inf and hi == math.inf:
            out.append(f" FR BND {v.name}")
            continue
        if lo == -math.inf:
            out.append(f" MI BND {v.name}")
        elif lo != 0.0:
            out.append(f" LO BND {v.name} {_num(lo)}")
        if hi != math.inf:
            out.append(f" UP BND {v.name} {_num(hi)}")
    if model.sos1_sets:
        out.append("SOS")
        for g, members in enumerate(model.sos1_sets):
            out.append(f" S1 SOS sos{g} 1")
            for w, j in enumerate(members, start=1):
                out.append(f" {model.variables[j].name} {w}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def write_mps(model: MilpModel, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(mps_string(model))


def _float(tok: str, line: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise MpsParseError(f"expected a number, got {tok!r}", line) from None


def parse_mps(text: str) -> MilpModel:
    name = "model"
    section = None
    rows: dict[str, int] = {}
    row_names: list[str] = []
    senses: list[str] = []
    obj_row = None
    col_index: dict[str, int] = {}
    col_names: list[str] = []
    col_binary: list[bool] = []
    coefs: list[dict[int, float]] = []
    obj: dict[int, float] = {}
    rhs: dict[int, float] = {}
    obj_constant = 0.0
    lbs: dict[int, float] = {}
    ubs: dict[int, float] = {}
    bv: set[int] = set()
    sos: list[list[int]] = []
    integer = False
    ended = False

    def col(nm: str, line: int, create: bool) -> int:
        if nm not in col_index:
            if not create:
                raise MpsParseError(f"unknown column {nm!r}", line)
            col_index[nm] = len(col_names)
            col_names.append(nm)
            col_binary.append(integer)
        return col_index[nm]

    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("*"):
            continue
        toks = raw.split()
        if not raw[0].isspace():
            key = toks[0].upper()
            if key not in _SECTIONS:
                raise MpsParseError(f"unknown section {toks[0]!r}", lineno)
            if ended:
                raise MpsParseError("content after ENDATA", lineno)
            section = key
            if key == "NAME":
                name = toks[1] if len(toks) > 1 else ""
            elif key == "ENDATA":
                ended = True
            elif len(toks) > 1:
                raise MpsParseError(f"unexpected tokens after {key}", lineno)
            continue
        if section is None or section in ("NAME", "ENDATA"):
            raise MpsParseError("data line outside a section", lineno)
        if section == "ROWS":
            if len(toks) != 2:
                raise MpsParseError("ROWS entries need a type and a name", lineno)
            kind, rn = toks[0].upper(), toks[1]
            if kind == "N":
                if obj_row is not None:
                    raise MpsParseError("only one objective row is supported", lineno)
                obj_row = rn
            elif kind in ("L", "E", "G"):
                if rn in rows or rn == obj_row:
                    raise MpsParseError(f"duplicate row {rn!r}", lineno)
                rows[rn] = len(row_names)
                row_names.append(rn)
                senses.append(kind)
                coefs.append({})
            else:
                raise MpsParseError(f"unknown row type {toks[0]!r}", lineno)
        elif section == "COLUMNS":
            if len(toks) >= 3 and toks[1].strip("'").upper() == "MARKER":
                flag = toks[2].strip("'").upper()
                if flag == "INTORG":
                    integer = True
                elif flag == "INTEND":
                    integer = False
                else:
                    raise MpsParseError(f"unknown marker {toks[2]!r}", lineno)
                continue
            if len(toks) not in (3, 5):
                raise MpsParseError("COLUMNS entries need 3 or 5 fields", lineno)
            j = col(toks[0], lineno, True)
            for rn, val in zip(toks[1::2], toks[2::2]):
                a = _float(val, lineno)
                if rn == obj_row:
                    if a != 0.0:
                        obj[j] = a
                elif rn in rows:
                    coefs[rows[rn]][j] = a
                else:
                    raise MpsParseError(f"unknown row {rn!r}", lineno)
        elif section == "RHS":
            if len(toks) not in (3, 5):
                raise MpsParseError("RHS entries need 3 or 5 fields", lineno)
            for rn, val in zip(toks[1::2], toks[2::2]):
                a = _float(val, lineno)
                if rn == obj_row:
                    obj_constant = -a
                elif rn in rows:
                    rhs[rows[rn]] = a
                else:
                    raise MpsParseError(f"unknown row {rn!r}", lineno)
        elif section == "BOUNDS":
            if len(toks) < 3:
                raise MpsParseError("BOUNDS entries need at least 3 fields", lineno)
            kind = toks[0].upper()
            j = col(toks[2], lineno, False)
            needs_value = kind in ("UP", "LO", "FX")
            if needs_value and len(toks) != 4:
                raise MpsParseError(f"{kind} bound needs a value", lineno)
            if kind == "UP":
                ubs[j] = _float(toks[3], lineno)
            elif kind == "LO":
                lbs[j] = _float(toks[3], lineno)
            elif kind == "FX":
                lbs[j] = ubs[j] = _float(toks[3], lineno)
            elif kind == "FR":
                lbs[j], ubs[j] = -math.inf, math.inf
            elif kind == "MI":
                lbs[j] = -math.inf
            elif kind == "PL":
                ubs[j] = math.inf
            elif kind == "BV":
                bv.add(j)
                lbs[j], ubs[j] = 0.0, 1.0
            else:
                raise MpsParseError(f"unknown bound type {toks[0]!r}", lineno)
        elif section == "SOS":
            if toks[0].upper() in ("S1", "S2"):
                if toks[0].upper() != "S1":
                    raise MpsParseError("only SOS type 1 is supported", lineno)
                sos.append([])
            else:
                if not sos:
                    raise MpsParseError("SOS member before a set header", lineno)
                if len(toks) != 2:
                    raise MpsParseError("SOS members need a column and a weight", lineno)
                sos[-1].append(col(toks[0], lineno, False))
    if not ended:
        raise MpsParseError("missing ENDATA")
    if obj_row is None:
        raise MpsParseError("no objective row")
    variables = []
    for j, nm in enumerate(col_names):
        binary = col_binary[j] or j in bv
        lo = lbs.get(j, 0.0)
        hi = ubs.get(j, 1.0 if binary else math.inf)
        variables.append(Variable(nm, lo, hi, binary))
    constraints = tuple(
        Constraint(rn, tuple(sorted(coefs[i].items())), senses[i], rhs.get(i, 0.0))
        for i, rn in enumerate(row_names))
    return MilpModel(name, tuple(variables), constraints, tuple(sorted(obj.items())),
                     tuple(tuple(s) for s in sos), obj_constant,
                     {"_name_index": dict(col_index)})


def read_mps(path: str | Path) -> MilpModel:
    with open(path, encoding="utf-8") as fh:
        return parse_mps(fh.read())
