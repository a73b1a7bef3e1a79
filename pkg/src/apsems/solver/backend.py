"""Backend selection for callers that do not care which MILP solver runs."""

from __future__ import annotations

import math

from .bnb import MipResult, solve_mip
from .highs import solve_mip_highs

BACKENDS = ("highs", "native")


def solve_model(model, backend: str = "highs", max_seconds: float = math.inf,
                max_nodes: int = 100_000, threads: int | None = None) -> MipResult:
    if backend == "native":
        return solve_mip(model, max_nodes=max_nodes, max_seconds=max_seconds)
    if backend == "highs":
        return solve_mip_highs(model, max_seconds=max_seconds, threads=threads)
    raise ValueError(f"unknown solver backend {backend!r}; expected one of {BACKENDS}")
