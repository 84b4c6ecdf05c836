"""Estimation reports shared by the PD estimator and the baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

METHODS = ("PD", "OLS", "C3", "C4")


@dataclass(frozen=True)
class EstimateReport:
    method: str
    b_hat: tuple
    objective_at_opt: float = math.nan
    n_evals: int = 0
    converged: bool = True
    start_used: Optional[tuple] = None
    flat_objective: bool = False
    diagnostics: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        object.__setattr__(self, "b_hat", tuple(float(v) for v in self.b_hat))
        if self.start_used is not None:
            object.__setattr__(self, "start_used", tuple(float(v) for v in self.start_used))

    @property
    def K(self) -> int:
        return len(self.b_hat)

    @staticmethod
    def csv_header(K: int) -> list:
        return ["method"] + [f"b{k + 1}" for k in range(K)] + [
            "objective",
            "converged",
            "flat_objective",
            "weak_instruments",
            "n_evals",
        ]

    def csv_row(self) -> list:
        weak = self.diagnostics.get("weak_instruments", "")
        return (
            [self.method]
            + [repr(v) for v in self.b_hat]
            + [repr(float(self.objective_at_opt)), int(self.converged), int(self.flat_objective), "" if weak == "" else int(weak), self.n_evals]
        )

    def to_text(self) -> str:
        """Verbose ``key = value`` block."""
        lines = [f"method = {self.method}"]
        lines += [f"b{k + 1} = {v!r}" for k, v in enumerate(self.b_hat)]
        lines.append(f"objective_at_opt = {self.objective_at_opt!r}")
        lines.append(f"n_evals = {self.n_evals}")
        lines.append(f"converged = {str(self.converged).lower()}")
        if self.start_used is not None:
            lines.append("start_used = " + ",".join(repr(v) for v in self.start_used))
        lines.append(f"flat_objective = {str(self.flat_objective).lower()}")
        for key in sorted(self.diagnostics):
            val = self.diagnostics[key]
            if isinstance(val, bool):
                val = str(val).lower()
            elif isinstance(val, (tuple, list)):
                val = ",".join(repr(v) for v in val)
            lines.append(f"{key} = {val}")
        return "\n".join(lines) + "\n"
