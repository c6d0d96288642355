"""Per-iteration reconstruction diagnostics shared by all schemes."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class IterationTrace:
    """Columnar record of residuals, errors and bookkeeping per iteration.

    Error columns hold relative L2 errors against the true pair when a truth
    is supplied, NaN otherwise. ``clamped`` counts log-floor activations of
    the fixed-point schemes and stays at zero for Newton.
    """

    iteration: list[int] = field(default_factory=list)
    residual: list[float] = field(default_factory=list)
    q_error: list[float] = field(default_factory=list)
    f_error: list[float] = field(default_factory=list)
    lam: list[float] = field(default_factory=list)
    step_norm: list[float] = field(default_factory=list)
    clamped: list[int] = field(default_factory=list)
    forward_solves: list[int] = field(default_factory=list)
    wall_time: list[float] = field(default_factory=list)

    def append(
        self,
        iteration: int,
        residual: float,
        q_error: float = float("nan"),
        f_error: float = float("nan"),
        lam: float = float("nan"),
        step_norm: float = float("nan"),
        clamped: int = 0,
        forward_solves: int = 0,
        wall_time: float = 0.0,
    ) -> None:
        self.iteration.append(int(iteration))
        self.residual.append(float(residual))
        self.q_error.append(float(q_error))
        self.f_error.append(float(f_error))
        self.lam.append(float(lam))
        self.step_norm.append(float(step_norm))
        self.clamped.append(int(clamped))
        self.forward_solves.append(int(forward_solves))
        self.wall_time.append(float(wall_time))

    def __len__(self) -> int:
        return len(self.iteration)

    def write_csv(self, path: str | Path) -> Path:
        # wall time is kept in memory only; writing it would break the
        # byte-identical rerun guarantee of the result files
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["iteration", "residual", "q_error_L2", "f_error_L2", "lambda",
                 "step_norm", "clamped_nodes", "forward_solves"]
            )
            for k in range(len(self)):
                writer.writerow(
                    [
                        self.iteration[k],
                        _fmt(self.residual[k]),
                        _fmt(self.q_error[k]),
                        _fmt(self.f_error[k]),
                        _fmt(self.lam[k]),
                        _fmt(self.step_norm[k]),
                        self.clamped[k],
                        self.forward_solves[k],
                    ]
                )
        return path


def _fmt(v: float) -> str:
    if np.isnan(v):
        return ""
    return np.format_float_scientific(v, precision=16, trim="-")
