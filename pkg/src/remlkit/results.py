"""Result containers indexed by theta = (sigma2, kappa_1..kappa_q)."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Theta


@dataclass(frozen=True, eq=False)
class ScoreVec:
    s_sigma2: float
    s_kappa: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([[self.s_sigma2], np.asarray(self.s_kappa, dtype=float)])

    def norm(self) -> float:
        """Max-norm."""
        return float(np.max(np.abs(self.vector())))


@dataclass(frozen=True, eq=False)
class InfoMatrix:
    """Symmetric (1+q) x (1+q) information matrix; row/column 0 is sigma2.

    ``kind`` is one of observed, fisher, average or remainder.
    """

    kind: str
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("information matrix must be square")
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, idx):
        return self.values[idx]


@dataclass
class FitResult:
    theta_hat: Theta
    loglik: float
    iterations: int
    converged: bool
    score_norm: float
    method: str
    trace: list = field(default_factory=list)
    se: np.ndarray | None = None
    at_boundary: tuple = ()
    info: InfoMatrix | None = None
    score: ScoreVec | None = None
    message: str = ""

    def report(self, names=()) -> dict:
        """Flat key -> value summary of the fit."""
        th = self.theta_hat
        out = {"converged": self.converged, "iterations": self.iterations,
               "method": self.method, "loglik": self.loglik,
               "score_norm": self.score_norm, "sigma2": th.sigma2}
        se = self.se if self.se is not None else np.full(1 + th.q, np.nan)
        out["se_sigma2"] = se[0]
        for k in range(th.q):
            name = names[k] if k < len(names) else f"k{k + 1}"
            out[f"kappa[{name}]"] = th.kappa[k]
            out[f"se_kappa[{name}]"] = se[k + 1]
            out[f"var[{name}]"] = th.kappa[k] * th.sigma2
        if self.at_boundary:
            out["at_boundary"] = ",".join(str(names[k] if k < len(names) else k)
                                          for k in self.at_boundary)
        if self.message:
            out["message"] = self.message
        return out
