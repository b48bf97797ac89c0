"""Round-batch scaling law N(B) = ceil(alpha / (eps - beta / B)) and its fit."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from ._util import ceil_tol
from .errors import DomainError, InfeasibleBatchError, UnderdeterminedError

# how far inside the feasibility boundary beta is pushed when clamped
FEASIBILITY_MARGIN = 1e-6
# absolute tolerance on beta, relative to its feasible range
REFINE_XTOL = 1e-12


@dataclass(frozen=True)
class ScalingLaw:
    alpha: float
    beta: float
    epsilon: float
    constrained: bool = False  # fit hit a constraint boundary

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be > 0, got {self.alpha!r}")
        if not self.beta >= 0:
            raise DomainError(f"beta must be >= 0, got {self.beta!r}")
        if not self.epsilon > 0:
            raise DomainError(f"epsilon must be > 0, got {self.epsilon!r}")

    def rounds_real(self, B):
        """Un-ceiled rounds; works on scalars and arrays, no feasibility check."""
        return self.alpha / (self.epsilon - self.beta / np.asarray(B, dtype=float))

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ScalingLaw":
        return cls(alpha=float(d["alpha"]), beta=float(d["beta"]),
                   epsilon=float(d["epsilon"]), constrained=bool(d.get("constrained", False)))


@dataclass(frozen=True)
class ConvergenceSample:
    global_batch: int
    rounds: float
    flagged: bool = False  # some trial did not converge; excluded from fits

    def __post_init__(self):
        if self.global_batch < 1:
            raise DomainError(f"global_batch must be >= 1, got {self.global_batch!r}")
        if not self.rounds > 0:
            raise DomainError(f"rounds must be > 0, got {self.rounds!r}")


def feasible_batch_floor(law: ScalingLaw) -> float:
    return law.beta / law.epsilon


def predict_rounds(law: ScalingLaw, B: float) -> int:
    if not B > feasible_batch_floor(law):
        raise InfeasibleBatchError(
            f"global batch {B} must exceed beta/epsilon = {feasible_batch_floor(law):.6g}")
    return ceil_tol(law.alpha / (law.epsilon - law.beta / B))


def _ssr(alpha, beta, eps, B, N):
    return float(np.sum((N - alpha / (eps - beta / B)) ** 2))


def _best_alpha(beta, eps, B, N):
    # SSR is quadratic in alpha for fixed beta
    g = 1.0 / (eps - beta / B)
    return float(np.dot(g, N) / np.dot(g, g))


def _linearized_fit(B, N, eps, beta_hi):
    """OLS of 1/N on 1/B, then projected onto 0 <= beta < beta_hi."""
    x = 1.0 / B
    y = 1.0 / N
    slope, intercept = np.polyfit(x, y, 1)
    constrained = False
    if intercept > 0:
        alpha = eps / intercept
        beta = -slope * alpha
    else:
        alpha, beta = math.nan, math.nan
    if not (math.isfinite(beta) and beta >= 0):
        beta, constrained = 0.0, True
    elif beta >= beta_hi:
        beta, constrained = beta_hi, True
    if constrained or not (math.isfinite(alpha) and alpha > 0):
        alpha = _best_alpha(beta, eps, B, N)
    return alpha, beta, constrained


def fit_scaling_law(samples: Sequence[ConvergenceSample], epsilon: float) -> ScalingLaw:
    """Least-squares fit of (alpha, beta) in rounds space.

    Flagged samples are ignored. The result carries ``constrained=True`` when
    beta was clamped to 0 or to the feasibility boundary.
    """
    if not epsilon > 0:
        raise DomainError(f"epsilon must be > 0, got {epsilon!r}")
    usable = [s for s in samples if not s.flagged]
    B = np.array([s.global_batch for s in usable], dtype=float)
    N = np.array([s.rounds for s in usable], dtype=float)
    if np.unique(B).size < 2:
        raise UnderdeterminedError("need samples at >= 2 distinct global batch sizes")

    if np.ptp(N) == 0.0:
        # constant rounds pin the law to beta = 0 exactly
        return ScalingLaw(float(epsilon * N[0]), 0.0, epsilon, True)
    # eps > beta / B_m for every sample
    beta_hi = epsilon * B.min() * (1.0 - FEASIBILITY_MARGIN)
    alpha0, beta0, constrained = _linearized_fit(B, N, epsilon, beta_hi)
    ssr0 = _ssr(alpha0, beta0, epsilon, B, N)
    if ssr0 == 0.0:
        return ScalingLaw(float(alpha0), float(beta0), epsilon, bool(constrained))

    # SSR is quadratic in alpha for fixed beta, so refine the 1-D profile
    def profile(beta):
        return _ssr(_best_alpha(beta, epsilon, B, N), beta, epsilon, B, N)

    res = minimize_scalar(profile, bounds=(0.0, beta_hi), method="bounded",
                          options={"xatol": REFINE_XTOL * beta_hi})
    candidates = [(ssr0, alpha0, beta0)]
    for beta in (float(res.x), 0.0, beta_hi):
        candidates.append((profile(beta), _best_alpha(beta, epsilon, B, N), beta))
    # strict improvement only, so an exact linearization is kept as is
    best = min(candidates, key=lambda c: c[0])
    _, alpha, beta = best if best[0] < ssr0 else candidates[0]
    at_edge = beta <= 0.0 or beta >= beta_hi
    return ScalingLaw(float(alpha), float(beta), epsilon, bool(at_edge))


def ssr(law: ScalingLaw, samples: Iterable[ConvergenceSample]) -> float:
    B = np.array([s.global_batch for s in samples], dtype=float)
    N = np.array([s.rounds for s in samples], dtype=float)
    return _ssr(law.alpha, law.beta, law.epsilon, B, N)


def goodness_of_fit(law: ScalingLaw, samples: Sequence[ConvergenceSample]) -> float:
    """Coefficient of determination of un-ceiled predictions.

    Returns NaN when the observations have zero variance (R^2 undefined).
    """
    if len(samples) < 2:
        raise UnderdeterminedError("R^2 needs >= 2 samples")
    B = np.array([s.global_batch for s in samples], dtype=float)
    N = np.array([s.rounds for s in samples], dtype=float)
    resid = float(np.sum((N - law.rounds_real(B)) ** 2))
    total = float(np.sum((N - N.mean()) ** 2))
    if total == 0.0:
        return math.nan
    return 1.0 - resid / total


def read_samples_csv(path) -> list[ConvergenceSample]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"global_batch", "rounds"} <= set(reader.fieldnames):
            raise DomainError(f"{path}: expected header global_batch,rounds")
        return [ConvergenceSample(int(row["global_batch"]), float(row["rounds"]))
                for row in reader]


def write_samples_csv(path, samples: Iterable[ConvergenceSample]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["global_batch", "rounds"])
        for s in samples:
            w.writerow([s.global_batch, repr(float(s.rounds))])


def load_law(path) -> ScalingLaw:
    return ScalingLaw.from_dict(json.loads(Path(path).read_text()))
