"""Optimal global batch size and per-device split for fixed uplink latencies.

The min-max round latency for a global batch B is piecewise: flat at the
single-sample straggler time tau_1b up to the threshold B_th, then linear,
with every device finishing at the same instant. Combining it with the
scaling law gives a unimodal end-to-end surrogate whose stationary point has
a closed form.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from ._util import ceil_tol
from .errors import DomainError, InfeasibleBatchError, InstanceTooLargeError, RegimeError
from .scaling import ScalingLaw, feasible_batch_floor, predict_rounds
from .system import DeviceProfile, SystemParams

ROUNDING_MODES = ("conserve", "paper")

# enumeration bounds for the brute-force oracle
BRUTE_MAX_DEVICES = 4
BRUTE_MAX_BATCH = 60


@dataclass(frozen=True)
class StaticSystem:
    params: SystemParams
    profiles: tuple[DeviceProfile, ...]
    comm_latency: np.ndarray  # T_k^cmm, seconds

    def __post_init__(self):
        T = np.asarray(self.comm_latency, dtype=float)
        if T.ndim != 1 or T.size == 0 or T.size != len(self.profiles):
            raise DomainError("need one communication latency per device (>= 1 device)")
        if np.any(~(T >= 0)):
            raise DomainError("communication latencies must be >= 0")
        object.__setattr__(self, "comm_latency", T)
        object.__setattr__(self, "profiles", tuple(self.profiles))

    @classmethod
    def from_arrays(cls, compute_speed, comm_latency, work_per_sample=1.0):
        """Bare instance with H=1 and W=work_per_sample; radio fields are dummies."""
        params = SystemParams(bandwidth_per_device=1.0, noise_density=1.0, bits_per_param=1,
                              model_dim=1, flops_per_sample=float(work_per_sample),
                              local_steps=1, learning_rate=1.0)
        profiles = [DeviceProfile(i, float(f), 1.0, 1.0) for i, f in enumerate(compute_speed)]
        return cls(params, tuple(profiles), np.asarray(comm_latency, dtype=float))

    @property
    def K(self) -> int:
        return len(self.profiles)

    @property
    def hw(self) -> float:
        return self.params.work_per_sample

    @property
    def speeds(self) -> np.ndarray:
        return np.array([p.compute_speed for p in self.profiles], dtype=float)

    @property
    def quantum(self) -> np.ndarray:
        """Per-sample compute time HW/f_k of each device."""
        return self.hw / self.speeds

    @property
    def f_sum(self) -> float:
        return float(np.sum(self.speeds))

    @property
    def coupling(self) -> float:
        """Speed-weighted communication latency sum_k f_k T_k."""
        return float(np.dot(self.speeds, self.comm_latency))

    def device_latencies(self, batches) -> np.ndarray:
        return self.comm_latency + np.asarray(batches, dtype=float) * self.quantum

    def round_latency(self, batches) -> float:
        return float(np.max(self.device_latencies(batches)))


@dataclass(frozen=True)
class StaticAllocation:
    global_batch: int
    per_device: np.ndarray
    round_latency: float
    capped: bool = False
    rounds: int | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "B_star": int(self.global_batch),
            "b_k": [int(b) for b in self.per_device],
            "tau_round": float(self.round_latency),
            "N_rounds": None if self.rounds is None else int(self.rounds),
            "e2e_seconds": None if self.rounds is None else float(self.rounds * self.round_latency),
            "capped": bool(self.capped),
        }
        d.update(self.extra)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def tau_single_batch(sys: StaticSystem) -> float:
    return float(np.max(sys.comm_latency + sys.quantum))


def _threshold_terms(sys: StaticSystem) -> np.ndarray:
    return (sys.speeds / sys.hw) * (tau_single_batch(sys) - sys.comm_latency)


def batch_threshold(sys: StaticSystem) -> int:
    return int(sum(ceil_tol(x) for x in _threshold_terms(sys)))


def relaxed_threshold(sys: StaticSystem) -> float:
    """Un-ceiled threshold; where the surrogate switches branch."""
    return float(np.sum(_threshold_terms(sys)))


def _check_min_batch(sys: StaticSystem, B) -> None:
    if B < sys.K:
        raise InfeasibleBatchError(f"global batch {B} < number of devices {sys.K}")


def tau_min(sys: StaticSystem, B: float) -> float:
    _check_min_batch(sys, B)
    if B > batch_threshold(sys):
        return (sys.hw * B + sys.coupling) / sys.f_sum
    return tau_single_batch(sys)


def equilibrium_allocation(sys: StaticSystem, B: float) -> np.ndarray:
    """Real-valued split that makes every device finish at tau_min(B)."""
    if not B > batch_threshold(sys):
        raise RegimeError(
            f"B={B} <= B_th={batch_threshold(sys)}; use sub_threshold_allocation")
    tau = (sys.hw * B + sys.coupling) / sys.f_sum
    return (sys.speeds / sys.hw) * (tau - sys.comm_latency)


def sub_threshold_allocation(sys: StaticSystem, B: int) -> StaticAllocation:
    """Integer split for K <= B <= B_th that keeps the round at tau_1b.

    Each device starts with one sample; the rest go out one by one to the
    device with most slack below tau_1b. When B exceeds what fits under
    tau_1b (possible only in the last ceiling step below B_th) the overflow
    goes where it raises the latency least.
    """
    _check_min_batch(sys, B)
    if B > batch_threshold(sys):
        raise RegimeError(f"B={B} > B_th={batch_threshold(sys)}; use equilibrium_allocation")
    counts = kernels.greedy_fill(sys.comm_latency, sys.quantum, np.ones(sys.K, dtype=np.int64),
                                 int(B) - sys.K, tau_single_batch(sys))
    return StaticAllocation(int(B), counts, sys.round_latency(counts))


def integerize_allocation(real_batches: Sequence[float], B: int | None = None,
                          mode: str = "conserve") -> np.ndarray:
    """Round a real split to positive integers.

    ``conserve``: largest remainder, sum preserved, equal remainders favour the
    lower index. ``paper``: independent nearest-integer rounding (halves go
    up), sum may drift. Both clamp at 1; under ``conserve`` any surplus from
    clamping is taken back from the largest entries.
    """
    x = np.asarray(real_batches, dtype=float)
    if mode not in ROUNDING_MODES:
        raise DomainError(f"unknown rounding mode {mode!r}; expected one of {ROUNDING_MODES}")
    if mode == "paper":
        return np.maximum(np.floor(x + 0.5).astype(np.int64), 1)
    if B is None:
        B = int(round(float(np.sum(x))))
    base = np.floor(x).astype(np.int64)
    rem = x - base
    short = int(B - base.sum())
    if short > 0:
        # stable sort on -rem keeps lower indices first among equal remainders
        order = np.argsort(-rem, kind="stable")
        base[order[:short]] += 1
    elif short < 0:
        order = np.argsort(rem, kind="stable")
        base[order[:-short]] -= 1
    out = np.maximum(base, 1)
    surplus = int(out.sum() - B)
    while surplus > 0:
        k = int(np.argmax(out))  # first index among ties
        if out[k] <= 1:
            break
        out[k] -= 1
        surplus -= 1
    return out


def allocate(sys: StaticSystem, B: int, mode: str = "conserve") -> StaticAllocation:
    """Best integer split for a given B, dispatching on the latency regime."""
    if B > batch_threshold(sys):
        b = integerize_allocation(equilibrium_allocation(sys, B), B, mode)
        return StaticAllocation(int(B), b, sys.round_latency(b))
    return sub_threshold_allocation(sys, B)


def surrogate_e2e(sys: StaticSystem, law: ScalingLaw, B: float) -> float:
    if not B > feasible_batch_floor(law):
        raise InfeasibleBatchError(
            f"B={B} must exceed beta/epsilon = {feasible_batch_floor(law):.6g}")
    denom = law.epsilon * B - law.beta
    if B > relaxed_threshold(sys):
        return law.alpha * B * (sys.hw * B + sys.coupling) / (sys.f_sum * denom)
    return law.alpha * B * tau_single_batch(sys) / denom


def exact_e2e(sys: StaticSystem, law: ScalingLaw, B: int) -> float:
    return predict_rounds(law, B) * tau_min(sys, B)


def stationary_batch(sys: StaticSystem, law: ScalingLaw) -> float:
    """Real minimiser of the linear-branch surrogate (0 when beta == 0)."""
    if law.beta == 0:
        return 0.0
    r = law.beta / law.epsilon
    return r * (1.0 + math.sqrt(1.0 + sys.coupling * law.epsilon / (sys.hw * law.beta)))


def default_batch_cap(sys: StaticSystem, law: ScalingLaw) -> int:
    return max(10 * math.ceil(stationary_batch(sys, law)), batch_threshold(sys), sys.K)


def _surrogate_round(sys, law, x):
    lo, hi = math.floor(x), math.ceil(x)
    floor_ok = lo > feasible_batch_floor(law) and lo >= 1
    if not floor_ok:
        return hi
    if lo == hi:
        return lo
    return lo if surrogate_e2e(sys, law, lo) <= surrogate_e2e(sys, law, hi) else hi


def optimal_global_batch(sys: StaticSystem, law: ScalingLaw, B_max: int | None = None,
                         mode: str = "conserve") -> StaticAllocation:
    """Closed-form optimum: B* = max(B_th, surrogate-rounded stationary point)."""
    floor = feasible_batch_floor(law)
    if B_max is None:
        B_max = default_batch_cap(sys, law)
    if not B_max > floor or B_max < sys.K:
        raise InfeasibleBatchError(
            f"B_max={B_max} must exceed beta/epsilon={floor:.6g} and be >= K={sys.K}")
    b_eps = stationary_batch(sys, law)
    b_th = batch_threshold(sys)
    if b_eps > floor:
        candidate = _surrogate_round(sys, law, b_eps)
    else:
        candidate = math.floor(floor) + 1
    B_star = max(b_th, candidate)
    capped = B_star > B_max
    if capped:
        B_star = int(B_max)
    if not B_star > floor:
        raise InfeasibleBatchError(f"no feasible batch: B*={B_star} <= beta/epsilon={floor:.6g}")
    alloc = allocate(sys, B_star, mode)
    return StaticAllocation(
        alloc.global_batch, alloc.per_device, alloc.round_latency, capped=capped,
        rounds=predict_rounds(law, B_star),
        extra={"B_eps": b_eps, "B_th": b_th, "B_max": int(B_max)},
    )


def brute_force_allocation(sys: StaticSystem, B: int) -> StaticAllocation:
    """Exhaustive min-max over all integer compositions of B (small instances)."""
    _check_min_batch(sys, B)
    if sys.K > BRUTE_MAX_DEVICES or B > BRUTE_MAX_BATCH:
        raise InstanceTooLargeError(
            f"brute force limited to K <= {BRUTE_MAX_DEVICES}, B <= {BRUTE_MAX_BATCH}")
    latency, b = kernels.minmax_compositions(sys.comm_latency, sys.quantum, int(B))
    return StaticAllocation(int(B), b, float(latency))


def brute_force_global_batch(sys: StaticSystem, law: ScalingLaw, B_range) -> int:
    """Argmin over an integer range of rounds x best round latency.

    Uses exhaustive allocation where the instance is small enough and the
    closed-form tau_min otherwise. Lowest B wins ties.
    """
    floor = feasible_batch_floor(law)
    feasible = [int(B) for B in B_range if B > floor and B >= sys.K]
    if not feasible:
        raise InfeasibleBatchError("no feasible global batch in the requested range")
    best_B, best_val = None, math.inf
    for B in feasible:
        if sys.K <= BRUTE_MAX_DEVICES and B <= BRUTE_MAX_BATCH:
            tau = brute_force_allocation(sys, B).round_latency
        else:
            tau = tau_min(sys, B)
        val = predict_rounds(law, B) * tau
        if val < best_val:
            best_B, best_val = B, val
    return best_B
