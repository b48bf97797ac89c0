"""Per-round channel-aware batch control for fast fading.

A reference global batch is fixed once from expected uplink latencies; each
round it is raised to the channel-aware threshold if the observed latencies
require more samples to keep every device busy until the straggler finishes.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._util import ceil_tol
from .errors import DomainError
from .scaling import ScalingLaw
from .slow_fading import StaticSystem, batch_threshold, integerize_allocation, optimal_global_batch
from .system import DeviceProfile, SystemParams, expected_comm_latencies

DEFAULT_MC_SAMPLES = 10_000


@dataclass(frozen=True)
class ControllerState:
    reference_batch: int
    law: ScalingLaw
    profiles: tuple[DeviceProfile, ...]
    params: SystemParams
    expected_comm: np.ndarray
    reference_threshold: int
    rounding: str = "conserve"

    @property
    def speeds(self) -> np.ndarray:
        return np.array([p.compute_speed for p in self.profiles], dtype=float)

    @property
    def expected_coupling(self) -> float:
        return float(np.dot(self.speeds, self.expected_comm))


@dataclass(frozen=True)
class RoundDecision:
    global_batch: int
    per_device: np.ndarray
    round_latency: float
    threshold_used: int
    real_allocation: np.ndarray
    observed_comm: np.ndarray

    def device_latencies(self, quantum) -> np.ndarray:
        return self.observed_comm + self.per_device * np.asarray(quantum)


def controller_from_expected(params: SystemParams, profiles: Sequence[DeviceProfile],
                             law: ScalingLaw, expected_comm, B_max: int | None = None,
                             rounding: str = "conserve") -> ControllerState:
    """Build the controller from already known expected uplink latencies."""
    expected = np.asarray(expected_comm, dtype=float)
    sys = StaticSystem(params, tuple(profiles), expected)
    ref = optimal_global_batch(sys, law, B_max, rounding)
    return ControllerState(
        reference_batch=ref.global_batch, law=law, profiles=tuple(profiles), params=params,
        expected_comm=expected, reference_threshold=batch_threshold(sys), rounding=rounding,
    )


def init_controller(params: SystemParams, profiles: Sequence[DeviceProfile], law: ScalingLaw,
                    n_samples: int, rng: np.random.Generator, B_max: int | None = None,
                    rounding: str = "conserve") -> ControllerState:
    expected = expected_comm_latencies(profiles, params, n_samples, rng)
    return controller_from_expected(params, profiles, law, expected, B_max, rounding)


def round_threshold(state: ControllerState, observed_comm) -> int:
    T = np.asarray(observed_comm, dtype=float)
    if T.shape != (len(state.profiles),) or np.any(~(T >= 0)):
        raise DomainError("observed latencies must be >= 0, one per device")
    hw = state.params.work_per_sample
    f = state.speeds
    tau_1b = float(np.max(T + hw / f))
    return int(sum(ceil_tol(x) for x in (f / hw) * (tau_1b - T)))


def decide_round(state: ControllerState, observed_comm) -> RoundDecision:
    T = np.asarray(observed_comm, dtype=float)
    b_th = round_threshold(state, T)
    B = max(state.reference_batch, b_th)
    hw = state.params.work_per_sample
    f = state.speeds
    tau = (hw * B + float(np.dot(f, T))) / float(np.sum(f))
    real = (f / hw) * (tau - T)
    b = integerize_allocation(real, B, state.rounding)
    latency = float(np.max(T + b * hw / f))
    return RoundDecision(global_batch=int(B), per_device=b, round_latency=latency,
                         threshold_used=b_th, real_allocation=real, observed_comm=T)


def decision_rows(decisions: Iterable[RoundDecision]):
    for n, d in enumerate(decisions, start=1):
        yield [n, d.threshold_used, d.global_batch, repr(float(d.round_latency)),
               *(int(x) for x in d.per_device)]


def write_decision_log(path, decisions: Sequence[RoundDecision]) -> None:
    decisions = list(decisions)
    K = len(decisions[0].per_device) if decisions else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "B_th_n", "B_star_n", "tau_n", *(f"b_{k}" for k in range(1, K + 1))])
        w.writerows(decision_rows(decisions))
