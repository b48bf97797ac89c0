"""Desk-scale synchronous FL on a noisy quadratic.

F(w) = F* + 0.5 * sum_i c_i w_i^2 with max c_i = L is L-smooth, bounded below
by F*, and gets an unbiased gradient oracle whose per-sample noise is
N(0, (sigma^2 / D) I). A mini-batch of b samples therefore has total
variance exactly sigma^2 / b, so every constant in the convergence bound is
known and the bound can be checked numerically.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import DomainError
from .scaling import ConvergenceSample
from .slow_fading import integerize_allocation

# absolute slack when comparing a learning rate to its cap
LR_CAP_TOL = 1e-12


@dataclass(frozen=True)
class SyntheticTask:
    curvature: np.ndarray
    noise_var: float
    w0: np.ndarray
    f_star: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.curvature, dtype=float)
        w0 = np.asarray(self.w0, dtype=float)
        if c.ndim != 1 or c.size == 0 or np.any(~(c > 0)):
            raise DomainError("curvature must be a non-empty vector of positive values")
        if w0.shape != c.shape:
            raise DomainError("w0 and curvature must have the same dimension")
        if not self.noise_var >= 0:
            raise DomainError(f"noise_var must be >= 0, got {self.noise_var!r}")
        object.__setattr__(self, "curvature", c)
        object.__setattr__(self, "w0", w0)

    @property
    def dim(self) -> int:
        return self.curvature.size

    @property
    def smoothness(self) -> float:
        return float(np.max(self.curvature))

    def loss(self, w) -> float:
        w = np.asarray(w, dtype=float)
        return self.f_star + 0.5 * float(np.dot(self.curvature, w * w))

    def grad(self, w) -> np.ndarray:
        return self.curvature * np.asarray(w, dtype=float)

    def noise_scale(self, batch) -> np.ndarray:
        """Per-coordinate std of the mini-batch gradient noise."""
        return np.sqrt(self.noise_var / (self.dim * np.asarray(batch, dtype=float)))


def quadratic_task(dim: int = 10, smoothness: float = 1.0, noise_var: float = 4.0,
                   init_scale: float = 1.0, condition: float = 10.0,
                   f_star: float = 0.0) -> SyntheticTask:
    """Curvatures spread geometrically over [L/condition, L]; w0 = init_scale * 1."""
    if dim < 1:
        raise DomainError("dim must be >= 1")
    c = smoothness * np.geomspace(1.0 / condition, 1.0, dim) if dim > 1 \
        else np.array([smoothness])
    return SyntheticTask(curvature=c, noise_var=noise_var,
                         w0=np.full(dim, float(init_scale)), f_star=f_star)


@dataclass
class TrainRun:
    rounds_used: int
    gradient_norm_history: np.ndarray
    converged: bool
    batches: list = field(default_factory=list)  # per-round per-device batches

    @property
    def running_mean(self) -> np.ndarray:
        h = self.gradient_norm_history
        return np.cumsum(h) / np.arange(1, h.size + 1)


def stochastic_gradient(task: SyntheticTask, w, batch: int, rng: np.random.Generator):
    if batch < 1:
        raise DomainError(f"batch must be >= 1, got {batch!r}")
    return task.grad(w) + task.noise_scale(batch) * rng.standard_normal(task.dim)


def local_sgd(task: SyntheticTask, w_start, steps: int, batch: int, lr: float,
              rng: np.random.Generator) -> np.ndarray:
    """Plain SGD from ``w_start``; draws one noise vector per step."""
    if steps < 1:
        raise DomainError("steps must be >= 1")
    w = np.array(w_start, dtype=float)
    for _ in range(steps):
        w = w - lr * stochastic_gradient(task, w, batch, rng)
    return w


def aggregate(local_weights, batches) -> np.ndarray:
    """Batch-weighted average, written relative to the first device.

    The offset form returns the input unchanged when all local models agree.
    """
    W = np.asarray(local_weights, dtype=float)
    b = np.asarray(batches, dtype=float)
    if W.ndim != 2 or W.shape[0] != b.size:
        raise DomainError("need one weight vector of equal dimension per device")
    total = float(b.sum())
    if not total >= 1:
        raise DomainError("total batch must be >= 1")
    ref = W[0]
    return ref + (b / total) @ (W - ref)


def train_round(task: SyntheticTask, w, batches, local_steps: int, lr: float,
                rng: np.random.Generator) -> np.ndarray:
    """Broadcast, H local steps on every device, weighted aggregation."""
    batches = np.asarray(batches, dtype=np.int64)
    if np.any(batches < 1):
        raise DomainError("every device needs batch >= 1")
    z = rng.standard_normal((batches.size, local_steps, task.dim))
    local = kernels.local_sgd_devices(w, task.curvature, lr, task.noise_scale(batches), z)
    return aggregate(local, batches)


def uniform_split(B: int, K: int) -> np.ndarray:
    if B < K:
        raise DomainError(f"global batch {B} < devices {K}")
    return integerize_allocation(np.full(K, B / K), B)


def run_until_threshold(task: SyntheticTask, devices: int,
                        allocation_source: Callable[[int], Sequence[int]], threshold: float,
                        max_rounds: int, *, local_steps: int = 1, lr: float = 0.1,
                        rng: np.random.Generator,
                        on_round: Callable[[int, np.ndarray], None] | None = None) -> TrainRun:
    """Run rounds until the running mean of ||grad F(w_n)||^2 over w_0..w_n is <= threshold.

    ``allocation_source(n)`` supplies round n's per-device batches (n from 0).
    """
    if not threshold > 0:
        raise DomainError("threshold must be > 0")
    w = np.array(task.w0, dtype=float)
    history = []
    used = []
    total = 0.0
    converged = False
    for n in range(max_rounds):
        g = task.grad(w)
        g2 = float(np.dot(g, g))
        history.append(g2)
        total += g2
        b = np.asarray(allocation_source(n), dtype=np.int64)
        if b.size != devices:
            raise DomainError(f"allocation for round {n} has {b.size} entries, expected {devices}")
        w = train_round(task, w, b, local_steps, lr, rng)
        used.append(b)
        if on_round is not None:
            on_round(n, b)
        if total / len(history) <= threshold:
            converged = True
            break
    return TrainRun(len(history), np.array(history), converged, used)


def gradient_norm_trajectory(task: SyntheticTask, batches, rounds: int, *, local_steps: int,
                             lr: float, rng: np.random.Generator) -> np.ndarray:
    """||grad F(w_n)||^2 for n = 0..rounds-1 under a fixed per-device split."""
    w = np.array(task.w0, dtype=float)
    out = np.empty(rounds)
    for n in range(rounds):
        g = task.grad(w)
        out[n] = float(np.dot(g, g))
        w = train_round(task, w, batches, local_steps, lr, rng)
    return out


def max_learning_rate(L: float, H: int) -> float:
    if not L > 0 or H < 1:
        raise DomainError("need L > 0 and H >= 1")
    if H == 1:
        return 1.0 / L
    return (-H + math.sqrt(H * (3 * H - 2))) / (L * H * (H - 1))


def convergence_bound(task: SyntheticTask, K: int, H: int, B: float, N: int, lr: float) -> float:
    """Upper bound on the average squared gradient norm after N rounds."""
    L = task.smoothness
    if lr > max_learning_rate(L, H) + LR_CAP_TOL:
        raise DomainError(f"learning rate {lr} exceeds the cap {max_learning_rate(L, H)}")
    if B < 1 or N < 1:
        raise DomainError("need B >= 1 and N >= 1")
    gap = task.loss(task.w0) - task.f_star
    init = 2.0 * gap / (lr * N * H)
    drift = H + lr * L * K * (2 * H - 1) * (H - 1) / 6.0
    return init + lr * L * task.noise_var / B * drift


def sample_round_batch_pairs(task: SyntheticTask, B_list: Sequence[int], trials: int,
                             threshold: float, rng: np.random.Generator, *,
                             devices: int = 10, local_steps: int = 1, lr: float = 0.1,
                             max_rounds: int = 10_000) -> list[ConvergenceSample]:
    """Trial-averaged convergence rounds per global batch (uniform device split).

    Each (B, trial) pair gets its own child stream, so trials could run in any
    order or in parallel without changing results.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    streams = rng.spawn(len(B_list) * trials)
    samples = []
    for i, B in enumerate(B_list):
        split = uniform_split(int(B), devices)
        rounds, flagged = [], False
        for t in range(trials):
            run = run_until_threshold(task, devices, lambda n: split, threshold, max_rounds,
                                      local_steps=local_steps, lr=lr,
                                      rng=streams[i * trials + t])
            rounds.append(run.rounds_used)
            flagged |= not run.converged
        samples.append(ConvergenceSample(int(B), float(np.mean(rounds)), flagged))
    return samples


def write_train_trace(path, run: TrainRun, round_latencies=None) -> None:
    cum = np.cumsum(round_latencies) if round_latencies is not None else None
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "grad_norm_sq", "cumulative_latency"])
        for n, g2 in enumerate(run.gradient_norm_history, start=1):
            w.writerow([n, repr(float(g2)), "" if cum is None else repr(float(cum[n - 1]))])
