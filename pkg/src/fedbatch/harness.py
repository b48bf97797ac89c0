"""Seeded policy comparison under slow or fast fading.

Every (policy, seed) run replays the same channel sequence: the seed's
channel stream is consumed one draw per round, so round n sees identical
gains under every policy. Convergence is declared either by progress credit
(sum of 1 / N(B_n) reaching 1) or by running the synthetic trainer.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._util import ceil_tol_array, round_half_up
from .adaptive import ControllerState, RoundDecision, controller_from_expected, decide_round
from .config import ExperimentConfig, PolicySpec
from .errors import DomainError, InfeasibleBatchError
from .scaling import ScalingLaw, feasible_batch_floor, predict_rounds
from .slow_fading import StaticSystem, default_batch_cap
from .system import comm_latencies, draw_channel, expected_comm_latencies
from .trainer import quadratic_task, run_until_threshold

CREDIT_TOL = 1e-9
TRACE_COLUMNS = ["policy", "seed", "round", "B_n", "tau_n", "cum_latency", "credit"]


class BatchPolicy:
    """Per-round batch provider: ``policy(n, observed_comm) -> per-device batches``."""

    name = "policy"

    def __call__(self, n: int, observed_comm) -> np.ndarray:
        raise NotImplementedError


class FixedPolicy(BatchPolicy):
    def __init__(self, b: int, K: int):
        if b < 1:
            raise DomainError("fixed batch must be >= 1")
        self.b, self.K = int(b), int(K)
        self.name = f"fixed-{self.b}"

    def __call__(self, n, observed_comm=None):
        return np.full(self.K, self.b, dtype=np.int64)


class DBFLPolicy(BatchPolicy):
    """Uniform local batch growing geometrically per round, saturating at ``cap``."""

    name = "dbfl"

    def __init__(self, b0: int, rho: float, cap: int, K: int):
        if b0 < 1 or not rho > 1:
            raise DomainError("dbfl needs b0 >= 1 and rho > 1")
        self.b0, self.rho, self.cap, self.K = int(b0), float(rho), int(cap), int(K)

    def local_batch(self, n: int) -> int:
        # exponent grows without bound; stop evaluating once saturated
        if n * math.log(self.rho) > math.log(self.cap / self.b0) + 1:
            return self.cap
        return int(min(self.cap, round_half_up(self.b0 * self.rho ** n)))

    def __call__(self, n, observed_comm=None):
        return np.full(self.K, self.local_batch(n), dtype=np.int64)


class UniformOptimalPolicy(BatchPolicy):
    """Scaling-law-optimal global batch split evenly, ignoring heterogeneity."""

    name = "uniform_optimal"

    def __init__(self, global_batch: int, K: int):
        self.global_batch = int(global_batch)
        self.K = int(K)
        self.local = max(1, int(round_half_up(global_batch / K)))

    def __call__(self, n, observed_comm=None):
        return np.full(self.K, self.local, dtype=np.int64)


class ProposedPolicy(BatchPolicy):
    name = "proposed"

    def __init__(self, state: ControllerState):
        self.state = state
        self.decisions: list[RoundDecision] = []

    def __call__(self, n, observed_comm):
        d = decide_round(self.state, observed_comm)
        self.decisions.append(d)
        return d.per_device


def uniform_objective(expected_comm, speeds, hw, law: ScalingLaw, B) -> np.ndarray:
    B = np.asarray(B, dtype=float)
    K = len(speeds)
    rounds = ceil_tol_array(law.rounds_real(B))
    lat = np.max(np.asarray(expected_comm)[None, :]
                 + hw * B[:, None] / (np.asarray(speeds)[None, :] * K), axis=1)
    return rounds * lat


def uniform_optimal_batch(expected_comm, speeds, hw, law: ScalingLaw, B_max: int) -> int:
    """Exhaustive scan of (beta/eps, B_max] for the even-split objective."""
    lo = math.floor(feasible_batch_floor(law)) + 1
    if B_max < lo:
        raise InfeasibleBatchError(f"B_max={B_max} leaves no feasible global batch")
    grid = np.arange(lo, int(B_max) + 1)
    vals = uniform_objective(expected_comm, speeds, hw, law, grid)
    return int(grid[int(np.argmin(vals))])


def policy_fixed(b: int, K: int) -> FixedPolicy:
    return FixedPolicy(b, K)


def policy_dbfl(b0: int = 16, rho: float = 1.1, cap: int = 1024, K: int = 1) -> DBFLPolicy:
    return DBFLPolicy(b0, rho, cap, K)


def policy_uniform_optimal(expected_sys: StaticSystem, law: ScalingLaw,
                           B_max: int | None = None) -> UniformOptimalPolicy:
    if B_max is None:
        B_max = default_batch_cap(expected_sys, law)
    B_U = uniform_optimal_batch(expected_sys.comm_latency, expected_sys.speeds,
                                expected_sys.hw, law, B_max)
    return UniformOptimalPolicy(B_U, expected_sys.K)


@dataclass
class TraceRecord:
    policy: str
    seed: int
    round: int
    global_batch: int
    round_latency: float
    cumulative_latency: float
    progress_credit: float

    def row(self):
        return [self.policy, self.seed, self.round, self.global_batch,
                repr(self.round_latency), repr(self.cumulative_latency),
                repr(self.progress_credit)]


@dataclass
class RunResult:
    policy: str
    seed: int
    records: list[TraceRecord]
    converged: bool
    e2e_latency: float
    rounds: int
    mean_round_latency: float
    extra: dict = field(default_factory=dict)
    decisions: list[RoundDecision] = field(default_factory=list)


@dataclass
class SeedContext:
    """Everything derived from (config, seed) that all policies share."""

    seed: int
    expected_comm: np.ndarray
    fixed_comm: np.ndarray | None  # slow fading: the single realisation
    controller: ControllerState
    uniform_batch: int


def _streams(seed: int):
    channel, stats, trainer = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(channel), np.random.default_rng(stats),
            np.random.default_rng(trainer))


def prepare_seed(config: ExperimentConfig, seed: int) -> SeedContext:
    chan_rng, stats_rng, _ = _streams(seed)
    fixed = None
    if config.fading == "slow":
        # perfect CSI of a static channel: its latency is its own expectation
        fixed = comm_latencies(config.devices, draw_channel(config.devices, chan_rng),
                               config.system)
        expected = fixed
    else:
        expected = expected_comm_latencies(config.devices, config.system, config.n_samples,
                                           stats_rng)
    controller = controller_from_expected(config.system, config.devices, config.law, expected,
                                          config.B_max, config.rounding)
    sys = StaticSystem(config.system, config.devices, expected)
    B_max = config.B_max if config.B_max is not None else default_batch_cap(sys, config.law)
    B_U = uniform_optimal_batch(expected, sys.speeds, sys.hw, config.law, B_max)
    return SeedContext(seed, expected, fixed, controller, B_U)


def build_policy(spec: PolicySpec, config: ExperimentConfig, ctx: SeedContext) -> BatchPolicy:
    K = config.K
    if spec.kind == "fixed":
        return FixedPolicy(spec.b, K)
    if spec.kind == "dbfl":
        return DBFLPolicy(spec.b0, spec.rho, spec.cap, K)
    if spec.kind == "uniform_optimal":
        return UniformOptimalPolicy(ctx.uniform_batch, K)
    if spec.kind == "proposed":
        return ProposedPolicy(ctx.controller)
    raise DomainError(f"unknown policy kind {spec.kind!r}")


def run_policy_simulation(config: ExperimentConfig, spec: PolicySpec, seed: int,
                          mode: str = "credit", ctx: SeedContext | None = None) -> RunResult:
    if mode not in ("credit", "trainer"):
        raise DomainError(f"mode must be 'credit' or 'trainer', got {mode!r}")
    if ctx is None:
        ctx = prepare_seed(config, seed)
    policy = build_policy(spec, config, ctx)
    chan_rng, _, trainer_rng = _streams(seed)
    if config.fading == "slow":
        draw_channel(config.devices, chan_rng)  # keep stream position aligned with prepare_seed
    params, law = config.system, config.law
    speeds = np.array([d.compute_speed for d in config.devices])
    quantum = params.work_per_sample / speeds
    floor = feasible_batch_floor(law)
    records: list[TraceRecord] = []
    state = {"cum": 0.0, "credit": 0.0}

    def step(n: int) -> np.ndarray:
        if ctx.fixed_comm is not None:
            T = ctx.fixed_comm
        else:
            T = comm_latencies(config.devices, draw_channel(config.devices, chan_rng), params)
        b = np.asarray(policy(n, T), dtype=np.int64)
        B = int(b.sum())
        if not B > floor:
            raise InfeasibleBatchError(
                f"policy {spec.name}: round {n + 1} global batch {B} <= beta/epsilon={floor:.6g}")
        tau = float(np.max(T + b * quantum))
        state["cum"] += tau
        state["credit"] += 1.0 / predict_rounds(law, B)
        records.append(TraceRecord(spec.name, seed, n + 1, B, tau, state["cum"], state["credit"]))
        return b

    converged = False
    if mode == "credit":
        for n in range(config.max_rounds):
            step(n)
            if state["credit"] >= 1.0 - CREDIT_TOL:
                converged = True
                break
    else:
        tr = config.trainer
        task = quadratic_task(dim=tr.dim, smoothness=tr.smoothness, noise_var=tr.noise_var,
                              init_scale=tr.init_scale, condition=tr.condition)
        lr = tr.learning_rate if tr.learning_rate is not None else params.learning_rate
        run = run_until_threshold(task, config.K, step, tr.threshold, config.max_rounds,
                                  local_steps=params.local_steps, lr=lr, rng=trainer_rng)
        converged = run.converged

    taus = [r.round_latency for r in records]
    extra = {}
    if isinstance(policy, ProposedPolicy):
        extra["reference_batch"] = ctx.controller.reference_batch
        extra["conservative_rounds"] = predict_rounds(law, ctx.controller.reference_batch)
    if isinstance(policy, UniformOptimalPolicy):
        extra["B_U"] = policy.global_batch
    return RunResult(
        policy=spec.name, seed=seed, records=records, converged=converged,
        e2e_latency=state["cum"], rounds=len(records),
        mean_round_latency=float(np.mean(taus)) if taus else 0.0, extra=extra,
        decisions=list(getattr(policy, "decisions", [])),
    )


def run_experiment(config: ExperimentConfig, policies: Sequence[PolicySpec] | None = None,
                   seeds: Sequence[int] | None = None, mode: str = "credit") -> list[RunResult]:
    policies = list(config.policies if policies is None else policies)
    seeds = list(config.seeds if seeds is None else seeds)
    results = []
    for seed in seeds:
        ctx = prepare_seed(config, seed)
        for spec in policies:
            results.append(run_policy_simulation(config, spec, seed, mode, ctx))
    results.sort(key=lambda r: (r.policy, r.seed))
    return results


def summarize(results: Sequence[RunResult]) -> list[dict]:
    """One row per policy (first-seen order); relative latency vs ``proposed``.

    Without a proposed run the first policy is the reference.
    """
    order: list[str] = []
    by_policy: dict[str, list[RunResult]] = {}
    for r in results:
        if r.policy not in by_policy:
            order.append(r.policy)
            by_policy[r.policy] = []
        by_policy[r.policy].append(r)
    means = {p: float(np.mean([r.e2e_latency for r in rs])) for p, rs in by_policy.items()}
    ref = "proposed" if "proposed" in means else order[0]
    rows = []
    for p in order:
        rs = by_policy[p]
        e2e = np.array([r.e2e_latency for r in rs])
        rows.append({
            "policy": p,
            "runs": len(rs),
            "mean_e2e": float(e2e.mean()),
            "std_e2e": float(e2e.std(ddof=1)) if e2e.size > 1 else 0.0,
            "mean_rounds": float(np.mean([r.rounds for r in rs])),
            "mean_round_latency": float(np.mean([r.mean_round_latency for r in rs])),
            "converged_fraction": float(np.mean([r.converged for r in rs])),
            "relative_latency_pct": 100.0 * means[p] / means[ref],
        })
    return rows


def write_traces_csv(path, results: Sequence[RunResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in sorted(results, key=lambda r: (r.policy, r.seed)):
            for rec in r.records:
                w.writerow(rec.row())
