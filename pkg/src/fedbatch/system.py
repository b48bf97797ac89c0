"""Physical model: devices, OFDMA uplink rates and per-round latency.

All quantities are SI (Hz, W, W/Hz, s, FLOPs). Downlink broadcast and
server-side aggregation are treated as free.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class SystemParams:
    bandwidth_per_device: float  # B_W [Hz]
    noise_density: float  # N_0 [W/Hz]
    bits_per_param: int  # Q
    model_dim: int  # D
    flops_per_sample: float  # W
    local_steps: int  # H
    learning_rate: float  # eta

    def __post_init__(self):
        for name in ("bandwidth_per_device", "noise_density", "flops_per_sample",
                     "learning_rate"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be > 0, got {getattr(self, name)!r}")
        for name in ("bits_per_param", "model_dim", "local_steps"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise DomainError(f"{name} must be an integer >= 1, got {v!r}")

    @property
    def work_per_sample(self) -> float:
        """H*W: FLOPs one sample costs over a full round of local steps."""
        return self.local_steps * self.flops_per_sample


@dataclass(frozen=True)
class DeviceProfile:
    id: int
    compute_speed: float  # f_k [FLOPs/s]
    tx_power: float  # P_k [W]
    fading_scale: float  # sigma_k^2, mean of the exponential power gain

    def __post_init__(self):
        for name in ("compute_speed", "tx_power", "fading_scale"):
            if not getattr(self, name) > 0:
                raise DomainError(
                    f"device {self.id}: {name} must be > 0, got {getattr(self, name)!r}")


@dataclass(frozen=True)
class ChannelState:
    gains: np.ndarray  # |h_k|^2 per device

    def __post_init__(self):
        if np.any(~(np.asarray(self.gains) > 0)):
            raise DomainError("channel gains must all be > 0")


@dataclass(frozen=True)
class LatencyBreakdown:
    comm: np.ndarray
    comp: np.ndarray
    round_total: float

    @property
    def straggler(self) -> int:
        return int(np.argmax(self.comm + self.comp))


def transmission_rate(profile: DeviceProfile, gain: float, params: SystemParams) -> float:
    """Shannon rate of one OFDMA sub-band, in bits/s."""
    if not gain > 0:
        raise DomainError(f"channel gain must be > 0, got {gain!r}")
    if not profile.tx_power > 0:
        raise DomainError(f"tx_power must be > 0, got {profile.tx_power!r}")
    bw = params.bandwidth_per_device
    snr = profile.tx_power * gain / (bw * params.noise_density)
    return bw * math.log1p(snr) / math.log(2.0)


def payload_bits(params: SystemParams) -> int:
    return params.model_dim * params.bits_per_param


def comm_latency(rate: float, payload: float) -> float:
    if not rate > 0:
        raise DomainError(f"transmission rate must be > 0, got {rate!r}")
    return payload / rate


def comp_latency(profile: DeviceProfile, batch: float, params: SystemParams) -> float:
    if batch < 0:
        raise DomainError(f"batch must be >= 0, got {batch!r}")
    return params.work_per_sample * batch / profile.compute_speed


def per_round_latency(comm: Sequence[float], comp: Sequence[float]) -> LatencyBreakdown:
    comm = np.asarray(comm, dtype=float)
    comp = np.asarray(comp, dtype=float)
    if comm.shape != comp.shape or comm.ndim != 1:
        raise DomainError("comm and comp must be 1-D vectors of equal length")
    if comm.size == 0:
        raise DomainError("per-round latency needs at least one device")
    return LatencyBreakdown(comm=comm, comp=comp, round_total=float(np.max(comm + comp)))


def e2e_latency(round_latencies) -> float:
    return float(math.fsum(round_latencies))


def draw_channel(profiles: Sequence[DeviceProfile], rng: np.random.Generator) -> ChannelState:
    """One i.i.d. Rayleigh block: power gains ~ Exponential(mean sigma_k^2)."""
    scales = np.array([p.fading_scale for p in profiles], dtype=float)
    gains = rng.exponential(scales)
    # exponential() can return exactly 0.0 with negligible probability
    gains = np.maximum(gains, np.finfo(float).tiny)
    return ChannelState(gains=gains)


def comm_latencies(profiles: Sequence[DeviceProfile], channel: ChannelState,
                   params: SystemParams) -> np.ndarray:
    """Vectorised uplink latency of every device for one channel realisation."""
    power = np.array([p.tx_power for p in profiles], dtype=float)
    bw = params.bandwidth_per_device
    rate = bw * np.log1p(power * channel.gains / (bw * params.noise_density)) / math.log(2.0)
    return payload_bits(params) / rate


def expected_comm_latency(profile: DeviceProfile, params: SystemParams, n_samples: int,
                          rng: np.random.Generator) -> float:
    """Monte Carlo estimate of E[q / R] under Rayleigh fading.

    Note the exact expectation diverges (logarithmically, from deep fades near
    zero gain), so the estimate grows slowly with ``n_samples``; it is the
    finite-sample statistic that the controller consumes.
    """
    if n_samples < 1:
        raise DomainError(f"n_samples must be >= 1, got {n_samples!r}")
    gains = np.maximum(rng.exponential(profile.fading_scale, size=n_samples),
                       np.finfo(float).tiny)
    bw = params.bandwidth_per_device
    rate = bw * np.log1p(profile.tx_power * gains / (bw * params.noise_density)) / math.log(2.0)
    return float(np.mean(payload_bits(params) / rate))


def expected_comm_latencies(profiles: Sequence[DeviceProfile], params: SystemParams,
                            n_samples: int, rng: np.random.Generator) -> np.ndarray:
    return np.array([expected_comm_latency(p, params, n_samples, rng) for p in profiles])
