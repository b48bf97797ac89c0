"""Experiment configuration: JSON schema, defaults and validation.

Schema (unknown keys are rejected at every level)::

    {
      "system": {"bandwidth_per_device": 1e7, "noise_density": 1e-10,
                 "bits_per_param": 32, "model_dim": 21840,
                 "flops_per_sample": <required>, "local_steps": 5,
                 "learning_rate": 0.1},
      "devices": [{"compute_speed": ..., "tx_power": ..., "fading_scale": ...}, ...],
        or
      "device_sampling": {"count": 10, "compute_speed": [1e9, 3e10],
                          "tx_power": [0.01, 0.1], "fading_scale": [0.2, 0.5],
                          "seed": 0},
      "law": {"alpha": .., "beta": .., "epsilon": ..}
        or {"fit_from": "samples.csv", "epsilon": ..},
      "policies": [{"kind": "fixed", "b": 16}, {"kind": "dbfl", "b0": 16, "rho": 1.1,
                    "cap": 1024}, {"kind": "uniform_optimal"}, {"kind": "proposed"}],
      "seeds": [0], "max_rounds": 10000, "fading": "fast" | "slow",
      "n_samples": 10000, "B_max": null, "rounding": "conserve" | "paper",
      "trainer": {"dim": 10, "noise_var": 4.0, "smoothness": 1.0, "condition": 10.0,
                  "init_scale": 1.0, "threshold": 0.05, "learning_rate": null}
    }

Defaults for ``system`` follow the reference experiment (10 MHz sub-bands,
32-bit parameters, 21840-parameter CNN, H=5, eta=0.1); the per-sample
workload has no published value and must be given.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, FedBatchError
from .scaling import ScalingLaw, fit_scaling_law, read_samples_csv
from .slow_fading import ROUNDING_MODES
from .system import DeviceProfile, SystemParams

SYSTEM_DEFAULTS = {
    "bandwidth_per_device": 1e7,
    "noise_density": 1e-10,
    "bits_per_param": 32,
    "model_dim": 21840,
    "local_steps": 5,
    "learning_rate": 0.1,
}
SAMPLING_DEFAULTS = {
    "compute_speed": [1e9, 3e10],  # [0.001, 0.03] x 1 TFLOPs/s
    "tx_power": [0.01, 0.1],
    "fading_scale": [0.2, 0.5],
    "seed": 0,
}
TRAINER_DEFAULTS = {
    "dim": 10,
    "noise_var": 4.0,
    "smoothness": 1.0,
    "condition": 10.0,
    "init_scale": 1.0,
    "threshold": 0.05,
    "learning_rate": None,  # None: use system.learning_rate
}
POLICY_KEYS = {
    "fixed": {"b"},
    "dbfl": {"b0", "rho", "cap"},
    "uniform_optimal": set(),
    "proposed": set(),
}
DBFL_DEFAULTS = {"b0": 16, "rho": 1.1, "cap": 1024}
DEFAULT_POLICIES = [
    {"kind": "fixed", "b": 16}, {"kind": "fixed", "b": 32}, {"kind": "fixed", "b": 64},
    {"kind": "fixed", "b": 128}, {"kind": "dbfl"}, {"kind": "uniform_optimal"},
    {"kind": "proposed"},
]
TOP_KEYS = {"system", "devices", "device_sampling", "law", "policies", "seeds", "max_rounds",
            "fading", "n_samples", "B_max", "rounding", "trainer"}


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    b: int | None = None
    b0: int | None = None
    rho: float | None = None
    cap: int | None = None

    @property
    def name(self) -> str:
        if self.kind == "fixed":
            return f"fixed-{self.b}"
        return self.kind

    @classmethod
    def parse(cls, name: str) -> "PolicySpec":
        """Build from a CLI name such as ``fixed-16``, ``dbfl`` or ``proposed``."""
        if name.startswith("fixed-"):
            try:
                return _validate_policy({"kind": "fixed", "b": int(name[6:])}, "--policy")
            except ValueError:
                raise ConfigError("--policy", f"bad fixed batch in {name!r}") from None
        if name in POLICY_KEYS and name != "fixed":
            return _validate_policy({"kind": name}, "--policy")
        raise ConfigError("--policy", f"unknown policy {name!r}")


@dataclass(frozen=True)
class TrainerSpec:
    dim: int
    noise_var: float
    smoothness: float
    condition: float
    init_scale: float
    threshold: float
    learning_rate: float | None


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemParams
    devices: tuple[DeviceProfile, ...]
    law: ScalingLaw
    policies: tuple[PolicySpec, ...]
    seeds: tuple[int, ...] = (0,)
    max_rounds: int = 10_000
    fading: str = "fast"
    n_samples: int = 10_000
    B_max: int | None = None
    rounding: str = "conserve"
    trainer: TrainerSpec = field(default_factory=lambda: TrainerSpec(**TRAINER_DEFAULTS))

    @property
    def K(self) -> int:
        return len(self.devices)


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(where, "expected a JSON object")
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"{where}.{key}" if where else key, "unknown key")


def _number(obj, key, where, *, positive=True, integer=False, minimum=None):
    path = f"{where}.{key}" if where else key
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(path, "must be finite")
    if integer and int(v) != v:
        raise ConfigError(path, f"must be an integer, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(path, f"must be > 0, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {v!r}")
    return int(v) if integer else float(v)


def _range(obj, key, where):
    path = f"{where}.{key}"
    v = obj[key]
    if (not isinstance(v, list) or len(v) != 2
            or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v)):
        raise ConfigError(path, "expected [low, high]")
    lo, hi = float(v[0]), float(v[1])
    if not (0 < lo <= hi):
        raise ConfigError(path, f"need 0 < low <= high, got {v!r}")
    return lo, hi


def _parse_system(raw) -> SystemParams:
    _check_keys(raw, set(SYSTEM_DEFAULTS) | {"flops_per_sample"}, "system")
    if "flops_per_sample" not in raw:
        raise ConfigError("system.flops_per_sample", "missing required key")
    merged = {**SYSTEM_DEFAULTS, **raw}
    integer = {"bits_per_param", "model_dim", "local_steps"}
    vals = {k: _number(merged, k, "system", integer=k in integer,
                       minimum=1 if k in integer else None) for k in merged}
    return SystemParams(**vals)


def _parse_devices(raw) -> tuple[DeviceProfile, ...]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError("devices", "expected a non-empty list")
    out = []
    for i, d in enumerate(raw):
        where = f"devices[{i}]"
        _check_keys(d, {"compute_speed", "tx_power", "fading_scale"}, where)
        for key in ("compute_speed", "tx_power", "fading_scale"):
            if key not in d:
                raise ConfigError(f"{where}.{key}", "missing required key")
        out.append(DeviceProfile(i, *(_number(d, k, where)
                                      for k in ("compute_speed", "tx_power", "fading_scale"))))
    return tuple(out)


def sample_devices(count, compute_speed, tx_power, fading_scale, seed) -> tuple[DeviceProfile, ...]:
    rng = np.random.default_rng(seed)
    f = rng.uniform(*compute_speed, size=count)
    p = rng.uniform(*tx_power, size=count)
    s = rng.uniform(*fading_scale, size=count)
    return tuple(DeviceProfile(i, float(f[i]), float(p[i]), float(s[i])) for i in range(count))


def _parse_sampling(raw) -> tuple[DeviceProfile, ...]:
    _check_keys(raw, set(SAMPLING_DEFAULTS) | {"count"}, "device_sampling")
    if "count" not in raw:
        raise ConfigError("device_sampling.count", "missing required key")
    merged = {**SAMPLING_DEFAULTS, **raw}
    count = _number(merged, "count", "device_sampling", integer=True)
    seed = _number(merged, "seed", "device_sampling", integer=True, positive=False, minimum=0)
    ranges = {k: _range(merged, k, "device_sampling")
              for k in ("compute_speed", "tx_power", "fading_scale")}
    return sample_devices(count, seed=seed, **ranges)


def _parse_law(raw, base_dir: Path) -> ScalingLaw:
    if not isinstance(raw, dict):
        raise ConfigError("law", "expected a JSON object")
    if "fit_from" in raw:
        _check_keys(raw, {"fit_from", "epsilon"}, "law")
        if "epsilon" not in raw:
            raise ConfigError("law.epsilon", "missing required key")
        eps = _number(raw, "epsilon", "law")
        path = Path(raw["fit_from"])
        if not path.is_absolute():
            path = base_dir / path
        try:
            return fit_scaling_law(read_samples_csv(path), eps)
        except (OSError, FedBatchError) as exc:
            raise ConfigError("law.fit_from", str(exc)) from exc
    _check_keys(raw, {"alpha", "beta", "epsilon"}, "law")
    for key in ("alpha", "beta", "epsilon"):
        if key not in raw:
            raise ConfigError(f"law.{key}", "missing required key")
    return ScalingLaw(_number(raw, "alpha", "law"),
                      _number(raw, "beta", "law", positive=False, minimum=0),
                      _number(raw, "epsilon", "law"))


def _validate_policy(raw, where) -> PolicySpec:
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ConfigError(f"{where}.kind", "missing required key")
    kind = raw["kind"]
    if kind not in POLICY_KEYS:
        raise ConfigError(f"{where}.kind", f"unknown policy kind {kind!r}")
    _check_keys(raw, POLICY_KEYS[kind] | {"kind"}, where)
    if kind == "fixed":
        if "b" not in raw:
            raise ConfigError(f"{where}.b", "missing required key")
        return PolicySpec("fixed", b=_number(raw, "b", where, integer=True, minimum=1))
    if kind == "dbfl":
        merged = {**DBFL_DEFAULTS, **raw}
        rho = _number(merged, "rho", where)
        if not rho > 1:
            raise ConfigError(f"{where}.rho", f"must be > 1, got {rho!r}")
        return PolicySpec("dbfl", b0=_number(merged, "b0", where, integer=True, minimum=1),
                          rho=rho, cap=_number(merged, "cap", where, integer=True, minimum=1))
    return PolicySpec(kind)


def _parse_trainer(raw) -> TrainerSpec:
    _check_keys(raw, set(TRAINER_DEFAULTS), "trainer")
    merged = {**TRAINER_DEFAULTS, **raw}
    vals = {}
    for k, v in merged.items():
        if k == "learning_rate" and v is None:
            vals[k] = None
        elif k == "dim":
            vals[k] = _number(merged, k, "trainer", integer=True)
        elif k == "noise_var":
            vals[k] = _number(merged, k, "trainer", positive=False, minimum=0)
        else:
            vals[k] = _number(merged, k, "trainer")
    return TrainerSpec(**vals)


def config_from_dict(raw: dict, base_dir=".") -> ExperimentConfig:
    _check_keys(raw, TOP_KEYS, "")
    base_dir = Path(base_dir)
    if "system" not in raw:
        raise ConfigError("system", "missing required key")
    system = _parse_system(raw["system"])
    if ("devices" in raw) == ("device_sampling" in raw):
        raise ConfigError("devices", "give exactly one of devices or device_sampling")
    devices = (_parse_devices(raw["devices"]) if "devices" in raw
               else _parse_sampling(raw["device_sampling"]))
    if "law" not in raw:
        raise ConfigError("law", "missing required key")
    law = _parse_law(raw["law"], base_dir)

    policies_raw = raw.get("policies", DEFAULT_POLICIES)
    if not isinstance(policies_raw, list) or not policies_raw:
        raise ConfigError("policies", "expected a non-empty list")
    policies = tuple(_validate_policy(p, f"policies[{i}]") for i, p in enumerate(policies_raw))
    names = [p.name for p in policies]
    if len(set(names)) != len(names):
        raise ConfigError("policies", "duplicate policy names")

    seeds = raw.get("seeds", [0])
    if (not isinstance(seeds, list) or not seeds
            or not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds)):
        raise ConfigError("seeds", "expected a non-empty list of non-negative integers")
    opts = {"max_rounds": raw.get("max_rounds", 10_000), "n_samples": raw.get("n_samples", 10_000)}
    max_rounds = _number(opts, "max_rounds", "", integer=True)
    n_samples = _number(opts, "n_samples", "", integer=True)
    fading = raw.get("fading", "fast")
    if fading not in ("fast", "slow"):
        raise ConfigError("fading", f"must be 'fast' or 'slow', got {fading!r}")
    rounding = raw.get("rounding", "conserve")
    if rounding not in ROUNDING_MODES:
        raise ConfigError("rounding", f"must be one of {ROUNDING_MODES}, got {rounding!r}")
    B_max = raw.get("B_max")
    if B_max is not None:
        B_max = _number(raw, "B_max", "", integer=True)
    trainer = _parse_trainer(raw.get("trainer", {}))
    return ExperimentConfig(system=system, devices=devices, law=law, policies=policies,
                            seeds=tuple(seeds), max_rounds=max_rounds, fading=fading,
                            n_samples=n_samples, B_max=B_max, rounding=rounding,
                            trainer=trainer)


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"malformed JSON: {exc}") from None
    try:
        return config_from_dict(raw, path.parent)
    except ConfigError:
        raise
    except FedBatchError as exc:  # invariant violations raised by the domain types
        raise ConfigError("config", str(exc)) from exc
