"""Command-line front end: ``fedbatch {fit,optimize,simulate,oracle}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import harness
from .config import ConfigError, PolicySpec, config_from_dict, parse_config
from .errors import FedBatchError
from .scaling import (ScalingLaw, feasible_batch_floor, fit_scaling_law, goodness_of_fit,
                      read_samples_csv, write_samples_csv)
from .slow_fading import (BRUTE_MAX_BATCH, BRUTE_MAX_DEVICES, StaticSystem, allocate,
                          batch_threshold, brute_force_allocation, brute_force_global_batch,
                          exact_e2e, optimal_global_batch, tau_min)
from .trainer import max_learning_rate, quadratic_task, sample_round_batch_pairs

DEFAULT_FIT_BATCHES = (20, 40, 80, 160)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(obj, path: Path | None = None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path is not None:
        path.write_text(text + "\n")
    print(text)


def cmd_fit(args) -> int:
    if args.samples:
        try:
            samples = read_samples_csv(args.samples)
        except OSError as exc:
            raise ConfigError("--samples", str(exc)) from None
        source = str(args.samples)
    else:
        # built-in trainer on the synthetic quadratic
        task = quadratic_task(dim=args.dim, noise_var=args.noise_var)
        lr = args.lr if args.lr is not None else 0.9 * max_learning_rate(task.smoothness,
                                                                         args.local_steps)
        rng = np.random.default_rng(args.seed)
        samples = sample_round_batch_pairs(task, args.batches, args.trials, args.threshold, rng,
                                           devices=args.devices, local_steps=args.local_steps,
                                           lr=lr)
        source = "trainer"
    law = fit_scaling_law(samples, args.epsilon)
    result = {**asdict(law), "r_squared": goodness_of_fit(law, samples), "source": source,
              "samples": [{"global_batch": s.global_batch, "rounds": s.rounds,
                           "flagged": s.flagged} for s in samples]}
    out = None
    if args.out:
        d = _out_dir(args)
        write_samples_csv(d / "samples.csv", samples)
        out = d / "law.json"
    _emit(result, out)
    return 0


def cmd_optimize(args) -> int:
    config = parse_config(args.config)
    seed = args.seed[0] if args.seed else config.seeds[0]
    ctx = harness.prepare_seed(config, seed)
    sys_ = StaticSystem(config.system, config.devices, ctx.expected_comm)
    alloc = optimal_global_batch(sys_, config.law, config.B_max, config.rounding)
    result = {**alloc.to_dict(), "seed": seed, "fading": config.fading,
              "expected_comm": [float(t) for t in ctx.expected_comm]}
    _emit(result, _out_dir(args) / "optimize.json" if args.out else None)
    return 0


def cmd_simulate(args) -> int:
    config = parse_config(args.config)
    policies = [PolicySpec.parse(p) for p in args.policy] if args.policy else None
    results = harness.run_experiment(config, policies, args.seed or None, args.mode)
    summary = harness.summarize(results)
    if args.out:
        d = _out_dir(args)
        harness.write_traces_csv(d / "traces.csv", results)
        (d / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for row in summary:
        print(f"{row['policy']:>16}  runs={row['runs']:<3d} mean_e2e={row['mean_e2e']:.6g}s  "
              f"rounds={row['mean_rounds']:.1f}  rel={row['relative_latency_pct']:.1f}%")
    return 0


def _oracle_instance(raw, base_dir):
    """Either a bare instance or a full experiment config."""
    if "comm_latency" in raw:
        extra = set(raw) - {"compute_speed", "comm_latency", "work_per_sample", "law"}
        if extra:
            raise ConfigError(sorted(extra)[0], "unknown key")
        for key in ("compute_speed", "comm_latency", "law"):
            if key not in raw:
                raise ConfigError(key, "missing required key")
        law = ScalingLaw(**{k: float(raw["law"][k]) for k in ("alpha", "beta", "epsilon")})
        sys_ = StaticSystem.from_arrays(raw["compute_speed"], raw["comm_latency"],
                                        float(raw.get("work_per_sample", 1.0)))
        return sys_, law, None
    config = config_from_dict(raw, base_dir)
    ctx = harness.prepare_seed(config, config.seeds[0])
    return StaticSystem(config.system, config.devices, ctx.expected_comm), config.law, config.B_max


def cmd_oracle(args) -> int:
    path = Path(args.config)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("config", str(exc)) from None
    sys_, law, B_max = _oracle_instance(raw, path.parent)
    if sys_.K > BRUTE_MAX_DEVICES:
        raise ConfigError("devices", f"oracle needs K <= {BRUTE_MAX_DEVICES}, got {sys_.K}")
    best = optimal_global_batch(sys_, law, B_max)
    B_hi = best.extra["B_max"]
    B_oracle = brute_force_global_batch(sys_, law, range(sys_.K, B_hi + 1))
    e_closed, e_oracle = exact_e2e(sys_, law, best.global_batch), exact_e2e(sys_, law, B_oracle)

    quantum = sys_.hw / float(np.min(sys_.speeds))
    checked = mismatches = 0
    for B in range(sys_.K, BRUTE_MAX_BATCH + 1):
        bf = brute_force_allocation(sys_, B).round_latency
        ours = allocate(sys_, B).round_latency
        lo = tau_min(sys_, B)
        checked += 1
        if not (lo - 1e-9 <= bf <= lo + quantum + 1e-9 and ours <= bf + quantum + 1e-9):
            mismatches += 1
    report = {
        "B_star": best.global_batch, "B_oracle": B_oracle, "B_th": batch_threshold(sys_),
        "feasible_floor": feasible_batch_floor(law), "e2e_closed_form": e_closed,
        "e2e_oracle": e_oracle, "e2e_ratio": e_closed / e_oracle,
        "allocations_checked": checked, "allocation_mismatches": mismatches,
        "ok": bool(e_closed <= 1.05 * e_oracle and mismatches == 0),
    }
    _emit(report, _out_dir(args) / "oracle.json" if args.out else None)
    return 0 if report["ok"] else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedbatch", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit the round-batch law from samples or the built-in trainer")
    fit.add_argument("--samples", type=Path, help="CSV with global_batch,rounds columns")
    fit.add_argument("--epsilon", type=float, default=0.05,
                     help="convergence tolerance (default matches the trainer threshold)")
    fit.add_argument("--threshold", type=float, default=0.05)
    fit.add_argument("--batches", type=int, nargs="+", default=list(DEFAULT_FIT_BATCHES))
    fit.add_argument("--trials", type=int, default=20)
    fit.add_argument("--devices", type=int, default=10)
    fit.add_argument("--local-steps", type=int, default=2)
    fit.add_argument("--dim", type=int, default=10)
    fit.add_argument("--noise-var", type=float, default=4.0)
    fit.add_argument("--lr", type=float, default=None)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--out")
    fit.set_defaults(func=cmd_fit)

    for name, func, help_ in (("optimize", cmd_optimize, "closed-form B* and allocation"),
                              ("simulate", cmd_simulate, "seeded policy comparison")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True)
        s.add_argument("--seed", type=int, action="append", help="repeatable; overrides seeds")
        s.add_argument("--out")
        s.set_defaults(func=func)
        if name == "simulate":
            s.add_argument("--policy", action="append",
                           help="e.g. fixed-16, dbfl, uniform_optimal, proposed (repeatable)")
            s.add_argument("--mode", choices=("credit", "trainer"), default="credit")

    o = sub.add_parser("oracle", help="brute-force check of a small instance")
    o.add_argument("--config", required=True)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except FedBatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
