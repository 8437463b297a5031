"""Batch operator surface: config-driven subcommands emitting tables,
plot-ready CSV, and verification reports.

Exit codes partition the error classes for scripting: 2 config parse or
invariant, 3 model-level refusal (infinite critical parameter, violated
theorem hypothesis), 4 simulation budget, 5 verification verdict failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import math
import os
import sys

import numpy as np

from . import __version__, config, engine, limitlaw, model, perturbation, stats

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_BUDGET = 4
EXIT_VERIFY = 5


def _load(args) -> tuple[stats.ExperimentConfig, dict]:
    if args.preset:
        cfg, raw = config.preset_config(args.preset)
    else:
        cfg, raw = config.load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.replicas is not None:
        overrides["replicas"] = args.replicas
    threads = args.threads
    if threads is None:
        env = os.environ.get("LPMBRW_THREADS")
        threads = int(env) if env else None
    if threads is not None:
        overrides["threads"] = threads
    if overrides:
        raw = {**raw, **overrides}
        cfg = config.parse_config(raw)
    return cfg, raw


def _table(rows: list[tuple[str, str]]) -> str:
    width = max(len(name) for name, _ in rows)
    return "\n".join(f"{name.ljust(width)}  {val}" for name, val in rows)


def cmd_constants(args) -> int:
    cfg, raw = _load(args)
    report = model.cumulant_report(cfg.spec)
    tail = perturbation.tail_params(cfg.mu)
    if report.theta0 is None:
        print("error: theta0 infinite for this spec (no boundary/above regime exists)", file=sys.stderr)
        return EXIT_MODEL
    try:
        regime = model.classify_regime(cfg.spec, cfg.mu, cfg.theta)
    except model.UnclassifiableRegime as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL

    k = limitlaw.k_constant(tail.gamma, tail.c_plus) if tail.is_regularly_varying else None
    payload = {
        "theta0": report.theta0,
        "nu_at_theta0": report.nu_at_theta0,
        "slope": report.slope,
        "sigma_sq": report.sigma_sq,
        "c_inf": report.c_inf,
        "tail": {
            "regularly_varying": tail.is_regularly_varying,
            "gamma": tail.gamma,
            "c_plus": tail.c_plus,
            "finite_moment_sup": None if math.isinf(tail.finite_moment_sup) else tail.finite_moment_sup,
        },
        "k": k,
        "regime": {
            "regime": regime.regime,
            "alpha": regime.alpha,
            "c_log": regime.c_log,
            "theta": regime.theta,
            "vartheta": regime.vartheta,
        },
    }
    rows = [
        ("theta0", f"{report.theta0:.9f}"),
        ("nu(theta0)", f"{report.nu_at_theta0:.9f}"),
        ("slope nu(theta0)/theta0", f"{report.slope:.9f}"),
        ("sigma_sq", f"{report.sigma_sq:.9f}"),
        ("c_inf", f"{report.c_inf:.9f}"),
        ("tail", "regularly varying" if tail.is_regularly_varying else "all moments finite"),
        ("k", f"{k:.9f}" if k is not None else "n/a"),
        ("regime", regime.regime),
        ("alpha", f"{regime.alpha:.9f}"),
        ("c_log", f"{regime.c_log:.9f}"),
        ("vartheta", f"{regime.vartheta:.9f}"),
    ]
    print(_table(rows))
    print(json.dumps(payload, sort_keys=True))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "constants.json"), "w") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
    return EXIT_OK


def _write_manifest(out_dir: str, raw: dict, cfg, outputs: list[str]) -> None:
    manifest = {
        "config_hash": config.config_hash(raw),
        "seed": cfg.seed,
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": sorted(outputs),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)


def cmd_simulate(args) -> int:
    cfg, raw = _load(args)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    try:
        regime = model.classify_regime(cfg.spec, cfg.mu, cfg.theta)
    except model.UnclassifiableRegime as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    try:
        rows = stats.run_replicas(
            cfg.spec, cfg.mu, (cfg.theta,), cfg.n_grid, cfg.replicas, cfg.seed,
            cfg.budget, cfg.threads,
        )
        ks_n = cfg.ks_n if cfg.ks_n is not None else cfg.n_grid[-1]
        sampler, _ = stats.build_regime_limit_sampler(cfg, regime, ks_n)
    except engine.BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET

    gen_path = os.path.join(out_dir, "gen_stats.csv")
    with open(gen_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["replica", "n", "population", "r_n", "theta", "log_y_n", "w_n", "d_n",
             "rstar_direct", "rstar_coupled"]
        )
        for i, row in enumerate(rows):
            for gs in row:
                for theta in sorted(gs.w_n):
                    writer.writerow(
                        [i, gs.n, gs.population, repr(gs.r_n), repr(theta),
                         repr(gs.log_y_n.get(theta)), repr(gs.w_n[theta]),
                         repr(gs.d_n) if gs.d_n is not None else "",
                         repr(gs.rstar_direct), repr(gs.rstar_coupled)]
                    )

    centered_path = os.path.join(out_dir, "centered_samples.csv")
    with open(centered_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replica", "n", "rstar_coupled", "centered"])
        for i, row in enumerate(rows):
            for gs in row:
                centered = gs.rstar_coupled - (regime.alpha * gs.n + regime.c_log * math.log(gs.n))
                writer.writerow([i, gs.n, repr(gs.rstar_coupled), repr(centered)])

    limit_path = os.path.join(out_dir, "limit_samples.csv")
    rng = np.random.default_rng(engine.derive_seed(cfg.seed, 2, 0))
    draws = limitlaw.sample_limit_rstar(sampler, rng, size=cfg.replicas)
    with open(limit_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "limit_rstar"])
        for i, v in enumerate(draws):
            writer.writerow([i, repr(float(v))])

    _write_manifest(out_dir, raw, cfg, [gen_path, centered_path, limit_path])
    print(f"wrote {gen_path}, {centered_path}, {limit_path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg, raw = _load(args)
    try:
        report = stats.run_experiment(cfg)
    except stats.RefusalError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except model.UnclassifiableRegime as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except engine.BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET

    blob = json.dumps(report.as_dict(), sort_keys=True, indent=2)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "report.json")
        with open(path, "w") as fh:
            fh.write(blob + "\n")
        _write_manifest(args.out, raw, cfg, [path])

    print(f"regime    {report.regime.regime} (alpha={report.regime.alpha:.6f}, "
          f"c_log={report.regime.c_log:.6f})")
    print(f"slope     {report.slope_hat:.6f} +- {report.slope_se:.6f} "
          f"(target {report.slope_target:.6f})")
    if report.c_log_hat is not None:
        print(f"c_log     {report.c_log_hat:.4f} +- {report.c_log_se:.4f} "
              f"(theorem value {report.c_log_target:.4f})")
    print(f"ks        D={report.ks_stat:.4f} p={report.ks_p:.5f} at n={report.ks_n}")
    for name, ok in report.verdicts.items():
        print(f"verdict   {name}: {'pass' if ok else 'FAIL'}")
    if not args.out:
        print(blob)
    if report.passed():
        return EXIT_OK
    print("failed criteria: " + ", ".join(n for n, ok in report.verdicts.items() if not ok),
          file=sys.stderr)
    return EXIT_VERIFY


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lpmbrw",
        description="Branching random walk with last-progeny perturbations: "
        "analytic constants, simulation, and statistical verification.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("constants", cmd_constants), ("simulate", cmd_simulate), ("verify", cmd_verify)):
        p = sub.add_parser(name)
        group = p.add_mutually_exclusive_group(required=True)
        group.add_argument("--config", help="path to a JSON experiment config")
        group.add_argument("--preset", choices=sorted(config.PRESETS),
                           help="built-in regime preset")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--replicas", type=int, help="override the replica count")
        p.add_argument("--threads", type=int,
                       help="worker processes (default: LPMBRW_THREADS or 1)")
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except config.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
