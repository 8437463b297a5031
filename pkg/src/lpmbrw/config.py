"""Experiment configuration: a single JSON file with tagged records for the
offspring, displacement, and perturbation laws, plus the sampling plan.

Ships one preset per regime on the binary-Gaussian branching law with Pareto
perturbations, so each theorem's desk-scale check is one command.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

from . import engine, model, perturbation, stats

__all__ = ["ConfigError", "load_config", "parse_config", "config_hash", "PRESETS", "preset_config"]


class ConfigError(Exception):
    """Invalid configuration; the message carries the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _need(record: dict, path: str, key: str):
    if key not in record:
        raise ConfigError(f"{path}.{key}", "missing required field")
    return record[key]


def _one_tag(record: Any, path: str, allowed: tuple[str, ...]) -> tuple[str, Any]:
    if not isinstance(record, dict) or len(record) != 1:
        raise ConfigError(path, f"expected a single-key tagged record, one of {allowed}")
    tag, body = next(iter(record.items()))
    if tag not in allowed:
        raise ConfigError(f"{path}.{tag}", f"unknown variant; expected one of {allowed}")
    return tag, body


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _parse_offspring(record, path="offspring") -> model.OffspringLaw:
    tag, body = _one_tag(record, path, ("deterministic", "pmf"))
    try:
        if tag == "deterministic":
            if not isinstance(body, int) or isinstance(body, bool):
                raise ConfigError(f"{path}.deterministic", f"expected an integer, got {body!r}")
            return model.OffspringLaw.deterministic(body)
        if not isinstance(body, dict) or not body:
            raise ConfigError(f"{path}.pmf", "expected a non-empty map of count -> probability")
        probs = {}
        for key, p in body.items():
            try:
                k = int(key)
            except (TypeError, ValueError):
                raise ConfigError(f"{path}.pmf.{key}", "count must be an integer") from None
            probs[k] = _number(p, f"{path}.pmf.{key}")
        return model.OffspringLaw.from_probs(probs)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def _parse_displacement(record, path="displacement") -> model.Displacement:
    tag, body = _one_tag(
        record, path, ("point_mass", "two_point", "gaussian", "finite_support")
    )
    try:
        if tag == "point_mass":
            return model.PointMass(_number(_need(body, path, "a"), f"{path}.a"))
        if tag == "two_point":
            return model.TwoPoint(
                _number(_need(body, path, "a"), f"{path}.a"),
                _number(_need(body, path, "b"), f"{path}.b"),
                _number(_need(body, path, "p"), f"{path}.p"),
            )
        if tag == "gaussian":
            return model.Gaussian(
                _number(_need(body, path, "mean"), f"{path}.mean"),
                _number(_need(body, path, "sd"), f"{path}.sd"),
            )
        atoms = _need(body, path, "atoms")
        if not isinstance(atoms, list):
            raise ConfigError(f"{path}.atoms", "expected a list of [value, probability] pairs")
        support = []
        for i, pair in enumerate(atoms):
            if not isinstance(pair, list) or len(pair) != 2:
                raise ConfigError(f"{path}.atoms[{i}]", "expected [value, probability]")
            support.append(
                (_number(pair[0], f"{path}.atoms[{i}][0]"), _number(pair[1], f"{path}.atoms[{i}][1]"))
            )
        return model.FiniteSupport(tuple(support))
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def _parse_perturbation(record, path="perturbation") -> perturbation.PerturbationLaw:
    tag, body = _one_tag(record, path, ("point_mass", "exponential", "log_normal", "pareto"))
    try:
        if tag == "point_mass":
            return perturbation.PointMass(_number(_need(body, path, "a"), f"{path}.a"))
        if tag == "exponential":
            return perturbation.Exponential(_number(_need(body, path, "rate"), f"{path}.rate"))
        if tag == "log_normal":
            return perturbation.LogNormal(
                _number(_need(body, path, "m"), f"{path}.m"),
                _number(_need(body, path, "s"), f"{path}.s"),
            )
        return perturbation.Pareto(
            _number(_need(body, path, "gamma"), f"{path}.gamma"),
            _number(_need(body, path, "x_m"), f"{path}.x_m"),
        )
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def parse_config(raw: dict) -> stats.ExperimentConfig:
    """Validate a config dict and build the experiment objects.

    theta may be the string "boundary", resolved to the exact boundary value
    theta0 / gamma computed from the same analytic layer the classifier
    uses, so the boundary preset lands inside the classifier's tolerance.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config", "top level must be an object")
    spec = model.BranchingSpec(
        _parse_offspring(_need(raw, "config", "offspring")),
        _parse_displacement(_need(raw, "config", "displacement")),
    )
    mu = _parse_perturbation(_need(raw, "config", "perturbation"))

    theta_raw = _need(raw, "config", "theta")
    if theta_raw == "boundary":
        th0 = model.theta0(spec)
        if th0 is None:
            raise ConfigError("theta", "boundary requested but theta0 is infinite")
        tail = perturbation.tail_params(mu)
        if not tail.is_regularly_varying:
            raise ConfigError("theta", "boundary requested but mu has no regularly varying tail")
        theta = th0 / tail.gamma
    else:
        theta = _number(theta_raw, "theta")
        if theta <= 0:
            raise ConfigError("theta", "must be positive")

    n_grid = raw.get("n_grid", [8, 12, 16, 20])
    if not isinstance(n_grid, list) or not all(isinstance(n, int) and n >= 1 for n in n_grid):
        raise ConfigError("n_grid", "expected a list of positive integers")

    budget_raw = raw.get("budget", {})
    if not isinstance(budget_raw, dict):
        raise ConfigError("budget", "expected an object")
    try:
        budget = engine.SimBudget(
            int(budget_raw.get("max_population", 1 << 24)),
            int(budget_raw.get("max_depth", 64)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError("budget", str(exc)) from exc

    def _int(key, default, minimum=1):
        value = raw.get(key, default)
        if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
            raise ConfigError(key, f"expected an integer >= {minimum}")
        return value

    ks_n = raw.get("ks_n")
    if ks_n is not None and (not isinstance(ks_n, int) or ks_n < 1):
        raise ConfigError("ks_n", "expected a positive integer")

    try:
        return stats.ExperimentConfig(
            spec=spec,
            mu=mu,
            theta=theta,
            n_grid=tuple(n_grid),
            replicas=_int("replicas", 2000),
            seed=_int("seed", 20260808, minimum=0),
            budget=budget,
            n_mart=_int("n_mart", 16),
            mixing_replicas=_int("mixing_replicas", 2000),
            threads=_int("threads", 1),
            ks_n=ks_n,
            independent_per_n=bool(raw.get("independent_per_n", False)),
            override_audit=bool(raw.get("override_audit", False)),
        )
    except ValueError as exc:
        raise ConfigError("config", str(exc)) from exc


def load_config(path: str) -> tuple[stats.ExperimentConfig, dict]:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(path, f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(path, f"invalid JSON: {exc}") from exc
    return parse_config(raw), raw


def config_hash(raw: dict) -> str:
    """Hash of the canonical JSON serialization; stable under key reordering."""
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


_BASE_PRESET = {
    "offspring": {"deterministic": 2},
    "displacement": {"gaussian": {"mean": 0.0, "sd": 1.0}},
    "perturbation": {"pareto": {"gamma": 0.5, "x_m": 1.0}},
    "n_grid": [8, 12, 16, 20],
    "replicas": 2000,
    "seed": 20260808,
    "n_mart": 16,
    "mixing_replicas": 2000,
    "ks_n": 14,
}

PRESETS: dict[str, dict] = {
    "below": {**_BASE_PRESET, "theta": 1.0},
    "boundary": {**_BASE_PRESET, "theta": "boundary"},
    "above": {**_BASE_PRESET, "theta": 4.0},
}


def preset_config(name: str) -> tuple[stats.ExperimentConfig, dict]:
    if name not in PRESETS:
        raise ConfigError("preset", f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    raw = json.loads(json.dumps(PRESETS[name]))
    return parse_config(raw), raw
