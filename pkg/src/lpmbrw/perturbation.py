"""The perturbation law: leaf marks Y, the full leaf perturbation
(log(Y/E))/theta, and analytic tail metadata.

The regularly-varying case is realized exactly by the Pareto family, whose
survival function is a pure power beyond the threshold, so the tail constant
feeding the stable limit laws is analytic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PointMass",
    "Exponential",
    "LogNormal",
    "Pareto",
    "PerturbationLaw",
    "TailReport",
    "sample_y",
    "sample_perturbation",
    "tail_params",
    "pareto_icdf",
]


def pareto_icdf(u, gamma: float, x_m: float):
    """Inverse survival map u -> x_m * u^(-1/gamma), u in (0, 1]."""
    return x_m * np.asarray(u) ** (-1.0 / gamma)


@dataclass(frozen=True)
class PointMass:
    """Y = a almost surely (a > 0)."""

    a: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"perturbation.point_mass.a: {self.a!r} must be > 0")

    def sample(self, rng, size):
        return np.full(size, self.a)

    def sample_log(self, rng, size):
        return np.full(size, math.log(self.a))


@dataclass(frozen=True)
class Exponential:
    """Exponential with the given rate."""

    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"perturbation.exponential.rate: {self.rate!r} must be > 0")

    def sample(self, rng, size):
        return rng.standard_exponential(size) / self.rate

    def sample_log(self, rng, size):
        return np.log(self.sample(rng, size))


@dataclass(frozen=True)
class LogNormal:
    """exp(m + s * N(0,1))."""

    m: float
    s: float

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"perturbation.log_normal.s: {self.s!r} must be > 0")

    def sample_log(self, rng, size):
        return self.m + self.s * rng.standard_normal(size)

    def sample(self, rng, size):
        return np.exp(self.sample_log(rng, size))


@dataclass(frozen=True)
class Pareto:
    """Survival (x_m / x)^gamma beyond x_m, with gamma in (0, 1).

    The tail condition x^gamma (1 - F(x)) -> c_+ holds exactly, with
    c_+ = x_m^gamma, and E[Y^gamma] is infinite while every lower moment is
    finite.
    """

    gamma: float
    x_m: float

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"perturbation.pareto.gamma: {self.gamma!r} must be in (0, 1)")
        if not self.x_m > 0:
            raise ValueError(f"perturbation.pareto.x_m: {self.x_m!r} must be > 0")

    def _uniform(self, rng, size):
        # map [0,1) draws to (0,1] so the power map never produces inf
        return 1.0 - rng.random(size)

    def sample(self, rng, size):
        return pareto_icdf(self._uniform(rng, size), self.gamma, self.x_m)

    def sample_log(self, rng, size):
        return math.log(self.x_m) - np.log(self._uniform(rng, size)) / self.gamma

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < self.x_m, 0.0, 1.0 - (self.x_m / np.maximum(x, self.x_m)) ** self.gamma)


PerturbationLaw = PointMass | Exponential | LogNormal | Pareto


@dataclass(frozen=True)
class TailReport:
    """Tail classification of a perturbation law.

    finite_moment_sup is the supremum of r with E[Y^r] finite; for the
    regularly varying case the moment at the index itself already diverges.
    """

    is_regularly_varying: bool
    gamma: float | None
    c_plus: float | None
    finite_moment_sup: float


def tail_params(law: PerturbationLaw) -> TailReport:
    if isinstance(law, Pareto):
        return TailReport(True, law.gamma, law.x_m**law.gamma, law.gamma)
    return TailReport(False, None, None, math.inf)


def sample_y(law: PerturbationLaw, rng: np.random.Generator, size: int | None = None):
    """Draw from the perturbation law; scalar when size is None."""
    out = law.sample(rng, 1 if size is None else size)
    return float(out[0]) if size is None else out


def sample_perturbation(
    law: PerturbationLaw, theta: float, rng: np.random.Generator, size: int | None = None
):
    """One full leaf perturbation (log Y - log E) / theta.

    E is standard exponential, drawn from the same stream immediately after
    Y and therefore independent of it.
    """
    if not theta > 0:
        raise ValueError("theta must be positive")
    n = 1 if size is None else size
    log_y = law.sample_log(rng, n)
    log_e = np.log(rng.standard_exponential(n))
    out = (log_y - log_e) / theta
    return float(out[0]) if size is None else out
