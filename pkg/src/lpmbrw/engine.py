"""Monte Carlo core: grows one branching random walk realization to a target
generation and reports the rightmost position, the mark-weighted partition
sum, the additive and derivative martingales, and both routes to the
perturbed rightmost position.

The tree is grown one generation at a time with the whole level held as a
numpy array; each level's work is a handful of vectorized passes, so a
million-leaf generation costs milliseconds.  All partition sums are
accumulated in the log domain (max-subtraction), so positions with
theta * S in the hundreds of units never overflow.

Randomness is split into three independent substreams per replica (tree
growth, leaf marks, exponential noise), and the mark / noise streams are
keyed by generation, so the statistics recorded at generation n are the same
whether or not earlier generations were also recorded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import model, perturbation

__all__ = [
    "SimBudget",
    "GenStats",
    "BudgetExceeded",
    "run_generation",
    "sample_rstar_direct",
    "sample_rstar_coupled",
    "martingale_trajectory",
    "derive_seed",
]


@dataclass(frozen=True)
class SimBudget:
    """Hard caps on the simulation; exceeding them raises, never truncates."""

    max_population: int = 1 << 24
    max_depth: int = 64

    def __post_init__(self):
        if self.max_population < 1 or self.max_depth < 1:
            raise ValueError("budget fields must be positive")


class BudgetExceeded(Exception):
    """Raised when the population or depth would exceed the budget."""

    def __init__(self, n: int, population: int, budget: SimBudget):
        self.n = n
        self.population = population
        self.budget = budget
        super().__init__(
            f"generation {n}: population {population} exceeds budget "
            f"(max_population={budget.max_population}, max_depth={budget.max_depth})"
        )


@dataclass
class GenStats:
    """Summary of one replica at one generation.

    log_y_n maps theta to log of the mark-weighted sum of e^(theta S_v) over
    the generation; w_n maps theta to the additive martingale value; d_n is
    the derivative martingale at the critical parameter (None when the
    critical parameter is infinite).  rstar_direct / rstar_coupled are the
    two routes to the perturbed rightmost position at thetas[0] (None when no
    perturbation law was supplied).
    """

    n: int
    population: int
    r_n: float
    log_y_n: dict[float, float]
    w_n: dict[float, float]
    d_n: float | None
    rstar_direct: float | None
    rstar_coupled: float | None


def derive_seed(seed: int, *key: int) -> int:
    """Deterministic 128-bit sub-seed for a keyed independent stream."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))
    return int.from_bytes(ss.generate_state(4, np.uint32).tobytes(), "little")


def _streams(seed: int):
    root = np.random.SeedSequence(seed)
    return root.spawn(3)  # tree, marks, noise


def _keyed(ss: np.random.SeedSequence, *key: int) -> np.random.Generator:
    child = np.random.SeedSequence(entropy=ss.entropy, spawn_key=ss.spawn_key + tuple(key))
    return np.random.default_rng(child)


def _logsumexp(a: np.ndarray) -> float:
    m = a.max()
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.exp(a - m).sum()))


def _collect(
    S: np.ndarray,
    level: int,
    thetas: tuple[float, ...],
    nu_map: dict[float, float],
    th0: float | None,
    nu0: float | None,
    mu,
    mark_ss,
    noise_ss,
) -> GenStats:
    pop = S.size
    r_n = float(S.max())

    w_n: dict[float, float] = {}
    for th in thetas:
        log_z = _logsumexp(th * S)
        w_n[th] = float(np.exp(log_z - level * nu_map[th]))

    d_n = None
    if th0 is not None:
        x = th0 * S - level * nu0
        m = x.max()
        d_n = float(-np.exp(m) * (x * np.exp(x - m)).sum())

    log_y_n: dict[float, float] = {}
    rstar_direct = rstar_coupled = None
    if mu is not None:
        theta_star = thetas[0]
        log_marks = mu.sample_log(_keyed(mark_ss, level), pop)
        for th in thetas:
            log_y_n[th] = _logsumexp(th * S + log_marks)
        log_e = np.log(_keyed(noise_ss, level, 0).standard_exponential(pop))
        rstar_direct = float((S + (log_marks - log_e) / theta_star).max())
        e_coupled = float(_keyed(noise_ss, level, 1).standard_exponential())
        rstar_coupled = (log_y_n[theta_star] - math.log(e_coupled)) / theta_star

    return GenStats(level, pop, r_n, log_y_n, w_n, d_n, rstar_direct, rstar_coupled)


def _simulate(
    spec: model.BranchingSpec,
    mu,
    thetas: tuple[float, ...],
    record: tuple[int, ...],
    seed: int,
    budget: SimBudget,
) -> list[GenStats]:
    if not thetas:
        raise ValueError("thetas must be non-empty")
    if any(th <= 0 for th in thetas):
        raise ValueError("thetas must be positive")
    record = tuple(sorted(set(record)))
    if record[0] < 0:
        raise ValueError("generations must be >= 0")
    n_max = record[-1]
    if n_max > budget.max_depth:
        raise BudgetExceeded(n_max, 0, budget)

    nu_map = {th: model.nu(spec, th) for th in thetas}
    th0 = model.theta0(spec)
    nu0 = model.nu(spec, th0) if th0 is not None else None

    tree_ss, mark_ss, noise_ss = _streams(seed)
    tree_rng = np.random.default_rng(tree_ss)

    out: list[GenStats] = []
    S = np.zeros(1)
    if record[0] == 0:
        out.append(_collect(S, 0, thetas, nu_map, th0, nu0, mu, mark_ss, noise_ss))
    want = set(record)
    for level in range(1, n_max + 1):
        counts = spec.offspring.sample_counts(tree_rng, S.size)
        total = int(counts.sum())
        if total > budget.max_population:
            raise BudgetExceeded(level, total, budget)
        S = np.repeat(S, counts) + spec.displacement.sample(tree_rng, total)
        if level in want:
            out.append(_collect(S, level, thetas, nu_map, th0, nu0, mu, mark_ss, noise_ss))
    return out


def run_generation(
    spec: model.BranchingSpec,
    mu: "perturbation.PerturbationLaw | None",
    thetas,
    n: int,
    seed: int,
    budget: SimBudget = SimBudget(),
) -> GenStats:
    """Grow one replica to generation n and summarize it.

    Deterministic in (spec, mu, thetas, n, seed, budget).
    """
    return _simulate(spec, mu, tuple(thetas), (n,), seed, budget)[0]


def sample_rstar_direct(spec, mu, theta: float, n: int, seed: int, budget=SimBudget()) -> float:
    """Perturbed rightmost position: max over leaves of S_v + (log(Y_v/E_v))/theta."""
    return run_generation(spec, mu, (theta,), n, seed, budget).rstar_direct


def sample_rstar_coupled(spec, mu, theta: float, n: int, seed: int, budget=SimBudget()) -> float:
    """Perturbed rightmost position via the distributional identity
    theta R*_n = log of the mark-weighted partition sum minus log E,
    with one fresh exponential E independent of the tree and the marks."""
    return run_generation(spec, mu, (theta,), n, seed, budget).rstar_coupled


def martingale_trajectory(
    spec: model.BranchingSpec,
    thetas,
    n_max: int,
    seed: int,
    budget: SimBudget = SimBudget(),
    mu=None,
    record=None,
) -> list[GenStats]:
    """Grow one tree once and report statistics along the same realization.

    By default every generation 1..n_max is recorded; pass record to restrict
    to a subset (the recorded values at a generation do not depend on which
    other generations were recorded).
    """
    ns = tuple(record) if record is not None else tuple(range(1, n_max + 1))
    return _simulate(spec, mu, tuple(thetas), ns, seed, budget)
