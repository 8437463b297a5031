"""Analytic layer: cumulant transform of one brood, the critical parameter,
variance constants, assumption audit, and regime classification.

Everything here is closed form.  The displacement catalog is restricted to
laws whose moment generating function is available analytically, so the
critical parameter and every downstream centering constant carry no
quadrature error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import perturbation

__all__ = [
    "OffspringLaw",
    "PointMass",
    "TwoPoint",
    "Gaussian",
    "FiniteSupport",
    "Displacement",
    "BranchingSpec",
    "CumulantReport",
    "AssumptionReport",
    "RegimeSpec",
    "UnclassifiableRegime",
    "REGIME_BELOW",
    "REGIME_BOUNDARY",
    "REGIME_ABOVE",
    "nu",
    "nu_prime",
    "nu_second",
    "theta0",
    "sigma_sq_cinf",
    "cumulant_report",
    "audit",
    "classify_regime",
]

THETA0_TOL = 1e-10
THETA0_BRACKET_CAP = 1e6
BOUNDARY_REL_TOL = 1e-9

REGIME_BELOW = "below"
REGIME_BOUNDARY = "boundary"
REGIME_ABOVE = "above"

HOLDS = "holds"
FAILS = "fails"
UNKNOWN = "unknown"


class UnclassifiableRegime(Exception):
    """The (theta, mu) pair is outside the classified parameter range."""


# ---------------------------------------------------------------------------
# offspring
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OffspringLaw:
    """Offspring count distribution, a finite pmf on {1, 2, ...}.

    Zero offspring is structurally excluded: the population survives with
    probability one.
    """

    pmf: tuple[tuple[int, float], ...]

    def __post_init__(self):
        if not self.pmf:
            raise ValueError("offspring.pmf: must be non-empty")
        total = 0.0
        for k, p in self.pmf:
            if not isinstance(k, int) or k < 1:
                raise ValueError(f"offspring.pmf: count {k!r} must be an integer >= 1")
            if not 0.0 < p <= 1.0:
                raise ValueError(f"offspring.pmf: probability {p!r} for count {k} not in (0, 1]")
            total += p
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"offspring.pmf: probabilities sum to {total!r}, expected 1")

    @classmethod
    def deterministic(cls, k: int) -> "OffspringLaw":
        return cls(((k, 1.0),))

    @classmethod
    def from_probs(cls, probs: dict[int, float]) -> "OffspringLaw":
        return cls(tuple(sorted(probs.items())))

    @property
    def mean(self) -> float:
        return sum(k * p for k, p in self.pmf)

    @property
    def max_count(self) -> int:
        return max(k for k, _ in self.pmf)

    def sample_counts(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Vectorized draw of offspring counts for one generation."""
        if len(self.pmf) == 1:
            return np.full(size, self.pmf[0][0], dtype=np.int64)
        values = np.array([k for k, _ in self.pmf], dtype=np.int64)
        cum = np.cumsum([p for _, p in self.pmf])
        idx = np.searchsorted(cum, rng.random(size), side="right")
        return values[np.minimum(idx, len(values) - 1)]


# ---------------------------------------------------------------------------
# displacement catalog
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PointMass:
    """Deterministic displacement by a."""

    a: float

    def log_mgf(self, t: float) -> float:
        return t * self.a

    def log_mgf_prime(self, t: float) -> float:
        return self.a

    def log_mgf_second(self, t: float) -> float:
        return 0.0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.full(size, self.a)

    @property
    def atoms(self):
        return (self.a,)


@dataclass(frozen=True)
class TwoPoint:
    """Displacement a with probability p, else b."""

    a: float
    b: float
    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError(f"displacement.two_point.p: {self.p!r} not in (0, 1)")

    def _weights(self, t):
        # softmax of (log p + t a, log q + t b), stable for large |t|
        la = math.log(self.p) + t * self.a
        lb = math.log(1.0 - self.p) + t * self.b
        m = max(la, lb)
        wa, wb = math.exp(la - m), math.exp(lb - m)
        s = wa + wb
        return wa / s, wb / s, m + math.log(s)

    def log_mgf(self, t: float) -> float:
        return self._weights(t)[2]

    def log_mgf_prime(self, t: float) -> float:
        wa, wb, _ = self._weights(t)
        return wa * self.a + wb * self.b

    def log_mgf_second(self, t: float) -> float:
        wa, wb, _ = self._weights(t)
        m1 = wa * self.a + wb * self.b
        return wa * self.a**2 + wb * self.b**2 - m1 * m1

    def sample(self, rng, size):
        return np.where(rng.random(size) < self.p, self.a, self.b)

    @property
    def atoms(self):
        return (self.a, self.b)


@dataclass(frozen=True)
class Gaussian:
    """Gaussian displacement."""

    mean: float
    sd: float

    def __post_init__(self):
        if not self.sd > 0:
            raise ValueError(f"displacement.gaussian.sd: {self.sd!r} must be > 0")

    def log_mgf(self, t: float) -> float:
        return t * self.mean + 0.5 * (t * self.sd) ** 2

    def log_mgf_prime(self, t: float) -> float:
        return self.mean + t * self.sd**2

    def log_mgf_second(self, t: float) -> float:
        return self.sd**2

    def sample(self, rng, size):
        return self.mean + self.sd * rng.standard_normal(size)

    @property
    def atoms(self):
        return None


@dataclass(frozen=True)
class FiniteSupport:
    """Displacement on finitely many atoms, ((value, prob), ...)."""

    support: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.support) < 1:
            raise ValueError("displacement.finite_support: needs at least one atom")
        total = sum(p for _, p in self.support)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"displacement.finite_support: probabilities sum to {total!r}")
        if any(p <= 0 for _, p in self.support):
            raise ValueError("displacement.finite_support: probabilities must be positive")

    def _tilted(self, t):
        xs = np.array([x for x, _ in self.support])
        logs = np.log([p for _, p in self.support]) + t * xs
        m = logs.max()
        w = np.exp(logs - m)
        s = w.sum()
        return xs, w / s, m + math.log(s)

    def log_mgf(self, t: float) -> float:
        return self._tilted(t)[2]

    def log_mgf_prime(self, t: float) -> float:
        xs, w, _ = self._tilted(t)
        return float(w @ xs)

    def log_mgf_second(self, t: float) -> float:
        xs, w, _ = self._tilted(t)
        m1 = w @ xs
        return float(w @ xs**2 - m1 * m1)

    def sample(self, rng, size):
        xs = np.array([x for x, _ in self.support])
        cum = np.cumsum([p for _, p in self.support])
        idx = np.searchsorted(cum, rng.random(size), side="right")
        return xs[np.minimum(idx, len(xs) - 1)]

    @property
    def atoms(self):
        return tuple(x for x, _ in self.support)


Displacement = PointMass | TwoPoint | Gaussian | FiniteSupport


@dataclass(frozen=True)
class BranchingSpec:
    """One reproduction step: offspring count and i.i.d. child displacements.

    Children are displaced independently of each other and of the count, so
    the brood cumulant splits as log E[N] + log E[e^(t xi)].  All catalog
    displacements have an entire moment generating function.
    """

    offspring: OffspringLaw
    displacement: Displacement


# ---------------------------------------------------------------------------
# cumulants
# ---------------------------------------------------------------------------


def nu(spec: BranchingSpec, theta: float) -> float:
    """Log of the expected sum of e^(theta * displacement) over one brood."""
    return math.log(spec.offspring.mean) + spec.displacement.log_mgf(theta)


def nu_prime(spec: BranchingSpec, theta: float) -> float:
    """Derivative of nu; equals the mean displacement under the tilted law."""
    return spec.displacement.log_mgf_prime(theta)


def nu_second(spec: BranchingSpec, theta: float) -> float:
    """Second derivative of nu; the tilted displacement variance."""
    return spec.displacement.log_mgf_second(theta)


def _gap(spec: BranchingSpec, theta: float) -> float:
    # theta * nu'(theta) - nu(theta); nondecreasing in theta since its
    # derivative is theta * nu''(theta) >= 0
    return theta * nu_prime(spec, theta) - nu(spec, theta)


@lru_cache(maxsize=None)
def theta0(spec: BranchingSpec, tol: float = THETA0_TOL) -> float | None:
    """Smallest theta > 0 where nu(theta) = theta * nu'(theta).

    Solved by bisection on the nondecreasing gap theta * nu' - nu, with the
    bracket grown geometrically from [tol, 1].  Returns None when the gap
    stays negative up to the bracket cap, signalling an infinite critical
    parameter (e.g. deterministic displacement); callers must not run
    boundary or above-boundary experiments in that case.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    lo, hi = tol, 1.0
    # demand a genuinely positive gap before bisecting: laws with bounded
    # maximal displacement have a gap rising to 0 only asymptotically, which
    # floating point flattens to exact zeros with no root to find
    while _gap(spec, hi) < tol:
        lo = hi
        hi *= 2.0
        if hi > THETA0_BRACKET_CAP:
            return None
    if _gap(spec, lo) > tol:
        # root lies below the smallest probed theta; report the left edge
        return lo
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        g = _gap(spec, mid)
        if abs(g) <= tol:
            return mid
        if g < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def sigma_sq_cinf(spec: BranchingSpec) -> tuple[float, float]:
    """Tilted second-moment constant and the matching n^(1/2)-norming constant.

    sigma^2 is the brood expectation of (theta0 * xi - nu(theta0))^2 under the
    e^(theta0 xi - nu) tilt; evaluated via closed-form tilted moments.  The
    companion constant is sqrt(2 / (pi sigma^2)).
    """
    th0 = theta0(spec)
    if th0 is None:
        raise ValueError("sigma_sq_cinf: critical parameter is infinite for this spec")
    v = nu(spec, th0)
    m1 = nu_prime(spec, th0)
    m2 = nu_second(spec, th0) + m1 * m1
    sigma_sq = th0 * th0 * m2 - 2.0 * th0 * v * m1 + v * v
    c_inf = math.sqrt(2.0 / (math.pi * sigma_sq))
    return sigma_sq, c_inf


@dataclass(frozen=True)
class CumulantReport:
    """Analytic constants of a branching spec."""

    theta0: float | None
    nu_at_theta0: float | None
    slope: float | None  # nu(theta0) / theta0, the velocity of the front
    sigma_sq: float | None
    c_inf: float | None


def cumulant_report(spec: BranchingSpec) -> CumulantReport:
    th0 = theta0(spec)
    if th0 is None:
        return CumulantReport(None, None, None, None, None)
    v = nu(spec, th0)
    s2, ci = sigma_sq_cinf(spec)
    return CumulantReport(th0, v, v / th0, s2, ci)


# ---------------------------------------------------------------------------
# assumption audit
# ---------------------------------------------------------------------------


def _commensurable(atoms: tuple[float, ...]) -> bool | None:
    """Whether all atoms lie on a common lattice s*Z (s > 0).

    True/False when certified analytically; None when floating point cannot
    decide (irrational-looking ratios).
    """
    nonzero = [a for a in atoms if a != 0.0]
    if not nonzero:
        return True  # all mass at 0, inside every lattice
    base = nonzero[0]
    certified = True
    for a in nonzero[1:]:
        r = a / base
        # only small-denominator fits at near machine precision count as
        # rational; a large-denominator fit can approximate any real
        frac = Fraction(r).limit_denominator(10**4)
        if abs(r - float(frac)) > 1e-12 * max(1.0, abs(r)):
            certified = False
    return True if certified else None


@dataclass(frozen=True)
class AssumptionReport:
    """Tri-state flags for every hypothesis the verified theorems use."""

    flags: tuple[tuple[str, str], ...]
    reasons: tuple[tuple[str, str], ...]

    def flag(self, name: str) -> str:
        return dict(self.flags)[name]

    def reason(self, name: str) -> str:
        return dict(self.reasons).get(name, "")

    def as_dict(self) -> dict[str, str]:
        return dict(self.flags)


def audit(spec: BranchingSpec, mu: "perturbation.PerturbationLaw", theta: float) -> AssumptionReport:
    """Evaluate every assumption analytically for the catalog laws.

    Uncertainty is reported as "unknown", never guessed.
    """
    flags: dict[str, str] = {}
    reasons: dict[str, str] = {}

    def put(name, state, why):
        flags[name] = state
        reasons[name] = why

    put("survival", HOLDS, "offspring pmf has no zero atom by construction")
    put("nu_finite", HOLDS, "catalog displacement mgf is entire")

    tail = perturbation.tail_params(mu)
    if tail.is_regularly_varying:
        put("H", HOLDS, f"exact power tail: x^gamma (1-F(x)) = {tail.c_plus:g} for x >= threshold")
    else:
        put("H", FAILS, "all polynomial moments finite, tail not regularly varying with index in (0,1)")

    put(
        "mu_positive_support",
        HOLDS,
        "catalog perturbation laws are supported in (0, inf) by construction",
    )
    if isinstance(mu, perturbation.PointMass):
        put("mu_not_degenerate", FAILS, "mu is concentrated on a single point")
    else:
        put("mu_not_degenerate", HOLDS, "mu has non-degenerate support")

    # Second-moment and x log x conditions for the derivative martingale.
    # Bounded-support and Gaussian displacements have every exponential
    # moment, which dominates the squared and log-power moments; the
    # offspring count is bounded.
    th0 = theta0(spec)
    if th0 is None:
        put("L1", UNKNOWN, "critical parameter infinite; condition not applicable")
        put("L2", UNKNOWN, "critical parameter infinite; condition not applicable")
    else:
        put("L1", HOLDS, "finite exponential moments of the displacement, bounded offspring")
        put("L2", HOLDS, "finite exponential moments of the displacement, bounded offspring")

    put("biggins_condition", HOLDS, "one-brood weighted sum has all moments for catalog laws")

    atoms = spec.displacement.atoms
    if atoms is None:
        put("non_lattice", HOLDS, "displacement has a density")
    else:
        lattice = _commensurable(atoms)
        if lattice is True:
            put("non_lattice", FAILS, "displacement atoms lie on a common lattice s*Z")
        else:
            put("non_lattice", UNKNOWN, "cannot certify incommensurability in floating point")

    if th0 is None:
        put("finite_r_moment_lln", UNKNOWN, "critical parameter infinite")
        put("finite_r_moment_above", UNKNOWN, "critical parameter infinite")
    else:
        ratio = th0 / theta
        sup = tail.finite_moment_sup
        put(
            "finite_r_moment_lln",
            HOLDS if sup >= ratio else FAILS,
            f"E[Y^r] finite for r < {sup:g}, needs all r < {ratio:.6g}",
        )
        put(
            "finite_r_moment_above",
            HOLDS if sup > ratio else FAILS,
            f"E[Y^r] finite for r < {sup:g}, needs some r > {ratio:.6g}",
        )

    return AssumptionReport(tuple(flags.items()), tuple(reasons.items()))


# ---------------------------------------------------------------------------
# regime classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegimeSpec:
    """Classified regime with its centering constants.

    alpha is the linear centering per step and c_log the coefficient of
    log n in the centering alpha*n + c_log*log n.  vartheta is the stability
    index of the skewed-stable factor of the limit law: the perturbation tail
    index below and at the boundary, and the ratio of the critical parameter
    to theta above it.
    """

    regime: str
    alpha: float
    c_log: float
    theta: float
    vartheta: float


def classify_regime(
    spec: BranchingSpec, mu: "perturbation.PerturbationLaw", theta: float
) -> RegimeSpec:
    """Place (theta, mu) in the below / boundary / above partition.

    Raises UnclassifiableRegime when the critical parameter is infinite, or
    when theta does not exceed it for a perturbation with all moments finite
    (that parameter range belongs to the finite-mean theory not covered
    here).
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    th0 = theta0(spec)
    if th0 is None:
        raise UnclassifiableRegime("critical parameter is infinite for this spec")

    tail = perturbation.tail_params(mu)
    if tail.is_regularly_varying:
        gamma = tail.gamma
        boundary_theta = th0 / gamma
        if abs(theta * gamma - th0) <= BOUNDARY_REL_TOL * th0:
            return RegimeSpec(REGIME_BOUNDARY, nu(spec, th0) / th0, -1.0 / (2.0 * th0), theta, gamma)
        if theta < boundary_theta:
            return RegimeSpec(REGIME_BELOW, nu(spec, gamma * theta) / (gamma * theta), 0.0, theta, gamma)
        return RegimeSpec(REGIME_ABOVE, nu(spec, th0) / th0, -3.0 / (2.0 * th0), theta, th0 / theta)

    # all polynomial moments finite
    if theta > th0:
        return RegimeSpec(REGIME_ABOVE, nu(spec, th0) / th0, -3.0 / (2.0 * th0), theta, th0 / theta)
    raise UnclassifiableRegime(
        "theta <= theta0 with a perturbation having all moments finite is outside "
        "the classified range"
    )
