"""Branching random walk with last-progeny perturbations: analytic constants,
two-route Monte Carlo sampling of the perturbed rightmost position, limit-law
samplers, and statistical verification of the law of large numbers and the
centered weak limits in all three parameter regimes."""

__version__ = "0.1.0"

from . import config, engine, limitlaw, model, perturbation, stats  # noqa: E402,F401
