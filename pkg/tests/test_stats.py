"""Verification-layer tests: the Kolmogorov-Smirnov oracle itself, estimator
behavior on synthetic data, bootstrap scaling, refusal paths, and a reduced
end-to-end experiment."""

import json
import math

import numpy as np
import pytest

from lpmbrw import model, perturbation, stats

BIN_GAUSS = model.BranchingSpec(model.OffspringLaw.deterministic(2), model.Gaussian(0.0, 1.0))
PARETO = perturbation.Pareto(0.5, 1.0)


class TestKsTwoSample:
    def test_identical_samples(self):
        xs = np.arange(100.0)
        stat, p = stats.ks_two_sample(xs, xs)
        assert stat == 0.0
        assert p == 1.0

    def test_same_law_two_routes(self):
        # standard Gumbel draws against -log E
        rng = np.random.default_rng(0)
        xs = rng.gumbel(size=10**4)
        ys = -np.log(rng.standard_exponential(10**4))
        _, p = stats.ks_two_sample(xs, ys)
        assert p > 0.01

    def test_power_against_shift(self):
        rng = np.random.default_rng(1)
        xs = rng.standard_normal(10**4)
        ys = rng.standard_normal(10**4) + 1.0
        _, p = stats.ks_two_sample(xs, ys)
        assert p < 1e-6

    def test_null_calibration(self):
        # under the null the p-value exceeds 0.01 in at least 95 of 100 runs
        rng = np.random.default_rng(2)
        hits = 0
        for _ in range(100):
            _, p = stats.ks_two_sample(rng.standard_normal(500), rng.standard_normal(500))
            hits += p > 0.01
        assert hits >= 95

    def test_kolmogorov_sf_reference_points(self):
        # classical critical values of the Kolmogorov distribution
        assert stats.kolmogorov_sf(1.3581) == pytest.approx(0.05, abs=2e-3)
        assert stats.kolmogorov_sf(1.6276) == pytest.approx(0.01, abs=1e-3)
        assert stats.kolmogorov_sf(0.5) > 0.95
        assert stats.kolmogorov_sf(0.0) == 1.0

    def test_sf_against_scipy(self):
        scipy_special = pytest.importorskip("scipy.special")
        for lam in (0.4, 0.8, 1.0, 1.3581, 2.0, 3.0):
            assert stats.kolmogorov_sf(lam) == pytest.approx(
                float(scipy_special.kolmogorov(lam)), abs=1e-6
            )

    def test_statistic_against_scipy(self):
        scipy_stats = pytest.importorskip("scipy.stats")
        rng = np.random.default_rng(3)
        xs, ys = rng.standard_normal(400), rng.standard_normal(600) * 1.2
        stat, _ = stats.ks_two_sample(xs, ys)
        ref = scipy_stats.ks_2samp(xs, ys)
        assert stat == pytest.approx(ref.statistic, abs=1e-12)


class TestEstimators:
    def test_slope_invariant_to_sampler_route(self):
        cfg = stats.ExperimentConfig(BIN_GAUSS, PARETO, 1.0, (10,), 400, 33, threads=2)
        s_coupled, se_c = stats.slope_estimate(cfg, sampler="coupled")
        s_direct, se_d = stats.slope_estimate(cfg, sampler="direct")
        assert abs(s_coupled - s_direct) <= 2 * (se_c + se_d)

    def test_bootstrap_se_halves_when_replicas_quadruple(self):
        rng = np.random.default_rng(4)
        se_small = np.mean(
            [stats.bootstrap_median_se(rng.standard_normal(500), rng) for _ in range(20)]
        )
        se_big = np.mean(
            [stats.bootstrap_median_se(rng.standard_normal(2000), rng) for _ in range(20)]
        )
        assert se_big == pytest.approx(se_small / 2, rel=0.30)

    def test_log_fit_recovers_planted_coefficients(self):
        # synthetic replicas around alpha n + c log n + b
        rng = np.random.default_rng(7)
        grid = (8, 12, 16, 20)
        alpha, c, b = 1.5, -0.8, 2.0
        mat = np.array(
            [alpha * n + c * math.log(n) + b + 0.5 * rng.standard_normal(4000) for n in grid]
        ).T
        cfg = stats.ExperimentConfig(BIN_GAUSS, PARETO, 1.0, grid, 4000, 8)
        fit = stats.fit_log_coefficient(cfg, alpha, samples=mat)
        assert fit.c_hat == pytest.approx(c, abs=3 * fit.c_se)
        assert fit.b_hat == pytest.approx(b, abs=0.2)

    def test_log_fit_requires_enough_points(self):
        cfg = stats.ExperimentConfig(BIN_GAUSS, PARETO, 1.0, (8, 12), 200, 8)
        with pytest.raises(ValueError):
            stats.fit_log_coefficient(cfg, 1.0)

    def test_chain_tree_slope_vanishes(self):
        # single-path tree with unit marks: R*_n is one Gumbel draw over
        # theta, so the slope estimate shrinks like 1/n
        chain = model.BranchingSpec(model.OffspringLaw.deterministic(1), model.PointMass(0.0))
        batch = stats.rstar_coupled_batch(chain, perturbation.PointMass(1.0), 1.0, 10, 400, 3)
        assert abs(np.median(batch / 10)) < 0.15

    def test_center_subtracts_theorem_centering(self):
        regime = model.classify_regime(BIN_GAUSS, PARETO, 4.0)
        out = stats.center(np.array([10.0]), regime, 16)
        expected = 10.0 - (regime.alpha * 16 + regime.c_log * math.log(16))
        assert out[0] == pytest.approx(expected, rel=1e-14)


class TestReplicaOrchestration:
    def test_thread_count_does_not_change_results(self):
        rows1 = stats.run_replicas(BIN_GAUSS, PARETO, (1.0,), (6,), 64, 9, threads=1)
        rows2 = stats.run_replicas(BIN_GAUSS, PARETO, (1.0,), (6,), 64, 9, threads=2)
        assert rows1 == rows2

    def test_purpose_key_separates_streams(self):
        a = stats.rstar_coupled_batch(BIN_GAUSS, PARETO, 1.0, 5, 32, 9, purpose=(0,))
        b = stats.rstar_coupled_batch(BIN_GAUSS, PARETO, 1.0, 5, 32, 9, purpose=(3,))
        assert not np.allclose(a, b)


class TestRefusals:
    def test_insufficient_replicas(self):
        cfg = stats.ExperimentConfig(BIN_GAUSS, PARETO, 1.0, (8,), 10, 1)
        with pytest.raises(stats.RefusalError, match="replicas"):
            stats.run_experiment(cfg)

    def test_no_root_boundary_request(self):
        spec = model.BranchingSpec(model.OffspringLaw.deterministic(2), model.PointMass(1.0))
        cfg = stats.ExperimentConfig(spec, PARETO, 1.0, (8,), 200, 1)
        with pytest.raises(stats.RefusalError, match="critical parameter"):
            stats.run_experiment(cfg)

    def test_theorem_hypothesis_violation_named(self):
        # above-boundary verification with a degenerate mark law on a lattice
        # displacement: refused, naming the violated assumption
        spec = model.BranchingSpec(model.OffspringLaw.deterministic(2), model.TwoPoint(1.0, -1.0, 0.3))
        theta = 4.0 * model.theta0(spec)
        cfg = stats.ExperimentConfig(spec, perturbation.PointMass(1.0), theta, (8,), 200, 1)
        with pytest.raises(stats.RefusalError, match="non_lattice|mu_not_degenerate"):
            stats.run_experiment(cfg)

    def test_unclassifiable_finite_mean_below(self):
        cfg = stats.ExperimentConfig(BIN_GAUSS, perturbation.PointMass(1.0), 0.5, (8,), 200, 1)
        with pytest.raises(stats.RefusalError):
            stats.run_experiment(cfg)

    def test_explicit_override_runs_despite_failed_audit(self):
        # degenerate marks above the boundary: refused by default, runs with
        # the explicit override (the structure is still covered analytically
        # for this law, only the general hypothesis fails)
        base = dict(
            spec=BIN_GAUSS, mu=perturbation.PointMass(1.0), theta=4.0,
            n_grid=(6,), replicas=150, seed=5, n_mart=8, mixing_replicas=100,
        )
        with pytest.raises(stats.RefusalError, match="mu_not_degenerate"):
            stats.run_experiment(stats.ExperimentConfig(**base))
        report = stats.run_experiment(stats.ExperimentConfig(**base, override_audit=True))
        assert report.regime.regime == model.REGIME_ABOVE


class TestRunExperiment:
    def test_below_reduced_scale(self):
        cfg = stats.ExperimentConfig(
            BIN_GAUSS, PARETO, 1.0, (6, 8, 10, 12), 400, 2024,
            n_mart=12, mixing_replicas=300, threads=2, ks_n=10,
        )
        report = stats.run_experiment(cfg)
        assert report.regime.regime == model.REGIME_BELOW
        assert set(report.verdicts) == {"slope", "ks_limit", "c_log_zero"}
        assert report.verdicts["ks_limit"], (report.ks_stat, report.ks_p)
        assert report.mixture_exponent == "one_over_gamma"
        assert report.above_scale is None
        blob = json.dumps(report.as_dict(), sort_keys=True)
        assert "verdicts" in blob

    def test_report_deterministic_across_threads(self):
        def run(threads):
            cfg = stats.ExperimentConfig(
                BIN_GAUSS, PARETO, 1.0, (4, 6, 8, 10), 200, 77,
                n_mart=8, mixing_replicas=120, threads=threads,
            )
            return json.dumps(stats.run_experiment(cfg).as_dict(), sort_keys=True)

        assert run(1) == run(2)
