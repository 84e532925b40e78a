"""Sampling, the thinning/superposition coupling, and the Mecke harness."""

import math

import numpy as np
import pytest
from scipy.stats import chisquare, poisson

from poissonpert import (BoxWindow, MCPlan, PointConfiguration, discrete,
                         lebesgue_measure, mecke_check, sample_counts,
                         sample_poisson, thin_superpose_couple)

THREE_SIGMA_P = 0.0027  # two-sided normal tail at 3 sigma


class TestSamplePoisson:
    def test_zero_mass_gives_empty(self, rng):
        assert sample_poisson(discrete({"x": 0.0}), rng=rng.child(0)) == \
            PointConfiguration.empty()

    def test_bit_identical_reproduction(self, rng):
        m = discrete({"x": 1.0, "y": 2.0})
        a = [sample_poisson(m, rng=rng.child(1).child(i)) for i in range(50)]
        b = [sample_poisson(m, rng=rng.child(1).child(i)) for i in range(50)]
        assert a == b

    def test_void_probability(self, rng):
        # oracle: closed-form void probability exp(-1)
        counts = sample_counts(discrete({"x": 1.0}), None, rng.child(2), 200_000)
        p0 = float(np.mean(counts[:, 0] == 0))
        se = math.sqrt(p0 * (1 - p0) / counts.shape[0])
        assert abs(p0 - math.exp(-1.0)) <= 3 * se

    def test_mean_counts(self, rng):
        m = discrete({"x": 1.0, "y": 2.0})
        counts = sample_counts(m, None, rng.child(3), 100_000)
        for j, target in enumerate((1.0, 2.0)):
            mean = float(np.mean(counts[:, j]))
            se = float(np.std(counts[:, j]) / math.sqrt(counts.shape[0]))
            assert abs(mean - target) <= 3 * se

    def test_single_config_law(self, rng):
        # sample_poisson draws must match the count law as well
        m = discrete({"x": 1.5})
        totals = np.array([sample_poisson(m, rng=rng.child(4).child(i)).total_points()
                           for i in range(20_000)])
        mean = totals.mean()
        se = totals.std() / math.sqrt(totals.size)
        assert abs(mean - 1.5) <= 3 * se

    def test_box_sampling_void_probability(self, rng):
        box = BoxWindow((0.0,), (1.0,))
        dens = lebesgue_measure(box, lambda p: 2.0, 2.0)
        gen = rng.child(5).generator()
        hits = sum(1 for _ in range(50_000)
                   if sample_poisson(dens, generator=gen).total_points() == 0)
        p0 = hits / 50_000
        se = math.sqrt(p0 * (1 - p0) / 50_000)
        assert abs(p0 - math.exp(-2.0)) <= 3 * se


class TestCoupling:
    def test_equal_measures_share_everything(self, rng):
        lam = discrete({"x": 1.0, "y": 0.5})
        pair = thin_superpose_couple(lam, lam, rng=rng.child(6))
        assert pair.phi_lambda == pair.phi_nu == pair.shared

    def test_shared_is_contained_in_both(self, rng):
        lam = discrete({"x": 2.0, "y": 0.3})
        nu = discrete({"x": 1.0, "y": 1.0})
        for i in range(100):
            pair = thin_superpose_couple(lam, nu, rng=rng.child(7).child(i))
            for p, mult in pair.shared.items():
                assert pair.phi_lambda.count(p) >= mult
                assert pair.phi_nu.count(p) >= mult

    def test_pure_thinning_marginal(self, rng):
        # lam = 2 delta_x down to nu = delta_x: counts of phi_nu must be
        # Poisson(1); chi-square on binned counts at the 3 sigma level
        lam, nu = discrete({"x": 2.0}), discrete({"x": 1.0})
        counts = np.array([
            thin_superpose_couple(lam, nu, rng=rng.child(8).child(i)).phi_nu.total_points()
            for i in range(20_000)])
        kmax = 7
        observed = np.array([np.sum(counts == k) for k in range(kmax)]
                            + [np.sum(counts >= kmax)])
        probs = np.append(poisson.pmf(np.arange(kmax), 1.0), poisson.sf(kmax - 1, 1.0))
        stat, pval = chisquare(observed, probs * counts.size)
        assert pval > THREE_SIGMA_P

    def test_pure_superposition_marginal(self, rng):
        # lam = delta_x, nu = delta_x + delta_y: the coupled pair keeps all of
        # phi_lambda and adds an independent unit-mean count at y
        lam = discrete({"x": 1.0})
        nu = discrete({"x": 1.0, "y": 1.0})
        pairs = [thin_superpose_couple(lam, nu, rng=rng.child(9).child(i))
                 for i in range(20_000)]
        assert all(p.shared == p.phi_lambda for p in pairs)
        ys = np.array([p.phi_nu.count("y") for p in pairs], dtype=float)
        se = ys.std() / math.sqrt(ys.size)
        assert abs(ys.mean() - 1.0) <= 3 * se

    def test_nu_marginal_law_two_sided(self, rng):
        # thinning on one atom, superposition on the other, jointly exact
        lam = discrete({"x": 2.0, "y": 0.5})
        nu = discrete({"x": 1.0, "y": 1.5})
        xs, ys = [], []
        for i in range(20_000):
            pair = thin_superpose_couple(lam, nu, rng=rng.child(10).child(i))
            xs.append(pair.phi_nu.count("x"))
            ys.append(pair.phi_nu.count("y"))
        for vals, target in ((np.array(xs, float), 1.0), (np.array(ys, float), 1.5)):
            se = vals.std() / math.sqrt(vals.size)
            assert abs(vals.mean() - target) <= 3 * se
            se2 = np.sqrt(np.var((vals - vals.mean()) ** 2) / vals.size)
            assert abs(vals.var() - target) <= 3 * se2


class TestMecke:
    def test_constant_integrand(self, rng):
        res = mecke_check(lambda x, phi: 1.0, discrete({"x": 1.0}),
                          plan=MCPlan(30_000, rng.child(11)))
        assert res.lhs == pytest.approx(1.0, abs=3 * res.lhs_stderr)
        assert res.rhs == pytest.approx(1.0, abs=max(3 * res.rhs_stderr, 1e-12))
        assert abs(res.lhs - res.rhs) <= 3 * res.stderr

    def test_count_integrand(self, rng):
        # oracle: E[N(N-1)] = 1 for a unit-mean count on the reduced side
        res = mecke_check(lambda x, phi: float(phi.total_points()),
                          discrete({"x": 1.0}), plan=MCPlan(40_000, rng.child(12)))
        assert abs(res.lhs - 1.0) <= 3 * res.lhs_stderr
        assert abs(res.lhs - res.rhs) <= 3 * res.stderr

    def test_void_integrand(self, rng):
        res = mecke_check(lambda x, phi: 1.0 if phi.total_points() == 0 else 0.0,
                          discrete({"x": 1.0}), plan=MCPlan(40_000, rng.child(13)))
        assert abs(res.lhs - math.exp(-1.0)) <= 3 * res.lhs_stderr
        assert abs(res.lhs - res.rhs) <= 3 * res.stderr

    def test_box_measure_route(self, rng):
        box = BoxWindow((0.0,), (1.0,))
        dens = lebesgue_measure(box, lambda p: 1.0, 1.0)
        res = mecke_check(lambda x, phi: 1.0, dens, plan=MCPlan(20_000, rng.child(14)))
        assert abs(res.lhs - res.rhs) <= 3 * res.stderr


class TestDeterminism:
    def test_worker_count_does_not_change_results(self, rng):
        from poissonpert import mc_expectation, void_indicator
        m = discrete({"x": 1.0, "y": 0.5})
        f = void_indicator()
        a = mc_expectation(f, m, plan=MCPlan(8_000, rng.child(15), workers=1))
        b = mc_expectation(f, m, plan=MCPlan(8_000, rng.child(15), workers=4))
        assert a.estimate == b.estimate
        assert a.stderr == b.stderr
