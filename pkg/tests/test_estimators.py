import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlmc_sde.estimators import (
    MissingLastLevelVariance,
    MultilevelPlan,
    NonpositiveVariance,
    SamplingError,
    ZeroWeakConstant,
    crude_mc,
    default_lambdas,
    ml2r_allocation,
    ml2r_last_level,
    ml2r_plan,
    ml2r_theta,
    ml2r_weights,
    mlmc_last_level,
    mlmc_plan,
    mlmc_sample_sizes,
    run_multilevel,
)
from mlmc_sde.models import ClarkCameronModel, HestonModel, Payoff
from mlmc_sde.oracle import cc_exact_usq_mean
from mlmc_sde.schemes import LevelSampler, sample_many

CC = ClarkCameronModel(mu=1.0)
USQ = Payoff("u-squared")


class TestLastLevel:
    def test_exact_log_ratio(self):
        assert mlmc_last_level(math.sqrt(2.0) * 2.0**-10, 1.0, 1.0) == 10
        assert mlmc_last_level(math.sqrt(2.0) * 2.0**-10, 1.0, 2.0) == 5

    def test_tiny_constant_clamps_to_one(self):
        assert mlmc_last_level(0.25, 1e-6, 2.0) == 1

    def test_zero_constant_rejected(self):
        with pytest.raises(ZeroWeakConstant):
            mlmc_last_level(0.1, 0.0, 1.0)

    def test_preconditions(self):
        with pytest.raises(ValueError):
            mlmc_last_level(0.0, 1.0, 1.0)


class TestSampleSizes:
    def test_single_level(self):
        np.testing.assert_array_equal(mlmc_sample_sizes(1.0, 0, [1.0], [1.0]), [2])

    def test_epsilon_scaling(self):
        variances = [0.5, 0.1, 0.02]
        lam = [1.0, 2.5, 2.5]
        coarse = mlmc_sample_sizes(0.1, 2, variances, lam)
        fine = mlmc_sample_sizes(0.05, 2, variances, lam)
        # quadrupling before the ceiling: within one unit of exactly 4x
        assert (fine >= 4 * (coarse - 1)).all()
        assert (fine <= 4 * coarse).all()

    def test_zero_variance_level_floors_to_one(self):
        sizes = mlmc_sample_sizes(0.5, 2, [1.0, 0.0, 0.25], [1.0, 2.5, 2.5])
        assert sizes[1] == 1
        assert sizes[0] > 1

    def test_all_zero_variance(self):
        np.testing.assert_array_equal(
            mlmc_sample_sizes(0.5, 2, [0.0, 0.0, 0.0], [1.0, 2.5, 2.5]), [1, 1, 1]
        )


class TestLambdas:
    def test_tables(self):
        np.testing.assert_allclose(default_lambdas("gs", 3), [1.0, 2.5, 2.5, 2.5])
        np.testing.assert_allclose(default_lambdas("gs-nv", 3), [1.0, 2.5, 2.5, 4.5])
        np.testing.assert_allclose(default_lambdas("nv", 2, "single"), [1.0, 5.0, 5.0])
        np.testing.assert_allclose(default_lambdas("nv", 2, "averaged"), [1.0, 2.5, 2.5])
        np.testing.assert_allclose(default_lambdas("gs-nv", 1), [1.0, 4.5])


class TestMlmcPlan:
    def test_reduces_to_sample_sizes_on_model_table(self):
        epsilon, alpha, c1, beta, c2 = 2.0**-6, 1.0, 0.2, 2.0, 0.3
        plan = mlmc_plan("gs", epsilon, alpha, c1, beta, c2, v0=c2)
        last = mlmc_last_level(epsilon, c1, alpha)
        table = c2 * 2.0 ** (-beta * np.arange(last + 1))
        np.testing.assert_array_equal(
            plan.sizes, mlmc_sample_sizes(epsilon, last, table, default_lambdas("gs", last))
        )

    def test_monotone_sizes_for_decaying_variance(self):
        plan = mlmc_plan("gs", 2.0**-7, 1.0, 0.3, 2.0, 0.5, v0=0.5)
        assert (np.diff(plan.sizes) <= 0).all()

    def test_gs_nv_requires_last_level_variance(self):
        with pytest.raises(MissingLastLevelVariance):
            mlmc_plan("gs-nv", 0.01, 2.0, 0.1, 2.0, 0.3, v0=0.4)

    def test_gs_nv_level_tags(self):
        plan = mlmc_plan("gs-nv", 2.0**-8, 2.0, 0.1, 2.0, 0.3, v0=0.4, v_last=0.01)
        assert plan.level_tags[0] == "level0-gs"
        assert plan.level_tags[-1] == "gs-nv"
        assert set(plan.level_tags[1:-1]) <= {"gs"}
        assert plan.lam[-1] == 4.5

    def test_nv_level0_tags(self):
        plan = mlmc_plan("nv", 0.05, 2.0, 0.1, 2.0, 0.3, v0=0.4, nv_level0="averaged")
        assert plan.level_tags[0] == "level0-nv-averaged"
        plan = mlmc_plan("nv", 0.05, 2.0, 0.1, 2.0, 0.3, v0=0.4, nv_level0="single")
        assert plan.level_tags[0] == "level0-nv-single"
        assert plan.lam[1] == 5.0

    def test_direct_variance_table_override(self):
        table = np.array([0.4, 0.1, 0.05])
        plan = mlmc_plan("gs", 2.0**-4, 1.0, 0.17, 2.0, 0.3, v0=0.4, variance_table=table)
        assert plan.last_level == 2
        np.testing.assert_array_equal(
            plan.sizes, mlmc_sample_sizes(2.0**-4, 2, table, default_lambdas("gs", 2))
        )


class TestMl2r:
    def test_weights_spot_case(self):
        w, suffix = ml2r_weights(1, 1.0)
        np.testing.assert_allclose(w, [-1.0, 2.0])
        np.testing.assert_allclose(suffix, [1.0, 2.0])

    @given(last=st.integers(1, 6), alpha=st.sampled_from([0.5, 1.0, 1.5, 2.0]))
    @settings(max_examples=40, deadline=None)
    def test_weight_sum_identity(self, last, alpha):
        w, suffix = ml2r_weights(last, alpha)
        assert abs(w.sum() - 1.0) < 1e-12
        assert suffix[0] == pytest.approx(1.0, abs=1e-12)
        assert suffix[-1] == w[-1] > 0

    def test_last_level_formula(self):
        assert ml2r_last_level(math.sqrt(5.0) * 2.0**-4, 1.0, 1.0) == 2

    def test_last_level_clamps(self):
        assert ml2r_last_level(0.9, 2.0, 1.0) == 1

    def test_theta(self):
        assert ml2r_theta(2.0, 0.3, 0.3, 1.0) == pytest.approx(1.0)
        assert ml2r_theta(2.0, 0.3, 1.2, 1.0) == pytest.approx(0.5)
        with pytest.raises(NonpositiveVariance):
            ml2r_theta(2.0, 0.3, 0.0)

    @given(
        last=st.integers(1, 6),
        alpha=st.sampled_from([0.5, 1.0, 1.5, 2.0]),
        beta=st.sampled_from([1.0, 1.5, 2.0]),
        theta=st.floats(0.05, 5.0),
    )
    @settings(max_examples=40, deadline=None)
    def test_allocation_normalized(self, last, alpha, beta, theta):
        q = ml2r_allocation(last, alpha, beta, theta)
        assert abs(q.sum() - 1.0) < 1e-12
        assert (q > 0).all()

    def test_plan_structure(self):
        plan = ml2r_plan("nv", 2.0**-5, 2.0, 2.0, 0.1, 0.8)
        assert plan.kind == "ml2r"
        assert plan.level_tags[0] == "level0-nv-single"
        np.testing.assert_array_equal(plan.lam, np.ones(plan.last_level + 1))
        assert plan.weights[0] == pytest.approx(1.0)
        assert (plan.sizes >= 1).all()

    def test_rejects_bad_variances(self):
        with pytest.raises(NonpositiveVariance):
            ml2r_plan("gs", 0.05, 1.0, 2.0, -0.1, 0.8)
        with pytest.raises(NonpositiveVariance):
            ml2r_plan("gs", 0.05, 1.0, 2.0, 0.1, 0.0)


def small_plan(coupling="gs-nv", epsilon=2.0**-4):
    return mlmc_plan(coupling, epsilon, 2.0, 0.08, 2.0, 1.7, v0=0.5, v_last=0.4)


class TestRunner:
    def test_degenerate_run_is_zero(self):
        result = run_multilevel(small_plan(), CC, USQ, seed=3, degenerate=True)
        assert result.estimate == 0.0
        assert result.aborted == 0

    def test_single_level_plan_is_plain_average(self):
        plan = MultilevelPlan("mlmc", "gs", 1.0, 0, np.array([5000]), np.ones(1),
                              np.ones(1), ("level0-gs",))
        result = run_multilevel(plan, CC, USQ, seed=4, experiment=2)
        sampler = LevelSampler(CC, USQ, "level0-gs")
        direct = sample_many(sampler, 0, 5000, seed=4, experiment=2)
        assert result.estimate == direct.values.mean()

    def test_worker_invariance(self):
        plan = small_plan(epsilon=2.0**-5)
        solo = run_multilevel(plan, CC, USQ, seed=5, workers=1)
        duo = run_multilevel(plan, CC, USQ, seed=5, workers=2)
        assert solo.estimate == duo.estimate

    def test_cost_model_exact(self):
        plan = small_plan()
        result = run_multilevel(plan, CC, USQ, seed=6)
        levels = np.arange(plan.last_level + 1)
        assert result.cost_units == np.sum(plan.sizes * plan.lam * 2.0**levels)
        assert result.cost_units == plan.cost_units

    def test_weighted_levels_enter_estimate(self):
        plan = small_plan(epsilon=2.0**-5)
        result = run_multilevel(plan, CC, USQ, seed=7, experiment=3)
        total = 0.0
        for level in range(plan.last_level + 1):
            sampler = LevelSampler(CC, USQ, plan.level_tags[level])
            sample = sample_many(sampler, level, int(plan.sizes[level]), seed=7, experiment=3)
            total += plan.weights[level] * sample.values.mean()
        assert result.estimate == pytest.approx(total, rel=1e-12)

    def test_fixed_resolution_unbiasedness(self):
        # averaged over repetitions, the estimator matches a direct Monte
        # Carlo of the finest-level scheme within 3 combined standard errors
        plan = MultilevelPlan("mlmc", "gs", 0.1, 2,
                              np.array([4000, 2000, 1000]), np.ones(3),
                              default_lambdas("gs", 2),
                              ("level0-gs", "gs", "gs"))
        estimates = np.array([
            run_multilevel(plan, CC, USQ, seed=100 + k, experiment=4).estimate
            for k in range(100)
        ])
        direct = crude_mc(CC, USQ, "gs", level=2, m=400_000, seed=9, experiment=5)
        se = np.sqrt(estimates.var(ddof=1) / estimates.size + direct.sem**2)
        assert abs(estimates.mean() - direct.mean) < 3 * se

    def test_abort_rate_gate(self):
        # starting above the mean with vol-of-vol at the Feller bound drives
        # the explicit scheme negative often
        fragile = HestonModel(kappa=2.0, theta=0.02, sigma=0.28, v0=0.05)
        plan = MultilevelPlan("mlmc", "gs", 1.0, 1, np.array([4000, 2000]),
                              np.ones(2), default_lambdas("gs", 1),
                              ("level0-gs", "gs"))
        with pytest.raises(SamplingError):
            run_multilevel(plan, fragile, Payoff("heston-call", 0.05, 1.0), seed=11)

    def test_reflect_policy_keeps_running(self):
        fragile = HestonModel(kappa=2.0, theta=0.02, sigma=0.28, v0=0.05,
                              negative_variance="reflect")
        plan = MultilevelPlan("mlmc", "gs", 1.0, 1, np.array([4000, 2000]),
                              np.ones(2), default_lambdas("gs", 1),
                              ("level0-gs", "gs"))
        result = run_multilevel(plan, fragile, Payoff("heston-call", 0.05, 1.0), seed=11)
        assert np.isfinite(result.estimate)
        assert result.aborted == 0


class TestCrude:
    def test_constant_payoff_zero_variance(self):
        stats = crude_mc(CC, Payoff("cos-u"), "gs", level=2, m=100, seed=1, degenerate=True)
        assert stats.variance == 0.0

    def test_level_eight_mean_near_exact(self):
        truth = cc_exact_usq_mean(1.0, 1.0, 0.0).value
        stats = crude_mc(CC, USQ, "nv", level=8, m=100_000, seed=13, experiment=6)
        assert abs(stats.mean - truth) < 3 * stats.sem + 0.02

    def test_heston_call_finite_variance(self):
        stats = crude_mc(HestonModel(), Payoff("heston-call", 0.05, 1.0), "nv",
                         level=5, m=20_000, seed=15, experiment=7)
        assert stats.variance > 0
        assert np.isfinite(stats.mean)
        assert stats.aborted == 0

    def test_bad_scheme_rejected(self):
        with pytest.raises(ValueError):
            crude_mc(CC, USQ, "euler", level=2, m=100, seed=1)
