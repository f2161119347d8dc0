import math
import os

import numpy as np
import pytest

from onlinefwer.engine import PLAIN, BudgetState, StepParams
from onlinefwer.oracle import (
    McEstimate,
    OracleError,
    UniformNullModel,
    exact_fwer_global_null,
    mc_estimate,
    mc_estimate_many,
    region_paths,
    stream_rng,
)
from onlinefwer.policies import PolicyConfig, RemarkPolicy

from conftest import TwoStepExhaustive, TwoStepPlain

FULL_SCALE = os.environ.get("ONLINEFWER_FULL_SCALE") == "1"
CONSISTENCY_TRIALS = 100_000 if FULL_SCALE else 20_000


class FixedLevels:
    """Plain procedure spending a fixed level every step."""

    mode = PLAIN
    alpha = 0.2

    def __init__(self, level):
        self.level = level

    def params(self, state):
        return StepParams(tau=1.0, lam=0.0, alpha_i=self.level)


class TestExactOracle:
    def test_independence_product(self):
        # two fixed 0.1 levels: FWER = 1 - 0.9^2
        assert exact_fwer_global_null(FixedLevels(0.1), 2) == pytest.approx(0.19, abs=1e-12)

    def test_two_step_exhaustive_construction(self):
        fwer = exact_fwer_global_null(TwoStepExhaustive(), 2)
        assert fwer == pytest.approx(0.1 + 0.4 * 0.2 + 0.5 * 0.04, abs=1e-12)
        assert fwer == pytest.approx(0.2, abs=1e-12)

    def test_two_step_plain_counterpart(self):
        fwer = exact_fwer_global_null(TwoStepPlain(), 2)
        assert fwer == pytest.approx(0.1 + 0.4 * 0.2 + 0.5 * 0.0, abs=1e-12)
        assert fwer == pytest.approx(0.18, abs=1e-12)

    def test_remark_exhausts_exactly(self):
        for n in range(1, 7):
            assert exact_fwer_global_null(RemarkPolicy(0.2), n) == pytest.approx(0.2, abs=1e-12)
        assert exact_fwer_global_null(RemarkPolicy(0.07), 4) == pytest.approx(0.07, abs=1e-12)

    def test_non_improvability_probe(self):
        fwer = exact_fwer_global_null(TwoStepExhaustive(bump=1e-3), 2)
        assert fwer - 0.2 == pytest.approx(0.5 * 1e-3, abs=1e-12)

    def test_named_procedures_stay_at_or_below_alpha(self):
        for name in ("alpha_spending", "addis_spending", "addis_graph",
                     "e_addis_spending", "e_addis_graph", "ei_addis_graph"):
            cfg = PolicyConfig(procedure=name, alpha=0.2)
            fwer = exact_fwer_global_null(cfg, 5)
            assert 0.0 < fwer <= 0.2 + 1e-12

    def test_exhaustive_dominates_plain_exactly(self):
        plain = exact_fwer_global_null(PolicyConfig(procedure="addis_graph", alpha=0.2), 5)
        ei = exact_fwer_global_null(PolicyConfig(procedure="ei_addis_graph", alpha=0.2), 5)
        assert ei > plain

    def test_refuses_large_n(self):
        with pytest.raises(OracleError, match="4\\*\\*"):
            exact_fwer_global_null(RemarkPolicy(0.2), 13)

    def test_detects_non_piecewise_constant_procedure(self):
        class PeeksAtP:
            mode = PLAIN
            alpha = 0.2

            def params(self, state):
                if state.history:
                    return StepParams(1.0, 0.0, state.history[-1].p / 10.0)
                return StepParams(1.0, 0.0, 0.05)

        with pytest.raises(OracleError, match="interval membership"):
            exact_fwer_global_null(PeeksAtP(), 2)


class TestRegionPaths:
    def test_probabilities_sum_to_one(self):
        for procedure, n in [
            (RemarkPolicy(0.2), 3),
            (PolicyConfig(procedure="addis_graph", alpha=0.2), 3),
            (TwoStepExhaustive(), 2),
        ]:
            paths = region_paths(procedure, n)
            assert sum(p.probability for p in paths) == pytest.approx(1.0, abs=1e-12)

    def test_interval_lengths_cover_unit(self):
        paths = region_paths(TwoStepExhaustive(), 2)
        first = {p.intervals[0] for p in paths}
        assert sum(b - a for a, b in first) == pytest.approx(1.0, abs=1e-12)

    def test_rejected_mass_matches_exact_fwer(self):
        for procedure, n in [(TwoStepExhaustive(), 2),
                             (PolicyConfig(procedure="e_addis_spending", alpha=0.2), 4)]:
            paths = region_paths(procedure, n)
            rejected = sum(p.probability for p in paths if p.rejected)
            assert rejected == pytest.approx(exact_fwer_global_null(procedure, n), abs=1e-12)


class TestStreamRng:
    def test_same_key_same_stream(self):
        a = stream_rng(7, 3).uniform(size=5)
        b = stream_rng(7, 3).uniform(size=5)
        assert np.array_equal(a, b)

    def test_different_keys_differ(self):
        a = stream_rng(7, 3).uniform(size=5)
        b = stream_rng(7, 4).uniform(size=5)
        assert not np.array_equal(a, b)


class AllFalseModel:
    """Every hypothesis false; p-values uniform (labels are what matter)."""

    def __init__(self, n):
        self.n = n

    def sample(self, rng):
        return rng.uniform(size=self.n), np.ones(self.n, dtype=bool)


class AlternatingFalseModel:
    """Odd trials contain no false hypotheses (power must skip them)."""

    def __init__(self):
        self.n = 4

    def sample(self, rng):
        first = rng.uniform()
        if first < 0.5:
            return np.full(4, 1e-9), np.array([True, True, False, False])
        return np.full(4, 0.9), np.zeros(4, dtype=bool)


class TestMcEstimate:
    def test_no_true_nulls_means_zero_fwer(self):
        est = mc_estimate(PolicyConfig(procedure="addis_graph", alpha=0.2),
                          AllFalseModel(20), trials=200, seed=5)
        assert est.fwer_hat == 0.0
        assert est.std_error == 0.0

    def test_std_error_invariant(self):
        est = mc_estimate(RemarkPolicy(0.2), UniformNullModel(10), trials=500, seed=1)
        assert est.std_error == pytest.approx(
            math.sqrt(est.fwer_hat * (1 - est.fwer_hat) / est.trials), abs=1e-15
        )

    def test_power_skips_trials_without_false_hypotheses(self):
        est = mc_estimate(PolicyConfig(procedure="alpha_spending", alpha=0.2),
                          AlternatingFalseModel(), trials=400, seed=2)
        # in trials that have false hypotheses, both are rejected (p ~ 1e-9)
        assert est.power_hat == 1.0

    def test_all_trials_without_false_hypotheses_gives_nan_power(self):
        est = mc_estimate(PolicyConfig(procedure="alpha_spending", alpha=0.2),
                          UniformNullModel(5), trials=50, seed=3)
        assert math.isnan(est.power_hat)

    def test_deterministic_given_seed(self):
        cfg = PolicyConfig(procedure="addis_spending", alpha=0.2)
        a = mc_estimate(cfg, UniformNullModel(20), trials=300, seed=11)
        b = mc_estimate(cfg, UniformNullModel(20), trials=300, seed=11)
        assert (a.fwer_hat, a.power_hat) == (b.fwer_hat, b.power_hat)

    def test_many_shares_trial_data(self):
        cfgs = [PolicyConfig(procedure="addis_graph", alpha=0.2),
                PolicyConfig(procedure="ei_addis_graph", alpha=0.2)]
        pair = mc_estimate_many(cfgs, UniformNullModel(20), trials=200, seed=11)
        singles = [mc_estimate(c, UniformNullModel(20), trials=200, seed=11) for c in cfgs]
        for a, b in zip(pair, singles):
            assert a.fwer_hat == b.fwer_hat

    def test_trials_must_be_positive(self):
        with pytest.raises(ValueError):
            mc_estimate(RemarkPolicy(0.2), UniformNullModel(5), trials=0, seed=1)


class TestOracleConsistency:
    """Monte Carlo agrees with the exact oracle under the global null."""

    @pytest.mark.parametrize("name", [
        "alpha_spending", "addis_spending", "addis_graph",
        "e_addis_spending", "e_addis_graph", "ei_addis_graph",
    ])
    def test_named_procedures(self, name):
        n = 5
        cfg = PolicyConfig(procedure=name, alpha=0.2)
        exact = exact_fwer_global_null(cfg, n)
        est = mc_estimate(cfg, UniformNullModel(n), trials=CONSISTENCY_TRIALS, seed=101)
        assert abs(est.fwer_hat - exact) <= 4 * max(est.std_error, 1e-6)

    def test_remark_procedure(self):
        est = mc_estimate(RemarkPolicy(0.2), UniformNullModel(6),
                          trials=CONSISTENCY_TRIALS, seed=102)
        assert abs(est.fwer_hat - 0.2) <= 4 * est.std_error


class TestMcSpecExamples:
    def test_alpha_spending_against_product_formula(self):
        n, alpha, trials = 100, 0.2, 10_000
        cfg = PolicyConfig(procedure="alpha_spending", alpha=alpha)
        gammas = cfg.gamma.values(n)
        exact = 1.0 - float(np.prod(1.0 - alpha * gammas))
        est = mc_estimate(cfg, UniformNullModel(n), trials=trials, seed=77)
        assert abs(est.fwer_hat - exact) <= 3 * est.std_error

    def test_remark_global_null_long_run(self):
        est = mc_estimate(RemarkPolicy(0.2), UniformNullModel(200), trials=10_000, seed=78)
        assert abs(est.fwer_hat - 0.2) <= 3 * est.std_error
