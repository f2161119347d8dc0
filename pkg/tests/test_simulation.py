import math

import numpy as np
import pytest
from scipy.special import ndtr, ndtri

from onlinefwer.engine import PLAIN, StepParams
from onlinefwer.oracle import stream_rng
from onlinefwer.policies import PolicyConfig
from onlinefwer.simulation import (
    CSV_COLUMNS,
    ExperimentGrid,
    GaussianSetup,
    GridResults,
    emit_curves,
    figure_grid,
    generate_trial,
    run_grid,
)


class TestGaussianSetup:
    def test_validation(self):
        with pytest.raises(ValueError):
            GaussianSetup(n=0, pi_a=0.5, mu_a=3.0)
        with pytest.raises(ValueError):
            GaussianSetup(n=10, pi_a=1.5, mu_a=3.0)
        with pytest.raises(ValueError):
            GaussianSetup(n=10, pi_a=0.5, mu_a=3.0, mu_n=0.5)

    def test_zero_statistic_maps_to_half(self):
        # the p-value map is the upper tail: z = 0 must give exactly 1/2
        assert ndtr(-0.0) == 0.5

    def test_null_pvalues_uniform_when_mu_n_zero(self):
        setup = GaussianSetup(n=100_000, pi_a=0.0, mu_a=3.0, mu_n=0.0)
        ps, is_false = generate_trial(setup, stream_rng(1, 0))
        assert not is_false.any()
        # Kolmogorov-Smirnov 99% band for the empirical CDF
        sorted_ps = np.sort(ps)
        grid = np.arange(1, ps.size + 1) / ps.size
        d_stat = float(np.max(np.abs(sorted_ps - grid)))
        assert d_stat <= 1.63 / math.sqrt(ps.size)

    def test_conservative_nulls_when_mu_n_negative(self):
        # closed form: P(p <= 0.05) = Phi(-Phi^-1(0.95) - 2) ~ 1.337e-4
        closed_form = float(ndtr(-(ndtri(0.95) + 2.0)))
        assert closed_form == pytest.approx(1.337e-4, abs=5e-7)
        setup = GaussianSetup(n=200_000, pi_a=0.0, mu_a=3.0, mu_n=-2.0)
        ps, _ = generate_trial(setup, stream_rng(2, 0))
        rate = float(np.mean(ps <= 0.05))
        assert rate < 0.05
        assert rate == pytest.approx(closed_form, abs=4 * math.sqrt(closed_form / ps.size))

    def test_false_labels_match_shifted_statistics(self):
        setup = GaussianSetup(n=5000, pi_a=0.4, mu_a=50.0, mu_n=0.0)
        ps, is_false = generate_trial(setup, stream_rng(3, 0))
        assert np.array_equal(is_false, ps < 1e-12)

    def test_labels_independent_of_effect_sizes(self):
        a = GaussianSetup(n=1000, pi_a=0.3, mu_a=2.0, mu_n=0.0)
        b = GaussianSetup(n=1000, pi_a=0.3, mu_a=4.0, mu_n=-2.0)
        _, fa = generate_trial(a, stream_rng(4, 0))
        _, fb = generate_trial(b, stream_rng(4, 0))
        assert np.array_equal(fa, fb)


def _tiny_grid(**overrides):
    base = dict(
        procedures=[
            ("addis_graph", PolicyConfig(procedure="addis_graph", alpha=0.2)),
            ("ei_addis_graph", PolicyConfig(procedure="ei_addis_graph", alpha=0.2)),
        ],
        pi_a_values=[0.2, 0.6],
        mu_a_values=[3.0],
        mu_n_values=[0.0],
        n=30,
        trials=40,
        seed=9,
        label="tiny",
    )
    base.update(overrides)
    return ExperimentGrid(**base)


class TestRunGrid:
    def test_shape_and_seeds(self):
        results = run_grid(_tiny_grid())
        assert len(results.rows) == 4
        assert all(r.error is None for r in results.rows)
        assert {r.seed for r in results.rows} == {(9, 0, 0, 0), (9, 0, 0, 1)}

    def test_procedures_share_trial_data(self):
        results = run_grid(_tiny_grid(), keep_trial_power=True)
        a = results.get(procedure="addis_graph", pi_a=0.2)
        b = results.get(procedure="ei_addis_graph", pi_a=0.2)
        mask = ~np.isnan(a.estimate.trial_power)
        # the improved procedure never loses on shared data
        assert np.all(b.estimate.trial_power[mask] >= a.estimate.trial_power[mask] - 1e-12)

    def test_cell_failure_recorded_grid_continues(self):
        class Broken:
            mode = PLAIN
            alpha = 0.2

            def params(self, state):
                if state.step > 1:
                    return StepParams(tau=1.0, lam=0.0, alpha_i=0.3)
                return StepParams(tau=1.0, lam=0.0, alpha_i=0.01)

        grid = _tiny_grid()
        grid.procedures = list(grid.procedures) + [("broken", Broken())]
        results = run_grid(grid)
        assert len(results.failed) == 2  # one per cell
        assert all(r.procedure == "broken" for r in results.failed)
        ok = results.get(procedure="addis_graph", pi_a=0.2)
        assert ok.estimate is not None

    def test_determinism(self):
        a = run_grid(_tiny_grid())
        b = run_grid(_tiny_grid())
        for ra, rb in zip(a.rows, b.rows):
            assert ra.estimate.fwer_hat == rb.estimate.fwer_hat
            assert ra.estimate.power_hat == rb.estimate.power_hat


class TestEmitCurves:
    def test_columns_and_rows(self, tmp_path):
        results = run_grid(_tiny_grid())
        [path] = emit_curves(results, tmp_path)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 1 + 4

    def test_empty_results_header_only(self, tmp_path):
        [path] = emit_curves(GridResults(label="empty"), tmp_path)
        assert path.read_text().splitlines() == [",".join(CSV_COLUMNS)]

    def test_single_procedure_same_columns(self, tmp_path):
        grid = _tiny_grid()
        grid.procedures = grid.procedures[:1]
        [path] = emit_curves(run_grid(grid), tmp_path)
        assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)

    def test_bit_identical_for_same_seed(self, tmp_path):
        a = emit_curves(run_grid(_tiny_grid()), tmp_path / "a")[0]
        b = emit_curves(run_grid(_tiny_grid()), tmp_path / "b")[0]
        assert a.read_bytes() == b.read_bytes()

    def test_figure_file_names(self, tmp_path):
        grid = figure_grid(5, trials=2, seed=1)
        grid.pi_a_values = [0.5]
        [path] = emit_curves(run_grid(grid), tmp_path)
        assert path.name == "figure5.csv"

    def test_failed_cells_left_out(self, tmp_path):
        class AlwaysBroken:
            mode = PLAIN
            alpha = 0.2

            def params(self, state):
                raise RuntimeError("nope")

        grid = _tiny_grid()
        grid.procedures = [("broken", AlwaysBroken())]
        [path] = emit_curves(run_grid(grid), tmp_path)
        assert len(path.read_text().splitlines()) == 1


class TestFigureGrids:
    def test_figure_structure(self):
        g3 = figure_grid(3, trials=10, seed=1)
        assert g3.n == 1000 and g3.mu_a_values == [4.0]
        assert [name for name, _ in g3.procedures] == [
            "alpha_spending", "addis_graph", "ei_addis_graph"
        ]
        assert list(g3.pi_a_values) == [round(0.1 * k, 1) for k in range(1, 10)]
        g4 = figure_grid(4, trials=10, seed=1)
        assert g4.procedures[1][1].gamma.kind == "log_q"
        g5 = figure_grid(5, trials=10, seed=1)
        assert g5.n == 10 and g5.mu_a_values == [2.0]
        with pytest.raises(ValueError):
            figure_grid(6, trials=10, seed=1)

    def test_figure3_cell_counts(self, tmp_path):
        grid = figure_grid(3, trials=2, seed=1)
        grid.n = 25  # shrink for speed; the 9 x 3 x 2 structure is the point
        results = run_grid(grid)
        [path] = emit_curves(results, tmp_path)
        assert len(path.read_text().splitlines()) == 1 + 9 * 3 * 2


def test_power_monotone_in_effect_size():
    """At a fixed seed-ensemble, raising mu_a from 2 to 4 cannot lose power
    beyond Monte Carlo noise."""
    cfg = PolicyConfig(procedure="addis_graph", alpha=0.2)
    grid = ExperimentGrid(
        procedures=[("addis_graph", cfg)],
        pi_a_values=[0.5], mu_a_values=[2.0, 4.0], mu_n_values=[0.0],
        n=100, trials=300, seed=13,
    )
    results = run_grid(grid)
    low = results.get(mu_a=2.0).estimate
    high = results.get(mu_a=4.0).estimate
    assert high.power_hat >= low.power_hat - 2 * (low.power_std_error + high.power_std_error)
