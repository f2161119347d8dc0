"""Gaussian one-sided testing setup and experiment grids.

Each hypothesis is false with probability pi_a; test statistics are
Z = X + mu with X ~ N(0,1) and mu = mu_a (false) or mu_n <= 0 (true null);
the upper-tail p-value is Phi(-Z), so nulls are exactly uniform at
mu_n = 0 and conservative at mu_n < 0.  Grids sweep pi_a / mu_a / mu_n
cells, estimate power and FWER per procedure by Monte Carlo, and export
plot-ready CSV files.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import ndtr

from .oracle import McEstimate, mc_estimate
from .policies import PolicyConfig

PI_A_GRID = tuple(round(0.1 * k, 1) for k in range(1, 10))

CSV_COLUMNS = (
    "procedure", "n", "pi_a", "mu_a", "mu_n", "alpha",
    "trials", "seed", "fwer", "fwer_se", "power", "power_se",
)


@dataclass
class GaussianSetup:
    """One simulation cell's data-generating process."""

    n: int
    pi_a: float
    mu_a: float
    mu_n: float = 0.0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n!r}")
        if not 0.0 <= self.pi_a <= 1.0:
            raise ValueError(f"pi_a must be in [0, 1], got {self.pi_a!r}")
        if self.mu_n > 0.0:
            raise ValueError(f"mu_n must be <= 0 so labeled nulls are true, got {self.mu_n!r}")

    def sample(self, rng: np.random.Generator):
        """Draw one trial: (p_values, is_false).  The false-flags are drawn
        before the normals so mu-parameters do not shift the streams."""
        is_false = rng.random(self.n) < self.pi_a
        z = rng.standard_normal(self.n) + np.where(is_false, self.mu_a, self.mu_n)
        return ndtr(-z), is_false


def generate_trial(setup: GaussianSetup, rng: np.random.Generator):
    return setup.sample(rng)


@dataclass
class ExperimentGrid:
    """Cross product of setups x procedures, with a master seed."""

    procedures: list[tuple[str, PolicyConfig]]
    pi_a_values: Sequence[float]
    mu_a_values: Sequence[float]
    mu_n_values: Sequence[float]
    n: int
    trials: int
    seed: int
    label: str = "grid"


@dataclass
class CellResult:
    procedure: str
    n: int
    pi_a: float
    mu_a: float
    mu_n: float
    alpha: float
    trials: int
    seed: tuple
    estimate: Optional[McEstimate] = None
    error: Optional[str] = None

    def csv_row(self) -> dict:
        est = self.estimate
        return {
            "procedure": self.procedure,
            "n": self.n,
            "pi_a": repr(self.pi_a),
            "mu_a": repr(self.mu_a),
            "mu_n": repr(self.mu_n),
            "alpha": repr(self.alpha),
            "trials": self.trials,
            "seed": ":".join(str(k) for k in self.seed),
            "fwer": repr(est.fwer_hat),
            "fwer_se": repr(est.std_error),
            "power": repr(est.power_hat),
            "power_se": repr(est.power_std_error),
        }


@dataclass
class GridResults:
    label: str
    rows: list[CellResult] = field(default_factory=list)

    def get(self, **match) -> CellResult:
        hits = [
            r for r in self.rows
            if all(getattr(r, k) == v for k, v in match.items())
        ]
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} cells match {match!r}")
        return hits[0]

    @property
    def failed(self) -> list[CellResult]:
        return [r for r in self.rows if r.error is not None]


def run_grid(grid: ExperimentGrid, keep_trial_power: bool = False) -> GridResults:
    """Estimate every (cell, procedure) pair.

    The per-trial RNG stream is keyed by (seed, cell indices, trial), so all
    procedures in a cell see identical data (paired comparisons) and results
    do not depend on evaluation order.  A failing cell is recorded and the
    grid continues.
    """
    results = GridResults(label=grid.label)
    for i_mn, mu_n in enumerate(grid.mu_n_values):
        for i_ma, mu_a in enumerate(grid.mu_a_values):
            for i_pa, pi_a in enumerate(grid.pi_a_values):
                setup = GaussianSetup(n=grid.n, pi_a=pi_a, mu_a=mu_a, mu_n=mu_n)
                cell_seed = (grid.seed, i_mn, i_ma, i_pa)
                for name, cfg in grid.procedures:
                    cell = CellResult(
                        procedure=name, n=grid.n, pi_a=pi_a, mu_a=mu_a, mu_n=mu_n,
                        alpha=cfg.alpha, trials=grid.trials, seed=cell_seed,
                    )
                    try:
                        cell.estimate = mc_estimate(
                            cfg, setup, grid.trials, cell_seed,
                            keep_trial_power=keep_trial_power,
                        )
                    except Exception as exc:
                        cell.error = f"{type(exc).__name__}: {exc}"
                    results.rows.append(cell)
    return results


def emit_curves(results: GridResults, destination) -> list[Path]:
    """Write one CSV per results set; failed cells are omitted from the CSV
    (they stay queryable on the results object)."""
    destination = Path(destination)
    destination.mkdir(parents=True, exist_ok=True)
    name = f"figure{results.label}.csv" if results.label in ("3", "4", "5") else f"{results.label}.csv"
    path = destination / name
    try:
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            writer.writeheader()
            for cell in results.rows:
                if cell.error is None:
                    writer.writerow(cell.csv_row())
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc}") from exc
    return [path]


def _figure_procedures(gamma_kind: str, s: float, alpha: float) -> list[tuple[str, PolicyConfig]]:
    def cfg(procedure: str) -> PolicyConfig:
        from .policies import GammaSequence

        return PolicyConfig(
            procedure=procedure, alpha=alpha, tau=0.8, lam=0.16,
            gamma=GammaSequence(kind=gamma_kind, s=s),
        )

    return [
        ("alpha_spending", cfg("alpha_spending")),
        ("addis_graph", cfg("addis_graph")),
        ("ei_addis_graph", cfg("ei_addis_graph")),
    ]


def figure_grid(figure: int, trials: int, seed: int, alpha: float = 0.2) -> ExperimentGrid:
    """The three published grids: q-series gamma at n=1000 (3), log-q s=2
    gamma at n=1000 (4), and q-series gamma at n=10 with mu_a=2 (5)."""
    if figure == 3:
        procs, n, mu_a = _figure_procedures("q_series", 2.0, alpha), 1000, 4.0
    elif figure == 4:
        procs, n, mu_a = _figure_procedures("log_q", 2.0, alpha), 1000, 4.0
    elif figure == 5:
        procs, n, mu_a = _figure_procedures("q_series", 2.0, alpha), 10, 2.0
    else:
        raise ValueError(f"figure must be 3, 4 or 5, got {figure!r}")
    return ExperimentGrid(
        procedures=procs,
        pi_a_values=PI_A_GRID,
        mu_a_values=[mu_a],
        mu_n_values=[0.0, -2.0],
        n=n,
        trials=trials,
        seed=seed,
        label=str(figure),
    )
