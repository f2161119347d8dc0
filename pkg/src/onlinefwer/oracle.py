"""Ground-truth machinery: exact small-n FWER and Monte Carlo estimation.

Under the global null with independent uniform p-values, any procedure
whose levels depend on the past only through interval membership is
piecewise constant over the rectangles cut by each step's breakpoints
{0, alpha_i, lambda_i, tau_i, 1}.  `exact_fwer_global_null` integrates the
rejection probability exactly by recursing over those intervals; the
recursion deliberately skips admissibility checks so that declared-but-
invalid level sequences can be measured (that is how non-improvability is
probed).  `mc_estimate` estimates FWER and power for arbitrary
data-generating processes with per-trial reproducible RNG streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .engine import BudgetState, StepParams
from .policies import PolicyConfig, build_policy, run_procedure

# 4^12 ~ 1.7e7 interval paths; past this the tree is not worth walking.
MAX_EXACT_STEPS = 12


class OracleError(ValueError):
    pass


@dataclass(slots=True)
class RegionPath:
    """One root-to-leaf interval assignment with its probability mass."""

    intervals: list[tuple[float, float]]
    probability: float
    rejected: bool


@dataclass
class McEstimate:
    """Monte Carlo FWER/power estimate.

    ``std_error`` is the binomial standard error of ``fwer_hat``; power is
    averaged over trials that contain at least one false hypothesis.
    """

    fwer_hat: float
    power_hat: float
    trials: int
    std_error: float
    power_std_error: float
    trial_power: Optional[np.ndarray] = None


def stream_rng(*key) -> np.random.Generator:
    """Counter-based generator for a fixed stream key, e.g. (seed, trial).

    The stream depends only on the key, never on evaluation order, so any
    degree of parallelism reproduces identical trials.
    """
    return np.random.Generator(np.random.Philox(key=np.random.SeedSequence(key).generate_state(2, np.uint64)))


def _as_policy(procedure):
    if isinstance(procedure, PolicyConfig):
        return build_policy(procedure)
    return procedure


def _probe_params(policy, mid_state: BudgetState, third_state: BudgetState, step: int) -> StepParams:
    """Evaluate the policy on two parallel histories whose representative
    p-values differ inside every interval; diverging parameters mean the
    procedure is not piecewise constant and cannot be integrated exactly."""
    a = policy.params(mid_state)
    b = policy.params(third_state)
    if (a.tau, a.lam, a.alpha_i) != (b.tau, b.lam, b.alpha_i):
        raise OracleError(
            f"procedure depends on p-values beyond interval membership at step {step}: "
            f"{(a.tau, a.lam, a.alpha_i)} != {(b.tau, b.lam, b.alpha_i)}"
        )
    return a


def _walk(policy, mid_state, third_state, steps_left, step, prob, prefix, paths) -> float:
    if steps_left == 0:
        if paths is not None:
            paths.append(RegionPath(list(prefix), prob, rejected=False))
        return 0.0
    params = _probe_params(policy, mid_state, third_state, step)
    cuts = sorted({0.0, params.alpha_i, params.lam, params.tau, 1.0})
    fwer = 0.0
    for a, b in zip(cuts, cuts[1:]):
        length = b - a
        if b <= params.alpha_i:
            fwer += length
            if paths is not None:
                paths.append(RegionPath(list(prefix) + [(a, b)], prob * length, rejected=True))
            continue
        mid_child = mid_state.clone()
        third_child = third_state.clone()
        mid_child.apply(params, a + length / 2.0, check=False)
        third_child.apply(params, a + length / 3.0, check=False)
        prefix.append((a, b))
        child = _walk(policy, mid_child, third_child, steps_left - 1, step + 1,
                      prob * length, prefix, paths)
        prefix.pop()
        fwer += length * child
    return fwer


def exact_fwer_global_null(procedure, n: int) -> float:
    """Exact P(any rejection among n steps) for independent Uniform(0,1)
    p-values, computed by recursing over the procedure's interval tree."""
    if n > MAX_EXACT_STEPS:
        raise OracleError(
            f"exact enumeration over {n} steps needs up to 4**{n} interval paths; "
            f"the cap is {MAX_EXACT_STEPS}; use mc_estimate beyond it"
        )
    policy = _as_policy(procedure)
    root = BudgetState(global_alpha=policy.alpha, mode=policy.mode)
    return _walk(policy, root, root.clone(), n, 1, 1.0, [], None)


def region_paths(procedure, n: int) -> list[RegionPath]:
    """All root-to-leaf interval paths with probabilities (testing aid)."""
    if n > MAX_EXACT_STEPS:
        raise OracleError(f"region enumeration capped at {MAX_EXACT_STEPS} steps")
    policy = _as_policy(procedure)
    root = BudgetState(global_alpha=policy.alpha, mode=policy.mode)
    paths: list[RegionPath] = []
    _walk(policy, root, root.clone(), n, 1, 1.0, [], paths)
    return paths


class UniformNullModel:
    """Global-null data source: n independent Uniform(0,1) p-values."""

    def __init__(self, n: int):
        self.n = n

    def sample(self, rng: np.random.Generator):
        return rng.uniform(size=self.n), np.zeros(self.n, dtype=bool)


def mc_estimate(procedure, dgp, trials: int, seed: int,
                keep_trial_power: bool = False) -> McEstimate:
    """Estimate FWER and power over ``trials`` independent data draws.

    ``dgp`` provides ``sample(rng) -> (p_values, is_false)``.  Trial t uses
    the stream keyed by (seed, t) regardless of execution order.  Trials
    without any false hypothesis are excluded from the power average.
    """
    return mc_estimate_many([procedure], dgp, trials, seed, keep_trial_power)[0]


def mc_estimate_many(procedures: Sequence, dgp, trials: int, seed: int,
                     keep_trial_power: bool = False) -> list[McEstimate]:
    """As `mc_estimate` for several procedures sharing the same trial data,
    which makes procedure comparisons paired."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials!r}")
    seed_key = tuple(seed) if isinstance(seed, (tuple, list)) else (seed,)
    policies = [_as_policy(p) for p in procedures]
    k = len(policies)
    any_null_rejection = np.zeros((k, trials), dtype=bool)
    trial_power = np.full((k, trials), np.nan)
    for t in range(trials):
        rng = stream_rng(*seed_key, t)
        p_values, is_false = dgp.sample(rng)
        is_false = np.asarray(is_false, dtype=bool)
        n_false = int(is_false.sum())
        for j, policy in enumerate(policies):
            rejections = run_procedure(policy, p_values).rejections
            any_null_rejection[j, t] = bool(np.any(rejections & ~is_false))
            if n_false > 0:
                trial_power[j, t] = float(np.sum(rejections & is_false)) / n_false
    out = []
    for j in range(k):
        f_hat = float(np.sum(any_null_rejection[j])) / trials
        defined = trial_power[j][~np.isnan(trial_power[j])]
        if defined.size:
            p_hat = float(np.mean(defined))
            p_se = float(np.std(defined, ddof=1) / math.sqrt(defined.size)) if defined.size > 1 else math.nan
        else:
            p_hat = math.nan
            p_se = math.nan
        out.append(
            McEstimate(
                fwer_hat=f_hat,
                power_hat=p_hat,
                trials=trials,
                std_error=math.sqrt(f_hat * (1.0 - f_hat) / trials),
                power_std_error=p_se,
                trial_power=trial_power[j].copy() if keep_trial_power else None,
            )
        )
    return out
