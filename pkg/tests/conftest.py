import numpy as np
import pytest

from onlinefwer.engine import EXHAUSTIVE, PLAIN, StepParams


class TwoStepExhaustive:
    """Hand-built 2-step procedure: tau1=1, lambda1=0.5, alpha1=0.1, then the
    remaining budget is fully offered at step 2 (tau=1, lambda=alpha2=budget).

    ``bump`` raises the step-2 level on the spend branch only, which makes
    the declared sequence exceed the admissible budget on purpose.
    """

    mode = EXHAUSTIVE
    alpha = 0.2

    def __init__(self, bump: float = 0.0):
        self.bump = bump

    def params(self, state):
        if state.step == 1:
            return StepParams(tau=1.0, lam=0.5, alpha_i=0.1)
        r = max(state.remaining, 0.0)
        a2 = r
        if self.bump and state.history[0].spent:
            a2 = r + self.bump
        return StepParams(tau=1.0, lam=max(r, a2), alpha_i=a2)


class TwoStepPlain:
    """Plain-budget counterpart of `TwoStepExhaustive`; the spend branch
    leaves no budget for step 2."""

    mode = PLAIN
    alpha = 0.2

    def params(self, state):
        if state.step == 1:
            return StepParams(tau=1.0, lam=0.5, alpha_i=0.1)
        r = max(state.remaining, 0.0)
        return StepParams(tau=1.0, lam=r, alpha_i=r)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
