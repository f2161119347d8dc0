"""Budget state machines for online FWER control.

Two sequential procedures over a stream of p-values: the plain
adaptive-discard update, which reserves ``alpha_i / (tau_i - lambda_i)``
out of the remaining budget whenever ``lambda_i < p_i <= tau_i``, and the
exhaustive variant, which reserves the smaller amount
``alpha_i * (1 - remaining) / (tau_i - lambda_i)`` and in exchange demands
``lambda_i >= tau_i * remaining``.  The engine only validates and applies
per-step parameters; choosing them is the job of `onlinefwer.policies`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

PLAIN = "plain"
EXHAUSTIVE = "exhaustive"

# Absolute tolerance for all admissibility inequalities.  Guards against
# accumulation error without hiding real violations.
BUDGET_EPS = 1e-12


class AdmissibilityError(ValueError):
    """Raised when a step is attempted with inadmissible parameters."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__(str(report))


@dataclass(slots=True)
class Violation:
    """One failed inequality, with both sides as evaluated."""

    inequality: str
    lhs: float
    rhs: float

    def __str__(self) -> str:
        return f"{self.inequality}: {self.lhs!r} < {self.rhs!r}"


@dataclass(slots=True)
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(str(v) for v in self.violations)


@dataclass(slots=True)
class StepParams:
    """Per-step triple (tau, lambda, alpha_i) proposed by a policy.

    Requires 0 < tau <= 1, 0 <= lam < tau and 0 <= alpha_i < tau.  The
    budget-dependent constraints are checked by the engine, not here.
    """

    tau: float
    lam: float
    alpha_i: float

    def __post_init__(self) -> None:
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must be in (0, 1], got {self.tau!r}")
        if not 0.0 <= self.lam < self.tau:
            raise ValueError(f"lambda must be in [0, tau), got {self.lam!r} with tau={self.tau!r}")
        if not 0.0 <= self.alpha_i < self.tau:
            raise ValueError(f"alpha_i must be in [0, tau), got {self.alpha_i!r} with tau={self.tau!r}")


@dataclass(slots=True)
class StepOutcome:
    """Record of one applied step.

    ``s`` marks p <= tau (selected), ``c`` marks p <= lambda (candidate),
    ``rejected`` marks p <= alpha_i.  ``remaining_before`` is the budget in
    force when the step ran; exhaustive graph policies read it back.
    """

    p: float
    s: int
    c: int
    rejected: int
    params: StepParams
    remaining_before: float

    @property
    def spent(self) -> bool:
        """True when this step consumed budget (selected but not candidate)."""
        return self.s == 1 and self.c == 0


def _spend_amount(mode: str, remaining: float, params: StepParams) -> float:
    """Budget consumed if the spend branch is taken at this step.

    The exhaustive form groups the ratio first so that the special setting
    tau=1, lambda=remaining drains the budget to exactly zero.
    """
    if mode == PLAIN:
        return params.alpha_i / (params.tau - params.lam)
    return params.alpha_i * ((1.0 - remaining) / (params.tau - params.lam))


@dataclass
class BudgetState:
    """Single-owner sequential state: next step index, remaining level, history.

    Values may move between threads but must never be mutated concurrently.
    Use `clone` for what-if exploration.
    """

    global_alpha: float
    mode: str = PLAIN
    remaining: float = None  # type: ignore[assignment]
    step: int = 1
    history: list[StepOutcome] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not 0.0 < self.global_alpha < 1.0:
            raise ValueError(f"global alpha must be in (0, 1), got {self.global_alpha!r}")
        if self.mode not in (PLAIN, EXHAUSTIVE):
            raise ValueError(f"mode must be {PLAIN!r} or {EXHAUSTIVE!r}, got {self.mode!r}")
        if self.remaining is None:
            self.remaining = self.global_alpha

    def clone(self) -> "BudgetState":
        return BudgetState(
            global_alpha=self.global_alpha,
            mode=self.mode,
            remaining=self.remaining,
            step=self.step,
            history=list(self.history),
        )

    def validate(self, params: StepParams) -> ValidationReport:
        return validate_step(self, params)

    def apply(self, params: StepParams, p: float, check: bool = True) -> StepOutcome:
        """Apply one p-value under ``params``; mutates this state.

        With ``check=False`` the admissibility inequalities are skipped
        (used by the exact oracle to measure declared-but-invalid level
        sequences); the arithmetic is identical either way.
        """
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p-value must be in [0, 1], got {p!r}")
        if check:
            report = validate_step(self, params)
            if not report.ok:
                raise AdmissibilityError(report)
        s = 1 if p <= params.tau else 0
        c = 1 if p <= params.lam else 0
        rejected = 1 if p <= params.alpha_i else 0
        outcome = StepOutcome(
            p=p, s=s, c=c, rejected=rejected, params=params, remaining_before=self.remaining
        )
        if s == 1 and c == 0:
            self.remaining = self.remaining - _spend_amount(self.mode, self.remaining, params)
        self.step += 1
        self.history.append(outcome)
        return outcome

    # -- snapshot serialization -------------------------------------------

    def snapshot(self) -> dict:
        """Flat JSON-ready record; round-trips exactly via `from_snapshot`."""
        return {
            "mode": self.mode,
            "step": self.step,
            "remaining": self.remaining,
            "global_alpha": self.global_alpha,
            "history": [
                {
                    "p": o.p,
                    "tau": o.params.tau,
                    "lambda": o.params.lam,
                    "alpha_i": o.params.alpha_i,
                    "s": o.s,
                    "c": o.c,
                    "rejected": o.rejected,
                }
                for o in self.history
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.snapshot())

    @classmethod
    def from_snapshot(cls, snap: dict) -> "BudgetState":
        """Rebuild a state by replaying the recorded history.

        The stored ``remaining`` is redundant with the replay; a mismatch
        beyond bit-identity means the snapshot is corrupt.
        """
        state = cls(global_alpha=snap["global_alpha"], mode=snap["mode"])
        for rec in snap["history"]:
            params = StepParams(tau=rec["tau"], lam=rec["lambda"], alpha_i=rec["alpha_i"])
            outcome = state.apply(params, rec["p"], check=False)
            if (outcome.s, outcome.c, outcome.rejected) != (rec["s"], rec["c"], rec["rejected"]):
                raise ValueError(f"snapshot history inconsistent at step {state.step - 1}")
        if state.step != snap["step"]:
            raise ValueError(f"snapshot step mismatch: replay {state.step}, stored {snap['step']}")
        if state.remaining != snap["remaining"]:
            raise ValueError(
                f"snapshot remaining mismatch: replay {state.remaining!r}, "
                f"stored {snap['remaining']!r}"
            )
        return state

    @classmethod
    def from_json(cls, text: str) -> "BudgetState":
        return cls.from_snapshot(json.loads(text))


def validate_step(state: BudgetState, params: StepParams) -> ValidationReport:
    """Check the budget inequalities for running ``params`` on ``state``.

    Plain mode needs ``remaining - alpha_i/(tau-lam) >= -eps``; exhaustive
    mode needs ``remaining - alpha_i*(1-remaining)/(tau-lam) >= -eps`` and
    additionally ``lam >= tau*remaining - eps``.
    """
    report = ValidationReport()
    reserve = _spend_amount(state.mode, state.remaining, params)
    if state.remaining - reserve < -BUDGET_EPS:
        name = (
            "remaining >= alpha_i/(tau-lambda)"
            if state.mode == PLAIN
            else "remaining >= alpha_i*(1-remaining)/(tau-lambda)"
        )
        report.violations.append(Violation(name, state.remaining, reserve))
    if state.mode == EXHAUSTIVE and params.lam < params.tau * state.remaining - BUDGET_EPS:
        report.violations.append(
            Violation("lambda >= tau*remaining", params.lam, params.tau * state.remaining)
        )
    return report


def addis_step(state: BudgetState, params: StepParams, p: float) -> tuple[StepOutcome, BudgetState]:
    """Run one plain-mode step; mutates and returns ``state``."""
    if state.mode != PLAIN:
        raise ValueError(f"addis_step requires plain mode, state is {state.mode!r}")
    outcome = state.apply(params, p)
    return outcome, state


def exhaustive_addis_step(
    state: BudgetState, params: StepParams, p: float
) -> tuple[StepOutcome, BudgetState]:
    """Run one exhaustive-mode step; mutates and returns ``state``."""
    if state.mode != EXHAUSTIVE:
        raise ValueError(f"exhaustive_addis_step requires exhaustive mode, state is {state.mode!r}")
    outcome = state.apply(params, p)
    return outcome, state


def remark_special_step(state: BudgetState, p: float) -> tuple[StepOutcome, BudgetState]:
    """Exhaustive step at tau=1, lambda=alpha_i=remaining.

    Rejections keep the budget; the first non-rejection spends all of it
    (the subtracted amount equals the remaining level exactly).
    """
    params = StepParams(tau=1.0, lam=state.remaining, alpha_i=state.remaining)
    return exhaustive_addis_step(state, params, p)
