"""Named level policies over the budget engine.

Six procedures produce per-step (tau, lambda, alpha_i) triples from the run
history: alpha_spending, addis_spending and addis_graph on the plain engine,
and e_addis_spending, e_addis_graph and ei_addis_graph, which track the
exhaustive budget.  Policies only propose parameters; `onlinefwer.engine`
validates and applies them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .engine import (
    EXHAUSTIVE,
    PLAIN,
    AdmissibilityError,
    BudgetState,
    StepOutcome,
    StepParams,
)

_PI2 = math.pi * math.pi

PROCEDURES = (
    "alpha_spending",
    "addis_spending",
    "addis_graph",
    "e_addis_spending",
    "e_addis_graph",
    "ei_addis_graph",
)


class ConfigError(ValueError):
    """Invalid policy configuration (bad ranges, divergent gamma, ...)."""

    def __init__(self, message: str, constraint: Optional[str] = None):
        super().__init__(message)
        self.constraint = constraint


class RunAbort(RuntimeError):
    """A run stopped at ``step`` because of an admissibility violation."""

    def __init__(self, step: int, cause: Exception):
        self.step = step
        self.cause = cause
        super().__init__(f"run aborted at step {step}: {cause}")


# ---------------------------------------------------------------------------
# gamma sequences
# ---------------------------------------------------------------------------

_LOG_Q_CACHE: dict[float, float] = {}


def log_q_normalizer(s: float, horizon: int = 1 << 21) -> float:
    """Normalizer c with c * sum_{i>=1} 1/((i+1) ln(i+1)^s) = 1.

    The series decays too slowly to truncate at 1e-12, so the first
    ``horizon`` terms are summed directly and the rest is replaced by the
    midpoint-rule integral of the term function, whose approximation error
    is ~|f'(horizon)|/24 < 1e-14 for the default horizon.
    """
    if s <= 1.0:
        raise ConfigError(f"log_q exponent must exceed 1 (series diverges), got {s!r}")
    key = float(s)
    cached = _LOG_Q_CACHE.get(key)
    if cached is not None:
        return cached
    i = np.arange(1, horizon + 1, dtype=np.float64)
    terms = 1.0 / ((i + 1.0) * np.log(i + 1.0) ** s)
    partial = float(np.sum(terms))
    tail = math.log(horizon + 1.5) ** (1.0 - s) / (s - 1.0)
    c = 1.0 / (partial + tail)
    _LOG_Q_CACHE[key] = c
    return c


def gamma_q_series(i: int) -> float:
    """gamma_i = 6 / (pi^2 i^2); sums to exactly one."""
    if i < 1:
        raise ValueError(f"index must be >= 1, got {i!r}")
    return 6.0 / (_PI2 * i * i)


def gamma_log_q(i: int, s: float, horizon: int = 1 << 21) -> float:
    """gamma_i = c / ((i+1) ln(i+1)^s) with c from `log_q_normalizer`."""
    if i < 1:
        raise ValueError(f"index must be >= 1, got {i!r}")
    c = log_q_normalizer(s, horizon)
    return c * (1.0 / ((i + 1.0) * math.log(i + 1.0) ** s))


@dataclass
class GammaSequence:
    """Initial allocation weights gamma_i, i >= 1, summing to at most one.

    Kinds: ``q_series`` (6/(pi^2 i^2)), ``log_q`` (1/((i+1)ln(i+1)^s),
    normalized) and ``explicit`` (finite list, zero afterwards).
    """

    kind: str = "q_series"
    s: float = 2.0
    terms: Optional[list[float]] = None
    _head: np.ndarray = field(default=None, repr=False, compare=False)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.kind not in ("q_series", "log_q", "explicit"):
            raise ConfigError(f"unknown gamma kind {self.kind!r}")
        if self.kind == "log_q":
            log_q_normalizer(self.s)  # validates s > 1, warms the cache
        if self.kind == "explicit":
            if not self.terms:
                raise ConfigError("explicit gamma needs a non-empty terms list")
            arr = np.asarray(self.terms, dtype=np.float64)
            if np.any(arr < 0.0):
                raise ConfigError("gamma terms must be non-negative")
            if float(np.max(np.cumsum(arr))) > 1.0 + 1e-12:
                raise ConfigError("gamma partial sums must not exceed 1")
        self._head = np.empty(0)

    def head(self, n: int) -> np.ndarray:
        """Internal buffer holding at least gamma_1..gamma_n (may be longer)."""
        if self._head.size >= n:
            return self._head
        size = max(n, 2 * self._head.size, 16)
        if self.kind == "explicit":
            arr = np.zeros(size)
            k = min(len(self.terms), size)
            arr[:k] = self.terms[:k]
        else:
            i = np.arange(1, size + 1, dtype=np.float64)
            if self.kind == "q_series":
                arr = 6.0 / (_PI2 * i * i)
            else:
                c = log_q_normalizer(self.s)
                arr = c * (1.0 / ((i + 1.0) * np.log(i + 1.0) ** self.s))
        self._head = arr
        return arr

    def value(self, i: int) -> float:
        if i < 1:
            raise ValueError(f"index must be >= 1, got {i!r}")
        return float(self.head(i)[i - 1])

    def values(self, n: int) -> np.ndarray:
        return self.head(n)[:n].copy()

    def to_dict(self) -> dict:
        if self.kind == "explicit":
            return {"kind": self.kind, "terms": list(self.terms)}
        if self.kind == "log_q":
            return {"kind": self.kind, "s": self.s}
        return {"kind": self.kind}

    @classmethod
    def from_dict(cls, d: dict) -> "GammaSequence":
        kind = d.get("kind", "q_series")
        return cls(kind=kind, s=float(d.get("s", 2.0)), terms=d.get("terms"))


# ---------------------------------------------------------------------------
# graph weights
# ---------------------------------------------------------------------------

def _check_weight_table(table) -> np.ndarray:
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] != table.shape[1]:
        raise ConfigError("weights table must be square")
    if np.any(table < 0.0):
        raise ConfigError("weights must be non-negative")
    if np.any(np.triu(table, k=1).sum(axis=1) > 1.0 + 1e-12):
        raise ConfigError("weight rows must sum to at most one")
    return table


@dataclass
class GraphWeights:
    """Redistribution weights g_{j,i} and h_{j,i} for i > j.

    ``lagged_gamma`` sets g_{j,i} = h_{j,i} = gamma_{i-j}; ``explicit``
    takes full matrices ``table[j-1][i-1]`` (h defaults to g) whose rows
    must be non-negative and sum to at most one over i > j.
    """

    form: str = "lagged_gamma"
    gamma: Optional[GammaSequence] = None
    table: Optional[np.ndarray] = None
    h_table: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.form == "lagged_gamma":
            if self.gamma is None:
                self.gamma = GammaSequence()
        elif self.form == "explicit":
            if self.table is None:
                raise ConfigError("explicit weights need a table")
            self.table = _check_weight_table(self.table)
            if self.h_table is not None:
                self.h_table = _check_weight_table(self.h_table)
        else:
            raise ConfigError(f"unknown weights form {self.form!r}")

    def _in(self, i: int, table: np.ndarray) -> np.ndarray:
        if self.form == "lagged_gamma":
            head = self.gamma.head(max(i - 1, 1))
            return head[: i - 1][::-1]
        if i > table.shape[0]:
            return np.zeros(i - 1)
        return table[: i - 1, i - 1]

    def weight(self, j: int, i: int) -> float:
        if i <= j:
            raise ValueError(f"weights are defined for i > j, got j={j}, i={i}")
        if self.form == "lagged_gamma":
            return self.gamma.value(i - j)
        if i > self.table.shape[0]:
            return 0.0
        return float(self.table[j - 1, i - 1])

    def incoming(self, i: int) -> np.ndarray:
        """g-weights feeding step i from j = 1..i-1 (may be a view)."""
        return self._in(i, self.table)

    def incoming_h(self, i: int) -> np.ndarray:
        """h-weights feeding step i; defaults to the g-weights."""
        return self._in(i, self.table if self.h_table is None else self.h_table)

    def outgoing(self, j: int, n: int) -> np.ndarray:
        """g-weights from step j to i = j+1..n."""
        if self.form == "lagged_gamma":
            return self.gamma.head(max(n - j, 1))[: n - j]
        out = np.zeros(n - j)
        if j <= self.table.shape[0]:
            cols = min(n, self.table.shape[1])
            out[: cols - j] = self.table[j - 1, j:cols]
        return out

    def to_dict(self) -> dict:
        if self.form == "explicit":
            d = {"form": self.form, "table": self.table.tolist()}
            if self.h_table is not None:
                d["h_table"] = self.h_table.tolist()
            return d
        return {"form": self.form}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

RateRule = Union[float, Callable[[int], float]]


@dataclass
class PolicyConfig:
    """Which procedure to run, at which level, with which parameters.

    ``tau`` and ``lam`` may be constants or per-index callables (which must
    only depend on the index / prior outcomes).  Exhaustive procedures with
    constant parameters are checked for ``lam >= tau * alpha`` here; that is
    sufficient for every step since the remaining budget never exceeds alpha.
    """

    procedure: str
    alpha: float
    tau: RateRule = 0.8
    lam: RateRule = 0.16
    gamma: GammaSequence = field(default_factory=GammaSequence)
    weights: Optional[GraphWeights] = None

    def __post_init__(self) -> None:
        if self.procedure not in PROCEDURES:
            raise ConfigError(
                f"unknown procedure {self.procedure!r}; expected one of {', '.join(PROCEDURES)}"
            )
        self.alpha = float(self.alpha)
        if not callable(self.tau):
            self.tau = float(self.tau)
        if not callable(self.lam):
            self.lam = float(self.lam)
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha!r}")
        if isinstance(self.tau, float) and not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must be in (0, 1], got {self.tau!r}")
        if (
            isinstance(self.tau, float)
            and isinstance(self.lam, float)
            and not 0.0 <= self.lam < self.tau
        ):
            raise ConfigError(f"lambda must be in [0, tau), got {self.lam!r}")
        if self.weights is None and self.procedure.endswith("graph"):
            self.weights = GraphWeights(form="lagged_gamma", gamma=self.gamma)
        if self.is_exhaustive and isinstance(self.tau, float) and isinstance(self.lam, float):
            if self.lam < self.tau * self.alpha - 1e-12:
                raise ConfigError(
                    f"exhaustive procedures need lambda >= tau*alpha: "
                    f"{self.lam!r} < {self.tau * self.alpha!r}",
                    constraint="lambda >= tau*alpha",
                )

    @property
    def is_exhaustive(self) -> bool:
        return self.procedure in ("e_addis_spending", "e_addis_graph", "ei_addis_graph")

    @property
    def mode(self) -> str:
        return EXHAUSTIVE if self.is_exhaustive else PLAIN

    def tau_at(self, i: int) -> float:
        return self.tau(i) if callable(self.tau) else self.tau

    def lam_at(self, i: int) -> float:
        return self.lam(i) if callable(self.lam) else self.lam

    def to_dict(self) -> dict:
        d = {
            "procedure": self.procedure,
            "alpha": self.alpha,
            "tau": self.tau if not callable(self.tau) else None,
            "lambda": self.lam if not callable(self.lam) else None,
            "gamma": self.gamma.to_dict(),
        }
        if self.weights is not None:
            d["weights"] = self.weights.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyConfig":
        try:
            procedure = d["procedure"]
            alpha = float(d["alpha"])
        except KeyError as exc:
            raise ConfigError(f"config is missing required key {exc}") from exc
        gamma = GammaSequence.from_dict(d.get("gamma", {}))
        weights = None
        wd = d.get("weights")
        if wd:
            form = wd.get("form", "lagged_gamma")
            if form == "lagged_gamma":
                weights = GraphWeights(form=form, gamma=gamma)
            else:
                weights = GraphWeights(form=form, table=wd.get("table"), h_table=wd.get("h_table"))
        return cls(
            procedure=procedure,
            alpha=alpha,
            tau=float(d.get("tau", 0.8)),
            lam=float(d.get("lambda", 0.16)),
            gamma=gamma,
            weights=weights,
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "PolicyConfig":
        """Load a JSON or TOML configuration document."""
        path = Path(path)
        raw = path.read_bytes()
        if path.suffix.lower() == ".toml":
            try:
                import tomllib  # Python >= 3.11
            except ModuleNotFoundError:
                import tomli as tomllib
            data = tomllib.loads(raw.decode("utf-8"))
        else:
            data = json.loads(raw.decode("utf-8"))
        if not isinstance(data, dict):
            raise ConfigError(f"config root must be a table/object, got {type(data).__name__}")
        return cls.from_dict(data)


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------

class _Policy:
    """Shared incremental-absorption machinery.

    Subclasses keep per-step mass buffers; `_sync` absorbs unseen outcomes
    from the state's history and falls back to a full rebuild whenever the
    history is not a continuation of what was absorbed before (e.g. after a
    discarded what-if branch).
    """

    mode = PLAIN

    def __init__(self, cfg: PolicyConfig):
        self.cfg = cfg
        self.alpha = cfg.alpha
        self._applied = 0
        self._last: Optional[StepOutcome] = None

    def params(self, state: BudgetState) -> StepParams:
        self._sync(state)
        return self._propose(state)

    def _sync(self, state: BudgetState) -> None:
        h = state.history
        k = len(h)
        if self._applied == k and (k == 0 or self._last is h[-1]):
            return
        continuation = (
            self._applied < k
            and (self._applied == 0 or self._last is h[self._applied - 1])
        )
        if not continuation:
            self._reset()
            self._applied = 0
        for o in h[self._applied:]:
            self._absorb(o)
        self._applied = k
        self._last = h[-1] if h else None

    def _reset(self) -> None:
        pass

    def _absorb(self, outcome: StepOutcome) -> None:
        pass

    def _propose(self, state: BudgetState) -> StepParams:
        raise NotImplementedError


class _MassBuffer:
    """Growable float buffer for per-step redistribution masses."""

    __slots__ = ("data", "count")

    def __init__(self) -> None:
        self.data = np.zeros(64)
        self.count = 0

    def push(self, value: float) -> None:
        if self.count == self.data.size:
            grown = np.zeros(self.data.size * 2)
            grown[: self.count] = self.data
            self.data = grown
        self.data[self.count] = value
        self.count += 1

    def view(self) -> np.ndarray:
        return self.data[: self.count]

    def clear(self) -> None:
        self.count = 0


class AlphaSpendingPolicy(_Policy):
    """Pure spending: alpha_i = alpha*gamma_i at tau=1, lambda=0.

    With this degenerate setting every p-value takes the spend branch, so
    the engine ledger reduces to the plain sum of the alpha_i.
    """

    mode = PLAIN

    def _propose(self, state: BudgetState) -> StepParams:
        return StepParams(tau=1.0, lam=0.0, alpha_i=self.alpha * self.cfg.gamma.value(state.step))


class AddisSpendingPolicy(_Policy):
    """alpha_i = (tau-lam) * alpha * gamma_{t(i)}, t frozen on kept steps."""

    mode = PLAIN

    def __init__(self, cfg: PolicyConfig):
        super().__init__(cfg)
        self._t = 1

    def _reset(self) -> None:
        self._t = 1

    def _absorb(self, outcome: StepOutcome) -> None:
        self._t += outcome.s - outcome.c

    def _propose(self, state: BudgetState) -> StepParams:
        i = state.step
        tau, lam = self.cfg.tau_at(i), self.cfg.lam_at(i)
        return StepParams(tau=tau, lam=lam, alpha_i=(tau - lam) * self.alpha * self.cfg.gamma.value(self._t))


class EAddisSpendingPolicy(AddisSpendingPolicy):
    """Exhaustive counterpart: the (tau-lam) factor becomes (tau-lam)/(1-remaining)."""

    mode = EXHAUSTIVE

    def _propose(self, state: BudgetState) -> StepParams:
        i = state.step
        tau, lam = self.cfg.tau_at(i), self.cfg.lam_at(i)
        level = (tau - lam) / (1.0 - state.remaining) * self.alpha * self.cfg.gamma.value(self._t)
        return StepParams(tau=tau, lam=lam, alpha_i=level)


class AddisGraphPolicy(_Policy):
    """alpha_i = (tau-lam) * (alpha*gamma_i + sum_j g_{j,i} * kept_j * alpha_j/(tau_j-lam_j))."""

    mode = PLAIN

    def __init__(self, cfg: PolicyConfig):
        super().__init__(cfg)
        self._mass = _MassBuffer()

    def _reset(self) -> None:
        self._mass.clear()

    def _absorb(self, outcome: StepOutcome) -> None:
        p = outcome.params
        kept = 1.0 - (outcome.s - outcome.c)
        self._mass.push(kept * p.alpha_i / (p.tau - p.lam))

    def _base(self, state: BudgetState) -> float:
        i = state.step
        base = self.alpha * self.cfg.gamma.value(i)
        if i > 1:
            base += float(np.dot(self.cfg.weights.incoming(i), self._mass.view()))
        return base

    def _propose(self, state: BudgetState) -> StepParams:
        i = state.step
        tau, lam = self.cfg.tau_at(i), self.cfg.lam_at(i)
        return StepParams(tau=tau, lam=lam, alpha_i=(tau - lam) * self._base(state))


class EAddisGraphPolicy(AddisGraphPolicy):
    """Exhaustive graph: masses carry the (1-remaining-then) factor and the
    level carries 1/(1-remaining-now)."""

    mode = EXHAUSTIVE

    def _absorb(self, outcome: StepOutcome) -> None:
        p = outcome.params
        kept = 1.0 - (outcome.s - outcome.c)
        self._mass.push(kept * p.alpha_i * (1.0 - outcome.remaining_before) / (p.tau - p.lam))

    def _propose(self, state: BudgetState) -> StepParams:
        i = state.step
        tau, lam = self.cfg.tau_at(i), self.cfg.lam_at(i)
        level = (tau - lam) / (1.0 - state.remaining) * self._base(state)
        return StepParams(tau=tau, lam=lam, alpha_i=level)


class EIAddisGraphPolicy(_Policy):
    """Evenly-improved graph: kept levels redistribute via g as usual and
    spent steps additionally redistribute alpha_j * budget_j / (tau_j-lam_j)
    via h.  Runs on the exhaustive engine to track the budget factors."""

    mode = EXHAUSTIVE

    def __init__(self, cfg: PolicyConfig):
        super().__init__(cfg)
        self._kept = _MassBuffer()
        self._bonus = _MassBuffer()

    def _reset(self) -> None:
        self._kept.clear()
        self._bonus.clear()

    def _absorb(self, outcome: StepOutcome) -> None:
        p = outcome.params
        spent = float(outcome.s - outcome.c)
        scaled = p.alpha_i / (p.tau - p.lam)
        self._kept.push((1.0 - spent) * scaled)
        self._bonus.push(spent * scaled * outcome.remaining_before)

    def _propose(self, state: BudgetState) -> StepParams:
        i = state.step
        tau, lam = self.cfg.tau_at(i), self.cfg.lam_at(i)
        base = self.alpha * self.cfg.gamma.value(i)
        if i > 1:
            base += float(np.dot(self.cfg.weights.incoming(i), self._kept.view()))
            base += float(np.dot(self.cfg.weights.incoming_h(i), self._bonus.view()))
        return StepParams(tau=tau, lam=lam, alpha_i=(tau - lam) * base)


class RemarkPolicy:
    """Exhaustive special case tau=1, lambda=alpha_i=remaining.

    Keeps testing at the full remaining level while rejections continue;
    the first non-rejection exhausts the budget entirely.
    """

    mode = EXHAUSTIVE

    def __init__(self, alpha: float):
        self.alpha = alpha

    def params(self, state: BudgetState) -> StepParams:
        r = max(state.remaining, 0.0)  # engine tolerates remaining >= -eps
        return StepParams(tau=1.0, lam=r, alpha_i=r)


_POLICY_CLASSES = {
    "alpha_spending": AlphaSpendingPolicy,
    "addis_spending": AddisSpendingPolicy,
    "addis_graph": AddisGraphPolicy,
    "e_addis_spending": EAddisSpendingPolicy,
    "e_addis_graph": EAddisGraphPolicy,
    "ei_addis_graph": EIAddisGraphPolicy,
}


def build_policy(cfg: PolicyConfig) -> _Policy:
    return _POLICY_CLASSES[cfg.procedure](cfg)


# Spec-level operation surfaces: stateless one-shot evaluations.

def alpha_spending_level(cfg: PolicyConfig, i: int) -> StepParams:
    return StepParams(tau=1.0, lam=0.0, alpha_i=cfg.alpha * cfg.gamma.value(i))


def addis_spending_level(cfg: PolicyConfig, state: BudgetState) -> StepParams:
    return AddisSpendingPolicy(cfg).params(state)


def addis_graph_level(cfg: PolicyConfig, state: BudgetState) -> StepParams:
    return AddisGraphPolicy(cfg).params(state)


def e_addis_spending_level(cfg: PolicyConfig, state: BudgetState) -> StepParams:
    return EAddisSpendingPolicy(cfg).params(state)


def e_addis_graph_level(cfg: PolicyConfig, state: BudgetState) -> StepParams:
    return EAddisGraphPolicy(cfg).params(state)


def ei_addis_graph_level(cfg: PolicyConfig, state: BudgetState) -> StepParams:
    return EIAddisGraphPolicy(cfg).params(state)


# ---------------------------------------------------------------------------
# running a procedure over a finite sequence
# ---------------------------------------------------------------------------

@dataclass
class RunTrace:
    """Deterministic trace of one procedure over one p-value sequence."""

    levels: np.ndarray
    rejections: np.ndarray
    budgets_before: np.ndarray
    budgets_after: np.ndarray
    state: BudgetState

    @property
    def outcomes(self) -> list[StepOutcome]:
        return self.state.history


def run_procedure(config_or_policy, p_values) -> RunTrace:
    """Run a configured procedure (or a prebuilt policy) over ``p_values``.

    Admissibility violations abort with the offending step index.
    """
    if isinstance(config_or_policy, PolicyConfig):
        policy = build_policy(config_or_policy)
    else:
        policy = config_or_policy
    p_values = np.asarray(p_values, dtype=np.float64)
    n = p_values.size
    state = BudgetState(global_alpha=policy.alpha, mode=policy.mode)
    levels = np.empty(n)
    rejections = np.empty(n, dtype=bool)
    before = np.empty(n)
    after = np.empty(n)
    for i in range(n):
        try:
            params = policy.params(state)
        except (ValueError, AdmissibilityError) as exc:
            raise RunAbort(i + 1, exc) from exc
        before[i] = state.remaining
        try:
            outcome = state.apply(params, float(p_values[i]))
        except AdmissibilityError as exc:
            raise RunAbort(i + 1, exc) from exc
        levels[i] = params.alpha_i
        rejections[i] = bool(outcome.rejected)
        after[i] = state.remaining
    return RunTrace(levels=levels, rejections=rejections, budgets_before=before,
                    budgets_after=after, state=state)


def graph_recursion_levels(cfg: PolicyConfig, p_values) -> np.ndarray:
    """Scaled levels alpha~_i of the plain graph procedure via the update
    recursion: start from alpha*gamma_i and, whenever step j keeps its level
    (p_j <= lam_j or p_j > tau_j), add g_{j,i} * alpha~_j to every later step.

    Multiplying by (tau_i - lam_i) reproduces `addis_graph_level`; the
    redundancy is an intentional internal cross-check.
    """
    if cfg.procedure != "addis_graph":
        raise ConfigError("the recursion form is defined for the plain addis_graph procedure")
    p_values = np.asarray(p_values, dtype=np.float64)
    n = p_values.size
    tilde = cfg.alpha * cfg.gamma.values(n)
    for j in range(1, n + 1):
        p = p_values[j - 1]
        tau, lam = cfg.tau_at(j), cfg.lam_at(j)
        if p <= lam or p > tau:
            tilde[j:] += cfg.weights.outgoing(j, n) * tilde[j - 1]
    return tilde
