"""Live online-testing sessions with durable append-only event logs.

A session is one analyst's ongoing study: a policy configuration plus the
engine state reached by the submitted p-values.  Every accepted submission
is appended to a JSON-lines log and fsynced before it is acknowledged;
restoring replays the log through the engine, so the log is authoritative
and the state is reproduced bit-for-bit.  Periodic snapshots are written as
an inspection aid only.
"""

from __future__ import annotations

import json
import os
import secrets
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .engine import BudgetState
from .policies import PolicyConfig, build_policy

SNAPSHOT_EVERY = 100


class UnknownSessionError(KeyError):
    def __init__(self, session_id: str):
        super().__init__(f"unknown session {session_id!r}")
        self.session_id = session_id


class SequenceConflictError(RuntimeError):
    pass


@dataclass(slots=True)
class DecisionRecord:
    """One acknowledged submission."""

    seq: int
    step: int
    p: float
    level: float
    tau: float
    lam: float
    rejected: bool
    remaining: float

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "step": self.step,
            "p": self.p,
            "level": self.level,
            "tau": self.tau,
            "lambda": self.lam,
            "rejected": self.rejected,
            "remaining": self.remaining,
        }


@dataclass(slots=True)
class WhatIfReport:
    """Hypothetical outcome computed on a copy; never mutates the session."""

    p: float
    would_reject: bool
    next_remaining: float
    next_level: float


@dataclass
class LevelInfo:
    step: int
    level: float
    tau: float
    lam: float
    remaining: float

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "level": self.level,
            "tau": self.tau,
            "lambda": self.lam,
            "remaining": self.remaining,
        }


@dataclass
class Session:
    id: str
    config_dict: dict
    config: PolicyConfig
    policy: object
    state: BudgetState
    decisions: list[DecisionRecord] = field(default_factory=list)
    created: float = field(default_factory=time.time)
    updated: float = field(default_factory=time.time)
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def current_level(self) -> LevelInfo:
        params = self.policy.params(self.state)
        return LevelInfo(
            step=self.state.step, level=params.alpha_i, tau=params.tau,
            lam=params.lam, remaining=self.state.remaining,
        )

    def summary(self) -> dict:
        info = self.current_level()
        return {
            "id": self.id,
            "procedure": self.config.procedure,
            "alpha": self.config.alpha,
            "mode": self.state.mode,
            "step": self.state.step,
            "remaining": self.state.remaining,
            "level": info.level,
            "submissions": len(self.decisions),
            "created": self.created,
            "updated": self.updated,
        }


@dataclass
class RestoreReport:
    restored: list[str] = field(default_factory=list)
    quarantined: list[tuple[str, str]] = field(default_factory=list)
    dropped_tails: list[tuple[str, int]] = field(default_factory=list)


class SessionStore:
    """All live sessions, optionally persisted under one directory.

    Per-session updates are serialized by a session lock; sessions are
    independent of each other.  With ``persist_dir=None`` the store is
    purely in-memory (tests).
    """

    def __init__(self, persist_dir=None):
        self.persist_dir = Path(persist_dir) if persist_dir is not None else None
        if self.persist_dir is not None:
            self.persist_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._logs: dict[str, object] = {}
        self._registry_lock = threading.Lock()
        self.restore_report = RestoreReport()
        if self.persist_dir is not None:
            self.restore_report = self._restore()

    # -- persistence -------------------------------------------------------

    def _log_path(self, session_id: str) -> Path:
        return self.persist_dir / f"{session_id}.jsonl"

    def _snapshot_path(self, session_id: str) -> Path:
        return self.persist_dir / f"{session_id}.snapshot.json"

    def _append_event(self, session: Session, event: dict) -> None:
        """Append one line and fsync before the caller acknowledges."""
        if self.persist_dir is None:
            return
        fh = self._logs.get(session.id)
        if fh is None:
            fh = self._log_path(session.id).open("a", encoding="utf-8")
            self._logs[session.id] = fh
        fh.write(json.dumps(event) + "\n")
        fh.flush()
        os.fsync(fh.fileno())

    def _maybe_snapshot(self, session: Session) -> None:
        if self.persist_dir is None or len(session.decisions) % SNAPSHOT_EVERY != 0:
            return
        snap = {
            "id": session.id,
            "at_seq": len(session.decisions),
            "config": session.config_dict,
            "state": session.state.snapshot(),
        }
        self._snapshot_path(session.id).write_text(json.dumps(snap), encoding="utf-8")

    def _restore(self) -> RestoreReport:
        report = RestoreReport()
        for path in sorted(self.persist_dir.glob("*.jsonl")):
            try:
                session, dropped = self._replay_log(path)
            except Exception as exc:
                report.quarantined.append((path.name, str(exc)))
                continue
            self._sessions[session.id] = session
            report.restored.append(session.id)
            if dropped:
                report.dropped_tails.append((path.name, dropped))
        return report

    def _replay_log(self, path: Path) -> tuple[Session, int]:
        """Rebuild a session by replaying its log through the engine.

        A final line that fails to parse is treated as a crash torn write:
        it is dropped (reported) and the prior state stands.  Any earlier
        corruption quarantines the whole session.
        """
        raw_lines = path.read_text(encoding="utf-8").splitlines()
        events = []
        dropped = 0
        for k, line in enumerate(raw_lines):
            if not line.strip():
                continue
            try:
                events.append(json.loads(line))
            except json.JSONDecodeError:
                if k == len(raw_lines) - 1:
                    dropped = 1
                    break
                raise ValueError(f"corrupt log line {k + 1}")
        if not events or events[0].get("type") != "create":
            raise ValueError("log does not start with a create event")
        head = events[0]
        config = PolicyConfig.from_dict(head["config"])
        policy = build_policy(config)
        state = BudgetState(global_alpha=config.alpha, mode=policy.mode)
        session = Session(
            id=head["id"], config_dict=head["config"], config=config,
            policy=policy, state=state, created=head.get("created", time.time()),
        )
        for k, event in enumerate(events[1:], start=2):
            if event.get("type") != "pvalue":
                raise ValueError(f"unexpected event type {event.get('type')!r} on line {k}")
            if event["seq"] != len(session.decisions) + 1:
                raise ValueError(f"sequence gap on line {k}")
            params = policy.params(state)
            outcome = state.apply(params, event["p"])
            if params.alpha_i != event["level"] or state.remaining != event["remaining"]:
                raise ValueError(f"replay mismatch on line {k}: log does not match this engine")
            session.decisions.append(
                DecisionRecord(
                    seq=event["seq"], step=len(session.decisions) + 1, p=event["p"],
                    level=params.alpha_i, tau=params.tau, lam=params.lam,
                    rejected=bool(outcome.rejected), remaining=state.remaining,
                )
            )
            session.updated = event.get("ts", session.updated)
        return session, dropped

    # -- operations --------------------------------------------------------

    def create(self, config_dict: dict) -> Session:
        config = PolicyConfig.from_dict(config_dict)  # raises ConfigError when invalid
        policy = build_policy(config)
        session_id = secrets.token_hex(8)
        state = BudgetState(global_alpha=config.alpha, mode=policy.mode)
        session = Session(
            id=session_id, config_dict=config.to_dict(), config=config,
            policy=policy, state=state,
        )
        session.current_level()  # the first level must be computable up front
        with self._registry_lock:
            self._sessions[session_id] = session
        self._append_event(
            session, {"type": "create", "id": session_id, "config": session.config_dict,
                      "created": session.created},
        )
        return session

    def get(self, session_id: str) -> Session:
        session = self._sessions.get(session_id)
        if session is None:
            raise UnknownSessionError(session_id)
        return session

    def ids(self) -> list[str]:
        return sorted(self._sessions)

    def submit(self, session_id: str, p: float, seq: int) -> DecisionRecord:
        """Apply one p-value; durable before acknowledged; idempotent on the
        retransmission of an already-applied sequence number."""
        session = self.get(session_id)
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p-value must be in [0, 1], got {p!r}")
        with session.lock:
            applied = len(session.decisions)
            if 1 <= seq <= applied:
                prior = session.decisions[seq - 1]
                if prior.p == p:
                    return prior
                raise SequenceConflictError(
                    f"sequence {seq} was already decided for p={prior.p!r}"
                )
            if seq != applied + 1:
                raise SequenceConflictError(f"expected sequence {applied + 1}, got {seq}")
            params = session.policy.params(session.state)
            outcome = session.state.apply(params, p)
            record = DecisionRecord(
                seq=seq, step=applied + 1, p=p, level=params.alpha_i,
                tau=params.tau, lam=params.lam, rejected=bool(outcome.rejected),
                remaining=session.state.remaining,
            )
            session.decisions.append(record)
            session.updated = time.time()
            self._append_event(
                session,
                {"type": "pvalue", "seq": seq, "p": p, "step": record.step,
                 "level": record.level, "tau": record.tau, "lambda": record.lam,
                 "rejected": outcome.rejected, "remaining": record.remaining,
                 "ts": session.updated},
            )
            self._maybe_snapshot(session)
            return record

    def what_if(self, session_id: str, p: float) -> WhatIfReport:
        session = self.get(session_id)
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"p-value must be in [0, 1], got {p!r}")
        with session.lock:
            params = session.policy.params(session.state)
            probe = session.state.clone()
            outcome = probe.apply(params, p)
            next_params = session.policy.params(probe)
            return WhatIfReport(
                p=p, would_reject=bool(outcome.rejected),
                next_remaining=probe.remaining, next_level=next_params.alpha_i,
            )

    def history(self, session_id: str) -> list[DecisionRecord]:
        session = self.get(session_id)
        with session.lock:
            return list(session.decisions)

    def close(self) -> None:
        for fh in self._logs.values():
            try:
                fh.close()
            except OSError:
                pass
        self._logs.clear()


def restore_all(persist_dir) -> tuple[SessionStore, RestoreReport]:
    """Open a store over ``persist_dir``, replaying every session log."""
    store = SessionStore(persist_dir)
    return store, store.restore_report
