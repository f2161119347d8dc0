"""HTTP + JSON API over the session store.

Endpoints: POST /sessions, GET /sessions/{id}, GET /sessions/{id}/level,
POST /sessions/{id}/pvalues, GET /sessions/{id}/whatif?p=..., and
GET /sessions/{id}/history.  Numeric fields are serialized as JSON numbers
in shortest round-trip form (up to 17 significant digits), so parsing the
payload reproduces the server's doubles exactly.  Errors use the body
{code, message, constraint?}.
"""

from __future__ import annotations

from typing import Optional

from fastapi import FastAPI
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, ConfigDict, Field

from .engine import AdmissibilityError
from .policies import ConfigError
from .sessions import SequenceConflictError, SessionStore, UnknownSessionError


class GammaModel(BaseModel):
    kind: str = "q_series"
    s: float = 2.0
    terms: Optional[list[float]] = None


class WeightsModel(BaseModel):
    form: str = "lagged_gamma"


class SessionConfigModel(BaseModel):
    """Wire form of a policy configuration document."""

    model_config = ConfigDict(populate_by_name=True)

    procedure: str
    alpha: float
    tau: float = 0.8
    lam: float = Field(default=0.16, alias="lambda")
    gamma: GammaModel = GammaModel()
    weights: Optional[WeightsModel] = None

    def to_config_dict(self) -> dict:
        d = {
            "procedure": self.procedure,
            "alpha": self.alpha,
            "tau": self.tau,
            "lambda": self.lam,
            "gamma": self.gamma.model_dump(exclude_none=True),
        }
        if self.weights is not None:
            d["weights"] = self.weights.model_dump()
        return d


class SessionSummaryModel(BaseModel):
    id: str
    procedure: str
    alpha: float
    mode: str
    step: int
    remaining: float
    level: float
    submissions: int
    created: float
    updated: float


class LevelModel(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    step: int
    level: float
    tau: float
    lam: float = Field(alias="lambda")
    remaining: float


class SubmitRequest(BaseModel):
    p: float
    seq: int


class DecisionModel(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    seq: int
    step: int
    p: float
    level: float
    tau: float
    lam: float = Field(alias="lambda")
    rejected: bool
    remaining: float


class WhatIfModel(BaseModel):
    p: float
    would_reject: bool
    next_remaining: float
    next_level: float


class HistoryModel(BaseModel):
    id: str
    decisions: list[DecisionModel]


def _error(status: int, code: str, message: str, constraint: Optional[str] = None) -> JSONResponse:
    body = {"code": code, "message": message}
    if constraint:
        body["constraint"] = constraint
    return JSONResponse(status_code=status, content=body)


def create_app(store: SessionStore) -> FastAPI:
    app = FastAPI(title="onlinefwer session service", version="0.1.0")
    app.state.store = store
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(RequestValidationError)
    def _bad_request(request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        where = ".".join(str(part) for part in first.get("loc", ()))
        message = f"{where}: {first.get('msg', 'invalid request')}" if where else "invalid request"
        return _error(422, "invalid_request", message)

    @app.exception_handler(UnknownSessionError)
    def _unknown(request, exc: UnknownSessionError):
        return _error(404, "unknown_session", str(exc.args[0]))

    @app.exception_handler(SequenceConflictError)
    def _conflict(request, exc: SequenceConflictError):
        return _error(409, "sequence_conflict", str(exc))

    @app.exception_handler(ConfigError)
    def _bad_config(request, exc: ConfigError):
        return _error(422, "invalid_config", str(exc), getattr(exc, "constraint", None))

    @app.exception_handler(AdmissibilityError)
    def _inadmissible(request, exc: AdmissibilityError):
        constraint = exc.report.violations[0].inequality if exc.report.violations else None
        return _error(422, "admissibility_violation", str(exc), constraint)

    @app.exception_handler(ValueError)
    def _bad_value(request, exc: ValueError):
        return _error(422, "invalid_value", str(exc))

    @app.post("/sessions", response_model=SessionSummaryModel, status_code=201)
    def create_session(config: SessionConfigModel):
        session = store.create(config.to_config_dict())
        return session.summary()

    @app.get("/sessions", response_model=list[SessionSummaryModel])
    def list_sessions():
        return [store.get(sid).summary() for sid in store.ids()]

    @app.get("/sessions/{session_id}", response_model=SessionSummaryModel)
    def get_session(session_id: str):
        return store.get(session_id).summary()

    @app.get("/sessions/{session_id}/level", response_model=LevelModel, response_model_by_alias=True)
    def get_level(session_id: str):
        return store.get(session_id).current_level().to_dict()

    @app.post("/sessions/{session_id}/pvalues", response_model=DecisionModel,
              response_model_by_alias=True)
    def submit_pvalue(session_id: str, body: SubmitRequest):
        return store.submit(session_id, body.p, body.seq).to_dict()

    @app.get("/sessions/{session_id}/whatif", response_model=WhatIfModel)
    def what_if(session_id: str, p: float):
        report = store.what_if(session_id, p)
        return {
            "p": report.p,
            "would_reject": report.would_reject,
            "next_remaining": report.next_remaining,
            "next_level": report.next_level,
        }

    @app.get("/sessions/{session_id}/history", response_model=HistoryModel,
             response_model_by_alias=True)
    def history(session_id: str):
        return {
            "id": session_id,
            "decisions": [d.to_dict() for d in store.history(session_id)],
        }

    return app


def serve(host: str, port: int, persist_dir, console_dir=None) -> None:
    """Run the service under uvicorn (used by the CLI ``serve`` command)."""
    import uvicorn

    store = SessionStore(persist_dir)
    app = create_app(store)
    if console_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=str(console_dir), html=True), name="console")
    uvicorn.run(app, host=host, port=port, log_level="warning")
