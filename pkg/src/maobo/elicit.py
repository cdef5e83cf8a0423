"""Live preference-elicitation service.

Exposes the optimization loop over HTTP with a human (or scripted client) as
the preference oracle: the loop pauses at each pairwise query, the client
answers, and the posterior plus next design update before the next pair is
returned. Sessions persist to disk on every transition and survive restarts;
a scripted client answering with the simulated oracle reproduces the batch
runner's records exactly for the same seed.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import asdict
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .acquire import LoopDriver
from .bench import DTLZ2_D, DTLZ2_L, WFG9_D, WFG9_L, make_problem
from .core import RunConfig

API_PREFIX = "/api/v1"


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, field: str | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.field = field

    def payload(self) -> dict:
        body = {"code": self.code, "message": self.message}
        if self.field is not None:
            body["field"] = self.field
        return body


class Session:
    """One elicitation session: exclusive transitions, lock-free snapshot reads."""

    def __init__(self, session_id: str, driver: LoopDriver, store: "SessionStore"):
        self.id = session_id
        self.driver = driver
        self.store = store
        self.lock = threading.Lock()
        self.status = "computing"
        self.snapshot: dict = {"id": session_id, "status": "computing"}

    @property
    def nonce(self) -> str:
        return f"{self.id}-t{self.driver.t}"

    def start(self) -> dict:
        with self.lock:
            self._compute_next()
            return self.snapshot

    def answer(self, nonce: str, choice: str, mode_used: int | None) -> dict:
        with self.lock:
            if self.status == "finished":
                raise ApiError(409, "finished", "session is finished; no answers accepted")
            if self.status != "awaiting_answer":
                raise ApiError(409, "busy", "session is computing; retry shortly")
            if nonce != self.nonce:
                raise ApiError(
                    409, "stale_nonce",
                    f"answer nonce {nonce!r} does not match the pending query",
                )
            if choice not in ("first", "second"):
                raise ApiError(400, "bad_choice", "choice must be 'first' or 'second'",
                               field="choice")
            self.driver.apply_answer(choice == "first", mode_used)
            self._compute_next()
            return self.snapshot

    def _compute_next(self) -> None:
        # runs under the session lock; the published snapshot shows "computing"
        # to concurrent readers until the next pair is ready
        if self.driver.finished:
            self.status = "finished"
        else:
            self.status = "computing"
            self._publish()
            self.store.persist(self)
            self.driver.advance()
            self.status = "awaiting_answer"
        self._publish()
        self.store.persist(self)

    def _publish(self) -> None:
        d = self.driver
        problem = d.problem
        snap = {
            "id": self.id,
            "status": self.status,
            "iteration": min(d.t, d.cfg.n_iterations),
            "total_iterations": d.cfg.n_iterations,
            "history_length": len(d.records),
            "problem": {
                "id": problem.problem_id,
                "objective_labels": list(problem.labels),
            },
            "pending": None,
        }
        if d.pending is not None and self.status == "awaiting_answer":
            i, j = d.pending
            pending = {
                "nonce": self.nonce,
                "i": i,
                "j": j,
                "first": [float(v) for v in d.Y[i]],
                "second": [float(v) for v in d.Y[j]],
            }
            if problem.outcome_scaler is not None:
                pending["first_raw"] = [
                    float(v) for v in problem.outcome_scaler.denormalize(d.Y[i])
                ]
                pending["second_raw"] = [
                    float(v) for v in problem.outcome_scaler.denormalize(d.Y[j])
                ]
            snap["pending"] = pending
        if d.Y:
            eta_mean, arch_means = d._summary()
            best_outcome, best_value = d.current_best()
            snap["posterior"] = {
                "eta_mean": [float(v) for v in eta_mean.array],
                "archetype_means": [[float(v) for v in w.array] for w in arch_means],
            }
            snap["best"] = {
                "outcome": [float(v) for v in best_outcome],
                "utility": best_value,
            }
        self.snapshot = snap

    def state_payload(self) -> dict:
        return {"status": self.status, "driver": self.driver.state_dict()}


class SessionStore:
    """Disk-backed session index; rebuilt lazily after restarts."""

    def __init__(self, storage_dir):
        self.dir = Path(storage_dir) / "sessions"
        self.dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, Session] = {}
        self._index_lock = threading.Lock()

    def create(self, config: dict) -> Session:
        cfg = _config_from_request(config)
        try:
            problem = make_problem(cfg.problem)
            driver = LoopDriver(cfg, problem, cache_dir=self.dir / "_refcache")
        except (ValueError, FileNotFoundError) as exc:
            raise ApiError(400, "invalid_config", str(exc))
        session = Session(uuid.uuid4().hex, driver, self)
        with self._index_lock:
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._index_lock:
            if session_id in self._sessions:
                return self._sessions[session_id]
        path = self.dir / f"{session_id}.json"
        if not path.exists():
            raise ApiError(404, "unknown_session", f"no session {session_id!r}")
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        cfg = RunConfig.from_dict(payload["driver"]["config"])
        problem = make_problem(cfg.problem)
        driver = LoopDriver.from_state_dict(
            payload["driver"], problem, cache_dir=self.dir / "_refcache"
        )
        session = Session(session_id, driver, self)
        session.status = payload["status"]
        session._publish()
        with self._index_lock:
            self._sessions[session_id] = session
        return session

    def persist(self, session: Session) -> None:
        path = self.dir / f"{session.id}.json"
        tmp = path.with_suffix(".json.tmp")
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(session.state_payload(), fh)
        tmp.replace(path)


def _config_from_request(config: dict) -> RunConfig:
    if not isinstance(config, dict):
        raise ApiError(400, "invalid_config", "config must be an object", field="config")
    from .cli import complete_config

    try:
        cfg = complete_config(dict(config))
    except (ValueError, TypeError) as exc:
        raise ApiError(400, "invalid_config", str(exc))
    return cfg


def create_app(storage_dir="runs") -> FastAPI:
    app = FastAPI(title="maobo elicitation service")
    store = SessionStore(storage_dir)
    app.state.store = store

    @app.exception_handler(ApiError)
    async def handle_api_error(_request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.payload())

    @app.get(f"{API_PREFIX}/problems")
    def list_problems():
        return [
            {"id": "dtlz2", "n_objectives": DTLZ2_L, "n_variables": DTLZ2_D,
             "objective_labels": [f"f{i+1}" for i in range(DTLZ2_L)]},
            {"id": "wfg9", "n_objectives": WFG9_L, "n_variables": WFG9_D,
             "objective_labels": [f"f{i+1}" for i in range(WFG9_L)]},
        ]

    @app.post(f"{API_PREFIX}/sessions", status_code=201)
    def create_session(body: dict):
        config = body.get("config")
        if config is None:
            raise ApiError(400, "invalid_config", "missing config object", field="config")
        session = store.create(config)
        return session.start()

    @app.get(f"{API_PREFIX}/sessions/{{session_id}}")
    def get_state(session_id: str):
        return store.get(session_id).snapshot

    @app.post(f"{API_PREFIX}/sessions/{{session_id}}/answer")
    def post_answer(session_id: str, body: dict):
        session = store.get(session_id)
        nonce = body.get("nonce")
        choice = body.get("choice")
        if nonce is None:
            raise ApiError(400, "bad_request", "missing nonce", field="nonce")
        if choice is None:
            raise ApiError(400, "bad_request", "missing choice", field="choice")
        mode_used = body.get("mode_used")
        if mode_used is not None:
            mode_used = int(mode_used)
        return session.answer(str(nonce), str(choice), mode_used)

    @app.get(f"{API_PREFIX}/sessions/{{session_id}}/history")
    def get_history(session_id: str):
        session = store.get(session_id)
        return {
            "id": session_id,
            "records": [asdict(r) for r in session.driver.records],
        }

    return app
