"""HTTP layer over the engine: create sessions, post action suites,
read session state."""

from __future__ import annotations

import uuid

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .engine import CorpusEngine, SessionState
from .errors import ProtocolError
from .protocol import wire_to_action


class SuiteRequest(BaseModel):
    actions: list[dict]


def create_app(engine: CorpusEngine) -> FastAPI:
    app = FastAPI(title="corpus interaction engine")
    sessions: dict[str, SessionState] = {}

    @app.post("/session")
    def create_session():
        session_id = uuid.uuid4().hex
        sessions[session_id] = engine.new_session()
        return {"session_id": session_id, "state": sessions[session_id].echo()}

    @app.get("/session/{session_id}/state")
    def get_state(session_id: str):
        state = sessions.get(session_id)
        if state is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return state.echo()

    @app.post("/session/{session_id}/suite")
    def post_suite(session_id: str, request: SuiteRequest):
        state = sessions.get(session_id)
        if state is None:
            raise HTTPException(status_code=404, detail="unknown session")
        actions = []
        for i, obj in enumerate(request.actions):
            try:
                actions.append(wire_to_action(obj))
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=f"action {i}: {exc}")
        try:
            new_state, response = engine.execute_suite(state, actions)
        except ProtocolError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        sessions[session_id] = new_state
        return response.to_dict()

    return app
