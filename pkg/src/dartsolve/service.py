"""Read-only HTTP JSON API over a model store and solve cache.

Serves the web explorer and programmatic clients.  The server holds no
mutable session state: game state travels in requests, solves are cached
append-only and keyed by content, and reads are safe concurrently.  Solves
run asynchronously in a worker thread; clients poll ``GET /solve/{handle}``
until the status is "done".
"""

from __future__ import annotations

import threading
from typing import Literal

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import aimprob, emfit, zsg
from .errors import DartsolveError
from .store import ModelStore


class SolveRequest(BaseModel):
    player_a: str
    player_b: str
    actions_a: Literal["single", "multi"] = "single"
    actions_b: Literal["single", "multi"] = "single"
    legs: list[int] = Field(default_factory=lambda: [1, 21, 35])


class StateModel(BaseModel):
    sa: int
    sb: int
    turn: Literal["A", "B"]
    throws_left: int
    u: int = 0


class AnalyzeRequest(BaseModel):
    handle: str
    state: StateModel
    top_k: int = 5


def _state_from_model(m: StateModel) -> zsg.GameState:
    try:
        return zsg.GameState(m.sa, m.sb, m.turn, m.throws_left, m.u)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))


def create_app(store: ModelStore, start_score: int = zsg.START_SCORE,
               solve_resolution: float = 3.0, heatmap_resolution: float = 1.0,
               mode: str = emfit.UNBIASED) -> FastAPI:
    app = FastAPI(title="dartsolve", version="1")
    solves: dict[str, dict] = {}
    lock = threading.Lock()

    def _run_solve(handle: str, req: SolveRequest):
        try:
            result, cached = store.solve(req.player_a, req.player_b,
                                         req.actions_a, req.actions_b,
                                         start=start_score,
                                         resolution=solve_resolution, mode=mode)
            p_a, p_b = result.p_a_star, result.p_b_star
            table = []
            for n in req.legs:
                a_first = zsg.match_win_prob(p_a, p_b, n)
                b_first = zsg.match_win_prob(1.0 - p_b, 1.0 - p_a, n)
                table.append({"legs": n, "a_first": a_first, "b_first": b_first})
            with lock:
                solves[handle].update(status="done", cached=cached, result=result,
                                      p_a_star=p_a, p_b_star=p_b, match_table=table)
        except Exception as exc:
            with lock:
                solves[handle].update(status="failed", error=str(exc))

    def _public(entry: dict) -> dict:
        return {k: v for k, v in entry.items() if k != "result"}

    @app.get("/players")
    def players():
        return [{"player": p, "regions": store.regions(p), "flags": store.flags(p)}
                for p in store.players()]

    @app.get("/skill/{player}/{region}")
    def skill(player: str, region: str, mode_q: str = mode, level: float = 0.95):
        try:
            entry = store.model(player, region, mode_q)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"no model for {player}/{region}")
        model: emfit.GaussianSkill = entry["model"]
        mu, semi, angle = emfit.confidence_ellipse(model, level)
        return {
            "player": player, "target": region, "mode": entry["mode"],
            "mu": model.mu.tolist(), "sigma": model.sigma.tolist(),
            "loglik": entry.get("loglik"),
            "confidence_ellipse": {"level": level, "center": mu.tolist(),
                                   "semi_axes": semi.tolist(), "angle_rad": angle},
            "fitted": entry.get("meta", {}).get("fitted"),
        }

    @app.post("/solve")
    def solve(req: SolveRequest, response_model=None):
        for p in (req.player_a, req.player_b):
            if p not in store.players():
                raise HTTPException(status_code=422, detail=f"unknown player {p!r}")
        for n in req.legs:
            if n < 1 or n % 2 == 0:
                raise HTTPException(status_code=422, detail="legs must be odd and positive")
        handle = store.solve_key(req.player_a, req.player_b, req.actions_a,
                                 req.actions_b, start=start_score,
                                 resolution=solve_resolution, mode=mode)
        with lock:
            entry = solves.get(handle)
            if entry is not None:
                if entry["status"] == "running":
                    raise HTTPException(status_code=409, detail={
                        "message": "solve in flight for this key", "handle": handle})
                return _public(entry)
            solves[handle] = {"handle": handle, "status": "running",
                              "request": req.model_dump()}
        thread = threading.Thread(target=_run_solve, args=(handle, req), daemon=True)
        thread.start()
        thread.join(timeout=0.5)  # fast solves (and cache hits) answer inline
        with lock:
            return _public(solves[handle])

    @app.get("/solve/{handle}")
    def solve_status(handle: str):
        with lock:
            entry = solves.get(handle)
            if entry is None:
                raise HTTPException(status_code=404, detail="unknown handle")
            return _public(entry)

    @app.post("/analyze")
    def analyze(req: AnalyzeRequest):
        with lock:
            entry = solves.get(req.handle)
        if entry is None:
            raise HTTPException(status_code=404, detail="unknown handle")
        if entry["status"] != "done":
            raise HTTPException(status_code=409, detail=f"solve is {entry['status']}")
        state = _state_from_model(req.state)
        if state.terminal:
            raise HTTPException(status_code=422, detail="terminal state")
        result: zsg.NashResult = entry["result"]
        thrower = (entry["request"]["player_a"] if state.turn == zsg.PLAYER_A
                   else entry["request"]["player_b"])
        lattice = store.action_grid(thrower, aimprob.MULTI,
                                    resolution=heatmap_resolution, mode=mode)
        aims, values, best = zsg.heatmap(result, state, lattice)
        order = np.argsort(values)[::-1][: req.top_k]
        next_states = {}
        for outcome, tr in zsg.enumerate_transitions(state).items():
            next_states[outcome] = {
                "winner": tr.winner, "event": tr.event,
                "state": None if tr.state is None else {
                    "sa": tr.state.sa, "sb": tr.state.sb, "turn": tr.state.turn,
                    "throws_left": tr.state.throws_left, "u": tr.state.u},
            }
        return {
            "optimal_aim": [float(aims[best, 0]), float(aims[best, 1])],
            "value": float(values[best]),
            "state_value": float(result.value(state) if state.turn == zsg.PLAYER_A
                                 else 1.0 - result.value(state)),
            "top_actions": [{"aim": aims[i].tolist(), "value": float(values[i])}
                            for i in order],
            "heatmap": {"aims": aims.tolist(), "values": values.tolist()},
            "next_states": next_states,
        }

    @app.exception_handler(DartsolveError)
    def _numerical(request, exc):
        raise HTTPException(status_code=500, detail=str(exc))

    return app
