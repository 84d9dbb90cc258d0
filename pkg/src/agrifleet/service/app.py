"""HTTP + WebSocket gateway: field upload, mission planning, live run
steering and artifact retrieval. All state lives under a plain data
directory (fields/, missions/, runs/) as inspectable JSON."""

from __future__ import annotations

import asyncio
import json
import threading
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Query, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, Response

from ..geo import GeoError
from ..missions import canonical_bytes, content_id, plan_mission
from ..planner import PlannerError
from ..scenario import SCENARIO_SCHEMA, FaultEvent, ScenarioError, parse_field
from .models import (
    FaultRequest,
    FieldResponse,
    MissionRequest,
    MissionResponse,
    RunHandle,
    RunRequest,
)
from .runs import RunError, RunManager


class _Store:
    """Data-dir persistence plus request-id idempotence for mutations."""

    def __init__(self, data_dir: Path):
        self.data_dir = data_dir
        for sub in ("fields", "missions", "runs"):
            (data_dir / sub).mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._request_index: dict[str, dict] = {}
        self._request_log = data_dir / "requests.jsonl"
        if self._request_log.exists():
            with self._request_log.open() as fh:
                for line in fh:
                    if line.strip():
                        entry = json.loads(line)
                        self._request_index[entry["request_id"]] = entry["response"]

    def remembered(self, request_id: Optional[str]) -> Optional[dict]:
        if request_id is None:
            return None
        return self._request_index.get(request_id)

    def remember(self, request_id: Optional[str], response: dict) -> None:
        if request_id is None:
            return
        with self._lock:
            self._request_index[request_id] = response
            with self._request_log.open("a") as fh:
                fh.write(json.dumps({"request_id": request_id, "response": response}) + "\n")

    def save_json(self, kind: str, doc_id: str, doc) -> None:
        (self.data_dir / kind / f"{doc_id}.json").write_bytes(canonical_bytes(doc))

    def load_json(self, kind: str, doc_id: str):
        path = self.data_dir / kind / f"{doc_id}.json"
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"unknown {kind[:-1]} {doc_id}")
        return json.loads(path.read_text())


def _default_scenario_for_mission(mission: dict, field_fc: dict, seed: int) -> dict:
    plan = mission["plan"]
    waypoints = plan["waypoints"]
    xs = [w[0] for w in waypoints]
    ys = [w[1] for w in waypoints]
    station = {"x": min(xs) - 5.0, "y": min(ys) - 5.0}
    return {
        "name": f"mission-{mission['mission_id']}",
        "seed": seed,
        "origin": plan["origin"],
        "field": field_fc,
        "stations": [{"kind": "combined", "position": station}],
        "fleet": [
            {
                "uav_id": u["uav_id"],
                "start": station,
                "battery_pct": u["battery_pct"],
                "drain_pct_per_m": u["drain_pct_per_m"],
            }
            for u in mission["request"]["fleet"]
        ],
        "sweep": {
            "spacing_m": plan["spacing_m"],
            "angle_deg": plan["angle_deg"],
        },
        "threshold_pct": mission["request"]["threshold_pct"],
        "heatmap": {"cell_size_m": max(2.0, plan["spacing_m"]), "classifier": "oracle"},
        "swap_service_ticks": 10,
    }


def create_app(data_dir: str | Path) -> FastAPI:
    app = FastAPI(title="agrifleet ground station", version="0.1.0")
    store = _Store(Path(data_dir))
    manager = RunManager(Path(data_dir) / "runs")
    app.state.store = store
    app.state.runs = manager

    @app.exception_handler(RunError)
    async def run_error_handler(_request, exc: RunError):
        return JSONResponse(status_code=exc.status_code, content={"error": str(exc)})

    @app.exception_handler(ScenarioError)
    async def scenario_error_handler(_request, exc: ScenarioError):
        return JSONResponse(
            status_code=400, content={"error": str(exc), "path": exc.json_path}
        )

    @app.post("/api/fields", response_model=FieldResponse)
    def upload_field(fc: dict):
        try:
            parse_field(fc)  # structural validation only; raises with a pointer path
        except (ScenarioError, GeoError) as exc:
            path = getattr(exc, "json_path", "")
            return JSONResponse(status_code=400, content={"error": str(exc), "path": path})
        field_id = content_id(fc)
        store.save_json("fields", field_id, fc)
        return FieldResponse(field_id=field_id)

    @app.get("/api/fields/{field_id}")
    def get_field(field_id: str):
        return store.load_json("fields", field_id)

    @app.post("/api/missions", response_model=MissionResponse)
    def create_mission(req: MissionRequest):
        remembered = store.remembered(req.request_id)
        if remembered is not None:
            return MissionResponse(**remembered)
        field_fc = store.load_json("fields", req.field_id)
        try:
            planned = plan_mission(
                field_fc,
                spacing_m=req.spacing_m,
                angle=req.angle_deg,
                inset_m=req.inset_m,
                threshold_pct=req.threshold_pct,
                fleet=[u.model_dump() for u in req.fleet],
                priorities=[p.model_dump() for p in req.priorities],
                use_field_priorities=req.use_field_priorities,
            )
        except (PlannerError, GeoError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        mission_core = {
            "field_id": req.field_id,
            "plan": planned["plan"],
            "segments": planned["segments"],
            "request": req.model_dump(exclude={"request_id"}),
        }
        mission_id = content_id(mission_core)
        mission_doc = dict(mission_core, mission_id=mission_id)
        store.save_json("missions", mission_id, mission_doc)
        response = {
            "mission_id": mission_id,
            "plan": planned["plan"],
            "segments": planned["segments"],
        }
        store.remember(req.request_id, response)
        return MissionResponse(**response)

    @app.get("/api/missions/{mission_id}")
    def get_mission(mission_id: str):
        return store.load_json("missions", mission_id)

    @app.get("/api/missions/{mission_id}/plan.json")
    def get_mission_plan(mission_id: str):
        mission = store.load_json("missions", mission_id)
        return Response(
            content=canonical_bytes(mission["plan"]), media_type="application/json"
        )

    @app.post("/api/runs", response_model=RunHandle)
    def create_run(req: RunRequest):
        remembered = store.remembered(req.request_id)
        if remembered is not None:
            run = manager.get(remembered["run_id"])
            return RunHandle(**run.handle())
        mission = store.load_json("missions", req.mission_id)
        field_fc = store.load_json("fields", mission["field_id"])
        scenario_doc = _default_scenario_for_mission(mission, field_fc, req.seed)
        scenario_doc.update(req.scenario)
        run = manager.create(req.mission_id, scenario_doc, req.playback_rate)
        store.remember(req.request_id, {"run_id": run.run_id})
        return RunHandle(**run.handle())

    @app.get("/api/runs/{run_id}", response_model=RunHandle)
    def get_run(run_id: str):
        return RunHandle(**manager.get(run_id).handle())

    @app.post("/api/runs/{run_id}/pause", response_model=RunHandle)
    def pause_run(run_id: str):
        run = manager.get(run_id)
        run.command("pause")
        return RunHandle(**run.handle())

    @app.post("/api/runs/{run_id}/resume", response_model=RunHandle)
    def resume_run(run_id: str):
        run = manager.get(run_id)
        run.command("resume")
        return RunHandle(**run.handle())

    @app.post("/api/runs/{run_id}/abort", response_model=RunHandle)
    def abort_run(run_id: str):
        run = manager.get(run_id)
        run.command("abort")
        run.wait_done(timeout=10.0)
        return RunHandle(**run.handle())

    @app.post("/api/runs/{run_id}/faults")
    def inject_fault(run_id: str, req: FaultRequest):
        run = manager.get(run_id)
        remembered = store.remembered(req.request_id)
        if remembered is not None:
            return remembered
        fault = FaultEvent(
            at_tick=req.at_tick if req.at_tick is not None else 0,
            uav_id=req.uav_id,
            kind=req.kind,
            pct=req.pct or 0.0,
            duration_ticks=req.duration_ticks or 0,
        )
        run.inject_fault(fault)
        response = {"accepted": True, "run_id": run_id}
        store.remember(req.request_id, response)
        return response

    @app.get("/api/runs/{run_id}/report")
    def get_report(run_id: str):
        return Response(
            content=manager.get(run_id).artifact("report.json"),
            media_type="application/json",
        )

    @app.get("/api/runs/{run_id}/heatmap")
    def get_heatmap(run_id: str):
        return Response(
            content=manager.get(run_id).artifact("heatmap.json"),
            media_type="application/json",
        )

    @app.get("/api/runs/{run_id}/trace")
    def get_trace(run_id: str):
        return Response(
            content=manager.get(run_id).artifact("trace.jsonl"),
            media_type="application/x-ndjson",
        )

    @app.get("/api/schemas")
    def get_schemas():
        return {
            "mission": MissionRequest.model_json_schema(),
            "run": RunRequest.model_json_schema(),
            "fault": FaultRequest.model_json_schema(),
            "scenario": SCENARIO_SCHEMA,
        }

    @app.websocket("/api/runs/{run_id}/events")
    async def run_events(ws: WebSocket, run_id: str, from_tick: int = Query(default=0)):
        await ws.accept()
        try:
            run = manager.get(run_id)
        except RunError:
            await ws.close(code=4404)
            return
        index = 0
        try:
            while True:
                batch, index, terminal = await asyncio.to_thread(run.events_since, index)
                for event in batch:
                    if event.get("kind") == "header":
                        continue
                    if event.get("tick", 0) < from_tick:
                        continue
                    await ws.send_json(event)
                if terminal:
                    break
        except WebSocketDisconnect:
            return
        await ws.close()

    return app
