"""HTTP service exposing panels, scoring, counterfactuals, and batch jobs.

Panels are held in memory only; the registry does not survive restarts.
Long batch runs execute in a background thread and are polled by job id.
All data endpoints serialize through the same canonical JSON writer as the
CLI, so identical requests yield byte-identical documents.
"""

from __future__ import annotations

import itertools
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import Response
from pydantic import BaseModel, Field

from . import dea
from .analytics import (
    batch_explain,
    change_frequency,
    change_magnitude,
    heatmap_matrix,
    spider_payload,
)
from .counterfactual import (
    BoundsError,
    CounterfactualRequest,
    SolveFailure,
    TargetError,
    explain,
)
from .miqp import MiqpOptions, TIME_LIMIT
from .model import (
    COST_PRESETS,
    CostWeights,
    Orientation,
    Panel,
    PanelError,
    Technology,
    read_panel_csv,
)
from .reporting import (
    batch_payload,
    canonical_json,
    efficiency_payload,
    result_payload,
    stats_payload,
)

MAX_UPLOAD_BYTES = 10 * 1024 * 1024


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, extra: dict | None = None):
        self.status = status
        self.code = code
        self.message = message
        self.extra = extra or {}


@dataclass
class Job:
    status: str = "running"          # running | done | failed
    payload: dict | None = None
    error: str | None = None


@dataclass
class ServiceState:
    """Panel registry plus per-panel score caches and batch jobs."""

    panels: dict[str, Panel] = field(default_factory=dict)
    scores: dict[tuple, list] = field(default_factory=dict)
    jobs: dict[str, Job] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)
    counter: itertools.count = field(default_factory=itertools.count)

    def add_panel(self, panel: Panel) -> str:
        with self.lock:
            pid = f"p{next(self.counter) + 1}"
            self.panels[pid] = panel
            self.scores = {k: v for k, v in self.scores.items() if k[0] != pid}
            return pid

    def panel(self, pid: str) -> Panel:
        with self.lock:
            panel = self.panels.get(pid)
        if panel is None:
            raise ApiError(404, "unknown_panel", f"no panel with id {pid!r}")
        return panel

    def efficiencies(self, pid: str, tech: Technology, orient: Orientation):
        key = (pid, tech.value, orient.value)
        with self.lock:
            cached = self.scores.get(key)
        if cached is not None:
            return cached
        panel = self.panel(pid)
        results = [dea.efficiency(panel, k, tech, orient)
                   for k in range(panel.n_dmus)]
        with self.lock:
            self.scores[key] = results
        return results


class CounterfactualBody(BaseModel):
    firm: str
    e_star: float = Field(gt=0.0, le=1.0)
    nu0: float = 0.0
    nu1: float = 0.0
    nu2: float = 1.0
    preset: str | None = None
    tech: str = "crs"
    orient: str = "input"
    locks: list[str] = Field(default_factory=list)
    lower_bounds: dict[str, float] = Field(default_factory=dict)
    upper_bounds: dict[str, float] = Field(default_factory=dict)
    normalize: bool = True
    metric: str = "raw"
    time_limit: float = 60.0


class BatchBody(BaseModel):
    e_star: float = Field(gt=0.0, le=1.0)
    preset: str | None = None
    nu0: float = 0.0
    nu1: float = 0.0
    nu2: float = 1.0
    tech: str = "crs"
    orient: str = "input"
    time_limit: float = 20.0
    workers: int = 1


def _weights(preset, nu0, nu1, nu2) -> CostWeights:
    if preset is not None:
        if preset not in COST_PRESETS:
            raise ApiError(422, "unknown_preset",
                           f"preset must be one of {sorted(COST_PRESETS)}")
        return COST_PRESETS[preset]
    try:
        return CostWeights(nu0, nu1, nu2)
    except ValueError as exc:
        raise ApiError(422, "bad_weights", str(exc)) from exc


def _enum(cls, value, code):
    try:
        return cls(value)
    except ValueError as exc:
        raise ApiError(422, code, str(exc)) from exc


def _firm_index(panel: Panel, firm: str) -> int:
    try:
        return panel.index_of(firm)
    except KeyError as exc:
        raise ApiError(404, "unknown_firm", str(exc)) from exc


def _request_from_body(panel: Panel, body: CounterfactualBody) -> CounterfactualRequest:
    orient = _enum(Orientation, body.orient, "bad_orientation")
    tech = _enum(Technology, body.tech, "bad_technology")
    firm = _firm_index(panel, body.firm)
    names = panel.input_names if orient is Orientation.INPUT else panel.output_names
    locked = set()
    for name in body.locks:
        if name not in names:
            raise ApiError(422, "unknown_feature",
                           f"{name!r} is not a feature on the {orient.value} side")
        locked.add(names.index(name))
    n = len(names)
    lower = upper = None
    if body.lower_bounds:
        lower = np.zeros(n)
        for name, val in body.lower_bounds.items():
            if name not in names:
                raise ApiError(422, "unknown_feature", f"{name!r} is not a feature")
            lower[names.index(name)] = val
    if body.upper_bounds:
        upper = np.full(n, np.inf)
        for name, val in body.upper_bounds.items():
            if name not in names:
                raise ApiError(422, "unknown_feature", f"{name!r} is not a feature")
            upper[names.index(name)] = val
    try:
        return CounterfactualRequest(
            firm=firm, e_target=body.e_star,
            weights=_weights(body.preset, body.nu0, body.nu1, body.nu2),
            tech=tech, orient=orient, lower_bounds=lower, upper_bounds=upper,
            locked=frozenset(locked), normalize=body.normalize, metric=body.metric)
    except ValueError as exc:
        raise ApiError(422, "bad_request", str(exc)) from exc


def _json(payload, status: int = 200) -> Response:
    return Response(content=canonical_json(payload), status_code=status,
                    media_type="application/json")


def _run_batch(state: ServiceState, job_id: str, panel: Panel, body: BatchBody):
    try:
        weights = _weights(body.preset, body.nu0, body.nu1, body.nu2)
        tech = _enum(Technology, body.tech, "bad_technology")
        orient = _enum(Orientation, body.orient, "bad_orientation")
        report = batch_explain(panel, body.e_star, weights, tech, orient,
                               options=MiqpOptions(time_limit=body.time_limit),
                               workers=body.workers)
        payload = batch_payload(report)
        payload["heatmap"] = heatmap_matrix(report)
        if report.analyzed:
            payload["stats"] = stats_payload(change_frequency(report),
                                             change_magnitude(report, panel))
        with state.lock:
            state.jobs[job_id].status = "done"
            state.jobs[job_id].payload = payload
    except Exception as exc:  # job failures are reported, not raised
        with state.lock:
            state.jobs[job_id].status = "failed"
            state.jobs[job_id].error = str(exc)


def create_app(state: ServiceState | None = None) -> FastAPI:
    state = state or ServiceState()
    app = FastAPI(title="deabench", version="0.1.0")
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    app.state.registry = state

    @app.exception_handler(ApiError)
    async def api_error_handler(_req: Request, exc: ApiError):
        body = {"code": exc.code, "message": exc.message}
        body.update(exc.extra)
        return _json(body, status=exc.status)

    @app.exception_handler(RequestValidationError)
    async def validation_handler(_req: Request, exc: RequestValidationError):
        return _json({"code": "validation_error", "message": str(exc.errors())},
                     status=422)

    @app.post("/panels")
    async def upload_panel(request: Request):
        raw = await request.body()
        if len(raw) > MAX_UPLOAD_BYTES:
            raise ApiError(413, "too_large", "CSV upload exceeds 10 MB")
        text = raw.decode("utf-8", errors="strict")
        if request.headers.get("content-type", "").startswith("application/json"):
            import json as _json_mod
            try:
                text = _json_mod.loads(text)["csv"]
            except (ValueError, KeyError) as exc:
                raise ApiError(422, "bad_upload",
                               "JSON uploads need a 'csv' field") from exc
        try:
            panel, removed = read_panel_csv(text)
        except PanelError as exc:
            raise ApiError(422, "bad_panel", str(exc)) from exc
        pid = state.add_panel(panel)
        return _json({
            "panel_id": pid,
            "n_dmus": panel.n_dmus,
            "inputs": list(panel.input_names),
            "outputs": list(panel.output_names),
            "removed": removed,
            "dmu_ids": list(panel.dmu_ids),
        })

    @app.get("/panels/{pid}/efficiency")
    async def efficiency(pid: str, tech: str = "crs", orient: str = "input"):
        t = _enum(Technology, tech, "bad_technology")
        o = _enum(Orientation, orient, "bad_orientation")
        panel = state.panel(pid)
        results = state.efficiencies(pid, t, o)
        return _json(efficiency_payload(panel, t, o, results))

    @app.post("/panels/{pid}/counterfactual")
    async def counterfactual(pid: str, body: CounterfactualBody):
        panel = state.panel(pid)
        req = _request_from_body(panel, body)
        try:
            res = explain(panel, req, options=MiqpOptions(time_limit=body.time_limit))
        except TargetError as exc:
            raise ApiError(422, "target_below_score", str(exc)) from exc
        except BoundsError as exc:
            raise ApiError(422, "bad_bounds", str(exc)) from exc
        except SolveFailure as exc:
            raise ApiError(503, "solver_failed", str(exc)) from exc
        payload = result_payload(res)
        if res.solver_status == TIME_LIMIT:
            raise ApiError(503, "time_limit",
                           "solver hit the time limit; incumbent attached",
                           extra={"partial": True, "result": payload})
        return _json(payload)

    @app.post("/panels/{pid}/batch")
    async def batch(pid: str, body: BatchBody):
        panel = state.panel(pid)
        _weights(body.preset, body.nu0, body.nu1, body.nu2)  # validate early
        job_id = uuid.uuid4().hex[:12]
        with state.lock:
            state.jobs[job_id] = Job()
        thread = threading.Thread(target=_run_batch,
                                  args=(state, job_id, panel, body), daemon=True)
        thread.start()
        return _json({"job_id": job_id}, status=202)

    @app.get("/jobs/{job_id}")
    async def job_status(job_id: str):
        with state.lock:
            job = state.jobs.get(job_id)
        if job is None:
            raise ApiError(404, "unknown_job", f"no job with id {job_id!r}")
        body = {"status": job.status}
        if job.status == "done":
            body["result"] = job.payload
        if job.status == "failed":
            body["error"] = job.error
        return _json(body)

    @app.get("/panels/{pid}/heatmap")
    async def heatmap(pid: str, job: str | None = None, e_star: float = 0.8,
                      preset: str = "l2", tech: str = "crs", orient: str = "input",
                      time_limit: float = 20.0):
        state.panel(pid)
        if job is not None:
            with state.lock:
                j = state.jobs.get(job)
            if j is None:
                raise ApiError(404, "unknown_job", f"no job with id {job!r}")
            if j.status != "done":
                raise ApiError(409, "job_not_done", f"job is {j.status}")
            return _json(j.payload["heatmap"])
        panel = state.panel(pid)
        weights = _weights(preset, 0, 0, 1)
        report = batch_explain(panel, e_star, weights,
                               _enum(Technology, tech, "bad_technology"),
                               _enum(Orientation, orient, "bad_orientation"),
                               options=MiqpOptions(time_limit=time_limit))
        return _json(heatmap_matrix(report))

    @app.get("/panels/{pid}/spider/{firm}")
    async def spider(pid: str, firm: str, e_star: float = 0.8, tech: str = "crs",
                     orient: str = "input", time_limit: float = 20.0):
        panel = state.panel(pid)
        t = _enum(Technology, tech, "bad_technology")
        o = _enum(Orientation, orient, "bad_orientation")
        k = _firm_index(panel, firm)
        base = dea.efficiency(panel, k, t, o).score
        if e_star < base - 1e-9:
            raise ApiError(422, "target_below_score",
                           f"target {e_star} is below the current score {base:.6f}")
        series = {}
        for name in ("l0+(l2)", "l0+l2", "l2"):
            req = CounterfactualRequest(firm=k, e_target=e_star,
                                        weights=COST_PRESETS[name], tech=t, orient=o)
            try:
                res = explain(panel, req, options=MiqpOptions(time_limit=time_limit))
            except SolveFailure:
                continue
            series[name] = res
        payload = spider_payload(panel, k, series)
        if o is Orientation.INPUT:
            xhat = dea.farrell_projection(panel, k, e_star, t)
            payload["series"]["farrell"] = [float(v) for v in xhat / panel.inputs[k]]
        payload["base_score"] = float(base)
        return _json(payload)

    @app.get("/health")
    async def health():
        return _json({"status": "ok", "panels": len(state.panels)})

    return app
