"""HTTP service for live what-if exploration.

Simulation is the only slow operation, so it runs as an asynchronous job:
clients submit a (scenario, seed, n_runs) triple, poll the job status, and
then hit the read-only analysis endpoints.  Scoring, Pareto and
critical-weight requests operate on cached attribute tables of completed
runs: their latency is independent of the ensemble size, weight vectors
are request-scoped, and equal inputs always return equal bodies.
"""

from __future__ import annotations

import threading
from dataclasses import asdict, dataclass
from pathlib import Path

import yaml
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import ENGINE_VERSION
from .decision import (
    WeightError,
    critical_weight,
    grouped_points,
    non_dominated_mask,
    rank,
    validate_weights,
)
from .ensemble import run_ensemble
from .scenario import Scenario, ScenarioError, scenario_from_dict
from .store import ResultStore, StoreError, StoredRun, default_partition, run_id_for

PARETO_GROUPINGS = ("short-term-vs-poverty",)

AGE_FILTER_KEYS = (None, "under45", "over45")


@dataclass
class JobStatus:
    run_id: str
    scenario_id: str
    state: str  # queued | running | done | failed
    progress: float
    seed: int
    n_runs: int
    error: str | None = None


class JobRegistry:
    """In-process job table; one simulation job per run id."""

    def __init__(self):
        self._jobs: dict[str, JobStatus] = {}
        self._lock = threading.Lock()

    def get(self, run_id: str) -> JobStatus | None:
        with self._lock:
            return self._jobs.get(run_id)

    def create(self, status: JobStatus) -> bool:
        with self._lock:
            existing = self._jobs.get(status.run_id)
            if existing is not None and existing.state in ("queued", "running"):
                return False
            self._jobs[status.run_id] = status
            return True

    def update(self, run_id: str, **fields) -> None:
        with self._lock:
            job = self._jobs[run_id]
            for key, value in fields.items():
                setattr(job, key, value)

    def active(self) -> list[JobStatus]:
        with self._lock:
            return [JobStatus(**asdict(j)) for j in self._jobs.values()]


class RunRequest(BaseModel):
    scenario_id: str
    seed: int | None = None
    n_runs: int | None = None
    workers: int = 1


class ScoreRequest(BaseModel):
    weights: tuple[float, float, float]
    age_filter: str | None = None


class ParetoRequest(BaseModel):
    grouping: str = "short-term-vs-poverty"


class CriticalWeightRequest(BaseModel):
    lockdown: list[str] | None = None
    non_lockdown: list[str] | None = None
    age_filter: str | None = None


def _weights_or_422(weights):
    try:
        return validate_weights(weights)
    except WeightError as exc:
        raise HTTPException(
            status_code=422, detail=[{"path": "weights", "message": str(exc)}]
        )


def _age_filter_or_422(age_filter):
    if age_filter not in AGE_FILTER_KEYS:
        raise HTTPException(
            status_code=422,
            detail=[{"path": "age_filter", "message": f"unknown age filter {age_filter!r}"}],
        )
    return age_filter


def create_app(data_dir: str | Path, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="epidecide", version=ENGINE_VERSION)
    store = ResultStore(data_dir)
    jobs = JobRegistry()

    @app.middleware("http")
    async def engine_version_header(request: Request, call_next):
        response = await call_next(request)
        response.headers["X-Engine-Version"] = ENGINE_VERSION
        return response

    def run_or_404(run_id: str) -> StoredRun:
        try:
            return store.load_run(run_id)
        except StoreError:
            raise HTTPException(status_code=404, detail=f"unknown run id {run_id!r}")

    # -- scenarios ---------------------------------------------------------

    @app.post("/api/scenarios", status_code=201)
    async def create_scenario(request: Request):
        content_type = request.headers.get("content-type", "")
        body = await request.body()
        try:
            if "json" in content_type:
                import json as _json

                raw = _json.loads(body)
            else:
                raw = yaml.safe_load(body)
        except Exception as exc:
            return JSONResponse(
                status_code=400,
                content={"errors": [{"path": "$", "message": f"unparseable body: {exc}"}]},
            )
        try:
            scenario = scenario_from_dict(raw)
        except ScenarioError as exc:
            return JSONResponse(
                status_code=400,
                content={"errors": [{"path": exc.path, "message": exc.message}]},
            )
        scenario_id = store.save_scenario(scenario)
        return {"scenario_id": scenario_id, "engine_version": ENGINE_VERSION}

    @app.get("/api/scenarios")
    def list_scenarios():
        return {"scenarios": store.list_scenarios(), "engine_version": ENGINE_VERSION}

    @app.get("/api/scenarios/{scenario_id}")
    def get_scenario(scenario_id: str):
        try:
            scenario = store.load_scenario(scenario_id)
        except StoreError:
            raise HTTPException(status_code=404, detail=f"unknown scenario id {scenario_id!r}")
        return {"scenario_id": scenario_id, "scenario": scenario.data}

    # -- runs ----------------------------------------------------------------

    def execute_job(scenario: Scenario, run_id: str, seed: int, n_runs: int, workers: int):
        try:
            jobs.update(run_id, state="running")
            config = scenario.run_config(seed=seed, n_runs=n_runs)
            result = run_ensemble(
                scenario.strategies(),
                config,
                scenario.build_inputs(),
                workers=workers,
                scenario_digest=scenario.digest(),
                progress=lambda done, total: jobs.update(run_id, progress=done / total),
            )
            store.save_run(scenario, result)
            jobs.update(run_id, state="done", progress=1.0)
        except Exception as exc:  # surfaced through the status endpoint
            jobs.update(run_id, state="failed", error=str(exc))

    @app.post("/api/runs", status_code=202)
    def start_run(request: RunRequest):
        if not store.has_scenario(request.scenario_id):
            raise HTTPException(
                status_code=404, detail=f"unknown scenario id {request.scenario_id!r}"
            )
        scenario = store.load_scenario(request.scenario_id)
        seed = request.seed if request.seed is not None else scenario.data["run"]["default_seed"]
        n_runs = request.n_runs if request.n_runs is not None else scenario.data["run"]["n_runs"]
        run_id = run_id_for(scenario, seed, n_runs)

        if store.has_run(run_id):
            return JSONResponse(
                status_code=409,
                content={
                    "run_id": run_id,
                    "scenario_id": request.scenario_id,
                    "state": "done",
                    "progress": 1.0,
                    "seed": seed,
                    "n_runs": n_runs,
                    "detail": "identical run already exists",
                },
            )

        status = JobStatus(
            run_id=run_id,
            scenario_id=request.scenario_id,
            state="queued",
            progress=0.0,
            seed=seed,
            n_runs=n_runs,
        )
        if jobs.create(status):
            worker = threading.Thread(
                target=execute_job,
                args=(scenario, run_id, seed, n_runs, request.workers),
                daemon=True,
            )
            worker.start()
        return asdict(jobs.get(run_id))

    @app.get("/api/runs")
    def list_runs():
        completed = store.list_runs()
        active = [asdict(j) for j in jobs.active() if j.state in ("queued", "running")]
        return {"completed": completed, "active": active, "engine_version": ENGINE_VERSION}

    @app.get("/api/runs/{run_id}")
    def run_status(run_id: str):
        job = jobs.get(run_id)
        if job is not None:
            return asdict(job)
        if store.has_run(run_id):
            run = store.load_run(run_id)
            return {
                "run_id": run_id,
                "scenario_id": run.result.scenario_digest,
                "state": "done",
                "progress": 1.0,
                "seed": run.result.config.seed,
                "n_runs": run.result.config.n_runs,
                "error": None,
            }
        raise HTTPException(status_code=404, detail=f"unknown run id {run_id!r}")

    @app.get("/api/runs/{run_id}/result")
    def run_result(run_id: str):
        run = run_or_404(run_id)
        lockdown, non_lockdown = default_partition(run.strategies)
        return {
            "run_id": run_id,
            "engine_version": run.result.engine_version,
            "scenario_digest": run.result.scenario_digest,
            "seed": run.result.config.seed,
            "n_runs": run.result.config.n_runs,
            "horizon_weeks": run.result.config.horizon_weeks,
            "age_groups": list(run.result.age_groups),
            "default_partition": {"lockdown": lockdown, "non_lockdown": non_lockdown},
            "strategies": [
                {
                    "id": o.strategy.id,
                    "initial_target": int(o.strategy.initial_target),
                    "lockdown_threshold": o.strategy.lockdown_threshold,
                    "easing_fraction": o.strategy.easing_fraction,
                    "tightening_rise": o.strategy.tightening_rise,
                    "expected_weeks_in_regime": o.expected_weeks_in_regime.tolist(),
                    "expected_deaths_by_age": o.expected_deaths_by_age.tolist(),
                    "example_daily_deaths": o.example_daily_deaths.tolist(),
                    "example_regimes": o.example_regimes.tolist(),
                }
                for o in run.result.outcomes
            ],
            "attributes": {
                key: {sid: vec.as_array().tolist() for sid, vec in table.items()}
                for key, table in run.attributes.items()
            },
        }

    # -- analysis ------------------------------------------------------------

    @app.post("/api/runs/{run_id}/score")
    def score_run(run_id: str, request: ScoreRequest):
        run = run_or_404(run_id)
        weights = _weights_or_422(request.weights)
        age_filter = _age_filter_or_422(request.age_filter)
        table = run.attribute_vectors(age_filter)
        ranked = rank(weights, table)
        return {
            "run_id": run_id,
            "engine_version": run.result.engine_version,
            "weights": list(weights),
            "age_filter": age_filter,
            "ranking": [
                {
                    "strategy": s.strategy_id,
                    "score": s.score,
                    "contributions": list(s.contributions),
                    "attributes": {
                        "covid": s.attributes.covid,
                        "cancer": s.attributes.cancer,
                        "poverty": s.attributes.poverty,
                    },
                }
                for s in ranked
            ],
        }

    @app.post("/api/runs/{run_id}/pareto")
    def pareto(run_id: str, request: ParetoRequest):
        run = run_or_404(run_id)
        if request.grouping not in PARETO_GROUPINGS:
            raise HTTPException(
                status_code=422,
                detail=[
                    {
                        "path": "grouping",
                        "message": f"unknown grouping {request.grouping!r}; "
                        f"expected one of {list(PARETO_GROUPINGS)}",
                    }
                ],
            )
        ids, points = grouped_points(run.attribute_vectors())
        mask = non_dominated_mask(points)
        return {
            "run_id": run_id,
            "engine_version": run.result.engine_version,
            "grouping": request.grouping,
            "axes": {
                "x": "covid + cancer life-years lost",
                "y": "poverty life-years lost",
            },
            "points": [
                {
                    "strategy": sid,
                    "x": float(point[0]),
                    "y": float(point[1]),
                    "on_front": bool(on_front),
                }
                for sid, point, on_front in zip(ids, points, mask)
            ],
            "front": [sid for sid, on_front in zip(ids, mask) if on_front],
        }

    @app.post("/api/runs/{run_id}/critical-weight")
    def critical_weight_endpoint(run_id: str, request: CriticalWeightRequest):
        run = run_or_404(run_id)
        age_filter = _age_filter_or_422(request.age_filter)
        lockdown, non_lockdown = default_partition(run.strategies)
        if request.lockdown is not None:
            lockdown = request.lockdown
        if request.non_lockdown is not None:
            non_lockdown = request.non_lockdown
        if not lockdown or not non_lockdown:
            raise HTTPException(
                status_code=422,
                detail=[{"path": "partition", "message": "both sets must be nonempty"}],
            )
        table = run.attribute_vectors(age_filter)
        known = set(table)
        for sid in list(lockdown) + list(non_lockdown):
            if sid not in known:
                raise HTTPException(
                    status_code=422,
                    detail=[{"path": "partition", "message": f"unknown strategy {sid!r}"}],
                )
        result = critical_weight(lockdown, non_lockdown, table)
        ratio = result.importance_ratio
        return {
            "run_id": run_id,
            "engine_version": run.result.engine_version,
            "age_filter": age_filter,
            "c_star": result.c_star,
            "importance_ratio": None if ratio is None else (
                "inf" if ratio == float("inf") else ratio
            ),
            "best_lockdown": result.best_lockdown,
            "best_non_lockdown": result.best_non_lockdown,
            "no_crossing": result.no_crossing,
            "degenerate_interval": result.degenerate_interval,
        }

    @app.get("/api/version")
    def version():
        return {"engine_version": ENGINE_VERSION}

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
