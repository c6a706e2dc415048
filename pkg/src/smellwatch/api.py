"""HTTP facade: knowledge, monitor, and detection resources plus the
telemetry ingest endpoint. Every non-2xx body is an ApiError object
({status, code, message}); the facade adds nothing on top of the module
calls it fronts.
"""

from __future__ import annotations

import logging
import threading
import time
from contextlib import asynccontextmanager
from pathlib import Path

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles

from .aggregation import CAT_INSTANCE, CAT_SERVICE
from .catalog import Catalog, bundled_catalog, entry_to_dict, load_catalog
from .config import CliConfig
from .engine import Pipeline, UnknownSmellError
from .records import DetectionRunSummary
from .results import ConflictError
from .runtime_rules import RuntimeDetectionConfig
from .static_analysis import STATIC_SMELL_IDS, StaticDetectionConfig, load_manifest_dir
from .store import SegmentedStore, StoreError
from .telemetry import BatchParseError, TelemetryIngest

logger = logging.getLogger(__name__)

DAY_US = 24 * 3600 * 1_000_000


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"status": status, "code": code, "message": message})


class AppState:
    """Everything the routes need, wired over one data directory."""

    def __init__(self, config: CliConfig, catalog: Catalog | None = None):
        self.config = config
        if catalog is not None:
            self.catalog = catalog
        elif config.catalog_path:
            self.catalog = load_catalog(Path(config.catalog_path).read_bytes())
        else:
            self.catalog = bundled_catalog()
        self.store = SegmentedStore(config.data_dir)
        self.ingest = TelemetryIngest(self.store, lateness_horizon_us=config.ingest_lateness_us)
        self.pipeline = Pipeline(
            self.store, self.catalog,
            window_us=config.window_us,
            lateness_us=config.aggregation_lateness_us,
            runtime_config=RuntimeDetectionConfig(
                overrides=config.detection_params,
                min_history=config.min_history,
                history_depth=config.history_depth),
            static_config=StaticDetectionConfig(
                overrides={k: v for k, v in config.detection_params.items()
                           if k in STATIC_SMELL_IDS}),
        )
        if config.manifests_dir:
            self.pipeline.engine.register_model(load_manifest_dir(config.manifests_dir))
        self._stop = threading.Event()
        self._scheduler: threading.Thread | None = None

    @property
    def engine(self):
        return self.pipeline.engine

    @property
    def results(self):
        return self.pipeline.engine.results

    def start_scheduler(self) -> None:
        period = max(1, self.config.detection_cycle_period_s)

        def loop() -> None:
            while not self._stop.wait(period):
                try:
                    self.pipeline.run_all_cycles(int(time.time() * 1e6), settle_aware=True)
                except Exception:
                    logger.exception("background cycle failed")

        self._scheduler = threading.Thread(target=loop, name="smellwatch-cycles", daemon=True)
        self._scheduler.start()

    def stop_scheduler(self) -> None:
        self._stop.set()
        if self._scheduler is not None:
            self._scheduler.join(timeout=5)


def _range_params(from_us: int | None, to_us: int | None) -> tuple[int, int]:
    if to_us is None:
        to_us = int(time.time() * 1e6)
    if from_us is None:
        from_us = to_us - DAY_US
    return from_us, to_us


def _strip_samples(agg: dict) -> dict:
    agg.pop("latency_samples_ms", None)
    return agg


def create_app(config: CliConfig | None = None, catalog: Catalog | None = None,
               scheduler: bool = False, ui_dir: str | Path | None = None) -> FastAPI:
    state = AppState(config or CliConfig(), catalog)

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        if scheduler:
            state.start_scheduler()
        yield
        state.stop_scheduler()
        state.store.close()

    app = FastAPI(title="smellwatch", docs_url=None, redoc_url=None, lifespan=lifespan)
    app.state.smellwatch = state

    if state.config.cors_origin:
        from fastapi.middleware.cors import CORSMiddleware
        app.add_middleware(
            CORSMiddleware,
            allow_origins=[state.config.cors_origin],
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.get("/healthz", response_class=PlainTextResponse)
    async def healthz() -> str:
        return "ok"

    @app.post("/ingest")
    async def ingest(request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "bad_body", "request body is not valid JSON")
        try:
            receipt = state.ingest.ingest_batch(body)
        except BatchParseError as exc:
            return _error(400, "bad_batch", str(exc))
        except StoreError as exc:
            return _error(503, "store_unavailable", str(exc))
        return receipt.to_dict()

    @app.get("/api/knowledge/types")
    async def knowledge_types(primary: str | None = None, secondary: str | None = None):
        entries = state.catalog.list_by_taxonomy(primary=primary, secondary=secondary)
        return [entry_to_dict(e) for e in entries]

    @app.get("/api/knowledge/types/{entry_id}")
    async def knowledge_type(entry_id: str):
        entry = state.catalog.get_entry(entry_id)
        if entry is None:
            return _error(404, "unknown_type", f"no catalog entry {entry_id!r}")
        return entry_to_dict(entry)

    @app.get("/api/monitor/services")
    async def monitor_services():
        latest: dict[str, dict] = {}
        for raw in state.store.read_all(CAT_SERVICE):
            current = latest.get(raw["service"])
            if current is None or raw["window"]["start_us"] > current["window"]["start_us"]:
                latest[raw["service"]] = raw
        return [latest[s] for s in sorted(latest)]

    @app.get("/api/monitor/services/{service}/instances")
    async def monitor_instances(service: str):
        per_instance: dict[str, dict] = {}
        for raw in state.store.read_all(CAT_INSTANCE):
            if raw["service"] != service:
                continue
            current = per_instance.get(raw["instance"])
            if current is None or raw["window"]["start_us"] > current["window"]["start_us"]:
                per_instance[raw["instance"]] = raw
        return [_strip_samples(per_instance[i]) for i in sorted(per_instance)]

    @app.get("/api/detection/summary")
    async def detection_summary(from_us: int | None = Query(default=None, alias="from"),
                                to_us: int | None = Query(default=None, alias="to")):
        from_us, to_us = _range_params(from_us, to_us)
        try:
            card = state.results.query_summary(from_us, to_us, state.catalog)
        except ValueError as exc:
            return _error(400, "bad_range", str(exc))
        return card.to_dict()

    @app.get("/api/detection/history")
    async def detection_history(service: str | None = None,
                                from_us: int | None = Query(default=None, alias="from"),
                                to_us: int | None = Query(default=None, alias="to")):
        from_us, to_us = _range_params(from_us, to_us)
        try:
            timeline = state.results.query_history(service, from_us, to_us)
        except ValueError as exc:
            return _error(400, "bad_range", str(exc))
        return timeline.to_dict()

    @app.get("/api/detection/services/{service}/records")
    async def detection_records(service: str,
                                from_us: int | None = Query(default=None, alias="from"),
                                to_us: int | None = Query(default=None, alias="to")):
        from_us, to_us = _range_params(from_us, to_us)
        try:
            records = state.results.query_service_records(service, from_us, to_us)
        except ValueError as exc:
            return _error(400, "bad_range", str(exc))
        return [r.to_dict() for r in records]

    @app.get("/api/detection/algorithms")
    async def algorithms():
        snapshot = state.engine.registry.snapshot()
        return {"algorithms": [{"smell_id": s, "online": online}
                               for s, online in snapshot.items()]}

    @app.put("/api/detection/algorithms/{smell_id}")
    async def set_algorithm(smell_id: str, request: Request):
        try:
            body = await request.json()
        except Exception:
            return _error(400, "bad_body", "request body is not valid JSON")
        if not isinstance(body, dict) or not isinstance(body.get("online"), bool):
            return _error(400, "bad_body", 'body must be {"online": true|false}')
        try:
            state.engine.set_algorithm_status(smell_id, body["online"])
        except UnknownSmellError as exc:
            return _error(404, "unknown_smell", str(exc))
        except ConflictError as exc:
            return _error(409, "conflict", str(exc))
        return {"smell_id": smell_id, "online": body["online"]}

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def run_cycles_once(state: AppState, now_us: int | None = None) -> DetectionRunSummary:
    """One reintegration pass plus one detection cycle (`detect --once`)."""
    now_us = now_us if now_us is not None else int(time.time() * 1e6)
    state.pipeline.reintegrator.run_cycle(now_us)
    return state.engine.run_detection_cycle(now_us)
