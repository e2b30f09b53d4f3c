"""HTTP API over the clustering pipeline, everything under /v1.

Sessions are created asynchronously: POST returns a queued record and a
bounded worker pool trains in the background. Artifact endpoints answer
409 until the session is done. Tile responses carry the affine mapping
from image pixels back to ordered matrix indices in headers, and windows
whose origins differ by a multiple of the block factor share the same
downsample grid, so adjacent tiles stitch cleanly.
"""

from __future__ import annotations

import json
from contextlib import asynccontextmanager
from dataclasses import replace

import numpy as np
from fastapi import APIRouter, FastAPI, Query, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from ..dataset import CsvValidationError
from ..render import (
    RenderSpec,
    png_bytes,
    render_strips,
    render_window,
    strip_calibration,
)
from .models import DatasetInfo, SessionRecord, SessionRequest
from .store import Store, StoreError

MAX_TILE_PIXELS = 4096
MAX_VALUE_WINDOW = 128


def create_app(store_root, workers: int = 2) -> FastAPI:
    store = Store(store_root, workers=workers)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        store.close()

    app = FastAPI(title="urfcluster", lifespan=lifespan)
    app.state.store = store
    # The browser workbench is served separately; expose the affine
    # headers so cross-origin pages can align tiles.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=[
            "X-Window",
            "X-Factor",
            "X-Index-Origin",
            "X-Rows",
            "X-Strip-Height",
        ],
    )
    router = APIRouter(prefix="/v1")

    @app.exception_handler(StoreError)
    async def _store_error(request: Request, exc: StoreError):
        return JSONResponse(status_code=exc.status, content=exc.payload)

    @router.post("/datasets")
    async def upload_dataset(request: Request):
        body = await request.body()
        try:
            text = body.decode("utf-8")
        except UnicodeDecodeError:
            return JSONResponse(
                status_code=400,
                content={"error": "invalid-csv", "cells": [
                    {"row": None, "column": None, "message": "body is not UTF-8 text"}
                ]},
            )
        try:
            info = store.add_dataset(text)
        except CsvValidationError as exc:
            return JSONResponse(
                status_code=400,
                content={"error": "invalid-csv", "cells": exc.errors},
            )
        status = 201 if info.created else 200
        return JSONResponse(status_code=status, content=info.model_dump())

    @router.get("/datasets/{dataset_id}")
    async def get_dataset(dataset_id: str) -> DatasetInfo:
        return store.get_dataset(dataset_id)

    @router.post("/sessions")
    async def create_session(req: SessionRequest):
        record = store.create_session(req)
        status = 202 if record.created else 200
        return JSONResponse(status_code=status, content=record.model_dump())

    @router.get("/sessions/{session_id}")
    async def get_session(session_id: str) -> SessionRecord:
        return store.get_session(session_id)

    @router.get("/sessions/{session_id}/meta")
    async def get_meta(session_id: str):
        record = store.require_done(session_id)
        arts, _ = store.loaded(session_id)
        return {
            "session_id": session_id,
            "status": record.status,
            "dataset": arts.manifest["dataset"],
            "config": arts.manifest["config"],
            "parent": arts.manifest["parent"],
            "lineage": store.lineage(session_id),
            "timings_s": arts.manifest["timings_s"],
            "m": arts.m,
        }

    @router.get("/sessions/{session_id}/matrix")
    async def get_matrix_tile(
        session_id: str,
        x0: int,
        y0: int,
        x1: int,
        y1: int,
        px: int = Query(..., ge=1, le=MAX_TILE_PIXELS),
    ):
        store.require_done(session_id)
        _, ordered = store.loaded(session_id)
        try:
            image, factor = render_window(ordered, x0, y0, x1, y1, px)
        except ValueError as exc:
            raise StoreError(416, {"error": "bad-window", "message": str(exc)})
        return Response(
            content=png_bytes(image),
            media_type="image/png",
            headers={
                "X-Window": f"{x0},{y0},{x1},{y1}",
                "X-Factor": str(factor),
                "X-Index-Origin": f"{x0},{y0}",
            },
        )

    @router.get("/sessions/{session_id}/values")
    async def get_values(session_id: str, x0: int, y0: int, x1: int, y1: int):
        store.require_done(session_id)
        arts, ordered = store.loaded(session_id)
        m = arts.m
        if not (0 <= x0 < x1 <= m and 0 <= y0 < y1 <= m):
            raise StoreError(
                416,
                {"error": "bad-window", "message": f"window outside 0..{m}"},
            )
        if x1 - x0 > MAX_VALUE_WINDOW or y1 - y0 > MAX_VALUE_WINDOW:
            raise StoreError(
                416,
                {
                    "error": "bad-window",
                    "message": f"window side exceeds {MAX_VALUE_WINDOW}",
                },
            )
        # values[r][c] pairs ordered row y0+r with ordered row x0+c.
        block = ordered[y0:y1, x0:x1].astype(np.float64)
        return {"window": [x0, y0, x1, y1], "values": block.tolist()}

    @router.get("/sessions/{session_id}/strips")
    async def get_strips(
        session_id: str,
        x0: int | None = None,
        x1: int | None = None,
        px: int = Query(default=MAX_TILE_PIXELS, ge=1, le=MAX_TILE_PIXELS),
        factor: int | None = Query(default=None, ge=1),
        types: bool | None = None,
        shared: bool | None = None,
    ):
        store.require_done(session_id)
        arts, _ = store.loaded(session_id)
        spec = RenderSpec.from_dict(arts.manifest["config"]["render"])
        if shared is False:
            # Per-strip value ranges instead of the grouped joint range.
            spec = replace(spec, shared_groups=())
        if types is not None:
            if types and arts.matrix.labels is None:
                raise StoreError(
                    422, {"error": "no-labels", "message": "dataset has no scenery labels"}
                )
            spec = replace(spec, type_row=types)
        lo = 0 if x0 is None else x0
        hi = arts.m if x1 is None else x1
        if not (0 <= lo < hi <= arts.m):
            raise StoreError(
                416,
                {"error": "bad-window", "message": f"[{lo},{hi}) outside 0..{arts.m}"},
            )
        calibration = strip_calibration(arts.matrix, spec)
        sub = arts.matrix.take(arts.display_order[lo:hi])
        panel = render_strips(
            sub,
            np.arange(hi - lo, dtype=np.int64),
            replace(spec, max_pixels=px),
            calibration=calibration,
            factor=factor,
        )
        return Response(
            content=png_bytes(panel.image),
            media_type="image/png",
            headers={
                "X-Window": f"{lo},{hi}",
                "X-Factor": str(panel.factor),
                "X-Index-Origin": str(lo),
                "X-Rows": ",".join(panel.rows),
                "X-Strip-Height": str(spec.strip_height),
            },
        )

    @router.get("/sessions/{session_id}/order")
    async def get_order(session_id: str):
        store.require_done(session_id)
        arts, _ = store.loaded(session_id)
        return arts.orders

    @router.get("/sessions/{session_id}/dendrogram")
    async def get_dendrogram(session_id: str):
        store.require_done(session_id)
        arts, _ = store.loaded(session_id)
        return json.loads(arts.dendrogram.to_json())

    app.include_router(router)
    return app
