"""On-disk state plus the background job pool behind the API.

Layout under one root directory:

    datasets/{dataset_id}.csv    uploaded CSV text (first upload wins)
    datasets/{dataset_id}.json   parsed shape summary
    sessions/{session_id}/       pipeline session directories

Session ids are content addresses over the dataset and configuration, so
creation is idempotent and finished directories are immutable. Status
lives in memory, guarded by one lock; directories found on disk at start
are re-registered as done.
"""

from __future__ import annotations

import json
import threading
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ..dataset import FeatureMatrix, load_csv_text
from ..forest import ForestConfig
from ..pipeline import (
    PipelineConfig,
    PipelineError,
    SessionArtifacts,
    SubsetRef,
    default_render_spec,
    load_session,
    run_pipeline,
    session_id_for,
)
from ..seriation import permute_matrix
from .models import DatasetInfo, ParentRef, SessionRecord, SessionRequest


class StoreError(Exception):
    """API-level failure: HTTP status plus a JSON payload."""

    def __init__(self, status: int, payload: dict):
        super().__init__(payload.get("message", payload.get("error", "error")))
        self.status = status
        self.payload = payload


class Store:
    def __init__(self, root, workers: int = 2):
        self.root = Path(root)
        self.datasets_dir = self.root / "datasets"
        self.sessions_dir = self.root / "sessions"
        self.datasets_dir.mkdir(parents=True, exist_ok=True)
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._sessions: dict[str, dict] = {}
        self._pool = ThreadPoolExecutor(max_workers=max(1, workers))
        self._cache_lock = threading.Lock()
        self._cache: OrderedDict[str, tuple[SessionArtifacts, np.ndarray]] = OrderedDict()
        self._cache_cap = 4
        self._recover()

    def close(self) -> None:
        self._pool.shutdown(wait=False, cancel_futures=True)

    # -- datasets ---------------------------------------------------------

    def add_dataset(self, csv_text: str) -> DatasetInfo:
        matrix = load_csv_text(csv_text)  # CsvValidationError propagates
        dataset_id = matrix.content_hash()
        csv_path = self.datasets_dir / f"{dataset_id}.csv"
        meta_path = self.datasets_dir / f"{dataset_id}.json"
        with self._lock:
            if csv_path.is_file():
                info = json.loads(meta_path.read_text())
                return DatasetInfo(dataset_id=dataset_id, created=False, **info)
            tmp = csv_path.with_suffix(".csv.tmp")
            tmp.write_text(csv_text)
            tmp.rename(csv_path)
            info = {
                "m": matrix.m,
                "q": matrix.q,
                "has_labels": matrix.labels is not None,
            }
            meta_path.write_text(json.dumps(info, sort_keys=True) + "\n")
        return DatasetInfo(dataset_id=dataset_id, created=True, **info)

    def get_dataset(self, dataset_id: str) -> DatasetInfo:
        meta_path = self.datasets_dir / f"{dataset_id}.json"
        if not meta_path.is_file():
            raise StoreError(404, {"error": "unknown-dataset", "dataset_id": dataset_id})
        info = json.loads(meta_path.read_text())
        return DatasetInfo(dataset_id=dataset_id, created=False, **info)

    def _dataset_csv(self, dataset_id: str) -> Path:
        path = self.datasets_dir / f"{dataset_id}.csv"
        if not path.is_file():
            raise StoreError(404, {"error": "unknown-dataset", "dataset_id": dataset_id})
        return path

    # -- sessions ---------------------------------------------------------

    def create_session(self, req: SessionRequest) -> SessionRecord:
        forest = ForestConfig(
            tree_count=req.trees, i_min=req.i_min, m_min=req.m_min, seed=req.seed
        )
        if req.parent is None:
            csv_path = self._dataset_csv(req.dataset_id)
            info = self.get_dataset(req.dataset_id)
            # Upload already content-addressed the parsed matrix.
            dataset_sha = req.dataset_id
            has_labels = info.has_labels
            subset = None
            pipeline_config = PipelineConfig(
                out_root=str(self.sessions_dir),
                input_csv=str(csv_path),
                forest=forest,
                linkage_method=req.linkage,
                olo=req.olo,
            )
        else:
            child, subset = self._subset_source(req)
            dataset_sha = child.content_hash()
            has_labels = child.labels is not None
            pipeline_config = PipelineConfig(
                out_root=str(self.sessions_dir),
                subset=subset,
                forest=forest,
                linkage_method=req.linkage,
                olo=req.olo,
            )

        render = default_render_spec(has_labels)
        session_id = session_id_for(
            dataset_sha, forest, req.linkage, req.olo, render, subset
        )
        record = {
            "session_id": session_id,
            "status": "queued",
            "dataset_id": dataset_sha,
            "config": {
                "forest": forest.to_dict(),
                "linkage": req.linkage,
                "olo": req.olo,
            },
            "parent": None
            if subset is None
            else {"session_id": subset.parent_session_id, "lo": subset.lo, "hi": subset.hi},
            "error": None,
        }
        with self._lock:
            existing = self._sessions.get(session_id)
            if existing is not None:
                return self._to_record(existing, created=False)
            if (self.sessions_dir / session_id).is_dir():
                self._sessions[session_id] = dict(record, status="done")
                return self._to_record(self._sessions[session_id], created=False)
            self._sessions[session_id] = record
        self._pool.submit(self._execute, session_id, pipeline_config)
        return self._to_record(record, created=True)

    def _subset_source(self, req: SessionRequest) -> tuple[FeatureMatrix, SubsetRef]:
        with self._lock:
            parent = self._sessions.get(req.parent)
        if parent is None:
            raise StoreError(404, {"error": "unknown-parent", "session_id": req.parent})
        if parent["status"] != "done":
            raise StoreError(
                409,
                {
                    "error": "parent-not-done",
                    "session_id": req.parent,
                    "status": parent["status"],
                },
            )
        arts, _ = self.loaded(req.parent)
        lo, hi = int(req.range[0]), int(req.range[1])
        if not (0 <= lo < hi <= arts.m) or hi - lo < 2:
            raise StoreError(
                422,
                {
                    "error": "invalid-range",
                    "message": f"range [{lo},{hi}) must select >= 2 of {arts.m} ordered rows",
                },
            )
        child = arts.matrix.take(arts.display_order[lo:hi])
        return child, SubsetRef(req.parent, lo, hi)

    def _execute(self, session_id: str, config: PipelineConfig) -> None:
        with self._lock:
            record = self._sessions[session_id]
            if record["status"] != "queued":
                return
            record["status"] = "running"
        try:
            result = run_pipeline(config)
            if result.session_id != session_id:
                raise PipelineError(
                    "persist",
                    f"content address mismatch: expected {session_id}, got {result.session_id}",
                )
            with self._lock:
                self._sessions[session_id]["status"] = "done"
        except PipelineError as exc:
            with self._lock:
                self._sessions[session_id].update(status="failed", error=exc.record)
        except Exception as exc:  # noqa: BLE001 - job boundary
            with self._lock:
                self._sessions[session_id].update(
                    status="failed",
                    error={"error": "internal", "stage": "run", "message": str(exc)},
                )

    def get_session(self, session_id: str) -> SessionRecord:
        with self._lock:
            record = self._sessions.get(session_id)
            if record is None:
                raise StoreError(404, {"error": "unknown-session", "session_id": session_id})
            return self._to_record(record)

    def require_done(self, session_id: str) -> SessionRecord:
        record = self.get_session(session_id)
        if record.status != "done":
            raise StoreError(
                409,
                {"error": "not-done", "session_id": session_id, "status": record.status},
            )
        return record

    def lineage(self, session_id: str) -> list[dict]:
        """Parent chain from the immediate parent to the root."""
        chain: list[dict] = []
        current = session_id
        while True:
            with self._lock:
                record = self._sessions.get(current)
            if record is None or record["parent"] is None:
                return chain
            chain.append(dict(record["parent"]))
            current = record["parent"]["session_id"]

    def loaded(self, session_id: str) -> tuple[SessionArtifacts, np.ndarray]:
        """Artifacts plus the display-ordered proximity, cached."""
        with self._cache_lock:
            hit = self._cache.get(session_id)
            if hit is not None:
                self._cache.move_to_end(session_id)
                return hit
        arts = load_session(self.sessions_dir, session_id)
        ordered = permute_matrix(arts.proximity, arts.display_order)
        with self._cache_lock:
            self._cache[session_id] = (arts, ordered)
            self._cache.move_to_end(session_id)
            while len(self._cache) > self._cache_cap:
                self._cache.popitem(last=False)
        return arts, ordered

    # -- internal ---------------------------------------------------------

    def _to_record(self, record: dict, created: bool = False) -> SessionRecord:
        parent = record["parent"]
        return SessionRecord(
            session_id=record["session_id"],
            status=record["status"],
            dataset_id=record["dataset_id"],
            config=record["config"],
            parent=None if parent is None else ParentRef(**parent),
            error=record["error"],
            created=created,
        )

    def _recover(self) -> None:
        for manifest_path in sorted(self.sessions_dir.glob("*/manifest.json")):
            try:
                manifest = json.loads(manifest_path.read_text())
            except (OSError, json.JSONDecodeError):
                continue
            if manifest.get("format") != "session-manifest":
                continue
            session_id = manifest["session_id"]
            self._sessions[session_id] = {
                "session_id": session_id,
                "status": "done",
                "dataset_id": manifest["dataset"]["sha256"],
                "config": {
                    "forest": manifest["config"]["forest"],
                    "linkage": manifest["config"]["linkage"],
                    "olo": manifest["config"]["olo"],
                },
                "parent": manifest["parent"],
                "error": None,
            }
