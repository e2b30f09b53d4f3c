"""Batch pipeline: data in, session directory of clustering artifacts out.

A session is a content-addressed directory named by a hash of the dataset
and the full clustering configuration. Re-running the same configuration
reuses the existing directory; distinct configurations never collide.
Artifacts are written to a temporary directory first and moved into place
only when every stage has succeeded, so a failed run leaves nothing behind.
"""

from __future__ import annotations

import hashlib
import json
import os
import shutil
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import (
    FeatureMatrix,
    SCENARIO_COLUMNS,
    VELOCITY_GROUP,
    generate_synthetic,
    load_csv,
    save_csv,
)
from .forest import ForestConfig, train_forest
from .proximity import build_proximity, export_binary, to_dissimilarity
from .render import RenderSpec, png_bytes, render_matrix, render_strips
from .seriation import (
    Dendrogram,
    LINKAGE_METHODS,
    LeafOrder,
    flat_clusters,
    hc_order,
    linkage,
    olo_order,
    order_cost,
    permute_matrix,
)

MANIFEST_NAME = "manifest.json"
DEFAULT_OUT_ENV = "URFCLUSTER_OUT"


class PipelineError(RuntimeError):
    """Stage failure with a machine-readable record."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.record = {"error": "pipeline-failure", "stage": stage, "message": message}


@dataclass(frozen=True)
class SubsetRef:
    """Ordered-index range [lo, hi) of a parent session's display order."""

    parent_session_id: str
    lo: int
    hi: int

    def __post_init__(self) -> None:
        if self.lo < 0 or self.hi <= self.lo:
            raise ValueError("subset needs 0 <= lo < hi")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one pipeline invocation depends on.

    Exactly one data source must be set: an input CSV path, synthetic
    per-template counts, or a subset of a parent session. render=None
    picks a default strip layout at run time (all feature columns, the
    velocity group sharing one scale, a type row when labels exist).
    """

    out_root: str
    input_csv: str | None = None
    synthetic_counts: tuple[int, ...] | None = None
    subset: SubsetRef | None = None
    forest: ForestConfig = field(default_factory=ForestConfig)
    linkage_method: str = "average"
    olo: bool = False
    render: RenderSpec | None = None

    def __post_init__(self) -> None:
        sources = sum(
            1
            for s in (self.input_csv, self.synthetic_counts, self.subset)
            if s is not None
        )
        if sources != 1:
            raise ValueError("give exactly one of input_csv, synthetic_counts, subset")
        if self.linkage_method not in LINKAGE_METHODS:
            raise ValueError(f"unknown linkage method {self.linkage_method!r}")
        if self.synthetic_counts is not None and any(
            c < 1 for c in self.synthetic_counts
        ):
            raise ValueError("synthetic counts must be >= 1")


@dataclass(frozen=True)
class SessionResult:
    session_id: str
    path: Path
    manifest: dict
    created: bool


def _canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def session_id_for(
    dataset_sha256: str,
    forest: ForestConfig,
    linkage_method: str,
    olo: bool,
    render: RenderSpec,
    subset: SubsetRef | None,
) -> str:
    """Content address of a session: dataset identity plus configuration."""
    key = {
        "dataset_sha256": dataset_sha256,
        "forest": forest.to_dict(),
        "linkage": linkage_method,
        "olo": olo,
        "render": render.to_dict(),
        "parent": None
        if subset is None
        else {
            "session_id": subset.parent_session_id,
            "lo": subset.lo,
            "hi": subset.hi,
        },
    }
    return hashlib.sha256(_canonical_json(key).encode()).hexdigest()[:16]


def read_manifest(session_dir: Path) -> dict:
    path = Path(session_dir) / MANIFEST_NAME
    if not path.is_file():
        raise PipelineError("load", f"no manifest at {path}")
    return json.loads(path.read_text())


def _load_source(config: PipelineConfig) -> FeatureMatrix:
    if config.input_csv is not None:
        path = Path(config.input_csv)
        if not path.is_file():
            raise PipelineError("load", f"input file not found: {path}")
        try:
            return load_csv(path)
        except ValueError as exc:
            raise PipelineError("load", str(exc)) from exc
    if config.synthetic_counts is not None:
        return generate_synthetic(
            count_per_template=config.synthetic_counts, seed=config.forest.seed
        )
    assert config.subset is not None
    parent_dir = Path(config.out_root) / config.subset.parent_session_id
    manifest = read_manifest(parent_dir)
    orders = json.loads((parent_dir / manifest["artifacts"]["orders"]["path"]).read_text())
    display = np.asarray(orders[orders["display"]], dtype=np.int64)
    lo, hi = config.subset.lo, config.subset.hi
    if hi > display.shape[0]:
        raise PipelineError(
            "load",
            f"subset [{lo},{hi}) exceeds parent size {display.shape[0]}",
        )
    if hi - lo < 2:
        raise PipelineError("load", "subset must select at least 2 rows")
    parent_rows = load_csv(parent_dir / manifest["artifacts"]["rows"]["path"])
    # Parent row ids are positional in its CSV; remap to stored originals.
    original_ids = np.asarray(orders["row_ids"], dtype=np.int64)
    parent_rows = FeatureMatrix(
        parent_rows.schema, parent_rows.rows, original_ids, parent_rows.labels
    )
    return parent_rows.take(display[lo:hi])


def default_render_spec(has_labels: bool) -> RenderSpec:
    """The strip layout a session gets when none is configured."""
    return RenderSpec(
        strips=SCENARIO_COLUMNS,
        shared_groups=(VELOCITY_GROUP,),
        type_row=has_labels,
    )


def run_pipeline(config: PipelineConfig) -> SessionResult:
    """Execute all stages and persist one session directory.

    Returns the existing session untouched when the content address is
    already present (created=False).
    """
    timings: dict[str, float] = {}
    t_total = time.perf_counter()

    matrix = _load_source(config)
    if config.render is not None:
        render_spec = config.render
    else:
        render_spec = default_render_spec(matrix.labels is not None)
    if render_spec.type_row and matrix.labels is None:
        raise PipelineError("render", "type row requested but the data has no labels")

    dataset_sha = matrix.content_hash()
    session_id = session_id_for(
        dataset_sha,
        config.forest,
        config.linkage_method,
        config.olo,
        render_spec,
        config.subset,
    )
    out_root = Path(config.out_root)
    final_dir = out_root / session_id
    if final_dir.is_dir():
        manifest = read_manifest(final_dir)
        return SessionResult(session_id, final_dir, manifest, created=False)

    t = time.perf_counter()
    forest = train_forest(matrix, config.forest)
    timings["train"] = time.perf_counter() - t

    t = time.perf_counter()
    prox = build_proximity(forest, matrix)
    diss = to_dissimilarity(prox)
    timings["proximity"] = time.perf_counter() - t

    t = time.perf_counter()
    dendrogram = linkage(diss, config.linkage_method, row_ids=matrix.row_ids)
    hc = hc_order(dendrogram)
    timings["linkage"] = time.perf_counter() - t

    olo: LeafOrder | None = None
    if config.olo:
        t = time.perf_counter()
        olo = olo_order(dendrogram, diss)
        timings["olo"] = time.perf_counter() - t
    display = olo if olo is not None else hc

    t = time.perf_counter()
    matrix_image = render_matrix(permute_matrix(prox.values, display), render_spec)
    strips_image = None
    if render_spec.strips or render_spec.type_row:
        strips_image = render_strips(matrix, display.permutation, render_spec).image
    timings["render"] = time.perf_counter() - t

    out_root.mkdir(parents=True, exist_ok=True)
    tmp_dir = out_root / f".tmp-{session_id}-{os.getpid()}"
    if tmp_dir.exists():
        shutil.rmtree(tmp_dir)
    tmp_dir.mkdir(parents=True)
    try:
        artifacts: dict[str, dict] = {}

        def seal(name: str, path: Path) -> None:
            artifacts[name] = {
                "path": path.name,
                "bytes": path.stat().st_size,
                "sha256": _sha256_file(path),
            }

        rows_path = tmp_dir / "rows.csv"
        save_csv(matrix, rows_path)
        seal("rows", rows_path)

        forest_path = tmp_dir / "forest.json"
        forest_path.write_text(forest.to_json())
        seal("forest", forest_path)

        export_binary(prox.values, tmp_dir / "P.f32", tmp_dir / "P.json", prox.provenance)
        seal("proximity", tmp_dir / "P.f32")
        seal("proximity_meta", tmp_dir / "P.json")
        export_binary(diss, tmp_dir / "D.f32", tmp_dir / "D.json", prox.provenance)
        seal("dissimilarity", tmp_dir / "D.f32")
        seal("dissimilarity_meta", tmp_dir / "D.json")

        dend_path = tmp_dir / "dendrogram.json"
        dend_path.write_text(dendrogram.to_json())
        seal("dendrogram", dend_path)

        orders_doc = {
            "format": "leaf-orders",
            "version": 1,
            "display": "olo" if olo is not None else "hc",
            "hc": hc.permutation.tolist(),
            "olo": None if olo is None else olo.permutation.tolist(),
            "row_ids": matrix.row_ids.tolist(),
            "ordered_row_ids": matrix.row_ids[display.permutation].tolist(),
            "costs": {
                "hc": order_cost(diss, hc),
                "olo": None if olo is None else order_cost(diss, olo),
            },
        }
        orders_path = tmp_dir / "orders.json"
        orders_path.write_text(_canonical_json(orders_doc))
        seal("orders", orders_path)

        matrix_path = tmp_dir / "matrix.png"
        matrix_path.write_bytes(png_bytes(matrix_image))
        seal("matrix", matrix_path)

        if strips_image is not None:
            strips_path = tmp_dir / "strips.png"
            strips_path.write_bytes(png_bytes(strips_image))
            seal("strips", strips_path)

        timings["total"] = time.perf_counter() - t_total
        manifest = {
            "format": "session-manifest",
            "version": 1,
            "session_id": session_id,
            "dataset": {
                "sha256": dataset_sha,
                "m": matrix.m,
                "q": matrix.q,
                "has_labels": matrix.labels is not None,
            },
            "config": {
                "forest": config.forest.to_dict(),
                "linkage": config.linkage_method,
                "olo": config.olo,
                "render": render_spec.to_dict(),
            },
            "parent": None
            if config.subset is None
            else {
                "session_id": config.subset.parent_session_id,
                "lo": config.subset.lo,
                "hi": config.subset.hi,
            },
            "artifacts": artifacts,
            "timings_s": {k: round(v, 6) for k, v in timings.items()},
        }
        (tmp_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

        try:
            os.rename(tmp_dir, final_dir)
        except OSError:
            if final_dir.is_dir():  # concurrent identical run won the race
                shutil.rmtree(tmp_dir)
                return SessionResult(session_id, final_dir, read_manifest(final_dir), False)
            raise
    except Exception:
        shutil.rmtree(tmp_dir, ignore_errors=True)
        raise
    return SessionResult(session_id, final_dir, manifest, created=True)


@dataclass(frozen=True)
class SweepResult:
    sweep_id: str
    path: Path
    sessions: tuple[SessionResult, ...]


def sweep_pipeline(config: PipelineConfig, i_min_values: Sequence[float]) -> SweepResult:
    """One session per i_min over the same data and seed, plus a contact sheet."""
    values = list(i_min_values)
    if not values:
        raise PipelineError("sweep", "need at least one i_min value")
    results = []
    for i_min in values:
        member = replace(config, forest=replace(config.forest, i_min=float(i_min)))
        results.append(run_pipeline(member))

    sweep_id = hashlib.sha256(
        _canonical_json([r.session_id for r in results]).encode()
    ).hexdigest()[:16]
    sweep_dir = Path(config.out_root) / "sweeps" / sweep_id
    sweep_dir.mkdir(parents=True, exist_ok=True)

    sheet = _contact_sheet(
        [r.path / r.manifest["artifacts"]["matrix"]["path"] for r in results]
    )
    (sweep_dir / "contact_sheet.png").write_bytes(sheet)
    doc = {
        "format": "sweep-manifest",
        "version": 1,
        "sweep_id": sweep_id,
        "i_min_values": [float(v) for v in values],
        "sessions": [r.session_id for r in results],
    }
    (sweep_dir / MANIFEST_NAME).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return SweepResult(sweep_id, sweep_dir, tuple(results))


def _contact_sheet(image_paths: Sequence[Path], pad: int = 4) -> bytes:
    import io

    from PIL import Image

    images = [Image.open(p).convert("RGB") for p in image_paths]
    side = max(im.height for im in images)
    total_w = sum(im.width for im in images) + pad * (len(images) + 1)
    sheet = Image.new("RGB", (total_w, side + 2 * pad), (16, 16, 16))
    x = pad
    for im in images:
        sheet.paste(im, (x, pad))
        x += im.width + pad
    buf = io.BytesIO()
    sheet.save(buf, format="PNG")
    return buf.getvalue()


@dataclass(frozen=True)
class SessionArtifacts:
    """Loaded view of a finished session for serving and inspection."""

    session_id: str
    path: Path
    manifest: dict
    matrix: FeatureMatrix
    proximity: np.ndarray
    display_order: np.ndarray
    orders: dict
    dendrogram: Dendrogram

    @property
    def m(self) -> int:
        return int(self.proximity.shape[0])

    def ordered_proximity(self) -> np.ndarray:
        return permute_matrix(self.proximity, self.display_order)

    def clusters(self, k: int) -> dict[int, int]:
        return flat_clusters(self.dendrogram, k=k)


def load_session(out_root, session_id: str) -> SessionArtifacts:
    session_dir = Path(out_root) / session_id
    manifest = read_manifest(session_dir)
    arts = manifest["artifacts"]
    matrix = load_csv(session_dir / arts["rows"]["path"])
    orders = json.loads((session_dir / arts["orders"]["path"]).read_text())
    original_ids = np.asarray(orders["row_ids"], dtype=np.int64)
    matrix = FeatureMatrix(matrix.schema, matrix.rows, original_ids, matrix.labels)
    meta = json.loads((session_dir / arts["proximity_meta"]["path"]).read_text())
    values = np.fromfile(session_dir / arts["proximity"]["path"], dtype=np.float32)
    values = values.reshape(tuple(meta["shape"]))
    display = np.asarray(orders[orders["display"]], dtype=np.int64)
    dendrogram = Dendrogram.from_json(
        (session_dir / arts["dendrogram"]["path"]).read_text()
    )
    return SessionArtifacts(
        session_id=session_id,
        path=session_dir,
        manifest=manifest,
        matrix=matrix,
        proximity=values,
        display_order=display,
        orders=orders,
        dendrogram=dendrogram,
    )
