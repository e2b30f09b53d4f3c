"""Scenario feature schema, CSV interchange, and synthetic data generation."""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .kinematics import ScenarioWindow, criticality_index

# Column order is part of the interchange contract.
SCENARIO_COLUMNS = (
    "v_eg_t-2",
    "v_eg_t0",
    "b_eg",
    "v_tg_t-2",
    "v_tg_t0",
    "b_tg",
    "delta_rel",
    "r",
    "v_lim",
    "n_L",
)
BINARY_COLUMNS = frozenset({"b_eg", "b_tg"})
VELOCITY_GROUP = ("v_eg_t-2", "v_eg_t0", "v_tg_t-2", "v_tg_t0")

TYPE_COLUMN = "type"
SCENERY_KINDS = ("highway", "crossing", "roundabout")

# Roads with curve radius beyond the limit are treated as straight and
# stored with a fixed sentinel radius.
RADIUS_LIMIT = 7000.0
STRAIGHT_RADIUS = 11111.0


@dataclass(frozen=True)
class Column:
    name: str
    kind: str = "continuous"  # "continuous" | "binary"
    display_group: str | None = None


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature columns with value kinds and display grouping."""

    columns: tuple[Column, ...]

    def __post_init__(self) -> None:
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValueError("duplicate column names in schema")
        for c in self.columns:
            if c.kind not in ("continuous", "binary"):
                raise ValueError(f"unknown column kind {c.kind!r}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns)

    def index_of(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise KeyError(name)

    def group_members(self, group: str) -> tuple[str, ...]:
        return tuple(c.name for c in self.columns if c.display_group == group)


def scenario_schema() -> FeatureSchema:
    """The fixed 10-column scenario schema."""
    cols = []
    for name in SCENARIO_COLUMNS:
        kind = "binary" if name in BINARY_COLUMNS else "continuous"
        group = "velocity" if name in VELOCITY_GROUP else None
        cols.append(Column(name, kind, group))
    return FeatureSchema(tuple(cols))


@dataclass(frozen=True)
class FeatureMatrix:
    """Immutable numeric dataset: one row per scenario, schema-typed columns.

    labels, when present, carry the scenery kind per row. They are never
    consumed by training code; they exist for evaluation and display only.
    """

    schema: FeatureSchema
    rows: np.ndarray
    row_ids: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        rows = np.ascontiguousarray(np.asarray(self.rows, dtype=np.float64))
        ids = np.ascontiguousarray(np.asarray(self.row_ids, dtype=np.int64))
        if rows.ndim != 2:
            raise ValueError("rows must be a 2-D array")
        if rows.shape[0] < 2:
            raise ValueError("a dataset needs at least 2 rows")
        if rows.shape[1] != len(self.schema.columns):
            raise ValueError(
                f"row width {rows.shape[1]} does not match schema "
                f"({len(self.schema.columns)} columns)"
            )
        if not np.all(np.isfinite(rows)):
            raise ValueError("rows contain non-finite values")
        if ids.shape != (rows.shape[0],):
            raise ValueError("row_ids must align with rows")
        if len(np.unique(ids)) != len(ids):
            raise ValueError("row_ids must be unique")
        for j, col in enumerate(self.schema.columns):
            if col.kind == "binary":
                bad = ~np.isin(rows[:, j], (0.0, 1.0))
                if bad.any():
                    i = int(np.argmax(bad))
                    raise ValueError(
                        f"column {col.name!r} must be 0/1, row {i} has {rows[i, j]}"
                    )
        if self.labels is not None:
            if len(self.labels) != rows.shape[0]:
                raise ValueError("labels must align with rows")
            object.__setattr__(self, "labels", tuple(str(v) for v in self.labels))
        rows.setflags(write=False)
        ids.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "row_ids", ids)

    @property
    def m(self) -> int:
        return int(self.rows.shape[0])

    @property
    def q(self) -> int:
        return int(self.rows.shape[1])

    def content_hash(self) -> str:
        """Stable hash over schema, values, row ids, and labels."""
        h = hashlib.sha256()
        h.update(",".join(self.schema.names).encode())
        h.update(self.rows.tobytes())
        h.update(self.row_ids.tobytes())
        if self.labels is not None:
            h.update("\x1f".join(self.labels).encode())
        return h.hexdigest()

    def take(self, positions: Sequence[int]) -> "FeatureMatrix":
        """Row subset by positional index; original row_ids are kept."""
        pos = np.asarray(positions, dtype=np.int64)
        labels = None
        if self.labels is not None:
            labels = tuple(self.labels[int(i)] for i in pos)
        return FeatureMatrix(self.schema, self.rows[pos], self.row_ids[pos], labels)


class CsvValidationError(ValueError):
    """CSV rejected; .errors lists cell-level problems."""

    def __init__(self, errors: list[dict]):
        self.errors = errors
        head = "; ".join(
            f"row {e.get('row')}, column {e.get('column')}: {e['message']}"
            if e.get("row") is not None
            else e["message"]
            for e in errors[:5]
        )
        more = "" if len(errors) <= 5 else f" (+{len(errors) - 5} more)"
        super().__init__(head + more)


def clamp_radius(r: float) -> float:
    """Map any radius beyond the curve limit to the straight-road sentinel."""
    if r <= 0.0:
        raise ValueError("radius must be positive")
    return STRAIGHT_RADIUS if r > RADIUS_LIMIT else float(r)


def fold_heading_difference(theta_a: float, theta_b: float) -> float:
    """Absolute heading difference in degrees, folded into [0, 180]."""
    d = abs(math.degrees(theta_a) - math.degrees(theta_b)) % 360.0
    return 360.0 - d if d > 180.0 else d


@dataclass(frozen=True)
class RoadContext:
    """Static road attributes at the scenario location."""

    radius: float
    speed_limit: float
    lane_count: int

    def __post_init__(self) -> None:
        if self.radius <= 0.0:
            raise ValueError("radius must be positive")
        if self.speed_limit <= 0.0:
            raise ValueError("speed limit must be positive")
        if self.lane_count < 1:
            raise ValueError("lane count must be >= 1")


def extract_features(window: ScenarioWindow, road: RoadContext) -> np.ndarray:
    """Build the 10-feature row for a critical two-vehicle window.

    Raises ValueError when the window is not critical: only windows that
    pass the criticality filter are turned into dataset rows.
    """
    if criticality_index(window) != 1:
        raise ValueError("window is not critical; no feature row is defined")
    v_eg_start = window.ego_start.velocity
    v_eg_end = window.ego_end.velocity
    v_tg_start = window.target_start.velocity
    v_tg_end = window.target_end.velocity
    return np.array(
        [
            v_eg_start,
            v_eg_end,
            1.0 if v_eg_end < v_eg_start else 0.0,
            v_tg_start,
            v_tg_end,
            1.0 if v_tg_end < v_tg_start else 0.0,
            fold_heading_difference(
                window.ego_end.orientation, window.target_end.orientation
            ),
            clamp_radius(road.radius),
            float(road.speed_limit),
            float(road.lane_count),
        ]
    )


def load_csv_text(text: str, schema: FeatureSchema | None = None) -> FeatureMatrix:
    """Parse CSV text into a FeatureMatrix.

    The header must match the schema column names in order; a trailing
    "type" column is accepted and stored as labels. All problems are
    collected into a CsvValidationError with row/column coordinates
    (0-based data rows, i.e. not counting the header).
    """
    schema = schema or scenario_schema()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise CsvValidationError([{"row": None, "column": None, "message": "empty file"}])
    header = [h.strip() for h in header]
    expected = list(schema.names)
    has_labels = header == expected + [TYPE_COLUMN]
    if not has_labels and header != expected:
        raise CsvValidationError(
            [
                {
                    "row": None,
                    "column": None,
                    "message": (
                        "header mismatch: expected "
                        + ",".join(expected)
                        + f" (optionally followed by {TYPE_COLUMN!r}), got "
                        + ",".join(header)
                    ),
                }
            ]
        )
    width = len(header)
    errors: list[dict] = []
    values: list[list[float]] = []
    labels: list[str] = []
    for i, raw in enumerate(reader):
        if len(raw) != width:
            errors.append(
                {"row": i, "column": None, "message": f"expected {width} fields, got {len(raw)}"}
            )
            continue
        row = []
        for j, cell in enumerate(raw[: len(expected)]):
            name = expected[j]
            try:
                v = float(cell)
            except ValueError:
                errors.append(
                    {"row": i, "column": name, "message": f"not a number: {cell!r}"}
                )
                continue
            if not math.isfinite(v):
                errors.append(
                    {"row": i, "column": name, "message": f"non-finite value: {cell!r}"}
                )
                continue
            if name in BINARY_COLUMNS and v not in (0.0, 1.0):
                errors.append(
                    {"row": i, "column": name, "message": f"binary column, got {cell!r}"}
                )
                continue
            row.append(v)
        if has_labels:
            kind = raw[-1].strip()
            if kind not in SCENERY_KINDS:
                errors.append(
                    {
                        "row": i,
                        "column": TYPE_COLUMN,
                        "message": f"unknown scenery {kind!r}, expected one of {', '.join(SCENERY_KINDS)}",
                    }
                )
            else:
                labels.append(kind)
        if len(row) == len(expected):
            values.append(row)
    if errors:
        raise CsvValidationError(errors)
    if len(values) < 2:
        raise CsvValidationError(
            [{"row": None, "column": None, "message": f"need at least 2 data rows, got {len(values)}"}]
        )
    return FeatureMatrix(
        schema=schema,
        rows=np.array(values, dtype=np.float64),
        row_ids=np.arange(len(values), dtype=np.int64),
        labels=tuple(labels) if has_labels else None,
    )


def load_csv(path, schema: FeatureSchema | None = None) -> FeatureMatrix:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return load_csv_text(fh.read(), schema)


def to_csv_text(matrix: FeatureMatrix) -> str:
    """Serialize a matrix to CSV; floats use repr so round-trips are exact."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    header = list(matrix.schema.names)
    if matrix.labels is not None:
        header.append(TYPE_COLUMN)
    writer.writerow(header)
    for i in range(matrix.m):
        row = [repr(float(v)) for v in matrix.rows[i]]
        if matrix.labels is not None:
            row.append(matrix.labels[i])
        writer.writerow(row)
    return out.getvalue()


def save_csv(matrix: FeatureMatrix, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv_text(matrix))


@dataclass(frozen=True)
class SceneryTemplate:
    """Sampling ranges for one scenery kind.

    Speeds are m/s at t-2; the t0 speed is derived from a braking draw so
    the b flags stay coherent with the velocity pair. angle_range_deg bounds
    the folded heading difference. straight_fraction is the probability of
    emitting the straight-road sentinel instead of a sampled radius.
    """

    kind: str
    lane_count_range: tuple[int, int]
    speed_limit_set: tuple[float, ...]
    radius_range: tuple[float, float]
    angle_range_deg: tuple[float, float]
    speed_range: tuple[float, float]
    braking_prob: float = 0.5
    straight_fraction: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in SCENERY_KINDS:
            raise ValueError(f"unknown scenery kind {self.kind!r}")
        lo, hi = self.radius_range
        if not (0.0 < lo <= hi <= RADIUS_LIMIT):
            raise ValueError("radius_range must lie within (0, radius limit]")
        a0, a1 = self.angle_range_deg
        if not (0.0 <= a0 <= a1 <= 180.0):
            raise ValueError("angle_range_deg must lie within [0, 180]")
        if not (0.0 <= self.straight_fraction <= 1.0):
            raise ValueError("straight_fraction must be a probability")
        if not (0.0 <= self.braking_prob <= 1.0):
            raise ValueError("braking_prob must be a probability")
        if self.lane_count_range[0] < 1 or self.lane_count_range[0] > self.lane_count_range[1]:
            raise ValueError("bad lane_count_range")
        if not self.speed_limit_set:
            raise ValueError("speed_limit_set must not be empty")


def default_templates() -> tuple[SceneryTemplate, ...]:
    """Templates for the three sceneries used throughout the tests.

    Highways run straight (sentinel radius) with many lanes, high limits,
    and near-parallel headings. Crossings sit on gently curved urban
    arterials with transversal headings. Roundabouts are tight circles at
    low limits with near-opposing headings. The radius bands are disjoint
    across the three kinds so segment curvature alone tells them apart.
    """
    return (
        SceneryTemplate(
            kind="highway",
            lane_count_range=(2, 4),
            speed_limit_set=(27.78, 33.33, 36.11),
            radius_range=(1200.0, 7000.0),
            angle_range_deg=(0.0, 25.0),
            speed_range=(22.0, 36.0),
            braking_prob=0.45,
            straight_fraction=1.0,
        ),
        SceneryTemplate(
            kind="crossing",
            lane_count_range=(2, 3),
            speed_limit_set=(13.89, 16.67),
            radius_range=(3000.0, 6900.0),
            angle_range_deg=(60.0, 120.0),
            speed_range=(11.0, 17.0),
            braking_prob=0.7,
            straight_fraction=0.0,
        ),
        SceneryTemplate(
            kind="roundabout",
            lane_count_range=(1, 1),
            speed_limit_set=(8.33, 11.11),
            radius_range=(8.0, 30.0),
            angle_range_deg=(140.0, 180.0),
            speed_range=(6.5, 11.0),
            braking_prob=0.6,
            straight_fraction=0.0,
        ),
    )


def _sample_speed_pair(rng: np.random.Generator, template: SceneryTemplate, v_lim: float):
    # Traffic flows near the posted limit, so speeds cluster per limit value.
    v_start = float(np.clip(v_lim * rng.uniform(0.82, 0.98), *template.speed_range))
    if rng.random() < template.braking_prob:
        v_end = v_start * rng.uniform(0.55, 0.9)
    else:
        v_end = v_start * rng.uniform(1.0, 1.1)
    return v_start, v_end


def generate_synthetic(
    templates: Sequence[SceneryTemplate] | None = None,
    count_per_template: int | Sequence[int] = 200,
    seed: int = 0,
) -> FeatureMatrix:
    """Draw a labeled synthetic dataset from scenery templates.

    count_per_template is either one count for all templates or a sequence
    aligned with them. Deterministic for a given (templates, counts, seed).
    """
    templates = tuple(templates) if templates is not None else default_templates()
    if not templates:
        raise ValueError("need at least one template")
    if isinstance(count_per_template, int):
        counts = [count_per_template] * len(templates)
    else:
        counts = list(count_per_template)
        if len(counts) != len(templates):
            raise ValueError("counts must align with templates")
    if any(c < 1 for c in counts):
        raise ValueError("counts must be >= 1")
    rng = np.random.default_rng(seed)
    rows = []
    labels = []
    for template, count in zip(templates, counts):
        for _ in range(count):
            # One limit per scenario; both vehicles ride on the same road.
            v_lim = float(rng.choice(template.speed_limit_set))
            v_eg_start, v_eg_end = _sample_speed_pair(rng, template, v_lim)
            v_tg_start, v_tg_end = _sample_speed_pair(rng, template, v_lim)
            if rng.random() < template.straight_fraction:
                radius = STRAIGHT_RADIUS
            else:
                radius = clamp_radius(rng.uniform(*template.radius_range))
            rows.append(
                [
                    v_eg_start,
                    v_eg_end,
                    1.0 if v_eg_end < v_eg_start else 0.0,
                    v_tg_start,
                    v_tg_end,
                    1.0 if v_tg_end < v_tg_start else 0.0,
                    rng.uniform(*template.angle_range_deg),
                    radius,
                    v_lim,
                    float(rng.integers(template.lane_count_range[0], template.lane_count_range[1] + 1)),
                ]
            )
            labels.append(template.kind)
    return FeatureMatrix(
        schema=scenario_schema(),
        rows=np.array(rows, dtype=np.float64),
        row_ids=np.arange(len(rows), dtype=np.int64),
        labels=tuple(labels),
    )
