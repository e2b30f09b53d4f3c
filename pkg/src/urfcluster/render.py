"""Heatmap and feature-strip rendering for ordered proximity matrices."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from .dataset import FeatureMatrix, SCENERY_KINDS


@dataclass(frozen=True)
class Colormap:
    """Piecewise-linear RGB ramp over t in [0, 1]."""

    anchors: tuple[tuple[float, tuple[float, float, float]], ...]

    def __post_init__(self) -> None:
        ts = [a[0] for a in self.anchors]
        if len(ts) < 2 or ts != sorted(ts) or ts[0] != 0.0 or ts[-1] != 1.0:
            raise ValueError("anchors must ascend from t=0 to t=1")

    def map(self, values: np.ndarray) -> np.ndarray:
        """Map values in [0, 1] to uint8 RGB; shape grows a trailing 3."""
        v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
        ts = np.array([a[0] for a in self.anchors])
        out = np.empty(v.shape + (3,), dtype=np.uint8)
        for c in range(3):
            channel = np.interp(v, ts, np.array([a[1][c] for a in self.anchors]))
            out[..., c] = np.round(channel * 255.0).astype(np.uint8)
        return out


# Nine-anchor approximation of the familiar dark-blue-to-yellow ramp.
PARULA_LIKE = Colormap(
    anchors=(
        (0.000, (0.2422, 0.1504, 0.6603)),
        (0.125, (0.2810, 0.2978, 0.9383)),
        (0.250, (0.1786, 0.5289, 0.9682)),
        (0.375, (0.0689, 0.6948, 0.8394)),
        (0.500, (0.2161, 0.7843, 0.5923)),
        (0.625, (0.6720, 0.7793, 0.2227)),
        (0.750, (0.9139, 0.7258, 0.3063)),
        (0.875, (0.9857, 0.8645, 0.1258)),
        (1.000, (0.9769, 0.9839, 0.0805)),
    )
)

# Scenery row colors per kind.
TYPE_COLORS: Mapping[str, tuple[int, int, int]] = {
    "highway": (220, 36, 36),
    "crossing": (36, 160, 36),
    "roundabout": (36, 90, 220),
}
UNKNOWN_TYPE_COLOR = (128, 128, 128)


@dataclass(frozen=True)
class RegionBox:
    """Half-open index range [lo, hi) highlighted on the heatmap diagonal."""

    lo: int
    hi: int
    label: str = ""
    color: tuple[int, int, int] = (255, 255, 255)

    def __post_init__(self) -> None:
        if self.lo < 0 or self.hi <= self.lo:
            raise ValueError("box needs 0 <= lo < hi")


@dataclass(frozen=True)
class RenderSpec:
    """Rendering settings for heatmaps and strips.

    Matrices larger than max_pixels per side are block-reduced with the
    configured reducer before color mapping. strip features are rendered in
    the given order; columns named in one shared_groups entry share a
    calibration range, all others calibrate independently. type_row adds a
    categorical scenery strip (requires labels).
    """

    max_pixels: int = 4096
    downsample: str = "mean"
    strips: tuple[str, ...] = ()
    shared_groups: tuple[tuple[str, ...], ...] = ()
    type_row: bool = False
    strip_height: int = 12
    colormap: Colormap = PARULA_LIKE

    def __post_init__(self) -> None:
        if self.max_pixels < 1:
            raise ValueError("max_pixels must be >= 1")
        if self.downsample not in ("mean", "max"):
            raise ValueError("downsample must be 'mean' or 'max'")
        if self.strip_height < 1:
            raise ValueError("strip_height must be >= 1")

    def to_dict(self) -> dict:
        return {
            "max_pixels": self.max_pixels,
            "downsample": self.downsample,
            "strips": list(self.strips),
            "shared_groups": [list(g) for g in self.shared_groups],
            "type_row": self.type_row,
            "strip_height": self.strip_height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RenderSpec":
        return cls(
            max_pixels=int(d.get("max_pixels", 4096)),
            downsample=d.get("downsample", "mean"),
            strips=tuple(d.get("strips", ())),
            shared_groups=tuple(tuple(g) for g in d.get("shared_groups", ())),
            type_row=bool(d.get("type_row", False)),
            strip_height=int(d.get("strip_height", 12)),
        )


def reduction_factor(width: int, height: int, max_pixels: int) -> int:
    """Common block edge so both window sides fit within max_pixels."""
    return max(1, math.ceil(max(width, height) / max_pixels))


def _reduce_1d(values: np.ndarray, factor: int, reducer: str, axis: int) -> np.ndarray:
    if factor == 1:
        return values
    n = values.shape[axis]
    starts = np.arange(0, n, factor)
    if reducer == "max":
        return np.maximum.reduceat(values, starts, axis=axis)
    sums = np.add.reduceat(values, starts, axis=axis)
    counts = np.minimum(starts + factor, n) - starts
    shape = [1] * values.ndim
    shape[axis] = len(starts)
    return sums / counts.reshape(shape)


def reduce_blocks(values: np.ndarray, factor: int, reducer: str) -> np.ndarray:
    """Aggregate a 2-D array over factor x factor blocks anchored at (0, 0)."""
    out = _reduce_1d(np.asarray(values, dtype=np.float64), factor, reducer, axis=0)
    return _reduce_1d(out, factor, reducer, axis=1)


def render_window(
    values: np.ndarray,
    x0: int,
    y0: int,
    x1: int,
    y1: int,
    max_pixels: int,
    reducer: str = "mean",
    colormap: Colormap = PARULA_LIKE,
) -> tuple[np.ndarray, int]:
    """Render the half-open window [y0, y1) x [x0, x1) of a value matrix.

    Returns (uint8 RGB image, block factor). Pixel (r, c) covers source
    rows y0 + r*factor .. and columns x0 + c*factor .., so adjacent windows
    whose origins differ by a multiple of the factor share block grids.
    """
    values = np.asarray(values)
    m, n = values.shape
    if not (0 <= x0 < x1 <= n and 0 <= y0 < y1 <= m):
        raise ValueError(f"window [{x0},{x1})x[{y0},{y1}) outside matrix {m}x{n}")
    window = values[y0:y1, x0:x1]
    factor = reduction_factor(x1 - x0, y1 - y0, max_pixels)
    reduced = reduce_blocks(window, factor, reducer)
    return colormap.map(reduced), factor


def render_matrix(values: np.ndarray, spec: RenderSpec) -> np.ndarray:
    """Render a full square matrix of proximities in [0, 1]."""
    values = np.asarray(values)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ValueError("matrix must be square")
    image, _ = render_window(
        values,
        0,
        0,
        values.shape[1],
        values.shape[0],
        spec.max_pixels,
        spec.downsample,
        spec.colormap,
    )
    return image


def _mode_blocks(indices: np.ndarray, factor: int) -> np.ndarray:
    """Per-block modal value of an integer row; ties take the smallest."""
    if factor == 1:
        return indices
    out = []
    for start in range(0, indices.shape[0], factor):
        block = indices[start : start + factor]
        vals, counts = np.unique(block, return_counts=True)
        out.append(vals[np.argmax(counts)])
    return np.asarray(out, dtype=indices.dtype)


@dataclass(frozen=True)
class StripPanel:
    """Stacked per-feature strips aligned with a heatmap's column grid."""

    image: np.ndarray
    rows: tuple[str, ...]
    calibration: dict
    factor: int


def strip_calibration(
    matrix: FeatureMatrix, spec: RenderSpec
) -> dict[str, tuple[float, float]]:
    """Value range per strip; grouped columns share their combined range."""
    group_of: dict[str, tuple[str, ...]] = {}
    for group in spec.shared_groups:
        for name in group:
            group_of[name] = tuple(group)
    out: dict[str, tuple[float, float]] = {}
    for name in spec.strips:
        members = group_of.get(name, (name,))
        cols = [matrix.schema.index_of(n) for n in members]
        block = matrix.rows[:, cols]
        out[name] = (float(block.min()), float(block.max()))
    return out


def render_strips(
    matrix: FeatureMatrix,
    order: np.ndarray,
    spec: RenderSpec,
    calibration: dict[str, tuple[float, float]] | None = None,
    factor: int | None = None,
) -> StripPanel:
    """Render feature strips for rows arranged by a leaf order.

    Each strip is strip_height pixels tall; a 1-pixel dark divider
    separates strips. Degenerate calibration (min == max) renders at
    mid-scale. The scenery row, when requested, uses fixed categorical
    colors and modal downsampling. Pass calibration to pin value ranges
    computed elsewhere (a windowed render keeping the full dataset's
    scale), and factor to force the block size of another rendering.
    """
    order = np.asarray(order, dtype=np.int64)
    if order.shape[0] != matrix.m:
        raise ValueError("order length must match the matrix")
    if spec.type_row and matrix.labels is None:
        raise ValueError("type_row requested but the dataset has no labels")
    names = list(spec.strips)
    for name in names:
        matrix.schema.index_of(name)  # raises KeyError on unknown names
    m = matrix.m
    if factor is None:
        factor = reduction_factor(m, 1, spec.max_pixels)
    elif factor < 1:
        raise ValueError("factor must be >= 1")
    width = math.ceil(m / factor)
    if calibration is None:
        calibration = strip_calibration(matrix, spec)

    rows: list[str] = []
    bands: list[np.ndarray] = []
    divider = np.full((1, width, 3), 24, dtype=np.uint8)
    for name in names:
        col = matrix.schema.index_of(name)
        values = matrix.rows[order, col]
        lo, hi = calibration[name]
        if hi > lo:
            t = (values - lo) / (hi - lo)
        else:
            t = np.full(values.shape, 0.5)
        t = _reduce_1d(t, factor, spec.downsample, axis=0)
        band = spec.colormap.map(t)[np.newaxis, :, :]
        bands.append(np.repeat(band, spec.strip_height, axis=0))
        rows.append(name)
    if spec.type_row:
        kinds = sorted(set(SCENERY_KINDS) | {lb for lb in matrix.labels})
        lookup = {kind: i for i, kind in enumerate(kinds)}
        palette = np.array(
            [TYPE_COLORS.get(kind, UNKNOWN_TYPE_COLOR) for kind in kinds],
            dtype=np.uint8,
        )
        indices = np.array([lookup[matrix.labels[i]] for i in order], dtype=np.int64)
        indices = _mode_blocks(indices, factor)
        band = palette[indices][np.newaxis, :, :]
        bands.append(np.repeat(band, spec.strip_height, axis=0))
        rows.append("type")
    if not bands:
        raise ValueError("nothing to render: no strips configured")

    stacked: list[np.ndarray] = []
    for i, band in enumerate(bands):
        if i:
            stacked.append(divider)
        stacked.append(band)
    return StripPanel(
        image=np.concatenate(stacked, axis=0),
        rows=tuple(rows),
        calibration=calibration,
        factor=factor,
    )


def draw_boxes(
    image: np.ndarray,
    boxes: Sequence[RegionBox],
    origin: tuple[int, int] = (0, 0),
    factor: int = 1,
) -> np.ndarray:
    """Outline index-space boxes on a rendered heatmap.

    Boxes live on the ordered-index diagonal; origin is the (x0, y0) of the
    rendered window and factor its block size. Returns a copy.
    """
    img = Image.fromarray(np.ascontiguousarray(image), "RGB")
    drawer = ImageDraw.Draw(img)
    font = ImageFont.load_default()
    h, w = image.shape[0], image.shape[1]
    for box in boxes:
        x_lo = (box.lo - origin[0]) / factor
        y_lo = (box.lo - origin[1]) / factor
        x_hi = (box.hi - origin[0]) / factor - 1
        y_hi = (box.hi - origin[1]) / factor - 1
        if x_hi < 0 or y_hi < 0 or x_lo > w - 1 or y_lo > h - 1:
            raise ValueError(f"box [{box.lo},{box.hi}) falls outside the rendered window")
        drawer.rectangle(
            [
                max(0, math.floor(x_lo)),
                max(0, math.floor(y_lo)),
                min(w - 1, math.ceil(x_hi)),
                min(h - 1, math.ceil(y_hi)),
            ],
            outline=box.color,
            width=1,
        )
        if box.label:
            drawer.text(
                (max(0, math.floor(x_lo)) + 2, max(0, math.floor(y_lo)) + 1),
                box.label,
                fill=box.color,
                font=font,
            )
    return np.asarray(img)


def png_bytes(image: np.ndarray) -> bytes:
    """Encode an uint8 RGB array as PNG."""
    image = np.ascontiguousarray(image)
    if image.dtype != np.uint8 or image.ndim != 3 or image.shape[2] != 3:
        raise ValueError("expected an uint8 RGB image")
    buf = io.BytesIO()
    Image.fromarray(image, "RGB").save(buf, format="PNG")
    return buf.getvalue()
