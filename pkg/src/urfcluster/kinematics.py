"""Constant-acceleration pose prediction and two-vehicle criticality checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

# Observation window between the two recorded states, seconds.
WINDOW_SECONDS = 2.0

# Contact prediction horizon after t0 and the sampling step inside it.
DEFAULT_HORIZON = 0.3
DEFAULT_SAMPLE_STEP = 0.01

# Near-miss branch: gap below this at the horizon counts as critical when
# both vehicles still move faster than the speed floor.
NEAR_MISS_DISTANCE = 0.3
NEAR_MISS_MIN_SPEED = 2.0

# Pre-filter defaults. Any window within the floor distance is kept
# regardless of closing speed so that zero-approach near-misses survive.
PREFILTER_DISTANCE = 25.0
PREFILTER_CLOSING_SPEED = 0.5
PREFILTER_NEAR_FLOOR = 10.0

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class VehicleState:
    """Planar vehicle snapshot: oriented rectangle plus longitudinal motion.

    position is the rectangle center in meters, orientation the heading in
    radians (normalized into [0, 2*pi)), velocity the speed along the
    heading in m/s (never negative), acceleration along the heading in
    m/s^2. half_length/half_width define the rectangle extents.
    """

    position: tuple[float, float]
    velocity: float
    acceleration: float
    orientation: float
    half_length: float
    half_width: float

    def __post_init__(self) -> None:
        if self.velocity < 0.0:
            raise ValueError("velocity must be >= 0")
        if self.half_length <= 0.0 or self.half_width <= 0.0:
            raise ValueError("rectangle extents must be positive")
        theta = self.orientation % _TWO_PI
        object.__setattr__(self, "orientation", theta)
        object.__setattr__(
            self, "position", (float(self.position[0]), float(self.position[1]))
        )

    def corners(self) -> np.ndarray:
        """Rectangle corners as a (4, 2) array, counterclockwise."""
        c, s = math.cos(self.orientation), math.sin(self.orientation)
        hl, hw = self.half_length, self.half_width
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.asarray(self.position)

    def velocity_vector(self) -> np.ndarray:
        return self.velocity * np.array(
            [math.cos(self.orientation), math.sin(self.orientation)]
        )


@dataclass(frozen=True)
class ScenarioWindow:
    """Two-vehicle observation: ego and target states at t-2 and t0."""

    ego_start: VehicleState
    ego_end: VehicleState
    target_start: VehicleState
    target_end: VehicleState
    window_seconds: float = WINDOW_SECONDS

    def __post_init__(self) -> None:
        if self.window_seconds != WINDOW_SECONDS:
            raise ValueError(f"window length is fixed at {WINDOW_SECONDS} s")

    def swapped(self) -> "ScenarioWindow":
        """Same window with ego and target roles exchanged."""
        return ScenarioWindow(
            ego_start=self.target_start,
            ego_end=self.target_end,
            target_start=self.ego_start,
            target_end=self.ego_end,
        )


def predict_pose(state: VehicleState, dt: float) -> VehicleState:
    """Advance a state by dt seconds at constant acceleration.

    The vehicle moves along its fixed heading. A braking vehicle stops when
    its speed reaches zero and stays stopped: no reversing.

    Args:
        state: pose at the reference time.
        dt: look-ahead in seconds, must be >= 0.

    Returns:
        The predicted state; orientation and extents are unchanged.
    """
    if dt < 0.0:
        raise ValueError("dt must be >= 0")
    v, a = state.velocity, state.acceleration
    if a < 0.0 and v + a * dt < 0.0:
        t_stop = v / -a
        distance = v * t_stop + 0.5 * a * t_stop * t_stop
        new_velocity = 0.0
    else:
        distance = v * dt + 0.5 * a * dt * dt
        new_velocity = v + a * dt
    x = state.position[0] + distance * math.cos(state.orientation)
    y = state.position[1] + distance * math.sin(state.orientation)
    return replace(state, position=(x, y), velocity=new_velocity)


def _project(corners: np.ndarray, axis: np.ndarray) -> tuple[float, float]:
    dots = corners @ axis
    return float(dots.min()), float(dots.max())


def polygons_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis overlap test for two convex quadrilaterals.

    Touching edges or corners count as overlap. Inputs are (4, 2) corner
    arrays in traversal order.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    for poly in (a, b):
        for i in range(len(poly)):
            edge = poly[(i + 1) % len(poly)] - poly[i]
            norm = math.hypot(edge[0], edge[1])
            if norm == 0.0:
                continue
            axis = np.array([-edge[1], edge[0]]) / norm
            lo_a, hi_a = _project(a, axis)
            lo_b, hi_b = _project(b, axis)
            if hi_a < lo_b or hi_b < lo_a:
                return False
    return True


def _segment_distance(p1, p2, q1, q2) -> float:
    """Minimum distance between segments [p1,p2] and [q1,q2]."""
    d1 = p2 - p1
    d2 = q2 - q1
    r = p1 - q1
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    if a == 0.0 and e == 0.0:
        return float(np.linalg.norm(r))
    if a == 0.0:
        t = min(max(f / e, 0.0), 1.0)
        return float(np.linalg.norm(p1 - (q1 + t * d2)))
    c = float(d1 @ r)
    if e == 0.0:
        s = min(max(-c / a, 0.0), 1.0)
        return float(np.linalg.norm(p1 + s * d1 - q1))
    b = float(d1 @ d2)
    denom = a * e - b * b
    s = min(max((b * f - c * e) / denom, 0.0), 1.0) if denom != 0.0 else 0.0
    t = (b * s + f) / e
    if t < 0.0:
        t = 0.0
        s = min(max(-c / a, 0.0), 1.0)
    elif t > 1.0:
        t = 1.0
        s = min(max((b - c) / a, 0.0), 1.0)
    return float(np.linalg.norm(p1 + s * d1 - (q1 + t * d2)))


def rectangle_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Minimum distance between two rectangles given as (4, 2) corner arrays.

    Zero when the rectangles overlap or touch.
    """
    if polygons_overlap(a, b):
        return 0.0
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    best = math.inf
    for i in range(4):
        p1, p2 = a[i], a[(i + 1) % 4]
        for j in range(4):
            d = _segment_distance(p1, p2, b[j], b[(j + 1) % 4])
            if d < best:
                best = d
    return best


def collision_predicted(
    window: ScenarioWindow,
    horizon: float = DEFAULT_HORIZON,
    step: float = DEFAULT_SAMPLE_STEP,
) -> bool:
    """True when the predicted rectangles overlap at any sample in (t0, t0+horizon].

    Both vehicles are advanced from their t0 states under constant
    acceleration; overlap is checked every `step` seconds.
    """
    if horizon <= 0.0 or step <= 0.0:
        raise ValueError("horizon and step must be positive")
    n = max(1, int(round(horizon / step)))
    for k in range(1, n + 1):
        t = min(k * step, horizon)
        ego = predict_pose(window.ego_end, t)
        target = predict_pose(window.target_end, t)
        if polygons_overlap(ego.corners(), target.corners()):
            return True
    return False


def criticality_index(window: ScenarioWindow) -> int:
    """Binary criticality of a two-vehicle window.

    1 when a contact is predicted inside the horizon, or when at the horizon
    the rectangles pass within NEAR_MISS_DISTANCE while both vehicles still
    move faster than NEAR_MISS_MIN_SPEED. 0 otherwise.
    """
    if collision_predicted(window):
        return 1
    ego = predict_pose(window.ego_end, DEFAULT_HORIZON)
    target = predict_pose(window.target_end, DEFAULT_HORIZON)
    d_rel = rectangle_distance(ego.corners(), target.corners())
    if (
        d_rel < NEAR_MISS_DISTANCE
        and ego.velocity > NEAR_MISS_MIN_SPEED
        and target.velocity > NEAR_MISS_MIN_SPEED
    ):
        return 1
    return 0


def center_distance(window: ScenarioWindow) -> float:
    """Distance between the vehicle centers at t0."""
    dx = window.ego_end.position[0] - window.target_end.position[0]
    dy = window.ego_end.position[1] - window.target_end.position[1]
    return math.hypot(dx, dy)


def closing_speed(window: ScenarioWindow) -> float:
    """Rate at which the center distance shrinks at t0, m/s.

    Positive when the vehicles approach each other. Zero for coincident
    centers.
    """
    dp = np.asarray(window.ego_end.position) - np.asarray(window.target_end.position)
    dist = float(np.linalg.norm(dp))
    if dist == 0.0:
        return 0.0
    dv = window.ego_end.velocity_vector() - window.target_end.velocity_vector()
    return float(-(dp @ dv) / dist)


def prefilter(
    window: ScenarioWindow,
    dist_threshold: float = PREFILTER_DISTANCE,
    closing_speed_threshold: float = PREFILTER_CLOSING_SPEED,
    *,
    near_distance_floor: float = PREFILTER_NEAR_FLOOR,
) -> bool:
    """Cheap keep/drop gate applied before the criticality computation.

    Keeps a window when the centers are within dist_threshold and either the
    vehicles approach faster than closing_speed_threshold or they are
    already within near_distance_floor. Deliberately more permissive than
    criticality_index: a dropped window is never critical.
    """
    if dist_threshold <= 0.0 or closing_speed_threshold <= 0.0:
        raise ValueError("thresholds must be positive")
    dist = center_distance(window)
    if dist >= dist_threshold:
        return False
    return closing_speed(window) > closing_speed_threshold or dist < near_distance_floor
