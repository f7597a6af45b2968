"""Contact planning: where and how the display should meet the palm."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegeneratePalmAxis, NoSurfaceInRange
from .geometry import Pose, Scene, closest_surface_point, ray_cast, sdf_eval, sdf_normal

_NORMAL_BACKOFF = 1e-6


class Phase(str, enum.Enum):
    IDLE = "idle"
    APPROACH = "approach"
    CONTACT = "contact"
    RELEASE = "release"


ENGAGED = (Phase.APPROACH, Phase.CONTACT)

# the engagement automaton; one transition per tick at most
TRANSITIONS = {
    Phase.IDLE: {Phase.APPROACH},
    Phase.APPROACH: {Phase.CONTACT, Phase.IDLE},
    Phase.CONTACT: {Phase.RELEASE},
    Phase.RELEASE: {Phase.CONTACT, Phase.IDLE},
}


@dataclass(frozen=True, eq=False)
class PalmSample:
    """Palm pose at time ``t``; the palm normal is local +z (pointing away
    from the palm surface), so the hand looks along local -z."""

    t: float
    pose: Pose
    velocity: np.ndarray | None = None

    def __post_init__(self):
        if not math.isfinite(self.t):
            raise ValueError("palm sample time must be finite")
        if self.velocity is not None:
            v = np.array(self.velocity, dtype=float).reshape(3)
            if not np.all(np.isfinite(v)):
                raise ValueError("palm velocity must be finite")
            object.__setattr__(self, "velocity", v)

    def with_velocity(self, v) -> "PalmSample":
        return replace(self, velocity=np.asarray(v, dtype=float))


@dataclass(frozen=True)
class PlannerParams:
    d_engage: float = 0.05
    d_contact: float = 0.005
    d_release: float = 0.015
    max_range: float = 1.0
    ray_range: float | None = None  # default 4 * d_engage

    def __post_init__(self):
        if not 0 < self.d_contact < self.d_release < self.d_engage:
            raise ValueError("need 0 < d_contact < d_release < d_engage")

    @property
    def ray_length(self) -> float:
        return 4.0 * self.d_engage if self.ray_range is None else self.ray_range


@dataclass(frozen=True, eq=False)
class ContactState:
    phase: Phase = Phase.IDLE
    collision_point: np.ndarray = field(default_factory=lambda: np.zeros(3))
    surface_normal: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    tangential_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    distance: float = math.inf


def plan_collision_point(scene: Scene, palm: PalmSample, params: PlannerParams = PlannerParams()):
    """Point on the surface the palm is heading for.

    A ray along the palm's viewing direction (local -z) is tried first; if it
    finds no surface within ``params.ray_length`` (or the palm is already
    inside), the closest surface point is used. Returns ``(point, normal,
    distance)`` with ``distance`` signed (negative when penetrating).
    """
    origin = palm.pose.position
    direction = -palm.pose.axis(2)
    d0 = sdf_eval(scene, origin)
    if d0 > 0:
        t = ray_cast(scene, origin, direction, params.ray_length)[0]
        if np.isfinite(t) and t <= params.ray_length:
            point = origin + t * direction
            normal = sdf_normal(scene, point - _NORMAL_BACKOFF * direction)
            return point, normal, float(t)
    if d0 > params.max_range:
        raise NoSurfaceInRange(f"nearest surface {d0:.3f} m away")
    point, normal, dist = closest_surface_point(scene, origin)
    return point, normal, float(dist)


def plan_end_effector_pose(state: ContactState, palm: PalmSample) -> Pose:
    """Display frame at the collision point: +z on the surface normal, +x
    following the palm's +x projected onto the tangent plane (world +x, then
    world +y, when that projection vanishes)."""
    z = state.surface_normal / np.linalg.norm(state.surface_normal)
    x = None
    for candidate in (palm.pose.axis(0), np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])):
        proj = candidate - (candidate @ z) * z
        n = np.linalg.norm(proj)
        if n >= 1e-6:
            x = proj / n
            break
    if x is None:
        raise DegeneratePalmAxis("no reference axis off the surface normal")
    y = np.cross(z, x)
    return Pose.from_rotation(np.column_stack([x, y, z]), state.collision_point)


def tangential(v, normal) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v - (v @ normal) * normal


def next_phase(phase: Phase, distance: float, params: PlannerParams) -> Phase:
    if phase is Phase.IDLE:
        return Phase.APPROACH if distance <= params.d_engage else phase
    if phase is Phase.APPROACH:
        if distance <= params.d_contact:
            return Phase.CONTACT
        return Phase.IDLE if distance > params.d_engage else phase
    if phase is Phase.CONTACT:
        return Phase.RELEASE if distance >= params.d_release else phase
    if distance <= params.d_contact:
        return Phase.CONTACT
    return Phase.IDLE if distance >= params.d_engage else phase


def step_state(prev: ContactState, scene: Scene, palm: PalmSample,
               params: PlannerParams = PlannerParams()) -> ContactState:
    try:
        point, normal, distance = plan_collision_point(scene, palm, params)
    except NoSurfaceInRange:
        point, normal, distance = prev.collision_point, prev.surface_normal, math.inf
    phase = next_phase(prev.phase, distance, params)
    v = palm.velocity if palm.velocity is not None else np.zeros(3)
    return ContactState(phase, point, normal, tangential(v, normal), distance)
