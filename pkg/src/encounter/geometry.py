"""Rigid transforms and signed distance fields for the four stimulus shapes.

Conventions: SI meters, world z up, quaternions stored as ``[w, x, y, z]``.
Every SDF routine is vectorized over an ``(N, 3)`` array of points; the
module-level helpers (:func:`sdf_eval`, :func:`sdf_normal`, ...) also accept
a single ``(3,)`` point and then return scalars / single vectors.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _kernels as _k
from .errors import DegenerateGradient, NoConvergence, SceneError

UNIT_TOL = 1e-9
GRAD_TOL = 1e-9


# ---------------------------------------------------------------------------
# Vectors and quaternions
# ---------------------------------------------------------------------------

def vec3(x, y=None, z=None) -> np.ndarray:
    if y is None:
        v = np.asarray(x, dtype=float).reshape(3)
    else:
        v = np.array([x, y, z], dtype=float)
    return v


def normalize(v, eps: float = GRAD_TOL) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n < eps:
        raise DegenerateGradient(f"cannot normalize vector of norm {n:.3e}")
    return v / n


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(4)
    n = math.sqrt(float(q @ q))
    if n == 0.0:
        raise ValueError("zero quaternion")
    return q / n


def quat_mul(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]], dtype=float)


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = normalize(axis)
    s = math.sin(angle / 2.0)
    return np.array([math.cos(angle / 2.0), *(s * axis)])


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R) -> np.ndarray:
    """Rotation matrix to unit quaternion with ``w >= 0`` (Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = quat_normalize(q)
    return -q if q[0] < 0 else q


def rotation_angle(Ra, Rb) -> float:
    """Angle (rad) of the relative rotation ``Ra^T Rb``."""
    c = (np.trace(Ra.T @ Rb) - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, c)))


def rotation_log(R) -> np.ndarray:
    """Axis-angle vector of a rotation matrix (robust near 0 and pi)."""
    c = (R[0, 0] + R[1, 1] + R[2, 2] - 1.0) / 2.0
    c = min(1.0, max(-1.0, c))
    angle = math.acos(c)
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < 1e-6:
        return 0.5 * v
    if math.pi - angle < 1e-4:
        # axis from the symmetric part; sign from the (tiny) skew part
        B = (R + np.eye(3)) / 2.0
        i = int(np.argmax(np.diag(B)))
        axis = B[:, i] / math.sqrt(max(B[i, i], 1e-300))
        if axis @ v < 0:
            axis = -axis
        return angle * normalize(axis)
    return angle / (2.0 * math.sin(angle)) * v


def slerp(q0, q1, u: float) -> np.ndarray:
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    dot = float(q0 @ q1)
    if dot < 0.0:
        q1, dot = -q1, -dot
    if dot > 0.9995:
        return quat_normalize(q0 + u * (q1 - q0))
    theta = math.acos(dot)
    s = math.sin(theta)
    return (math.sin((1 - u) * theta) * q0 + math.sin(u * theta) * q1) / s


# ---------------------------------------------------------------------------
# Pose
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform: ``x_world = R(orientation) @ x_local + position``."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        p = np.array(self.position, dtype=float).reshape(3)
        q = np.array(self.orientation, dtype=float).reshape(4)
        if not np.all(np.isfinite(p)) or not np.all(np.isfinite(q)):
            raise ValueError("pose components must be finite")
        n = math.sqrt(float(q @ q))
        if abs(n - 1.0) > UNIT_TOL:
            if n < 1e-6:
                raise ValueError("orientation quaternion has zero norm")
            q = q / n
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", q)

    @classmethod
    def from_matrix(cls, T) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls(T[:3, 3].copy(), matrix_to_quat(T[:3, :3]))

    @classmethod
    def from_rotation(cls, R, position) -> "Pose":
        return cls(np.asarray(position, dtype=float), matrix_to_quat(R))

    @cached_property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    @property
    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.position
        return T

    def axis(self, i: int) -> np.ndarray:
        """World direction of local axis ``i`` (0=x, 1=y, 2=z)."""
        return self.rotation[:, i].copy()

    def compose(self, other: "Pose") -> "Pose":
        """``self ∘ other``: apply ``other`` first, then ``self``."""
        return Pose(self.rotation @ other.position + self.position,
                    quat_normalize(quat_mul(self.orientation, other.orientation)))

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(-Rt @ self.position, quat_conj(self.orientation))

    def apply(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.position

    def apply_inverse(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return (points - self.position) @ self.rotation

    def to_dict(self) -> dict:
        return {"p": [float(v) for v in self.position], "q": [float(v) for v in self.orientation]}

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls(np.asarray(d.get("p", [0, 0, 0]), dtype=float),
                   np.asarray(d.get("q", [1, 0, 0, 0]), dtype=float))

    def __repr__(self):
        p = ", ".join(f"{v:.6g}" for v in self.position)
        q = ", ".join(f"{v:.6g}" for v in self.orientation)
        return f"Pose(p=[{p}], q=[{q}])"


# ---------------------------------------------------------------------------
# Primitive SDFs (local frame, vectorized)
# ---------------------------------------------------------------------------

class ShapeKind(str, enum.Enum):
    SPHERE = "sphere"
    CUBE = "cube"
    PYRAMID = "pyramid"
    EDGE = "edge"


SHAPE_KINDS = tuple(k.value for k in ShapeKind)

# kind -> required dimension keys
DIM_KEYS = {
    ShapeKind.SPHERE: ("radius",),
    ShapeKind.CUBE: ("half_extent",),
    ShapeKind.PYRAMID: ("half_width", "height"),
    ShapeKind.EDGE: ("half_angle", "half_length"),
}

_KIND_CODE = {
    ShapeKind.SPHERE: _k.SPHERE,
    ShapeKind.CUBE: _k.CUBE,
    ShapeKind.PYRAMID: _k.PYRAMID,
    ShapeKind.EDGE: _k.EDGE,
}

DEFAULT_DIMS = {
    ShapeKind.SPHERE: {"radius": 0.06},
    ShapeKind.CUBE: {"half_extent": 0.05},
    ShapeKind.PYRAMID: {"half_width": 0.05, "height": 0.08},
    ShapeKind.EDGE: {"half_angle": math.pi / 4, "half_length": 0.06},
}


# ---------------------------------------------------------------------------
# Shapes and scenes
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ShapePrimitive:
    """One stimulus shape. Local frames:

    * sphere / cube: centered at the origin;
    * pyramid: square base on ``z = 0``, apex at ``(0, 0, height)``;
    * edge: ridge line along local x at ``z = 0``, wedge opening downward,
      clipped to ``|x| <= half_length``.
    """

    kind: ShapeKind
    pose: Pose = field(default_factory=Pose)
    dims: dict = field(default_factory=dict)

    def __post_init__(self):
        try:
            kind = ShapeKind(self.kind)
        except ValueError:
            raise SceneError(f"unknown shape kind {self.kind!r}") from None
        object.__setattr__(self, "kind", kind)
        dims = dict(DEFAULT_DIMS[kind]) if not self.dims else {k: float(v) for k, v in self.dims.items()}
        for key in DIM_KEYS[kind]:
            if key not in dims:
                raise SceneError(f"{kind.value}: missing dimension {key!r}")
            if not (math.isfinite(dims[key]) and dims[key] > 0):
                raise SceneError(f"{kind.value}: dimension {key!r} must be positive")
        if kind is ShapeKind.EDGE and not dims["half_angle"] < math.pi / 2:
            raise SceneError("edge: half_angle must lie in (0, pi/2)")
        object.__setattr__(self, "dims", dims)

    @property
    def params(self) -> tuple[float, float]:
        keys = DIM_KEYS[self.kind]
        return (self.dims[keys[0]], self.dims[keys[1]] if len(keys) > 1 else 0.0)

    def local_sdf(self, p):
        """Signed distance and unnormalized gradient, both in the local frame."""
        p = np.ascontiguousarray(np.atleast_2d(p), dtype=float)
        return _k.scene_eval(p, np.array([_KIND_CODE[self.kind]]), np.eye(3)[None], np.zeros((1, 3)),
                             np.array([self.params]))

    def sdf(self, points) -> np.ndarray:
        return self.local_sdf(self.pose.apply_inverse(points))[0]

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "pose": self.pose.to_dict(), "dims": dict(self.dims)}

    @classmethod
    def from_dict(cls, d: dict) -> "ShapePrimitive":
        if "kind" not in d:
            raise SceneError("shape without 'kind'")
        return cls(d["kind"], Pose.from_dict(d.get("pose", {})), d.get("dims", {}))


@dataclass(frozen=True, eq=False)
class Scene:
    """Ordered, immutable set of shapes composed by ``min``."""

    shapes: tuple
    id: str = "scene"

    def __post_init__(self):
        shapes = tuple(self.shapes)
        if not shapes:
            raise SceneError("scene must contain at least one shape")
        object.__setattr__(self, "shapes", shapes)
        packed = (
            np.array([_KIND_CODE[s.kind] for s in shapes], dtype=np.int64),
            np.ascontiguousarray([s.pose.rotation for s in shapes]),
            np.ascontiguousarray([s.pose.position for s in shapes]),
            np.ascontiguousarray([s.params for s in shapes], dtype=float),
        )
        object.__setattr__(self, "_packed", packed)

    def sdf(self, points) -> np.ndarray:
        return self.sdf_grad(points)[0]

    def sdf_grad(self, points):
        """Distances ``(N,)`` and world-frame unnormalized gradients ``(N, 3)``."""
        points = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
        return _k.scene_eval(points, *self._packed)

    def transformed(self, pose: Pose) -> "Scene":
        """The same scene rigidly moved by ``pose``."""
        return Scene(tuple(ShapePrimitive(s.kind, pose.compose(s.pose), s.dims) for s in self.shapes), self.id)

    def to_dict(self) -> dict:
        return {"id": self.id, "shapes": [s.to_dict() for s in self.shapes]}

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        if not isinstance(d, dict) or "shapes" not in d:
            raise SceneError("scene JSON needs a 'shapes' list")
        return cls(tuple(ShapePrimitive.from_dict(s) for s in d["shapes"]), str(d.get("id", "scene")))

    @classmethod
    def load(cls, path) -> "Scene":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def single_shape_scene(kind, position=(0.0, 0.0, 0.0), orientation=(1.0, 0.0, 0.0, 0.0), dims=None,
                       scene_id=None) -> Scene:
    kind = ShapeKind(kind)
    shape = ShapePrimitive(kind, Pose(np.asarray(position, float), np.asarray(orientation, float)), dims or {})
    return Scene((shape,), scene_id or kind.value)


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------

def sdf_eval(scene: Scene, p):
    p = np.asarray(p, dtype=float)
    d = scene.sdf(p)
    return float(d[0]) if p.ndim == 1 else d


def sdf_normal(scene: Scene, p) -> np.ndarray:
    """Unit outward surface normal (SDF gradient) at ``p``."""
    p = np.asarray(p, dtype=float)
    _, g = scene.sdf_grad(p)
    n = np.linalg.norm(g, axis=1)
    if np.any(n < GRAD_TOL):
        raise DegenerateGradient("SDF gradient vanishes at query point")
    g = g / n[:, None]
    return g[0] if p.ndim == 1 else g


def closest_surface_point(scene: Scene, p, tol: float = 1e-9, max_steps: int = 128):
    """Project ``p`` onto the zero level set.

    Returns ``(point, normal, distance)`` where ``distance = sdf_eval(p)`` and
    ``normal`` is the unit gradient at ``p``.
    """
    p = vec3(p)
    d = sdf_eval(scene, p)
    n = sdf_normal(scene, p)
    x = p - d * n
    for _ in range(max_steps):
        f = sdf_eval(scene, x)
        if abs(f) <= tol:
            return x, n, d
        x = x - f * sdf_normal(scene, x)
    raise NoConvergence(f"closest point refinement stalled at |sdf|={abs(f):.3e}")


def ray_cast(scene: Scene, origins, directions, max_dist: float, tol: float = 1e-10,
             max_steps: int = 256) -> np.ndarray:
    """First zero crossing of the SDF along each ray.

    Returns ray parameters ``t`` (``nan`` for misses within ``max_dist``,
    ``0`` when the origin is already inside). Features thinner than about
    1 mm can be stepped over near the surface.
    """
    o = np.ascontiguousarray(np.atleast_2d(origins), dtype=float)
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    dirs = dirs / np.linalg.norm(dirs, axis=1)[:, None]
    if len(dirs) == 1 and len(o) > 1:
        dirs = np.repeat(dirs, len(o), axis=0)
    return _k.ray_cast(o, np.ascontiguousarray(dirs), *scene._packed, float(max_dist), float(tol), int(max_steps))
