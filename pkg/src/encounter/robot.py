"""Digital twin of a 6R UR arm: DH forward kinematics, damped least-squares
IK, and per-tick joint velocity clamping."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import Unreachable
from .geometry import Pose, rotation_angle, rotation_log

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True, eq=False)
class DHTable:
    """Standard DH constants, one entry per joint: ``Rz(q) Tz(d) Tx(a) Rx(alpha)``."""

    d: np.ndarray
    a: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        for name in ("d", "a", "alpha"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if v.shape != (6,) or not np.all(np.isfinite(v)):
                raise ValueError(f"DH column {name!r} needs 6 finite values")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "_ca", np.cos(self.alpha))
        object.__setattr__(self, "_sa", np.sin(self.alpha))

    @property
    def reach(self) -> float:
        """Upper bound on the TCP distance from the base origin."""
        return float(np.sum(np.abs(self.a)) + np.sum(np.abs(self.d)))

    def to_rows(self) -> list:
        return [{"d": float(d), "a": float(a), "alpha": float(al)} for d, a, al in zip(self.d, self.a, self.alpha)]

    @classmethod
    def from_rows(cls, rows) -> "DHTable":
        if len(rows) != 6:
            raise ValueError("DH table needs exactly 6 rows")
        return cls(np.array([r["d"] for r in rows]), np.array([r["a"] for r in rows]),
                   np.array([r["alpha"] for r in rows]))


# manufacturer constants for the UR3 (CB series)
UR3_DH = DHTable(
    d=np.array([0.1519, 0.0, 0.0, 0.11235, 0.08535, 0.0819]),
    a=np.array([0.0, -0.24365, -0.21325, 0.0, 0.0, 0.0]),
    alpha=np.array([math.pi / 2, 0.0, 0.0, math.pi / 2, -math.pi / 2, 0.0]),
)


@dataclass(frozen=True, eq=False)
class KinematicLimits:
    q_min: np.ndarray = field(default_factory=lambda: np.full(6, -TWO_PI))
    q_max: np.ndarray = field(default_factory=lambda: np.full(6, TWO_PI))
    v_max: np.ndarray = field(default_factory=lambda: np.full(6, math.pi))
    tcp_v_max: float = 0.25

    def __post_init__(self):
        for name in ("q_min", "q_max", "v_max"):
            v = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (6,)).copy()
            object.__setattr__(self, name, v)
        if np.any(self.q_min >= self.q_max):
            raise ValueError("q_min must be below q_max for every joint")
        if np.any(self.v_max <= 0):
            raise ValueError("v_max must be positive")

    def contains(self, q) -> bool:
        q = np.asarray(q)
        return bool(np.all(q >= self.q_min) and np.all(q <= self.q_max))

    def to_dict(self) -> dict:
        return {"q_min": self.q_min.tolist(), "q_max": self.q_max.tolist(),
                "v_max": self.v_max.tolist(), "tcp_v_max": self.tcp_v_max}

    @classmethod
    def from_dict(cls, d: dict) -> "KinematicLimits":
        base = cls()
        return cls(d.get("q_min", base.q_min), d.get("q_max", base.q_max),
                   d.get("v_max", base.v_max), float(d.get("tcp_v_max", base.tcp_v_max)))


def fk_batch(dh: DHTable, Q) -> np.ndarray:
    """Homogeneous TCP transforms ``(B, 4, 4)`` for a batch of joint vectors."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    B = len(Q)
    ct, st = np.cos(Q), np.sin(Q)
    ca, sa = dh._ca, dh._sa
    A = np.zeros((B, 6, 4, 4))
    A[..., 0, 0] = ct
    A[..., 0, 1] = -st * ca
    A[..., 0, 2] = st * sa
    A[..., 0, 3] = dh.a * ct
    A[..., 1, 0] = st
    A[..., 1, 1] = ct * ca
    A[..., 1, 2] = -ct * sa
    A[..., 1, 3] = dh.a * st
    A[..., 2, 1] = sa
    A[..., 2, 2] = ca
    A[..., 2, 3] = dh.d
    A[..., 3, 3] = 1.0
    T = A[:, 0]
    for i in range(1, 6):
        T = T @ A[:, i]
    return T


def fk(dh: DHTable, q) -> Pose:
    return Pose.from_matrix(fk_batch(dh, q)[0])


def pose_error(T_target, T) -> tuple[np.ndarray, float, float]:
    """Twist-like error ``[dp, drot]`` (world frame), position and angle norms."""
    dp = T_target[:3, 3] - T[:3, 3]
    dr = rotation_log(T_target[:3, :3] @ T[:3, :3].T)
    return np.concatenate([dp, dr]), float(np.linalg.norm(dp)), float(np.linalg.norm(dr))


def numeric_jacobian(dh: DHTable, q, step: float = 1e-6):
    """Geometric Jacobian by central differences; also returns ``fk(q)``."""
    q = np.asarray(q, dtype=float)
    E = np.eye(6) * step
    T = fk_batch(dh, np.vstack([q, q + E, q - E]))
    Tp, Tm = T[1:7], T[7:13]
    Jv = (Tp[:, :3, 3] - Tm[:, :3, 3]) / (2 * step)
    M = Tp[:, :3, :3] @ np.transpose(Tm[:, :3, :3], (0, 2, 1))
    Jw = 0.5 * np.stack([M[:, 2, 1] - M[:, 1, 2], M[:, 0, 2] - M[:, 2, 0], M[:, 1, 0] - M[:, 0, 1]], axis=1) / (2 * step)
    return np.vstack([Jv.T, Jw.T]), T[0]


@dataclass
class IKResult:
    q: np.ndarray
    iterations: int
    seeds_tried: int
    pos_error: float
    rot_error: float


def solve_ik(dh: DHTable, target: Pose, seed, limits: KinematicLimits | None = None, *,
             damping: float = 0.01, max_iter: int = 200, n_seeds: int = 8,
             pos_tol: float = 1e-6, rot_tol: float = 1e-5, max_step: float = 0.5,
             damping_scale: float = 0.01, rng_seed: int = 0) -> IKResult:
    """Damped least-squares IK with clamping to joint limits and re-seeding.

    The full ``damping`` applies while the pose error exceeds
    ``damping_scale``; below it the damping shrinks in proportion to the
    error so near-singular targets still converge superlinearly
    (``damping_scale=0`` gives plain fixed-damping DLS).
    """
    limits = limits or KinematicLimits()
    if np.linalg.norm(target.position) > dh.reach:
        raise Unreachable(f"target at {np.linalg.norm(target.position):.3f} m exceeds reach {dh.reach:.3f} m")
    Tt = target.matrix
    lam2 = damping * damping
    seed = np.clip(np.asarray(seed, dtype=float), limits.q_min, limits.q_max)
    rng = None
    total = 0
    best = None
    for attempt in range(n_seeds + 1):
        if attempt == 0:
            q = seed.copy()
        else:
            if rng is None:
                rng = np.random.default_rng(rng_seed)
            spread = math.pi * attempt / n_seeds
            q = np.clip(seed + rng.uniform(-spread, spread, 6), limits.q_min, limits.q_max)
        for it in range(max_iter + 1):
            J, T = numeric_jacobian(dh, q)
            e, ep, er = pose_error(Tt, T)
            if best is None or ep + er < best[1] + best[2]:
                best = (q.copy(), ep, er)
            if ep < pos_tol and er < rot_tol:
                return IKResult(q, total + it, attempt + 1, ep, er)
            if it == max_iter:
                break
            scale = min(1.0, (ep + er) / damping_scale) if damping_scale > 0 else 1.0
            dq = J.T @ np.linalg.solve(J @ J.T + lam2 * scale * np.eye(6), e)
            m = np.max(np.abs(dq))
            if m > max_step:
                dq *= max_step / m
            q = np.clip(q + dq, limits.q_min, limits.q_max)
        total += max_iter
    raise Unreachable(f"IK did not converge from {n_seeds + 1} seeds "
                      f"(best error {best[1]:.2e} m / {best[2]:.2e} rad)")


def ik(dh: DHTable, target: Pose, seed, limits: KinematicLimits | None = None, **kw) -> np.ndarray:
    return solve_ik(dh, target, seed, limits, **kw).q


def clamp_step(q_prev, q_next, dt: float, limits: KinematicLimits) -> np.ndarray:
    """Scale the joint step uniformly so no joint exceeds ``v_max * dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    q_prev = np.asarray(q_prev, dtype=float)
    step = np.asarray(q_next, dtype=float) - q_prev
    ratio = float(np.max(np.abs(step) / (limits.v_max * dt)))
    if ratio > 1.0:
        step = step / ratio
    return q_prev + step


def fk_pose_error(dh: DHTable, q, target: Pose) -> tuple[float, float]:
    T = fk_batch(dh, q)[0]
    return (float(np.linalg.norm(T[:3, 3] - target.position)),
            rotation_angle(T[:3, :3], target.rotation))


# elbow-up posture holding the display flat, facing up, at (0.30, 0, 0.20)
DEFAULT_PARK = np.array([0.38394, -2.82478, -2.07012, 0.18249, -1.5708, -1.95474])


@dataclass(frozen=True, eq=False)
class RobotModel:
    """Everything the twin needs: geometry, limits, park posture, tool frame.

    ``tool`` is the display frame expressed in the flange frame.
    """

    dh: DHTable = UR3_DH
    limits: KinematicLimits = field(default_factory=KinematicLimits)
    park: np.ndarray = field(default_factory=lambda: DEFAULT_PARK.copy())
    tool: Pose = field(default_factory=lambda: Pose(np.array([0.0, 0.0, 0.1])))
    name: str = "ur3"
    linkage: dict = field(default_factory=dict)

    def __post_init__(self):
        park = np.asarray(self.park, dtype=float).reshape(6)
        if not self.limits.contains(park):
            raise ValueError("park posture violates joint limits")
        object.__setattr__(self, "park", park)

    def display_pose(self, q) -> Pose:
        return fk(self.dh, q).compose(self.tool)

    def flange_target(self, display: Pose) -> Pose:
        return display.compose(self.tool.inverse())

    def to_dict(self) -> dict:
        d = {"name": self.name, "dh": self.dh.to_rows(), "limits": self.limits.to_dict(),
             "park": self.park.tolist(), "tool": self.tool.to_dict()}
        if self.linkage:
            d["linkage"] = self.linkage
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RobotModel":
        base = cls()
        return cls(
            dh=DHTable.from_rows(d["dh"]) if "dh" in d else base.dh,
            limits=KinematicLimits.from_dict(d.get("limits", {})),
            park=np.asarray(d.get("park", base.park), dtype=float),
            tool=Pose.from_dict(d["tool"]) if "tool" in d else base.tool,
            name=str(d.get("name", base.name)),
            linkage=dict(d.get("linkage", {})),
        )

    @classmethod
    def load(cls, path) -> "RobotModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
