"""Synthetic palm trajectories and the bundled study scenes.

A canonical touch approaches a shape from above with the palm facing
down, dwells just above the surface, slides back and forth while
following the surface, then lifts off.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .geometry import Pose, Scene, ShapeKind, ray_cast, single_shape_scene
from .planner import PalmSample
from .protocol import write_palm_file
from .robot import RobotModel

DATA_DIR = Path(__file__).parent / "data"
SCENE_DIR = DATA_DIR / "scenes"
TRAJ_DIR = DATA_DIR / "trajectories"
ROBOT_FILE = DATA_DIR / "robot" / "ur3.json"

# study shapes sit in front of the robot with their tops at z = 0.31 m
STUDY_CENTER = (0.30, 0.0)
STUDY_TOP = 0.31
STUDY_SHAPES = {
    "sphere": ((0.30, 0.0, 0.25), {"radius": 0.06}),
    "cube": ((0.30, 0.0, 0.25), {"half_extent": 0.06}),
    "pyramid": ((0.30, 0.0, 0.23), {"half_width": 0.05, "height": 0.08}),
    "edge": ((0.30, 0.0, 0.31), {"half_angle": math.pi / 4, "half_length": 0.06}),
}


def study_scene(kind: str) -> Scene:
    position, dims = STUDY_SHAPES[ShapeKind(kind).value]
    return single_shape_scene(kind, position, dims=dims, scene_id=kind)


def load_study_scene(kind: str) -> Scene:
    return Scene.load(SCENE_DIR / f"{ShapeKind(kind).value}.json")


def surface_height(scene: Scene, xy, z_top: float = 2.0) -> float:
    """Height of the first surface below ``(x, y, z_top)``; ``nan`` on a miss."""
    t = ray_cast(scene, [xy[0], xy[1], z_top], [0.0, 0.0, -1.0], 2.0 * z_top + 1.0)[0]
    return z_top - t


def _ease(u):
    return 0.5 - 0.5 * np.cos(math.pi * np.clip(u, 0.0, 1.0))


def canonical_touch(scene: Scene, center=None, *, sample_rate: float = 100.0, clearance: float = 0.15,
                    hover: float = 0.002, approach: float = 2.0, dwell: float = 1.0, slide: float = 0.0,
                    retreat: float = 2.0, slide_amplitude: float = 0.005, slide_period: float = 1.0,
                    slide_dir=(1.0, 0.0), lift: float | None = None,
                    with_velocity: bool = False) -> list[PalmSample]:
    """Approach / dwell / surface-following slide / retreat, palm facing -z.

    ``lift`` is the final height above the surface (default ``clearance``).
    Velocities are left for the consumer to difference unless
    ``with_velocity`` is set.
    """
    c = np.asarray(center if center is not None else scene.shapes[0].pose.position[:2], dtype=float)
    u_dir = np.asarray(slide_dir, dtype=float)
    u_dir = u_dir / np.linalg.norm(u_dir)
    lift = clearance if lift is None else lift
    n = int(round((approach + dwell + slide + retreat) * sample_rate))
    t = np.arange(n) / sample_rate
    P = np.empty((n, 3))
    z0 = surface_height(scene, c)
    t1, t2, t3 = approach, approach + dwell, approach + dwell + slide
    for i, ti in enumerate(t):
        if ti < t1:
            P[i] = [c[0], c[1], z0 + hover + (clearance - hover) * (1 - _ease(ti / approach))]
        elif ti < t2:
            P[i] = [c[0], c[1], z0 + hover]
        elif ti < t3:
            xy = c + slide_amplitude * math.sin(2 * math.pi * (ti - t2) / slide_period) * u_dir
            P[i] = [xy[0], xy[1], surface_height(scene, xy) + hover]
        else:
            break
    # the retreat rises from wherever the slide ended
    k0 = i if n and t[i] >= t3 else n
    if k0 < n:
        base = P[k0 - 1].copy() if k0 > 0 else np.array([c[0], c[1], z0 + hover])
        zs = surface_height(scene, base[:2])
        for i in range(k0, n):
            frac = _ease((t[i] - t3) / retreat)
            P[i] = [base[0], base[1], base[2] + (zs + lift - base[2]) * frac]
    V = np.gradient(P, t, axis=0) if with_velocity and n > 1 else None
    ident = np.array([1.0, 0.0, 0.0, 0.0])
    return [PalmSample(float(t[i]), Pose(P[i], ident), None if V is None else V[i]) for i in range(n)]


def write_fixtures(data_dir=DATA_DIR) -> None:
    """Regenerate the bundled scenes, robot config and trajectories."""
    data_dir = Path(data_dir)
    for sub in ("scenes", "trajectories", "robot"):
        (data_dir / sub).mkdir(parents=True, exist_ok=True)
    for kind in STUDY_SHAPES:
        study_scene(kind).save(data_dir / "scenes" / f"{kind}.json")
    robot = RobotModel(linkage={"l1": 0.06, "l2": 0.08, "b": 0.04, "pin_circumradius": 0.05})
    (data_dir / "robot" / "ur3.json").write_text(json.dumps(robot.to_dict(), indent=2) + "\n", encoding="utf-8")

    sphere = study_scene("sphere")
    touch = canonical_touch(sphere, approach=1.0, dwell=0.5, retreat=0.5, lift=0.03)
    write_palm_file(data_dir / "trajectories" / "sphere_touch.jsonl", touch)
    slide = canonical_touch(sphere, approach=2.0, dwell=1.0, slide=5.0, retreat=2.0,
                            slide_amplitude=0.03, slide_period=2.5)
    write_palm_file(data_dir / "trajectories" / "sphere_slide_10s.jsonl", slide)


if __name__ == "__main__":
    write_fixtures()
