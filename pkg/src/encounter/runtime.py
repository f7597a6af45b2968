"""Fixed-rate control loop: planner -> IK -> pin fit -> texture."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import Unreachable
from .geometry import Pose, Scene, slerp
from .planner import ENGAGED, ContactState, PalmSample, Phase, PlannerParams, plan_end_effector_pose, step_state
from .protocol import TickOutput, encode_tick, read_palm_file
from .robot import RobotModel, clamp_step, solve_ik
from .shape_display import LinkageGeometry, PinConfig, fit_pins
from .texture import SlideState, TextureFrame, TextureParams, synth_frame

log = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"
MIN_RATE, MAX_RATE = 10.0, 1000.0


def load_params(path) -> tuple[PlannerParams, TextureParams]:
    """``{"planner": {...}, "texture": {...}}`` overrides; both blocks optional."""
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    return PlannerParams(**d.get("planner", {})), TextureParams(**d.get("texture", {}))


@dataclass
class SessionConfig:
    rate: float = 125.0
    scene: str | None = None
    robot: str | None = None
    trajectory: str | None = None
    port: int | None = None
    planner: PlannerParams = field(default_factory=PlannerParams)
    texture: TextureParams = field(default_factory=TextureParams)
    fit_method: str = "lstsq"

    def __post_init__(self):
        if not MIN_RATE <= self.rate <= MAX_RATE:
            raise ValueError(f"rate must lie in [{MIN_RATE:g}, {MAX_RATE:g}] Hz")

    def load_scene(self) -> Scene:
        if self.scene is None:
            raise ValueError("no scene configured")
        return Scene.load(self.scene)

    def load_robot(self) -> RobotModel:
        return RobotModel.load(self.robot) if self.robot else RobotModel()

    def session(self, scene: Scene | None = None, robot: RobotModel | None = None) -> "Session":
        return Session(scene or self.load_scene(), robot or self.load_robot(), self.planner,
                       self.texture, self.rate, self.fit_method)


class Session:
    """One control loop's mutable state. Not thread-safe; one per client."""

    def __init__(self, scene: Scene, robot: RobotModel | None = None,
                 planner: PlannerParams = PlannerParams(), texture: TextureParams = TextureParams(),
                 rate: float = 125.0, fit_method: str = "lstsq"):
        if not MIN_RATE <= rate <= MAX_RATE:
            raise ValueError(f"rate must lie in [{MIN_RATE:g}, {MAX_RATE:g}] Hz")
        self.scene = scene
        self.robot = robot or RobotModel()
        self.geom = LinkageGeometry.from_dict(self.robot.linkage)
        self.planner = planner
        self.texture = texture
        self.rate = float(rate)
        self.dt = 1.0 / self.rate
        self.fit_method = fit_method
        self._rest_pins = PinConfig.rest(self.geom)
        # load the compiled kernels now rather than inside the first tick
        fit_pins(self.geom, scene, self.robot.display_pose(self.robot.park), strict=False)
        self.reset()

    def reset(self) -> None:
        self.contact = ContactState()
        self.q = self.robot.park.copy()
        self.seed = self.q.copy()
        self.slide = SlideState()
        self.last_palm: PalmSample | None = None

    def tick(self, palm: PalmSample) -> TickOutput:
        start = time.perf_counter()
        if palm.velocity is None:
            prev = self.last_palm
            if prev is not None and palm.t > prev.t:
                palm = palm.with_velocity((palm.pose.position - prev.pose.position) / (palm.t - prev.t))
            else:
                palm = palm.with_velocity(np.zeros(3))
        self.last_palm = palm

        state = step_state(self.contact, self.scene, palm, self.planner)
        err = None
        ee = None
        if state.phase in ENGAGED:
            ee = plan_end_effector_pose(state, palm)
            try:
                res = solve_ik(self.robot.dh, self.robot.flange_target(ee), self.seed, self.robot.limits)
                q_target = res.q
            except Unreachable as exc:
                log.warning("t=%.4f: %s", palm.t, exc)
                err = "unreachable"
                state = replace(state, phase=Phase.RELEASE)
                q_target = self.q

        if state.phase in ENGAGED:
            fit = fit_pins(self.geom, self.scene, ee, method=self.fit_method, strict=False)
            pins, rms = fit.config, fit.rms_error
            if state.phase is Phase.CONTACT:
                v_local = ee.rotation.T @ state.tangential_velocity
                frame, self.slide = synth_frame(self.texture, replace(self.slide, tangential_velocity=v_local),
                                                self.dt, palm.t)
            else:
                frame = TextureFrame.zero(palm.t)
            q_new = clamp_step(self.q, q_target, self.dt, self.robot.limits)
            self.seed = q_target
        else:
            q_target = self.q if err else self.robot.park
            q_new = clamp_step(self.q, q_target, self.dt, self.robot.limits)
            self.seed = q_new
            pins, rms = self._rest_pins, None
            frame = TextureFrame.zero(palm.t)
            ee = self.robot.display_pose(q_new)

        self.q = q_new
        self.contact = state
        return TickOutput(palm.t, state.phase, q_new, pins, frame, ee, rms, state.distance,
                          time.perf_counter() - start, err)


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------

def finite_difference_velocities(samples: list[PalmSample]) -> list[PalmSample]:
    """Fill missing velocities by central differences (one-sided at the ends)."""
    n = len(samples)
    if n == 0:
        return []
    t = np.array([s.t for s in samples])
    P = np.array([s.pose.position for s in samples])
    V = np.zeros_like(P) if n == 1 else np.gradient(P, t, axis=0, edge_order=1)
    return [s if s.velocity is not None else s.with_velocity(V[i]) for i, s in enumerate(samples)]


def tick_times(samples: list[PalmSample], rate: float) -> np.ndarray:
    """``t0 + k/rate`` for every ``k/rate`` below the trajectory duration.

    Duration is the sample span plus one (median) sample period, so a file
    covering one second at any sample rate yields ``rate`` ticks.
    """
    if not samples:
        return np.zeros(0)
    t = np.array([s.t for s in samples])
    period = float(np.median(np.diff(t))) if len(t) > 1 else 1.0 / rate
    duration = t[-1] - t[0] + period
    n = max(1, int(math.ceil(duration * rate - 1e-9)))
    return t[0] + np.arange(n) / rate


def resample(samples: list[PalmSample], rate: float) -> list[PalmSample]:
    """Palm samples at the loop rate: linear position/velocity, slerped orientation."""
    samples = finite_difference_velocities(samples)
    if not samples:
        return []
    t = np.array([s.t for s in samples])
    out = []
    for tk in tick_times(samples, rate):
        i = int(np.searchsorted(t, tk, side="right")) - 1
        if i >= len(samples) - 1:
            last = samples[-1]
            out.append(PalmSample(float(tk), last.pose, last.velocity))
            continue
        a, b = samples[i], samples[i + 1]
        u = (tk - a.t) / (b.t - a.t)
        if u == 0.0:
            out.append(PalmSample(float(tk), a.pose, a.velocity))
            continue
        p = (1 - u) * a.pose.position + u * b.pose.position
        q = slerp(a.pose.orientation, b.pose.orientation, u)
        v = (1 - u) * a.velocity + u * b.velocity
        out.append(PalmSample(float(tk), Pose(p, q), v))
    return out


def run(session: Session, samples: list[PalmSample]) -> list[TickOutput]:
    return [session.tick(s) for s in resample(samples, session.rate)]


def write_trace(path, outputs, timing: bool = True) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for o in outputs:
            fh.write(encode_tick(o, timing) + "\n")


def replay(config: SessionConfig, out_path=None, session: Session | None = None) -> list[TickOutput]:
    """Run a trajectory file through a fresh session; optionally write the trace."""
    if config.trajectory is None:
        raise ValueError("no trajectory configured")
    samples = read_palm_file(config.trajectory)
    outputs = run(session or config.session(), samples)
    if out_path is not None:
        write_trace(out_path, outputs)
    return outputs
