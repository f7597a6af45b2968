"""Headless digital twin of an encounter-type haptic display.

Palm poses go in; robot joints, three-pin shape-display configurations and
electrotactile/ERM texture frames come out, one tick at a time.
"""

from .geometry import Pose, Scene, ShapeKind, ShapePrimitive, closest_surface_point, sdf_eval, sdf_normal
from .planner import ContactState, PalmSample, Phase, PlannerParams, plan_collision_point, plan_end_effector_pose, step_state
from .robot import UR3_DH, DHTable, KinematicLimits, RobotModel, clamp_step, fk, ik
from .runtime import Session, SessionConfig, replay
from .shape_display import LinkageGeometry, PinConfig, fit_pins, fivebar_height, fivebar_inverse
from .texture import SlideState, TextureFrame, TextureParams, band_split, synth_frame

__version__ = "0.1.0"
