"""Electrotactile + ERM texture frames for a sliding contact.

The electrode film is a 5-row by 4-column grid (columns along display +x,
rows along +y). Low texture frequencies go to the electrodes as a
traveling half-wave-rectified sine whose wavefront moves with the slide
direction; the part of the spectrum above ``f_split`` drives the two ERMs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ROWS, COLS = 5, 4
N_ELECTRODES = ROWS * COLS
TWO_PI = 2.0 * math.pi

# electrode offsets from the array center, in pitches; centering makes the
# pattern for -u the exact point mirror of the pattern for +u
_COL_OFF = np.tile(np.arange(COLS) - (COLS - 1) / 2.0, ROWS)
_ROW_OFF = np.repeat(np.arange(ROWS) - (ROWS - 1) / 2.0, COLS)


@dataclass(frozen=True)
class TextureParams:
    spatial_period: float = 0.002
    amplitude: float = 1.0
    f_split: float = 40.0
    pitch: float = 0.003
    erm_saturation: float = 200.0

    def __post_init__(self):
        if not self.spatial_period > 0:
            raise ValueError("spatial_period must be positive")
        if not 0.0 <= self.amplitude <= 1.0:
            raise ValueError("amplitude must lie in [0, 1]")
        if self.f_split < 0 or self.pitch <= 0 or self.erm_saturation <= 0:
            raise ValueError("f_split >= 0, pitch > 0 and erm_saturation > 0 required")


@dataclass(frozen=True, eq=False)
class TextureFrame:
    electrodes: np.ndarray = field(default_factory=lambda: np.zeros(N_ELECTRODES))
    erm: np.ndarray = field(default_factory=lambda: np.zeros(2))
    t: float = 0.0

    def __post_init__(self):
        e = np.clip(np.asarray(self.electrodes, dtype=float).reshape(-1), 0.0, 1.0)
        m = np.clip(np.asarray(self.erm, dtype=float).reshape(-1), 0.0, 1.0)
        if e.shape != (N_ELECTRODES,) or m.shape != (2,):
            raise ValueError("frame needs 20 electrode values and 2 ERM levels")
        object.__setattr__(self, "electrodes", e)
        object.__setattr__(self, "erm", m)

    @property
    def grid(self) -> np.ndarray:
        """Electrodes as a (rows, cols) array."""
        return self.electrodes.reshape(ROWS, COLS)

    @classmethod
    def zero(cls, t: float = 0.0) -> "TextureFrame":
        return cls(t=t)


@dataclass(frozen=True, eq=False)
class SlideState:
    """Tangential palm velocity in display coordinates plus the wave phase."""

    tangential_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    phase: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "tangential_velocity",
                           np.asarray(self.tangential_velocity, dtype=float).reshape(3))
        object.__setattr__(self, "phase", float(self.phase) % TWO_PI)


def band_split(params: TextureParams, speed: float) -> tuple[float, float]:
    if speed < 0:
        raise ValueError("speed must be non-negative")
    f = speed / params.spatial_period
    return min(f, params.f_split), max(0.0, f - params.f_split)


def synth_frame(params: TextureParams, slide: SlideState, dt: float, t: float = 0.0):
    """One stimulation frame; returns ``(frame, next_slide)``.

    The phase is advanced by ``2*pi*f_low*dt`` first and the frame is drawn
    at the new phase.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    v = slide.tangential_velocity[:2]
    speed = float(np.hypot(v[0], v[1]))
    f_low, f_high = band_split(params, speed)
    phase = (slide.phase + TWO_PI * f_low * dt) % TWO_PI
    u = v / speed if speed > 0 else np.zeros(2)
    k = TWO_PI / params.spatial_period
    arg = phase - k * params.pitch * (_COL_OFF * u[0] + _ROW_OFF * u[1])
    electrodes = params.amplitude * np.maximum(0.0, np.sin(arg))
    level = params.amplitude * min(1.0, f_high / params.erm_saturation)
    frame = TextureFrame(electrodes, np.array([level, level]), t)
    return frame, SlideState(slide.tangential_velocity, phase)
