"""Newline-delimited JSON messages: palm samples in, tick outputs out."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError
from .geometry import Pose
from .planner import PalmSample, Phase
from .shape_display import PinConfig
from .texture import TextureFrame


@dataclass(frozen=True, eq=False)
class TickOutput:
    t: float
    phase: Phase
    joints: np.ndarray
    pins: PinConfig
    frame: TextureFrame
    ee_pose: Pose
    rms_error: float | None = None
    distance: float = math.inf
    compute_time: float = 0.0
    error: str | None = None

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "t": self.t,
            "phase": self.phase.value,
            "joints": [float(v) for v in self.joints],
            "pins": self.pins.to_dict(),
            "electrodes": [float(v) for v in self.frame.electrodes],
            "erm": [float(v) for v in self.frame.erm],
            "ee": self.ee_pose.to_dict(),
            "rms": _finite_or_none(self.rms_error),
            "dist": _finite_or_none(self.distance),
        }
        if timing:
            d["compute_time"] = self.compute_time
        if self.error is not None:
            d["err"] = self.error
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TickOutput":
        t = float(d["t"])
        return cls(
            t=t,
            phase=Phase(d["phase"]),
            joints=np.asarray(d["joints"], dtype=float).reshape(6),
            pins=PinConfig.from_dict(d["pins"]),
            frame=TextureFrame(d["electrodes"], d["erm"], t),
            ee_pose=Pose.from_dict(d["ee"]),
            rms_error=None if d.get("rms") is None else float(d["rms"]),
            distance=math.inf if d.get("dist") is None else float(d["dist"]),
            compute_time=float(d.get("compute_time", 0.0)),
            error=d.get("err"),
        )


def _finite_or_none(x):
    if x is None or not math.isfinite(x):
        return None
    return float(x)


def _dumps(d: dict) -> str:
    return json.dumps(d, separators=(",", ":"), allow_nan=False)


def encode_tick(out: TickOutput, timing: bool = True) -> str:
    return _dumps(out.to_dict(timing))


def decode_tick(line: str, lineno: int | None = None) -> TickOutput:
    try:
        return TickOutput.from_dict(json.loads(line))
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"bad tick output: {exc}", lineno) from None


def encode_palm(sample: PalmSample) -> str:
    d = {"t": sample.t, "p": [float(v) for v in sample.pose.position],
         "q": [float(v) for v in sample.pose.orientation]}
    if sample.velocity is not None:
        d["v"] = [float(v) for v in sample.velocity]
    return _dumps(d)


def _numbers(d: dict, key: str, n: int, lineno) -> np.ndarray:
    v = d.get(key)
    if not isinstance(v, list) or len(v) != n or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
        raise ParseError(f"field {key!r} must be a list of {n} numbers", lineno)
    arr = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ParseError(f"field {key!r} must be finite", lineno)
    return arr


def palm_from_dict(d, lineno: int | None = None) -> PalmSample:
    if not isinstance(d, dict):
        raise ParseError("palm sample must be a JSON object", lineno)
    t = d.get("t")
    if not isinstance(t, (int, float)) or isinstance(t, bool) or not math.isfinite(t):
        raise ParseError("field 't' must be a finite number", lineno)
    p = _numbers(d, "p", 3, lineno)
    q = _numbers(d, "q", 4, lineno)
    if np.linalg.norm(q) < 1e-6:
        raise ParseError("field 'q' has zero norm", lineno)
    v = _numbers(d, "v", 3, lineno) if d.get("v") is not None else None
    return PalmSample(float(t), Pose(p, q), v)


def decode_palm(line: str, lineno: int | None = None) -> PalmSample:
    try:
        d = json.loads(line)
    except ValueError:
        raise ParseError("invalid JSON", lineno) from None
    return palm_from_dict(d, lineno)


def read_palm_file(path) -> list[PalmSample]:
    """Palm trajectory from JSON Lines; ``t`` must strictly increase."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            s = decode_palm(line, lineno)
            if samples and s.t <= samples[-1].t:
                raise ParseError("timestamps must strictly increase", lineno)
            samples.append(s)
    return samples


def write_palm_file(path, samples) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(encode_palm(s) + "\n")


def read_trace(path) -> list[TickOutput]:
    with open(path, encoding="utf-8") as fh:
        return [decode_tick(line, i) for i, line in enumerate(fh, 1) if line.strip()]
