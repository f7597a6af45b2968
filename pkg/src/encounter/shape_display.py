"""Three-pin under-actuated shape display.

Each pin is driven by its own symmetric five-bar linkage: two mirrored
cranks of length ``l1`` grounded ``b`` apart and driven by one actuator,
joined by couplers of length ``l2`` at the pin tip. The tip height is

    h(theta) = l1 sin(theta) + sqrt(l2^2 - (b/2 - l1 cos(theta))^2)

A flexible membrane spans the pin triangle; it is modeled as the planar
barycentric interpolation of the three pin heights.

Display frame: origin at the planned contact point, +z along the surface
normal. The linkage base plane sits ``rest_height`` below the display
plane, so a pin at ``rest_height`` is flush with the contact point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import brentq, lsq_linear

from .errors import NoSurfaceUnderPin, OutOfRange, OutOfWorkspace
from .geometry import Pose, Scene, ray_cast

MIN_DISCRIMINANT = 1e-6  # (1 mm)^2 keeps the coupler away from the fold
RAY_RANGE = 0.2
EDGE_SLACK = 1e-12  # m; heights this close to the band count as on it


def equilateral_layout(circumradius: float = 0.05) -> np.ndarray:
    ang = math.pi / 2 + np.array([0.0, 2 * math.pi / 3, 4 * math.pi / 3])
    return np.stack([circumradius * np.cos(ang), circumradius * np.sin(ang)], axis=1)


@dataclass(frozen=True, eq=False)
class LinkageGeometry:
    l1: float = 0.06
    l2: float = 0.08
    b: float = 0.04
    pin_layout: np.ndarray = field(default_factory=equilateral_layout)
    rest_height: float | None = None

    def __post_init__(self):
        if min(self.l1, self.l2, self.b) <= 0:
            raise ValueError("link lengths must be positive")
        if not self.l2 > abs(self.b / 2 - self.l1):
            raise ValueError("coupler too short: loop cannot close")
        layout = np.asarray(self.pin_layout, dtype=float).reshape(3, 2)
        e1, e2 = layout[1] - layout[0], layout[2] - layout[0]
        if abs(e1[0] * e2[1] - e1[1] * e2[0]) < 1e-12:
            raise ValueError("pins are collinear")
        object.__setattr__(self, "pin_layout", layout)

    def _disc(self, theta):
        return self.l2 ** 2 - (self.b / 2 - self.l1 * np.cos(theta)) ** 2

    def _dh(self, theta):
        return self.l1 * np.cos(theta) - (self.b / 2 - self.l1 * np.cos(theta)) * self.l1 * np.sin(theta) / np.sqrt(
            np.maximum(self._disc(theta), 1e-300))

    @cached_property
    def workspace(self) -> tuple[float, float]:
        """Largest interval in [-pi, pi] with disc >= (1 mm)^2 and dh/dtheta > 0."""
        th = np.linspace(-math.pi, math.pi, 20001)
        ok = (self._disc(th) >= MIN_DISCRIMINANT) & (self._dh(th) > 0)
        best, start = (0, -1), None
        for i, flag in enumerate(np.append(ok, False)):
            if flag and start is None:
                start = i
            elif not flag and start is not None:
                if i - start > best[1] - best[0] + 1:
                    best = (start, i - 1)
                start = None
        if best[1] < best[0]:
            raise ValueError("linkage has no monotone workspace")
        lo, hi = th[best[0]], th[best[1]]

        def edge(inner, outer):
            # boundary is where whichever condition fails first changes sign
            if self._disc(outer) < MIN_DISCRIMINANT:
                return brentq(lambda t: self._disc(t) - MIN_DISCRIMINANT, inner, outer, xtol=1e-15)
            return brentq(self._dh, inner, outer, xtol=1e-15)

        if best[0] > 0:
            lo = edge(th[best[0]], th[best[0] - 1])
        if best[1] < len(th) - 1:
            hi = edge(th[best[1]], th[best[1] + 1])
        return float(lo), float(hi)

    @property
    def theta_min(self) -> float:
        return self.workspace[0]

    @property
    def theta_max(self) -> float:
        return self.workspace[1]

    @cached_property
    def height_band(self) -> tuple[float, float]:
        return (closure_height(self, self.theta_min), closure_height(self, self.theta_max))

    @property
    def h_min(self) -> float:
        return self.height_band[0]

    @property
    def h_max(self) -> float:
        return self.height_band[1]

    @property
    def rest(self) -> float:
        """Pin height flush with the display plane (mid-band unless configured)."""
        if self.rest_height is not None:
            return float(self.rest_height)
        return 0.5 * (self.h_min + self.h_max)

    def to_dict(self) -> dict:
        d = {"l1": self.l1, "l2": self.l2, "b": self.b, "pin_layout": self.pin_layout.tolist()}
        if self.rest_height is not None:
            d["rest_height"] = self.rest_height
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LinkageGeometry":
        d = dict(d or {})
        if "pin_layout" in d:
            layout = np.asarray(d["pin_layout"], dtype=float)
        else:
            layout = equilateral_layout(float(d.get("pin_circumradius", 0.05)))
        return cls(float(d.get("l1", 0.06)), float(d.get("l2", 0.08)), float(d.get("b", 0.04)), layout,
                   d.get("rest_height"))


def closure_height(geom: LinkageGeometry, theta: float) -> float:
    """Tip height from the loop-closure formula, without the workspace check."""
    return geom.l1 * math.sin(theta) + math.sqrt(max(geom.l2 ** 2 - (geom.b / 2 - geom.l1 * math.cos(theta)) ** 2, 0.0))


def fivebar_height(geom: LinkageGeometry, theta: float) -> float:
    lo, hi = geom.workspace
    if not lo <= theta <= hi:
        raise OutOfWorkspace(f"theta={theta:.6f} outside [{lo:.6f}, {hi:.6f}]")
    disc = geom.l2 ** 2 - (geom.b / 2 - geom.l1 * math.cos(theta)) ** 2
    if disc < 0:
        raise OutOfWorkspace("five-bar loop does not close")
    return geom.l1 * math.sin(theta) + math.sqrt(disc)


def fivebar_inverse(geom: LinkageGeometry, h_target: float, tol: float = 1e-9) -> float:
    """Actuator angle for a pin height, by bisection on the monotone branch.

    Bisection continues to floating-point resolution in theta, so the result
    is far tighter than ``tol``; ``tol`` is the contract, checked at the end.
    """
    lo, hi = geom.workspace
    h_lo, h_hi = fivebar_height(geom, lo), fivebar_height(geom, hi)
    # the closed form is monotone only to rounding at the band edges
    if not h_lo - EDGE_SLACK <= h_target <= h_hi + EDGE_SLACK:
        raise OutOfRange(f"h={h_target:.6f} m outside [{h_lo:.6f}, {h_hi:.6f}]")
    if h_target <= h_lo:
        return lo
    if h_target >= h_hi:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if fivebar_height(geom, mid) < h_target:
            lo = mid
        else:
            hi = mid
    theta = lo if abs(fivebar_height(geom, lo) - h_target) <= abs(fivebar_height(geom, hi) - h_target) else hi
    if abs(fivebar_height(geom, theta) - h_target) >= tol:
        raise OutOfRange(f"bisection residual above {tol} m")
    return theta


@dataclass(frozen=True, eq=False)
class PinConfig:
    theta: np.ndarray
    h: np.ndarray

    @classmethod
    def from_heights(cls, geom: LinkageGeometry, heights) -> "PinConfig":
        theta = np.array([fivebar_inverse(geom, float(h)) for h in heights])
        return cls(theta, np.array([fivebar_height(geom, t) for t in theta]))

    @classmethod
    def rest(cls, geom: LinkageGeometry) -> "PinConfig":
        return cls.from_heights(geom, [geom.rest] * 3)

    def to_dict(self) -> dict:
        return {"theta": [float(v) for v in self.theta], "h": [float(v) for v in self.h]}

    @classmethod
    def from_dict(cls, d: dict) -> "PinConfig":
        return cls(np.asarray(d["theta"], dtype=float), np.asarray(d["h"], dtype=float))


def barycentric_grid(n: int = 16) -> np.ndarray:
    """Barycentric weights ``(i, j, n-1-i-j)/(n-1)`` for ``i + j <= n - 1``.

    Includes the three triangle corners (the pin locations).
    """
    m = n - 1
    rows = [(i / m, j / m, (m - i - j) / m) for i in range(n) for j in range(n - i)]
    return np.array(rows)


@dataclass(frozen=True, eq=False)
class MembraneModel:
    pin_layout: np.ndarray
    heights: np.ndarray

    def height_at_barycentric(self, weights) -> np.ndarray:
        return np.asarray(weights) @ self.heights

    def height_at(self, xy) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        a, b, c = self.pin_layout
        M = np.array([[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]])
        uv = np.linalg.solve(M, (xy - a).T).T
        w = np.column_stack([1 - uv[:, 0] - uv[:, 1], uv[:, 0], uv[:, 1]])
        return w @ self.heights


@dataclass(frozen=True, eq=False)
class PinFit:
    config: PinConfig
    rms_error: float
    missed: tuple = ()


_GRID = barycentric_grid(16)
_CORNERS = [int(np.flatnonzero(np.isclose(_GRID[:, k], 1.0))[0]) for k in range(3)]


def sample_surface_heights(geom: LinkageGeometry, scene: Scene, ee_pose: Pose, weights=_GRID) -> np.ndarray:
    """Surface height above the linkage base plane under each sample point.

    Rays start just above the reachable band and travel along display -z.
    ``nan`` marks rays that find no surface within :data:`RAY_RANGE`.
    """
    xy = weights @ geom.pin_layout
    z_top = geom.h_max - geom.rest + 0.005
    local = np.column_stack([xy, np.full(len(xy), z_top)])
    origins = ee_pose.apply(local)
    t = ray_cast(scene, origins, -ee_pose.axis(2), RAY_RANGE)
    return geom.rest + z_top - t


def fit_pins(geom: LinkageGeometry, scene: Scene, ee_pose: Pose, method: str = "lstsq",
             strict: bool = True) -> PinFit:
    """Fit the three pin heights (and hence the membrane) to the local surface.

    ``method="lstsq"`` minimizes the membrane-vs-surface RMS over the sample
    grid within the achievable band; ``method="direct"`` sets each pin to the
    surface height sampled under it. Pins whose ray misses the scene park at
    ``h_min``; with ``strict`` that raises :class:`NoSurfaceUnderPin` instead.
    """
    s = sample_surface_heights(geom, scene, ee_pose)
    valid = ~np.isnan(s)
    missed = tuple(k for k in range(3) if not valid[_CORNERS[k]])
    if missed and strict:
        raise NoSurfaceUnderPin(f"pins {missed} see no surface within {RAY_RANGE} m")
    lo, hi = geom.h_min, geom.h_max
    h = np.full(3, lo)
    free = np.array([k not in missed for k in range(3)])

    if method == "direct":
        for k in range(3):
            if free[k]:
                h[k] = min(max(s[_CORNERS[k]], lo), hi)
    elif method == "lstsq":
        if free.any() and valid.any():
            B = _GRID[valid]
            target = s[valid] - B[:, ~free] @ h[~free]
            A = B[:, free]
            sol, *_ = np.linalg.lstsq(A, target, rcond=None)
            if np.any(sol < lo) or np.any(sol > hi):
                sol = lsq_linear(A, target, bounds=(lo, hi), method="bvls").x
            h[free] = sol
    else:
        raise ValueError(f"unknown fit method {method!r}")

    config = PinConfig.from_heights(geom, np.clip(h, lo, hi))
    if valid.any():
        resid = _GRID[valid] @ config.h - s[valid]
        rms = float(np.sqrt(np.mean(resid ** 2)))
    else:
        rms = float("nan")
    return PinFit(config, rms, missed)
