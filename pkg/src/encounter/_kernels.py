"""Compiled scalar SDF kernels.

A scene is packed into flat arrays: ``kinds`` (int codes), ``R`` (S,3,3)
local-to-world rotations, ``T`` (S,3) origins and ``prm`` (S,2) dimensions.
Gradients are returned unnormalized; at medial-axis ties the tied face
normals are summed, so a perfectly symmetric point (e.g. a cube center)
yields a zero vector.
"""

import math

import numpy as np
from numba import njit

SPHERE, CUBE, PYRAMID, EDGE = 0, 1, 2, 3
TIE = 1e-12


@njit(cache=True)
def _sign(v):
    if v > 0.0:
        return 1.0
    if v < 0.0:
        return -1.0
    return 0.0


@njit(cache=True)
def sphere(x, y, z, r):
    n = math.sqrt(x * x + y * y + z * z)
    if n > 0.0:
        return n - r, x / n, y / n, z / n
    return -r, 0.0, 0.0, 0.0


@njit(cache=True)
def box(x, y, z, h):
    qx, qy, qz = abs(x) - h, abs(y) - h, abs(z) - h
    px, py, pz = max(qx, 0.0), max(qy, 0.0), max(qz, 0.0)
    out = math.sqrt(px * px + py * py + pz * pz)
    qm = max(qx, max(qy, qz))
    d = out + min(qm, 0.0)
    if out > 0.0:
        return d, _sign(x) * px / out, _sign(y) * py / out, _sign(z) * pz / out
    gx = _sign(x) if qx >= qm - TIE else 0.0
    gy = _sign(y) if qy >= qm - TIE else 0.0
    gz = _sign(z) if qz >= qm - TIE else 0.0
    return d, gx, gy, gz


@njit(cache=True)
def closest_on_triangle(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    """Closest point on triangle ABC (Voronoi region tests)."""
    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return ax, ay, az
    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bx, by, bz
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return ax + v * abx, ay + v * aby, az + v * abz
    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cx, cy, cz
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return ax + w * acx, ay + w * acy, az + w * acz
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz)
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return ax + abx * v + acx * w, ay + aby * v + acy * w, az + abz * v + acz * w


@njit(cache=True)
def pyramid(x, y, z, w, H):
    # fold into the wedge a >= b >= 0; the +x face is then the nearest side
    ax_, ay_ = abs(x), abs(y)
    swap = ay_ > ax_
    a, b = (ay_, ax_) if swap else (ax_, ay_)
    L = math.hypot(H, w)
    nx, nz = H / L, w / L
    plane = (H * (a - w) + w * z) / L
    base = -z
    if plane <= 0.0 and base <= 0.0:
        d = max(plane, base)
        ga = nx if plane >= base - TIE else 0.0
        gb = 0.0
        gz = (nz if plane >= base - TIE else 0.0) + (-1.0 if base >= plane - TIE else 0.0)
    else:
        tx, ty, tz = closest_on_triangle(a, b, z, w, -w, 0.0, w, w, 0.0, 0.0, 0.0, H)
        dt = math.sqrt((a - tx) ** 2 + (b - ty) ** 2 + (z - tz) ** 2)
        sx, sy = min(a, w), min(b, w)
        ds = math.sqrt((a - sx) ** 2 + (b - sy) ** 2 + z * z)
        if dt <= ds:
            d, cx, cy, cz = dt, tx, ty, tz
        else:
            d, cx, cy, cz = ds, sx, sy, 0.0
        if d > 0.0:
            ga, gb, gz = (a - cx) / d, (b - cy) / d, (z - cz) / d
        else:
            ga, gb, gz = 0.0, 0.0, 0.0
    if swap:
        return d, _sign(x) * gb, _sign(y) * ga, gz
    return d, _sign(x) * ga, _sign(y) * gb, gz


@njit(cache=True)
def wedge(x, y, z, alpha, half_len):
    c = abs(y)
    ca, sa = math.cos(alpha), math.sin(alpha)
    nd = c * ca + z * sa
    t = c * sa - z * ca
    if nd > 0.0 and t < 0.0:
        r = math.hypot(c, z)
        d2, g2c, g2z = r, c / r, z / r
    else:
        d2, g2c, g2z = nd, ca, sa
    sy = _sign(y)
    wl = abs(x) - half_len
    d = min(max(d2, wl), 0.0) + math.hypot(max(d2, 0.0), max(wl, 0.0))
    sx = _sign(x)
    if d2 > 0.0 and wl > 0.0:
        return d, sx * wl / d, sy * g2c * d2 / d, g2z * d2 / d
    gx = sx if wl >= d2 - TIE else 0.0
    if d2 >= wl - TIE:
        return d, gx, sy * g2c, g2z
    return d, gx, 0.0, 0.0


@njit(cache=True)
def primitive(kind, x, y, z, p0, p1):
    if kind == SPHERE:
        return sphere(x, y, z, p0)
    if kind == CUBE:
        return box(x, y, z, p0)
    if kind == PYRAMID:
        return pyramid(x, y, z, p0, p1)
    return wedge(x, y, z, p0, p1)


@njit(cache=True)
def scene_point(px, py, pz, kinds, R, T, prm):
    best = np.inf
    bx = by = bz = 0.0
    for s in range(kinds.shape[0]):
        dx, dy, dz = px - T[s, 0], py - T[s, 1], pz - T[s, 2]
        lx = R[s, 0, 0] * dx + R[s, 1, 0] * dy + R[s, 2, 0] * dz
        ly = R[s, 0, 1] * dx + R[s, 1, 1] * dy + R[s, 2, 1] * dz
        lz = R[s, 0, 2] * dx + R[s, 1, 2] * dy + R[s, 2, 2] * dz
        d, gx, gy, gz = primitive(kinds[s], lx, ly, lz, prm[s, 0], prm[s, 1])
        if d < best:
            best = d
            bx = R[s, 0, 0] * gx + R[s, 0, 1] * gy + R[s, 0, 2] * gz
            by = R[s, 1, 0] * gx + R[s, 1, 1] * gy + R[s, 1, 2] * gz
            bz = R[s, 2, 0] * gx + R[s, 2, 1] * gy + R[s, 2, 2] * gz
    return best, bx, by, bz


@njit(cache=True)
def scene_eval(P, kinds, R, T, prm):
    n = P.shape[0]
    d = np.empty(n)
    g = np.empty((n, 3))
    for i in range(n):
        d[i], g[i, 0], g[i, 1], g[i, 2] = scene_point(P[i, 0], P[i, 1], P[i, 2], kinds, R, T, prm)
    return d, g


@njit(cache=True)
def ray_cast(O, D, kinds, R, T, prm, max_dist, tol, max_steps):
    """First zero crossing along each ray; ``nan`` on a miss, 0 when starting inside.

    Sphere tracing; close to the surface (< 1 mm) a secant step capped at
    twice the safe distance; Illinois regula falsi once a crossing is
    bracketed.
    """
    n = O.shape[0]
    out = np.full(n, np.nan)
    for i in range(n):
        ox, oy, oz = O[i, 0], O[i, 1], O[i, 2]
        dx, dy, dz = D[i, 0], D[i, 1], D[i, 2]
        t = 0.0
        have_lo = False
        have_hi = False
        had_prev = False
        lo_t = lo_f = hi_t = hi_f = prev_t = prev_f = 0.0
        side = 0
        for _ in range(max_steps):
            f = scene_point(ox + t * dx, oy + t * dy, oz + t * dz, kinds, R, T, prm)[0]
            if abs(f) <= tol:
                out[i] = t
                break
            if f < 0.0:
                if not have_lo:
                    out[i] = 0.0
                    break
                if side == -1:
                    lo_f *= 0.5
                hi_t, hi_f = t, f
                have_hi = True
                side = -1
            else:
                if have_hi and side == 1:
                    hi_f *= 0.5
                had_prev = have_lo
                prev_t, prev_f = lo_t, lo_f
                lo_t, lo_f = t, f
                have_lo = True
                side = 1
            if have_hi:
                if hi_t - lo_t <= 1e-15:
                    out[i] = t
                    break
                t = lo_t - lo_f * (hi_t - lo_t) / (hi_f - lo_f)
            else:
                if t > max_dist:
                    break
                step = f
                if had_prev and prev_f > f and f < 1e-3:
                    sec = f * (t - prev_t) / (prev_f - f)
                    step = min(max(sec, f), 2.0 * f)
                t += step
        if out[i] > max_dist:
            out[i] = np.nan
    return out
