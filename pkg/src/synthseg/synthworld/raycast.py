"""Nearest-hit ray casting against boxes, vertical cylinders and ellipsoids."""

from __future__ import annotations

import math

import numba
import numpy as np

BOX, CYLINDER, ELLIPSOID = 0, 1, 2
HIT_EPS = 1e-9


@numba.njit(cache=True)
def _hit_box(px, py, pz, dx, dy, dz, hx, hy, hz):
    tmin = -np.inf
    tmax = np.inf
    for p, d, h in ((px, dx, hx), (py, dy, hy), (pz, dz, hz)):
        if abs(d) < 1e-15:
            if p < -h or p > h:
                return np.inf
        else:
            t1 = (-h - p) / d
            t2 = (h - p) / d
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > tmin:
                tmin = t1
            if t2 < tmax:
                tmax = t2
    if tmax < tmin or tmin <= HIT_EPS:
        # miss, or the origin is inside the box: interior faces are not visible
        return np.inf
    return tmin


@numba.njit(cache=True)
def _hit_cylinder(px, py, pz, dx, dy, dz, r, hz):
    best = np.inf
    a = dx * dx + dy * dy
    c = px * px + py * py - r * r
    if c <= 0.0 and abs(pz) <= hz:
        return np.inf
    if a > 1e-30:
        b = 2.0 * (px * dx + py * dy)
        disc = b * b - 4.0 * a * c
        if disc >= 0.0:
            sq = math.sqrt(disc)
            t = (-b - sq) / (2.0 * a)
            if t > HIT_EPS and abs(pz + t * dz) <= hz:
                best = t
    if abs(dz) > 1e-15:
        for cap in (-hz, hz):
            t = (cap - pz) / dz
            if HIT_EPS < t < best:
                x = px + t * dx
                y = py + t * dy
                if x * x + y * y <= r * r:
                    best = t
    return best


@numba.njit(cache=True)
def _hit_ellipsoid(px, py, pz, dx, dy, dz, ax, ay, az):
    px /= ax
    py /= ay
    pz /= az
    dx /= ax
    dy /= ay
    dz /= az
    a = dx * dx + dy * dy + dz * dz
    b = 2.0 * (px * dx + py * dy + pz * dz)
    c = px * px + py * py + pz * pz - 1.0
    if c <= 0.0:
        return np.inf
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return np.inf
    t = (-b - math.sqrt(disc)) / (2.0 * a)
    if t > HIT_EPS:
        return t
    return np.inf


@numba.njit(cache=True)
def _cast(origins, dirs, t_max, kind, center, half, cos_yaw, sin_yaw, radius):
    n = dirs.shape[0]
    m = kind.shape[0]
    t_out = np.zeros(n)
    hit_out = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        ox = origins[i, 0]
        oy = origins[i, 1]
        oz = origins[i, 2]
        dx = dirs[i, 0]
        dy = dirs[i, 1]
        dz = dirs[i, 2]
        dd = dx * dx + dy * dy + dz * dz
        best = t_max[i]
        best_j = -1
        for j in range(m):
            # bounding-sphere rejection
            wx = center[j, 0] - ox
            wy = center[j, 1] - oy
            wz = center[j, 2] - oz
            proj = (wx * dx + wy * dy + wz * dz) / dd
            ww = wx * wx + wy * wy + wz * wz
            dist2 = ww - proj * proj * dd
            r2 = radius[j] * radius[j]
            if dist2 > r2:
                continue
            half_chord = math.sqrt((r2 - dist2) / dd)
            if proj + half_chord <= HIT_EPS or proj - half_chord >= best:
                continue
            c = cos_yaw[j]
            s = sin_yaw[j]
            qx = -wx
            qy = -wy
            lx = c * qx + s * qy
            ly = -s * qx + c * qy
            lz = -wz
            ldx = c * dx + s * dy
            ldy = -s * dx + c * dy
            k = kind[j]
            if k == 0:
                t = _hit_box(lx, ly, lz, ldx, ldy, dz, half[j, 0], half[j, 1], half[j, 2])
            elif k == 1:
                t = _hit_cylinder(lx, ly, lz, ldx, ldy, dz, half[j, 0], half[j, 2])
            else:
                t = _hit_ellipsoid(lx, ly, lz, ldx, ldy, dz, half[j, 0], half[j, 1], half[j, 2])
            if t < best:
                best = t
                best_j = j
        if best_j >= 0:
            t_out[i] = best
            hit_out[i] = best_j
    return t_out, hit_out


def bounding_radius(kind: np.ndarray, half: np.ndarray) -> np.ndarray:
    r = np.empty(len(kind))
    box = kind == BOX
    r[box] = np.linalg.norm(half[box], axis=1)
    cyl = kind == CYLINDER
    r[cyl] = np.hypot(half[cyl, 0], half[cyl, 2])
    ell = kind == ELLIPSOID
    r[ell] = half[ell].max(axis=1) if ell.any() else r[ell]
    return r * (1.0 + 1e-9) + 1e-9


def cast_rays(origins: np.ndarray, dirs: np.ndarray, t_max, packed) -> tuple[np.ndarray, np.ndarray]:
    """Return (t, primitive index) per ray; misses have t = 0 and index -1.

    Hit point is origin + t * dir, so t is range for unit directions and depth
    for camera rays whose z component is 1 in the camera frame.
    """
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    origins = np.ascontiguousarray(np.broadcast_to(origins, dirs.shape), dtype=np.float64)
    t_max = np.ascontiguousarray(np.broadcast_to(np.asarray(t_max, dtype=np.float64), (len(dirs),)))
    if len(packed.kind) == 0 or len(dirs) == 0:
        return np.zeros(len(dirs)), np.full(len(dirs), -1, dtype=np.int64)
    return _cast(origins, dirs, t_max, packed.kind, packed.center, packed.half,
                 packed.cos_yaw, packed.sin_yaw, packed.radius)
