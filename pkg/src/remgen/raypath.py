"""Direct-path obstruction profiles between transmitter and receiver.

Only the straight segment tx->rx is analyzed: building penetrations as
parametric intervals through vertical prisms, terrain penetrations as
the exact sub-segments where the path height drops below the bilinear
terrain surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegeneratePathError
from .geo import Building, LocalPoint, Scenario, TerrainGrid

# intervals shorter than this (meters along the path) are discarded
MIN_INTERVAL_M = 1e-6
# relative tolerance for containment / crossing parameter arithmetic
REL_EPS = 1e-9


@dataclass(frozen=True)
class PathProfile:
    d_2d: float
    d_3d: float
    n_obs: int
    d_obs: float
    n_ter: int
    d_ter: float
    building_intervals: tuple  # ((start_m, end_m), ...) merged, sorted
    terrain_intervals: tuple


def is_los(profile: PathProfile) -> bool:
    return profile.n_obs == 0 and profile.n_ter == 0


def merge_intervals(intervals, min_len=MIN_INTERVAL_M, join_tol=0.0):
    """Union of (start, end) intervals; runs touching within join_tol merge."""
    kept = [(a, b) for a, b in intervals if b - a > min_len]
    if not kept:
        return []
    kept.sort()
    merged = [list(kept[0])]
    for a, b in kept[1:]:
        if a <= merged[-1][1] + join_tol:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return [(a, b) for a, b in merged if b - a > min_len]


def segment_prism_intersection(p0: LocalPoint, p1: LocalPoint, b: Building):
    """Parametric [t_enter, t_exit] intervals where p0->p1 is inside the prism.

    Tangential contacts and intervals of measure zero are excluded.
    Intervals are disjoint and sorted.
    """
    dx = p1.x - p0.x
    dy = p1.y - p0.y
    dz = p1.z - p0.z

    # z-range restriction: base <= z(t) <= top
    z_lo, z_hi = b.base_z_m, b.top_z_m
    if abs(dz) < REL_EPS * max(1.0, abs(p0.z), abs(p1.z)):
        if not (z_lo < p0.z < z_hi):
            return []
        tz0, tz1 = 0.0, 1.0
    else:
        ta = (z_lo - p0.z) / dz
        tb = (z_hi - p0.z) / dz
        tz0, tz1 = (ta, tb) if ta < tb else (tb, ta)
        tz0 = max(tz0, 0.0)
        tz1 = min(tz1, 1.0)
        if tz0 >= tz1:
            return []

    poly = b.footprint
    nv = poly.shape[0]
    ts = [0.0, 1.0]
    for i in range(nv):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % nv]
        ex, ey = bx - ax, by - ay
        denom = dx * ey - dy * ex
        if denom == 0.0:
            continue
        # p0 + t*d crosses the edge line at parameter t; u locates the
        # crossing along the edge
        t = ((ax - p0.x) * ey - (ay - p0.y) * ex) / denom
        u = ((ax - p0.x) * dy - (ay - p0.y) * dx) / denom
        if 0.0 <= u <= 1.0 and 0.0 < t < 1.0:
            ts.append(t)
    ts = sorted(set(ts))

    intervals = []
    mids_t = []
    for a, c in zip(ts[:-1], ts[1:]):
        mids_t.append(0.5 * (a + c))
    if mids_t:
        mx = np.array([p0.x + t * dx for t in mids_t])
        my = np.array([p0.y + t * dy for t in mids_t])
        inside = kernels.points_in_polygon(mx, my, poly)
        for (a, c), flag in zip(zip(ts[:-1], ts[1:]), inside):
            if flag:
                lo = max(a, tz0)
                hi = min(c, tz1)
                if hi > lo:
                    intervals.append((lo, hi))
    seg_len = math.sqrt(dx * dx + dy * dy + dz * dz)
    min_t = MIN_INTERVAL_M / seg_len if seg_len > 0 else MIN_INTERVAL_M
    return merge_intervals(intervals, min_len=min_t, join_tol=min_t)


def _terrain_below_intervals(t: TerrainGrid, p0: LocalPoint, p1: LocalPoint):
    """Exact parametric intervals where the path runs strictly below terrain.

    Within each bilinear patch the height difference f(t) = z_path(t) -
    z_terrain(t) is a quadratic in t, so crossings are found by root
    finding per patch column rather than by sampling.
    """
    dx = p1.x - p0.x
    dy = p1.y - p0.y
    dz = p1.z - p0.z
    cs = t.cell_size_m
    ox = t.origin.x + 0.5 * cs  # node lattice origin
    oy = t.origin.y + 0.5 * cs

    # patch boundaries crossed by the 2D path: node-lattice lines
    cuts = {0.0, 1.0}
    for (o, p_start, d) in ((ox, p0.x, dx), (oy, p0.y, dy)):
        if d == 0.0:
            continue
        g0 = (p_start - o) / cs
        g1 = (p_start + d - o) / cs
        lo, hi = (g0, g1) if g0 < g1 else (g1, g0)
        for k in range(int(math.floor(lo)) + 1, int(math.ceil(hi))):
            tt = (o + k * cs - p_start) / d
            if 0.0 < tt < 1.0:
                cuts.add(tt)
    cuts = sorted(cuts)

    rows, cols = t.elevation.shape
    below = []
    for a, c in zip(cuts[:-1], cuts[1:]):
        tm = 0.5 * (a + c)
        xm = p0.x + tm * dx
        ym = p0.y + tm * dy
        gx = (xm - ox) / cs
        gy = (ym - oy) / cs
        j = min(max(int(math.floor(gx)), 0), cols - 2)
        i = min(max(int(math.floor(gy)), 0), rows - 2)
        e00 = t.elevation[i, j]
        e01 = t.elevation[i, j + 1]
        e10 = t.elevation[i + 1, j]
        e11 = t.elevation[i + 1, j + 1]
        # u(t), v(t) affine in t within this patch
        u0 = (p0.x - (ox + j * cs)) / cs
        du = dx / cs
        v0 = (p0.y - (oy + i * cs)) / cs
        dv = dy / cs
        # z_terr(t) = e00 + (e01-e00) u + (e10-e00) v + (e00-e01-e10+e11) u v
        ku = e01 - e00
        kv = e10 - e00
        kuv = e00 - e01 - e10 + e11
        # f(t) = z_path - z_terr = A + B t + C t^2 ; below-terrain where f < 0
        A = p0.z - (e00 + ku * u0 + kv * v0 + kuv * u0 * v0)
        B = dz - (ku * du + kv * dv + kuv * (u0 * dv + v0 * du))
        C = -(kuv * du * dv)
        below.extend(_quadratic_negative_intervals(A, B, C, a, c))
    return merge_intervals(below, min_len=0.0, join_tol=REL_EPS)


def _quadratic_negative_intervals(A, B, C, lo, hi):
    """Sub-intervals of [lo, hi] where A + B t + C t^2 < 0."""
    out = []
    if abs(C) < 1e-300:
        if abs(B) < 1e-300:
            if A < 0:
                out.append((lo, hi))
            return out
        r = -A / B
        if B > 0:  # negative before the root
            a, b = lo, min(hi, r)
        else:
            a, b = max(lo, r), hi
        if b > a:
            out.append((a, b))
        return out
    disc = B * B - 4.0 * A * C
    if disc <= 0.0:
        # no real crossing: sign constant (tangency counts as not below)
        if A + B * (0.5 * (lo + hi)) + C * (0.5 * (lo + hi)) ** 2 < 0:
            out.append((lo, hi))
        return out
    sq = math.sqrt(disc)
    r1 = (-B - sq) / (2.0 * C)
    r2 = (-B + sq) / (2.0 * C)
    if r1 > r2:
        r1, r2 = r2, r1
    if C > 0:  # negative between roots
        a, b = max(lo, r1), min(hi, r2)
        if b > a:
            out.append((a, b))
    else:  # negative outside the roots
        a, b = lo, min(hi, r1)
        if b > a:
            out.append((a, b))
        a, b = max(lo, r2), hi
        if b > a:
            out.append((a, b))
    return out


def trace(s: Scenario, tx: LocalPoint, rx: LocalPoint) -> PathProfile:
    """Obstruction profile of the direct segment tx -> rx."""
    dx = rx.x - tx.x
    dy = rx.y - tx.y
    dz = rx.z - tx.z
    d_2d = math.hypot(dx, dy)
    d_3d = math.sqrt(dx * dx + dy * dy + dz * dz)
    if d_3d == 0.0:
        raise DegeneratePathError("tx and rx coincide")

    seg_x0, seg_x1 = (tx.x, rx.x) if tx.x < rx.x else (rx.x, tx.x)
    seg_y0, seg_y1 = (tx.y, rx.y) if tx.y < rx.y else (rx.y, tx.y)
    b_ivals = []
    for b in s.buildings:
        bx0, by0, bx1, by1 = b.aabb
        if bx1 < seg_x0 or bx0 > seg_x1 or by1 < seg_y0 or by0 > seg_y1:
            continue
        for t0, t1 in segment_prism_intersection(tx, rx, b):
            b_ivals.append((t0 * d_3d, t1 * d_3d))
    join = max(MIN_INTERVAL_M, REL_EPS * d_3d)
    b_ivals = merge_intervals(b_ivals, join_tol=join)

    t_ivals = [(t0 * d_3d, t1 * d_3d)
               for t0, t1 in _terrain_below_intervals(s.terrain, tx, rx)]
    t_ivals = merge_intervals(t_ivals, join_tol=join)

    return PathProfile(
        d_2d=d_2d,
        d_3d=d_3d,
        n_obs=len(b_ivals),
        d_obs=float(sum(b - a for a, b in b_ivals)),
        n_ter=len(t_ivals),
        d_ter=float(sum(b - a for a, b in t_ivals)),
        building_intervals=tuple(b_ivals),
        terrain_intervals=tuple(t_ivals),
    )
