"""Integral-geometry estimators for surface area of zero sets.

``estimate_area`` implements the random-line (Crofton) estimator: throw
rigid-motion-invariant random lines through a reference ball, count the
distinct intersections of each line with Z(P) inside the ball, and rescale
the mean count.  The normalization constant is not taken from a formula:
it is fixed once, empirically, by requiring the estimator to return area
1 for a unit square (geometric crossing counts, fixed internal seed, so
the constant is reproducible and immune to measure-parametrization
mistakes).  ``check_degree_area_bound`` reuses the machinery to compare
the measured area of Z(P) inside a cube against degree * side^2.

``extract_slice`` and ``slice_average`` handle near-vertical planar
slices x1 + a*x2 = b: the surface curve in a slice is extracted by
marching squares on a grid of polynomial values, and line integrals over
the curve are accumulated by midpoint quadrature per polyline segment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from skimage import measure as skmeasure

from kakeya_lab.cutting import Ball
from kakeya_lab.errors import PreconditionError
from kakeya_lab.poly3 import Poly3, batch_real_roots
from kakeya_lab.seeding import substream, uniform_directions

_TASK_LINES = 4096  # lines per derived RNG stream; fixed so thread count is irrelevant
_CAL_SEED = 20_000_101
_CAL_LINES = 200_000


@dataclass
class LineSample:
    """A random line hitting the reference ball.

    The line is {center + offset + t * dir}; `offset` is the perpendicular
    displacement from the ball center (offset . dir = 0 within 1e-9) drawn
    uniformly from the disk of radius R_ref in the plane dir-perp, and
    `dir` is uniform on the sphere.  This is the rigid-motion-invariant
    measure on lines meeting the ball."""

    dir: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        self.dir = np.asarray(self.dir, dtype=float)
        self.offset = np.asarray(self.offset, dtype=float)
        if abs(float(self.dir @ self.offset)) > 1e-9:
            raise PreconditionError("line offset must be perpendicular to dir")


def _perp_disk_offsets(rng, dirs: np.ndarray, radius: float) -> np.ndarray:
    """Uniform draws from the radius-`radius` disk perpendicular to each dir."""
    n = dirs.shape[0]
    pick = np.argmin(np.abs(dirs), axis=1)
    e = np.zeros_like(dirs)
    e[np.arange(n), pick] = 1.0
    u = e - (e * dirs).sum(axis=1)[:, None] * dirs
    u /= np.linalg.norm(u, axis=1)[:, None]
    w = np.cross(dirs, u)
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, n))
    phi = rng.uniform(0.0, 2.0 * math.pi, n)
    return (r * np.cos(phi))[:, None] * u + (r * np.sin(phi))[:, None] * w


def sample_lines(region: Ball, count: int, rng_seed: int = 0, task_index: int = 0):
    """Invariant-measure line samples for the region ball, as LineSample list."""
    rng = substream(rng_seed, "crofton-lines", task_index)
    dirs = uniform_directions(rng, count)
    offs = _perp_disk_offsets(rng, dirs, region.radius)
    return [LineSample(dir=d, offset=o) for d, o in zip(dirs, offs)]


@lru_cache(maxsize=1)
def crofton_calibration() -> float:
    """Mean crossing count x pi R^2 for the unit square, by geometric hits.

    Computed once with a fixed internal seed and cached; the theoretical
    value is 1/2 (average |cos| between a random direction and a fixed
    normal), and the estimator divides by this constant so that the unit
    square comes out with area exactly 1 on the calibration sample."""
    rng = substream(_CAL_SEED, "crofton-calibration")
    dirs = uniform_directions(rng, _CAL_LINES)
    offs = _perp_disk_offsets(rng, dirs, 1.0)
    dz = dirs[:, 2]
    ok = np.abs(dz) > 1e-12
    t = -offs[ok, 2] / dz[ok]
    p = offs[ok] + t[:, None] * dirs[ok]
    hits = (np.abs(p[:, 0]) <= 0.5) & (np.abs(p[:, 1]) <= 0.5)
    return float(hits.sum() / _CAL_LINES) * math.pi


def _dedupe_roots(idx: np.ndarray, vals: np.ndarray):
    """Drop repeated roots of the same line (tangencies count once)."""
    if idx.size == 0:
        return idx, vals
    order = np.lexsort((vals, idx))
    idx, vals = idx[order], vals[order]
    same = np.zeros(idx.size, dtype=bool)
    same[1:] = (idx[1:] == idx[:-1]) & (
        np.abs(vals[1:] - vals[:-1]) <= 1e-9 * (1.0 + np.abs(vals[1:]))
    )
    return idx[~same], vals[~same]


def _crossing_counts(poly: Poly3, center, radius, count, rng_seed, task_index, inside):
    """Per-line distinct-root counts for one task's worth of lines.

    Returns (counts, valid_mask): lines whose restriction is identically
    zero (the line lies inside Z(P)) are marked invalid and excluded."""
    rng = substream(rng_seed, "crofton-lines", task_index)
    dirs = uniform_directions(rng, count)
    offs = _perp_disk_offsets(rng, dirs, radius)
    bases = np.asarray(center, dtype=float)[None, :] + offs
    rows = poly.restrict_lines(bases, dirs)
    idx, vals, zero_mask = batch_real_roots(rows)
    idx, vals = _dedupe_roots(idx, vals)
    counts = np.zeros(count, dtype=np.int64)
    if idx.size:
        pts = bases[idx] + vals[:, None] * dirs[idx]
        keep = inside(pts)
        counts = np.bincount(idx[keep], minlength=count)
    return counts, ~zero_mask


def _mean_crossings(poly, center, radius, lines, rng_seed, inside, threads=1):
    tasks = []
    done = 0
    t_idx = 0
    while done < lines:
        n = min(_TASK_LINES, lines - done)
        tasks.append((t_idx, n))
        done += n
        t_idx += 1

    def run(task):
        t, n = task
        return _crossing_counts(poly, center, radius, n, rng_seed, t, inside)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, tasks))
    else:
        results = [run(t) for t in tasks]
    total = 0
    valid = 0
    excluded = 0
    for counts, ok in results:  # fixed task order: thread count cannot matter
        total += int(counts[ok].sum())
        valid += int(ok.sum())
        excluded += int((~ok).sum())
    return total, valid, excluded


def estimate_area(
    poly: Poly3,
    region: Ball,
    lines: int = 100_000,
    rng_seed: int = 0,
    threads: int = 1,
) -> float:
    """Crofton estimate of the area of Z(P) inside the region ball.

    area = (mean distinct crossings per line) * pi R^2 / calibration,
    where the calibration constant makes a unit square measure 1.  Lines
    lying inside Z(P) (identically-zero restriction) are excluded from
    the mean; they have measure zero for honest inputs."""
    if lines < 10_000:
        raise PreconditionError("need lines >= 10000 for the default tolerance")
    center = np.asarray(region.center, dtype=float)
    r = float(region.radius)

    def inside(pts):
        return ((pts - center[None, :]) ** 2).sum(axis=1) <= r * r

    total, valid, _ = _mean_crossings(poly, center, r, lines, rng_seed, inside, threads)
    if valid == 0:
        return 0.0
    return (total / valid) * math.pi * r * r / crofton_calibration()


def check_degree_area_bound(
    poly: Poly3,
    cube_side: float,
    trials: int = 40_000,
    rng_seed: int = 0,
    threads: int = 1,
) -> dict:
    """Measured area of Z(P) in the origin-centered cube vs degree * side^2.

    Returns {"area", "bound_ratio", "degree"}; the ratio is reported, not
    asserted — the comparison constant is the caller's business."""
    if cube_side <= 0:
        raise PreconditionError("cube side must be positive")
    half = cube_side / 2.0
    radius = half * math.sqrt(3.0)  # circumscribing ball
    center = np.zeros(3)

    def inside(pts):
        return np.all(np.abs(pts) <= half, axis=1)

    lines = max(trials, 10_000)
    total, valid, _ = _mean_crossings(poly, center, radius, lines, rng_seed, inside, threads)
    area = 0.0
    if valid:
        area = (total / valid) * math.pi * radius * radius / crofton_calibration()
    degree = max(poly.effective_degree(), 0)
    denom = degree * cube_side * cube_side
    ratio = area / denom if denom > 0 else 0.0
    return {"area": area, "bound_ratio": ratio, "degree": degree}


# ---------------------------------------------------------------------------
# planar slices x1 + a*x2 = b


@dataclass
class SliceCurve:
    """Marching-squares curve of Z(P) in the plane x1 + a*x2 = b.

    `polylines` holds one (k, 3) vertex array per connected component,
    ordered by first vertex; every vertex lies on the plane to 1e-9 and on
    Z(P) up to first-order interpolation error in `cell_size`."""

    plane: tuple
    polylines: list
    cell_size: float

    def total_length(self) -> float:
        out = 0.0
        for pl in self.polylines:
            if pl.shape[0] >= 2:
                out += float(np.linalg.norm(np.diff(pl, axis=0), axis=1).sum())
        return out


def plane_frame(a: float, b: float):
    """Orthonormal frame of the plane x1 + a*x2 = b.

    Returns (p0, u_hat, w_hat): p0 the plane point closest to the origin,
    u_hat horizontal in the plane, w_hat = e3."""
    s = math.sqrt(1.0 + a * a)
    normal = np.array([1.0, a, 0.0]) / s
    p0 = (b / s) * normal
    u_hat = np.array([-a, 1.0, 0.0]) / s
    w_hat = np.array([0.0, 0.0, 1.0])
    return p0, u_hat, w_hat


def extract_slice(poly: Poly3, plane: tuple, window, cell: float) -> SliceCurve:
    """Zero contour of P restricted to the plane, inside the (u, w) window.

    `window` is ((u_min, u_max), (w_min, w_max)) in the plane frame of
    ``plane_frame``.  P is evaluated on a grid of spacing ~`cell` and the
    level-0 contour is extracted with linear edge interpolation."""
    a, b = float(plane[0]), float(plane[1])
    (u0, u1), (w0, w1) = window
    if not (u1 > u0 and w1 > w0):
        raise PreconditionError("window must have positive extent")
    diag = math.hypot(u1 - u0, w1 - w0)
    if not 0.0 < cell <= diag / 16.0:
        raise PreconditionError("cell must be positive and <= window diagonal / 16")
    p0, u_hat, w_hat = plane_frame(a, b)
    nu = int(round((u1 - u0) / cell)) + 1
    nw = int(round((w1 - w0) / cell)) + 1
    us = np.linspace(u0, u1, nu)
    ws = np.linspace(w0, w1, nw)
    gu, gw = np.meshgrid(us, ws, indexing="ij")
    pts = p0[None, :] + gu.ravel()[:, None] * u_hat[None, :] + gw.ravel()[:, None] * w_hat[None, :]
    vals = poly(pts).reshape(nu, nw)
    polylines = []
    for contour in skmeasure.find_contours(vals, 0.0):
        uu = u0 + contour[:, 0] * (us[1] - us[0] if nu > 1 else 0.0)
        ww = w0 + contour[:, 1] * (ws[1] - ws[0] if nw > 1 else 0.0)
        verts = p0[None, :] + uu[:, None] * u_hat[None, :] + ww[:, None] * w_hat[None, :]
        polylines.append(verts)
    polylines.sort(key=lambda v: tuple(np.round(v[0], 9)))
    return SliceCurve(plane=(a, b), polylines=polylines, cell_size=cell)


def slice_average(
    poly: Poly3,
    f,
    cyl_radius: float,
    cyl_height: float,
    slices: int = 64,
    rng_seed: int = 0,
    cell: float | None = None,
):
    """Average over random near-vertical planes of the line integral of f
    along the slice curve inside the cylinder {x1^2 + x2^2 <= R^2,
    |x3| <= height/2}.

    Planes are x1 + a*x2 = b with a ~ U(-1/10, 1/10) and b ~ U(-2R, 2R).
    Slices whose extracted curve is empty are skipped (and counted); the
    return value is (average over non-empty slices, skipped count)."""
    if slices < 1:
        raise PreconditionError("need at least one slice")
    r, h = float(cyl_radius), float(cyl_height)
    if cell is None:
        cell = min(2.0 * r, h) / 64.0
    rng = substream(rng_seed, "slice-planes")
    a_vals = rng.uniform(-0.1, 0.1, slices)
    b_vals = rng.uniform(-2.0 * r, 2.0 * r, slices)
    total = 0.0
    kept = 0
    skipped = 0
    window = ((-r - 2.0 * cell, r + 2.0 * cell), (-h / 2.0, h / 2.0))
    for a, b in zip(a_vals, b_vals):
        curve = extract_slice(poly, (a, b), window, cell)
        integral = 0.0
        used = 0
        for pl in curve.polylines:
            if pl.shape[0] < 2:
                continue
            mids = 0.5 * (pl[1:] + pl[:-1])
            seg_len = np.linalg.norm(np.diff(pl, axis=0), axis=1)
            in_cyl = (mids[:, 0] ** 2 + mids[:, 1] ** 2 <= r * r) & (
                np.abs(mids[:, 2]) <= h / 2.0
            )
            if in_cyl.any():
                fx = np.asarray(f(mids[in_cyl]), dtype=float)
                integral += float((fx * seg_len[in_cyl]).sum())
                used += int(in_cyl.sum())
        if used:
            total += integral
            kept += 1
        else:
            skipped += 1
    avg = total / kept if kept else 0.0
    return avg, skipped
