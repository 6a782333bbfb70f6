"""Per-cube plane assignments and the angle statistics built on them.

For a configuration whose cubes are touched by the zero set Z(P), each cube
gets a representative plane: preferably the span of two transverse incident
tube directions chosen to be most tangent to the sampled surface, otherwise
the plane orthogonal to the averaged sampled surface normal.  Two statistics
quantify the assignment:

* planiness: the angle between each incident tube direction and the plane of
  its cube, small when tubes run along their planes;
* graininess: the dihedral angle between planes of nearby cubes sharing a
  tube, small when neighbouring planes are nearly parallel.

Both report per-pair records, quantiles, and the fraction below a threshold
scaled by ``n**-sigma``.  The module also provides a tangency-integral check
for Z(P) inside a tube (mean transversal crossing count against the degree
bound) and a curvature census (fraction of sampled surface points whose
second fundamental form exceeds a level).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .geometry import TubeConfig, incidences, regulus_surface_poly, slab_surface_poly
from .poly3 import Poly3, batch_count_in_range
from .crofton import _perp_disk_offsets
from .seeding import substream
from .surfgeom import TOL_GRAD, _surface_tol

_TASK_LINES = 4096
_SOURCE_PAIR = "two-transverse-tubes"
_SOURCE_AVERAGE = "normal-average"

__all__ = [
    "PlaneAssignment",
    "AngleStats",
    "assign_planes",
    "planiness_stats",
    "graininess_stats",
    "cylinder_tangency_check",
    "curvature_census",
    "line_plane_angle",
    "plane_plane_angle",
    "surface_poly_for",
]


# ---------------------------------------------------------------------------
# result containers


@dataclass
class PlaneAssignment:
    """Plane chosen for one cube, stored as its unit normal."""

    cube_index: int
    normal: np.ndarray
    source: str
    sample_count: int

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=float)
        if self.normal.shape != (3,):
            raise PreconditionError("plane normal must be a 3-vector")
        if abs(np.linalg.norm(self.normal) - 1.0) > 1e-9:
            raise PreconditionError("plane normal must be a unit vector")
        if self.source not in (_SOURCE_PAIR, _SOURCE_AVERAGE):
            raise PreconditionError(f"unknown plane source {self.source!r}")
        if self.sample_count <= 0:
            raise PreconditionError("sample_count must be positive")

    def to_dict(self) -> dict:
        return {
            "cube_index": int(self.cube_index),
            "normal": [float(v) for v in self.normal],
            "source": self.source,
            "sample_count": int(self.sample_count),
        }


@dataclass
class AngleStats:
    """Per-pair angles plus quantiles and the fraction below a threshold.

    ``records`` holds one float row per pair with the fields named by
    ``columns`` (always including "angle"); quantiles are None when no pairs
    exist.  ``total_pairs`` counts pairs before any subsampling.
    """

    records: np.ndarray
    columns: tuple
    threshold_used: float
    p50: float | None
    p90: float | None
    p99: float | None
    fraction_within: float | None
    total_pairs: int

    def __post_init__(self):
        self.columns = tuple(self.columns)
        self.records = np.asarray(self.records, dtype=float).reshape(-1, len(self.columns))
        if "angle" not in self.columns:
            raise PreconditionError("records must carry an 'angle' column")
        ang = self.angles
        if ang.size:
            if ang.min() < -1e-12 or ang.max() > math.pi / 2 + 1e-12:
                raise PreconditionError("angles must lie in [0, pi/2]")
            if None in (self.p50, self.p90, self.p99, self.fraction_within):
                raise PreconditionError("non-empty stats require quantiles")
            if not (self.p50 <= self.p90 + 1e-15 and self.p90 <= self.p99 + 1e-15):
                raise PreconditionError("quantiles must be monotone")
        elif (self.p50, self.p90, self.p99, self.fraction_within) != (None,) * 4:
            raise PreconditionError("empty stats must have None quantiles")

    @property
    def angles(self) -> np.ndarray:
        return self.records[:, self.columns.index("angle")]

    @property
    def n_pairs(self) -> int:
        return self.records.shape[0]

    @property
    def empty(self) -> bool:
        return self.n_pairs == 0

    @classmethod
    def from_records(cls, records, columns, threshold: float, total_pairs: int | None = None):
        columns = tuple(columns)
        if "angle" not in columns:
            raise PreconditionError("records must carry an 'angle' column")
        rec = np.asarray(records, dtype=float).reshape(-1, len(columns))
        if rec.shape[0] == 0:
            return cls(rec, columns, float(threshold), None, None, None, None,
                       0 if total_pairs is None else int(total_pairs))
        ang = rec[:, columns.index("angle")]
        q50, q90, q99 = np.quantile(ang, [0.5, 0.9, 0.99])
        frac = float(np.mean(ang <= threshold))
        return cls(rec, columns, float(threshold), float(q50), float(q90), float(q99),
                   frac, rec.shape[0] if total_pairs is None else int(total_pairs))

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "threshold_used": float(self.threshold_used),
            "p50": self.p50,
            "p90": self.p90,
            "p99": self.p99,
            "fraction_within": self.fraction_within,
            "pairs_used": int(self.n_pairs),
            "pairs_total": int(self.total_pairs),
            "empty": self.empty,
        }


# ---------------------------------------------------------------------------
# angles


def line_plane_angle(direction, normal) -> float:
    """Angle in [0, pi/2] between a line direction and a plane."""
    d = np.asarray(direction, dtype=float)
    n = np.asarray(normal, dtype=float)
    dn = np.linalg.norm(d) * np.linalg.norm(n)
    if dn == 0.0:
        raise PreconditionError("zero direction or normal")
    return float(np.arcsin(np.clip(abs(float(d @ n)) / dn, 0.0, 1.0)))


def plane_plane_angle(normal_a, normal_b) -> float:
    """Dihedral angle in [0, pi/2] between two planes given by normals."""
    a = np.asarray(normal_a, dtype=float)
    b = np.asarray(normal_b, dtype=float)
    dn = np.linalg.norm(a) * np.linalg.norm(b)
    if dn == 0.0:
        raise PreconditionError("zero plane normal")
    return float(np.arccos(np.clip(abs(float(a @ b)) / dn, 0.0, 1.0)))


def _canonical_unit(v: np.ndarray) -> np.ndarray:
    """Unit vector with its largest-magnitude component made positive."""
    n = np.linalg.norm(v)
    if n < 1e-15:
        raise PreconditionError("cannot normalize a zero vector")
    u = v / n
    if u[int(np.argmax(np.abs(u)))] < 0:
        u = -u
    return u


# ---------------------------------------------------------------------------
# surface sampling


def _batch_project(poly: Poly3, points: np.ndarray, max_steps: int = 50):
    """Newton-project many points onto Z(P) at once.

    Returns (projected points, success mask); rows fail when the gradient
    collapses or the residual never reaches the surface tolerance.
    """
    x = np.array(points, dtype=float).reshape(-1, 3)
    m = x.shape[0]
    ok = np.zeros(m, dtype=bool)
    active = np.ones(m, dtype=bool)
    tol = _surface_tol(poly)
    for _ in range(max_steps):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        val = np.atleast_1d(poly(x[idx]))
        g = poly.grad(x[idx])
        g2 = np.einsum("ij,ij->i", g, g)
        degenerate = g2 <= TOL_GRAD**2
        converged = (np.abs(val) <= tol) & ~degenerate
        ok[idx[converged]] = True
        step_rows = ~converged & ~degenerate
        rows = idx[step_rows]
        x[rows] -= (val[step_rows] / g2[step_rows])[:, None] * g[step_rows]
        active = np.zeros(m, dtype=bool)
        active[rows] = True
    return x, ok


def _surface_normals(poly: Poly3, pts: np.ndarray) -> np.ndarray:
    g = poly.grad(pts)
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _batch_sff(poly: Poly3, pts: np.ndarray) -> np.ndarray:
    """Frobenius norm of the second fundamental form, vectorized over rows."""
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    g = poly.grad(pts)
    h = poly.hessian(pts)
    c = np.cross(g[:, None, :], np.eye(3)[None, :, :])
    m = np.einsum("nia,nab,njb->nij", c, h, c)
    gn = np.linalg.norm(g, axis=1)
    return np.sqrt(np.sum(m * m, axis=(1, 2))) / gn**3


def surface_poly_for(config: TubeConfig) -> Poly3:
    """The exact surface polynomial a generated configuration was built on."""
    kind = config.params.get("surface", {}).get("type")
    if kind == "sheets":
        return slab_surface_poly(config)
    if kind == "regulus":
        return regulus_surface_poly(config)
    raise PreconditionError("config carries no surface polynomial; pass P explicitly")


def _projected_chunks(poly, config, oversample, rng_seed, tag, halo_factor, keep_limit):
    """Yield per-cube surface samples in memory-bounded chunks.

    Each yielded item is (results, start) where results[j] is either
    (points, unit normals) for cube start + j, truncated to ``keep_limit``
    rows in seed order, or (None, None) when no seed survived projection
    and the stay-inside-the-box filter.  Chunking never changes values:
    every Newton row is independent.
    """
    n_cubes = len(config.cubes)
    cubes_per_chunk = max(1, 200_000 // oversample)
    for start in range(0, n_cubes, cubes_per_chunk):
        block = config.cubes[start : start + cubes_per_chunk]
        seeds = np.empty((len(block), oversample, 3), dtype=float)
        halves = np.empty(len(block), dtype=float)
        for j, cube in enumerate(block):
            rng = substream(rng_seed, tag, start + j)
            halves[j] = halo_factor * cube.side / 2.0
            seeds[j] = cube.center + rng.uniform(-halves[j], halves[j], size=(oversample, 3))
        flat, ok = _batch_project(poly, seeds.reshape(-1, 3))
        pts_all = flat.reshape(len(block), oversample, 3)
        ok_all = ok.reshape(len(block), oversample)
        results = []
        for j, cube in enumerate(block):
            inside = np.all(np.abs(pts_all[j] - cube.center) <= halves[j] + 1e-9, axis=1)
            sel = np.flatnonzero(ok_all[j] & inside)[:keep_limit]
            if sel.size == 0:
                results.append((None, None))
            else:
                pts = pts_all[j][sel]
                results.append((pts, _surface_normals(poly, pts)))
        yield results, start


# ---------------------------------------------------------------------------
# plane assignment


def assign_planes(
    poly: Poly3 | None,
    config: TubeConfig,
    samples_per_cube: int = 24,
    rng_seed: int = 0,
    halo_factor: float = 3.0,
) -> list:
    """Assign a plane to every cube whose enlarged box meets Z(P).

    Seeds are drawn in the box of side ``halo_factor * cube.side`` around
    each cube center and Newton-projected onto the surface; cubes with no
    surviving surface point are left unassigned (omitted from the result).
    When two incident tubes with mutual angle >= 1/E exist, the pair whose
    directions are most tangent to the sampled surface (smallest mean
    |v . N|) spans the plane; ties break on lexicographic tube indices.
    Otherwise the plane is orthogonal to the sign-aligned average normal.
    With ``poly=None`` the configuration's own surface polynomial is used.
    """
    if samples_per_cube <= 0:
        raise PreconditionError("samples_per_cube must be positive")
    if poly is None:
        poly = surface_poly_for(config)
    e_const = float(config.params["e"])
    min_angle = 1.0 / e_const
    by_cube = {int(k): v for k, v in incident_tubes(config).items()}
    dirs = np.array([t.direction for t in config.tubes], dtype=float)

    out = []
    oversample = 4 * samples_per_cube
    for chunk, start in _projected_chunks(
        poly, config, oversample, rng_seed, "plane-points", halo_factor, samples_per_cube
    ):
        for offset, (pts, normals) in enumerate(chunk):
            ci = start + offset
            if pts is None:
                continue
            normal = None
            source = _SOURCE_AVERAGE
            tubes_inc = by_cube.get(ci)
            if tubes_inc is not None and len(tubes_inc) >= 2:
                scores = np.mean(np.abs(normals @ dirs[tubes_inc].T), axis=0)
                best = None
                best_score = math.inf
                for a in range(len(tubes_inc)):
                    for b in range(a + 1, len(tubes_inc)):
                        va, vb = dirs[tubes_inc[a]], dirs[tubes_inc[b]]
                        if math.acos(min(abs(float(va @ vb)), 1.0)) < min_angle:
                            continue
                        s = float(scores[a] + scores[b])
                        if s < best_score:
                            best_score = s
                            best = (va, vb)
                if best is not None:
                    normal = _canonical_unit(np.cross(best[0], best[1]))
                    source = _SOURCE_PAIR
            if normal is None:
                signs = np.where(normals @ normals[0] < 0.0, -1.0, 1.0)
                avg = np.mean(signs[:, None] * normals, axis=0)
                if np.linalg.norm(avg) < 1e-12:
                    avg = normals[0]
                normal = _canonical_unit(avg)
            out.append(PlaneAssignment(ci, normal, source, pts.shape[0]))
    return out


def incident_tubes(config: TubeConfig) -> dict:
    """Map cube index -> ascending incident tube indices."""
    return incidences(config).by_cube()


# ---------------------------------------------------------------------------
# statistics


def _scale_params(config: TubeConfig):
    n = float(config.params["n"])
    sigma = float(config.params["sigma"])
    return n, sigma


def planiness_stats(config: TubeConfig, planes, threshold_coeff: float = 1.0) -> AngleStats:
    """Angle between each incident tube direction and its cube's plane.

    One record (cube, tube, angle) per incidence whose cube is assigned;
    the within-threshold fraction uses ``threshold_coeff * n**-sigma``.
    """
    if threshold_coeff <= 0:
        raise PreconditionError("threshold_coeff must be positive")
    n, sigma = _scale_params(config)
    threshold = threshold_coeff * n**-sigma
    columns = ("cube", "tube", "angle")
    pairs = incidences(config).pairs
    if pairs.shape[0] == 0:
        return AngleStats.from_records(np.empty((0, 3)), columns, threshold)
    normals = np.full((len(config.cubes), 3), np.nan)
    for p in planes:
        normals[p.cube_index] = p.normal
    mask = np.isfinite(normals[pairs[:, 0], 0])
    ci, ti = pairs[mask, 0], pairs[mask, 1]
    dirs = np.array([t.direction for t in config.tubes], dtype=float)
    dots = np.abs(np.einsum("ij,ij->i", dirs[ti], normals[ci]))
    ang = np.arcsin(np.clip(dots, 0.0, 1.0))
    rows = np.column_stack([ci, ti, ang]).astype(float)
    return AngleStats.from_records(rows, columns, threshold)


def graininess_stats(
    config: TubeConfig,
    planes,
    k: float,
    rng_seed: int = 0,
    max_pairs: int = 200_000,
) -> AngleStats:
    """Dihedral angles between planes of nearby cubes sharing a tube.

    For every tube, all assigned incident cube pairs with center distance
    <= n**sigma / k are recorded as (cube_a, cube_b, angle, dist); the
    threshold is k * n**-sigma.  A window below 1 (no two distinct cube
    centers can be that close) yields empty, flagged stats.  Record sets
    larger than ``max_pairs`` are subsampled deterministically.
    """
    if k <= 0:
        raise PreconditionError("k must be positive")
    n, sigma = _scale_params(config)
    window = n**sigma / k
    threshold = k * n**-sigma
    columns = ("cube_a", "cube_b", "angle", "dist")
    if window < 1.0:
        return AngleStats.from_records(np.empty((0, 4)), columns, threshold, total_pairs=0)

    normal_of = {p.cube_index: p.normal for p in planes}
    centers = np.array([c.center for c in config.cubes], dtype=float)
    by_tube = incidences(config).by_tube()
    order = sorted(by_tube)
    members = {ti: np.array([ci for ci in by_tube[ti] if int(ci) in normal_of])
               for ti in order}

    def tube_pairs(ti):
        """Eligible (ia, ib, dist) for one tube in a fixed enumeration order."""
        pos = centers[members[ti]]
        pos = pos - pos.mean(axis=0)  # recenter so the Gram trick stays accurate
        gram = pos @ pos.T
        sq = np.diagonal(gram)
        dist = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * gram, 0.0))
        ia, ib = np.nonzero(np.triu(dist <= window, k=1))
        return ia, ib, dist

    # Pass 1: count eligible pairs per tube so the global subsample can be
    # drawn up front; pass 2 then materialises only the selected records,
    # keeping memory bounded by one tube's scratch space.
    counts = []
    for ti in order:
        if members[ti].size < 2:
            counts.append(0)
            continue
        ia, _, _ = tube_pairs(ti)
        counts.append(int(ia.size))
    total = int(sum(counts))
    if total == 0:
        return AngleStats.from_records(np.empty((0, 4)), columns, threshold, total_pairs=0)
    keep = None
    if total > max_pairs:
        rng = substream(rng_seed, "grainy-pair-sample")
        keep = np.sort(rng.choice(total, size=max_pairs, replace=False))

    blocks = []
    offset = 0
    for ti, cnt in zip(order, counts):
        if cnt == 0:
            continue
        ia, ib, dist = tube_pairs(ti)
        if keep is not None:
            sel = keep[np.searchsorted(keep, offset):np.searchsorted(keep, offset + cnt)]
            ia, ib = ia[sel - offset], ib[sel - offset]
        offset += cnt
        if ia.size == 0:
            continue
        cs = members[ti]
        nrm_a = np.array([normal_of[int(ci)] for ci in cs[ia]])
        nrm_b = np.array([normal_of[int(ci)] for ci in cs[ib]])
        cosang = np.clip(np.abs(np.einsum("ij,ij->i", nrm_a, nrm_b)), 0.0, 1.0)
        blocks.append(
            np.column_stack([cs[ia], cs[ib], np.arccos(cosang), dist[ia, ib]]).astype(float)
        )
    if not blocks:
        return AngleStats.from_records(np.empty((0, 4)), columns, threshold, total_pairs=total)
    rec = np.concatenate(blocks, axis=0)
    return AngleStats.from_records(rec, columns, threshold, total_pairs=total)


# ---------------------------------------------------------------------------
# tangency integral check


def cylinder_tangency_check(
    poly: Poly3,
    tube,
    lines: int = 20_000,
    rng_seed: int = 0,
    tol: float = 0.1,
) -> dict:
    """Estimate the tangency integral of Z(P) inside a tube against pi R^2 D.

    The integral of |v(T) . N| over Z(P) inside the tube equals the area of
    the cross-section disk times the mean number of transversal crossings of
    axis-parallel lines, so it is estimated by sampling such lines through
    the disk and counting restriction roots along the tube length.  Each
    line crosses at most deg(P) times, so the ratio estimate / (pi R^2 D)
    cannot exceed 1; ``flagged`` reports a violation beyond ``tol``.
    """
    if lines < 1000:
        raise PreconditionError("need at least 1000 lines")
    degree = poly.effective_degree()
    if degree < 1:
        raise PreconditionError("tangency check needs a nonconstant polynomial")
    v = np.asarray(tube.direction, dtype=float)
    total = 0
    valid = 0
    excluded = 0
    n_tasks = math.ceil(lines / _TASK_LINES)
    for task in range(n_tasks):
        count = min(_TASK_LINES, lines - task * _TASK_LINES)
        rng = substream(rng_seed, "tangency-lines", task)
        dirs = np.broadcast_to(v, (count, 3))
        offsets = _perp_disk_offsets(rng, dirs, tube.radius)
        rows = poly.restrict_lines(tube.base + offsets, dirs)
        counts, zero_mask = batch_count_in_range(rows, 0.0, tube.length)
        keep = ~zero_mask
        total += int(counts[keep].sum())
        valid += int(keep.sum())
        excluded += int(zero_mask.sum())
    disk = math.pi * tube.radius**2
    mean_count = total / valid if valid else 0.0
    estimate = disk * mean_count
    bound = disk * degree
    ratio = mean_count / degree
    return {
        "integral": float(estimate),
        "bound": float(bound),
        "ratio": float(ratio),
        "flagged": bool(ratio > 1.0 + tol),
        "degree": int(degree),
        "lines_used": int(valid),
        "lines_excluded": int(excluded),
    }


# ---------------------------------------------------------------------------
# curvature census


def curvature_census(
    poly: Poly3,
    config: TubeConfig,
    h_level: float,
    samples_per_cube: int = 8,
    rng_seed: int = 0,
) -> dict:
    """Fraction of sampled surface points with |A| above ``h_level``.

    Seeds drawn inside each cube are projected onto Z(P); points that leave
    their cube or fail to converge are dropped, and cubes contributing no
    surface point are listed in ``cubes_skipped``.  |A| is the Frobenius
    norm of the second fundamental form.
    """
    if h_level <= 0:
        raise PreconditionError("h_level must be positive")
    if samples_per_cube <= 0:
        raise PreconditionError("samples_per_cube must be positive")
    per_cube = []
    skipped = []
    all_vals = []
    oversample = 4 * samples_per_cube
    for chunk, start in _projected_chunks(
        poly, config, oversample, rng_seed, "census-points", 1.0, samples_per_cube
    ):
        for offset, (pts, _normals) in enumerate(chunk):
            ci = start + offset
            if pts is None:
                skipped.append(ci)
                continue
            vals = _batch_sff(poly, pts)
            all_vals.append(vals)
            per_cube.append(
                {
                    "cube": int(ci),
                    "fraction": float(np.mean(vals > h_level)),
                    "count": int(vals.size),
                }
            )
    if all_vals:
        vals = np.concatenate(all_vals)
        counts, edges = np.histogram(vals, bins=16)
        global_fraction = float(np.mean(vals > h_level))
        hist = {"edges": [float(x) for x in edges], "counts": [int(c) for c in counts]}
    else:
        vals = np.empty(0)
        global_fraction = None
        hist = {"edges": [], "counts": []}
    return {
        "h_level": float(h_level),
        "global_fraction": global_fraction,
        "samples_total": int(vals.size),
        "per_cube": per_cube,
        "cubes_skipped": skipped,
        "histogram": hist,
    }
