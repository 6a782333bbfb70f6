"""Tubes, unit cubes, incidence configurations, and the hypotheses checker.

A configuration is a set of axis-aligned unit cubes together with a set of
radius-1 tubes (solid cylinders around a segment), plus the scalar
parameters (N, sigma, E, rho) that the downstream experiments read.  E and
rho are *measured* from the realized incidences by the generators, not
asserted a priori: rho is the minimum per-cube tube count and E is the
smallest constant making the per-tube/per-cube count bounds and the
bounding-ball constraint hold.

Two generators are provided: ``slab_config`` (tubes fanning inside
parallel x1 = const planes - the planes-sheet example) and
``regulus_config`` (thickened rulings of the doubly ruled surface
x3 = x1*x2/N).  Both are deterministic given their seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from kakeya_lab.errors import PreconditionError
from kakeya_lab.poly3 import Poly3
from kakeya_lab.seeding import substream

_HALF_DIAG = math.sqrt(3.0) / 2.0
_TOUCH_TOL = 1e-12


@dataclass
class Tube:
    """Solid cylinder of given radius around the segment base + [0, length]*direction."""

    base: np.ndarray
    direction: np.ndarray
    radius: float = 1.0
    length: float = 1.0

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=float)
        self.direction = np.asarray(self.direction, dtype=float)
        if self.base.shape != (3,) or self.direction.shape != (3,):
            raise PreconditionError("tube base and direction must be 3-vectors")
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-9:
            raise PreconditionError("tube direction must be a unit vector")
        if not (self.radius > 0 and self.length > 0):
            raise PreconditionError("tube radius and length must be positive")

    def point(self, t):
        return self.base + np.multiply.outer(np.asarray(t, dtype=float), self.direction)


@dataclass
class UnitCube:
    """Axis-aligned cube; side defaults to 1 (sub-cells reuse the type)."""

    center: np.ndarray
    side: float = 1.0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.center.shape != (3,):
            raise PreconditionError("cube center must be a 3-vector")
        if not self.side > 0:
            raise PreconditionError("cube side must be positive")

    @property
    def lo(self):
        return self.center - self.side / 2.0

    @property
    def hi(self):
        return self.center + self.side / 2.0


@dataclass
class Segment:
    """A t-parameter range of a tube, labeled by how it was produced."""

    tube: Tube
    t0: float
    t1: float
    role: str  # "between-cubes" | "centered-at-cube"
    clipped: bool = False

    def __post_init__(self):
        if self.t1 <= self.t0:
            raise PreconditionError("segment needs t0 < t1")
        if self.role not in ("between-cubes", "centered-at-cube"):
            raise PreconditionError(f"unknown segment role {self.role!r}")

    @property
    def t_range(self):
        return (self.t0, self.t1)


@dataclass
class TubeConfig:
    """Cubes + tubes + measured parameters {n, sigma, e, rho, ...}."""

    cubes: list
    tubes: list
    params: dict

    def __post_init__(self):
        for key in ("n", "sigma", "e", "rho"):
            if key not in self.params:
                raise PreconditionError(f"params missing {key!r}")
        n, sigma, e, rho = (self.params[k] for k in ("n", "sigma", "e", "rho"))
        if not n > 1:
            raise PreconditionError("need n > 1")
        if not 0.0 < sigma < 1.0:
            raise PreconditionError("need 0 < sigma < 1")
        if not e > 1:
            raise PreconditionError("need e > 1")
        if not rho >= 2:
            raise PreconditionError("need rho >= 2")
        bound = e * n + 1e-6
        pts = [c.center for c in self.cubes]
        for t in self.tubes:
            pts.append(t.base)
            pts.append(t.base + t.length * t.direction)
        if pts and np.max(np.linalg.norm(np.asarray(pts), axis=1)) > bound:
            raise PreconditionError("geometry escapes the radius e*n ball around the origin")

    def cube_centers(self) -> np.ndarray:
        return np.array([c.center for c in self.cubes]).reshape(-1, 3)


# ---------------------------------------------------------------------------
# distances and incidence


def _segment_box_dist2(base, direction, length, centers, half_side):
    """Squared distance from an axis segment to solid boxes, vectorized over boxes.

    f(t) = sum_i max(0, |p_i(t) - c_i| - s/2)^2 is convex and piecewise
    quadratic in t; its nondecreasing derivative is piecewise linear with
    breakpoints where a coordinate enters or leaves its box slab.  The
    minimizer is found by a sign scan over the sorted breakpoints followed
    by one linear solve inside the sign-change interval.
    """
    centers = np.atleast_2d(centers)
    m = centers.shape[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        tt = (
            centers[:, None, :]
            + np.array([-half_side, half_side])[None, :, None]
            - base[None, None, :]
        ) / direction[None, None, :]
    tt = tt.reshape(m, 6)
    tt = np.where(np.isfinite(tt), tt, 0.0)
    np.clip(tt, 0.0, float(length), out=tt)
    knots = np.concatenate(
        [np.zeros((m, 1)), np.full((m, 1), float(length)), tt], axis=1
    )
    knots.sort(axis=1)
    p = base[None, None, :] + knots[:, :, None] * direction[None, None, :]
    delta = p - centers[:, None, :]
    g = np.sign(delta) * np.maximum(np.abs(delta) - half_side, 0.0)
    slope = 2.0 * (g * direction[None, None, :]).sum(axis=2)
    pos = slope >= 0.0
    j = np.argmax(pos, axis=1)
    any_pos = pos.any(axis=1)
    t_star = np.where(any_pos, knots[np.arange(m), j], float(length))
    interior = any_pos & (j > 0)
    if interior.any():
        rows = np.nonzero(interior)[0]
        jj = j[rows]
        t_lo, t_hi = knots[rows, jj - 1], knots[rows, jj]
        s_lo, s_hi = slope[rows, jj - 1], slope[rows, jj]
        denom = s_hi - s_lo
        frac = np.where(denom > 0.0, -s_lo / np.where(denom > 0.0, denom, 1.0), 0.0)
        t_star[rows] = t_lo + frac * (t_hi - t_lo)
    p = base[None, :] + t_star[:, None] * direction[None, :]
    gap = np.maximum(np.abs(p - centers) - half_side, 0.0)
    return (gap**2).sum(axis=1)


def tube_cube_intersects(tube: Tube, cube: UnitCube) -> bool:
    """True iff the solid tube meets the solid cube (touching counts)."""
    d2 = _segment_box_dist2(tube.base, tube.direction, tube.length, cube.center[None, :], cube.side / 2.0)
    return bool(d2[0] <= (tube.radius + _TOUCH_TOL) ** 2)


@dataclass
class IncidenceSet:
    """Incidence pairs (cube_index, tube_index), sorted lexicographically."""

    pairs: np.ndarray  # (n_pairs, 2) int64
    n_cubes: int
    n_tubes: int
    _by_cube: dict = field(default=None, repr=False, compare=False)
    _by_tube: dict = field(default=None, repr=False, compare=False)

    def cube_counts(self) -> np.ndarray:
        return np.bincount(self.pairs[:, 0], minlength=self.n_cubes)

    def tube_counts(self) -> np.ndarray:
        return np.bincount(self.pairs[:, 1], minlength=self.n_tubes)

    def by_cube(self) -> dict:
        if self._by_cube is None:
            order = np.argsort(self.pairs[:, 0], kind="stable")
            p = self.pairs[order]
            keys, starts = np.unique(p[:, 0], return_index=True)
            chunks = np.split(p[:, 1], starts[1:])
            self._by_cube = dict(zip(keys.tolist(), chunks))
        return self._by_cube

    def by_tube(self) -> dict:
        if self._by_tube is None:
            order = np.argsort(self.pairs[:, 1], kind="stable")
            p = self.pairs[order]
            keys, starts = np.unique(p[:, 1], return_index=True)
            chunks = np.split(p[:, 0], starts[1:])
            self._by_tube = dict(zip(keys.tolist(), chunks))
        return self._by_tube


class _CubeIndex:
    """Per-axis sorted views of the cube centers, so a tube only has to be
    tested against the cubes inside its bounding slab along the most
    selective coordinate."""

    def __init__(self, centers: np.ndarray):
        self.centers = centers
        self.orders = [np.argsort(centers[:, i]) for i in range(3)]
        self.sorted_vals = [centers[self.orders[i], i] for i in range(3)]

    def candidates(self, tube: Tube, side: float) -> np.ndarray:
        reach = tube.radius + side * _HALF_DIAG + 1e-9
        p0 = tube.base
        p1 = tube.base + tube.length * tube.direction
        lo = np.minimum(p0, p1) - reach
        hi = np.maximum(p0, p1) + reach
        best, best_count = None, None
        for i in range(3):
            a = np.searchsorted(self.sorted_vals[i], lo[i], side="left")
            b = np.searchsorted(self.sorted_vals[i], hi[i], side="right")
            if best_count is None or b - a < best_count:
                best, best_count = (i, a, b), b - a
        i, a, b = best
        return self.orders[i][a:b]


def _tube_hits(tube: Tube, centers: np.ndarray, side: float, index: _CubeIndex | None = None) -> np.ndarray:
    """Indices of cubes (given by centers) that the tube meets.

    A cheap infinite-line prefilter (distance to the line plus an axis
    parameter window) followed by the exact segment-box distance on the
    surviving candidates.  An optional ``_CubeIndex`` narrows the scan to
    the tube's bounding slab first.
    """
    if index is not None:
        sub = index.candidates(tube, side)
        if sub.size == 0:
            return sub.astype(np.int64)
        centers = centers[sub]
    reach = tube.radius + side * _HALF_DIAG + 1e-9
    w = centers - tube.base[None, :]
    t_axis = w @ tube.direction
    perp2 = (w**2).sum(axis=1) - t_axis**2
    cand = np.nonzero(
        (perp2 <= reach**2) & (t_axis >= -reach) & (t_axis <= tube.length + reach)
    )[0]
    if cand.size == 0:
        return cand if index is None else cand.astype(np.int64)
    d2 = _segment_box_dist2(tube.base, tube.direction, tube.length, centers[cand], side / 2.0)
    hit = cand[d2 <= (tube.radius + _TOUCH_TOL) ** 2]
    return hit if index is None else sub[hit]


def incidences(config: TubeConfig) -> IncidenceSet:
    """All (cube, tube) incidence pairs, sorted by (cube, tube)."""
    centers = config.cube_centers()
    side = config.cubes[0].side if config.cubes else 1.0
    index = _CubeIndex(centers) if centers.shape[0] > 512 else None
    out = []
    for j, tube in enumerate(config.tubes):
        hit = _tube_hits(tube, centers, side, index)
        if hit.size:
            out.append(np.stack([hit, np.full(hit.size, j, dtype=np.int64)], axis=1))
    if out:
        pairs = np.concatenate(out, axis=0)
        pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    else:
        pairs = np.empty((0, 2), dtype=np.int64)
    return IncidenceSet(pairs=pairs, n_cubes=len(config.cubes), n_tubes=len(config.tubes))


# ---------------------------------------------------------------------------
# generators


def _max_chord_offset(d2, mid, side, min_chord):
    """Largest |u| such that the chord offset u from the square center along
    the perpendicular of d2 still has length >= min_chord (bisection)."""
    perp = np.array([-d2[1], d2[0]])

    def chord(u):
        rng = _clip_line_to_box(mid + u * perp, d2, 0.0, side)
        return 0.0 if rng is None else rng[1] - rng[0]

    if chord(0.0) < min_chord:
        raise PreconditionError("square too small for the requested chord floor")
    lo, hi = 0.0, side
    for _ in range(40):
        m = 0.5 * (lo + hi)
        if chord(m) >= min_chord:
            lo = m
        else:
            hi = m
    return lo


def _clip_line_to_box(p0, d, lo, hi):
    """t-range of {p0 + t d} inside the axis box [lo, hi]^2 coords 1,2 of the plane."""
    tmin, tmax = -np.inf, np.inf
    for i in range(p0.size):
        if d[i] == 0.0:
            if not (lo <= p0[i] <= hi):
                return None
            continue
        a = (lo - p0[i]) / d[i]
        b = (hi - p0[i]) / d[i]
        tmin = max(tmin, min(a, b))
        tmax = min(tmax, max(a, b))
    if tmax <= tmin:
        return None
    return tmin, tmax


def _pairs_from_hits(hits_per_tube, n_cubes, n_tubes) -> IncidenceSet:
    out = [
        np.stack([h.astype(np.int64), np.full(h.size, j, dtype=np.int64)], axis=1)
        for j, h in enumerate(hits_per_tube)
        if h.size
    ]
    if out:
        pairs = np.concatenate(out, axis=0)
        pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    else:
        pairs = np.empty((0, 2), dtype=np.int64)
    return IncidenceSet(pairs=pairs, n_cubes=n_cubes, n_tubes=n_tubes)


def _measure_params(n, sigma, kind, cubes, tubes, extra, rho_floor, inc=None):
    config = TubeConfig(
        cubes=cubes,
        tubes=tubes,
        params={"kind": kind, "n": n, "sigma": sigma, "e": float(4 * n), "rho": 2.0, **extra},
    )
    if inc is None:
        inc = incidences(config)
    cube_counts = inc.cube_counts()
    tube_counts = inc.tube_counts()
    rho = float(cube_counts.min()) if cube_counts.size else 0.0
    if rho < rho_floor:
        raise PreconditionError(
            f"tube budget too small: a cube meets only {int(rho)} tubes "
            f"(need >= {rho_floor}); increase tube_budget"
        )
    if tube_counts.size and tube_counts.min() < n:
        raise PreconditionError(
            f"a tube meets only {int(tube_counts.min())} cubes (need >= {n}); "
            "geometry too small for the per-tube floor"
        )
    pts = np.concatenate(
        [config.cube_centers()]
        + [np.stack([t.base, t.base + t.length * t.direction]) for t in tubes]
    )
    extent = float(np.max(np.linalg.norm(pts, axis=1)))
    e = _e_from_stats(tube_counts, cube_counts, extent, n)
    config.params.update({"e": e, "rho": rho})
    return config, inc


def _e_from_stats(tube_counts, cube_counts, extent, n) -> float:
    """Smallest E (2 decimals) making the count bounds and the bounding ball hold."""
    rho = max(float(cube_counts.min()) if cube_counts.size else 0.0, 1.0)
    e = max(
        float(tube_counts.max(initial=0)) / n,
        float(cube_counts.max(initial=0)) / rho,
        extent / n,
        1.5,
    )
    return float(math.ceil(e * 100.0) / 100.0)


def slab_config(n: int, sigma: float, tube_budget: int | None = None, rng_seed: int = 0) -> TubeConfig:
    """Slab example: W = ceil(N^(1-sigma)) layers of a 2N x 2N cube grid,
    with tubes fanning inside the x1 = const mid-planes of the layers.

    Tubes are chords of the cross-section square (extended a little past it
    so edge cubes are crossed fully), with directions from a fan of spacing
    ~1/N and seeded anchor points.  Chords too short to collect N cubes are
    re-drawn.  Errors if some cube ends up meeting fewer than 3 tubes.
    """
    if n <= 1:
        raise PreconditionError("need n > 1")
    if not 0.0 < sigma < 1.0:
        raise PreconditionError("need 0 < sigma < 1")
    w = math.ceil(n ** (1.0 - sigma))
    if tube_budget is None:
        tube_budget = math.ceil(3.0 * n ** (2.0 - sigma))

    side = 2 * n
    ii, jj, kk = np.meshgrid(np.arange(w), np.arange(side), np.arange(side), indexing="ij")
    centers = np.stack([ii, jj, kk], axis=-1).reshape(-1, 3) + 0.5
    cubes = [UnitCube(c) for c in centers]

    n_dirs = max(3, min(tube_budget // max(w, 1), round(math.pi * n)))
    rng = substream(rng_seed, "slab-offsets")
    margin = 3.0
    min_chord = float(min(n + 4.0, side))
    golden = (math.sqrt(5.0) - 1.0) / 2.0
    mid = np.array([side / 2.0, side / 2.0])
    tubes = []
    per_layer = [0] * w
    stagger = max(1, n_dirs // w)
    for k in range(tube_budget):
        layer = k % w
        i = per_layer[layer]
        per_layer[layer] += 1
        theta = (((i + layer * stagger) % n_dirs) + 0.5) * math.pi / n_dirs
        d2 = np.array([math.cos(theta), math.sin(theta)])
        perp = np.array([-d2[1], d2[0]])
        # widest centered offset still giving a chord of length >= min_chord;
        # offsets sweep that range low-discrepancy style across the whole
        # budget so layers do not repeat each other's chords
        u_lim = _max_chord_offset(d2, mid, float(side), min_chord)
        frac = ((k + 1) * golden) % 1.0
        u = (2.0 * frac - 1.0) * u_lim + rng.uniform(-0.5, 0.5)
        u = float(np.clip(u, -u_lim, u_lim))
        p2 = mid + u * perp
        t_out = _clip_line_to_box(p2, d2, -margin, side + margin)
        base2 = p2 + t_out[0] * d2
        length = t_out[1] - t_out[0]
        base = np.array([layer + 0.5, base2[0], base2[1]])
        direction = np.array([0.0, d2[0], d2[1]])
        tubes.append(Tube(base=base, direction=direction, radius=1.0, length=float(length)))

    def chord_tube(layer, point2, theta):
        d2v = np.array([math.cos(theta), math.sin(theta)])
        t_out = _clip_line_to_box(point2, d2v, -margin, side + margin)
        base2 = point2 + t_out[0] * d2v
        return Tube(
            base=np.array([layer + 0.5, base2[0], base2[1]]),
            direction=np.array([0.0, d2v[0], d2v[1]]),
            radius=1.0,
            length=float(t_out[1] - t_out[0]),
        )

    def in_square_chord(point2, theta):
        d2v = np.array([math.cos(theta), math.sin(theta)])
        t_in = _clip_line_to_box(point2, d2v, 0.0, float(side))
        return 0.0 if t_in is None else t_in[1] - t_in[0]

    cube_index = _CubeIndex(centers)

    def add_tube(tube):
        hits = _tube_hits(tube, centers, 1.0, cube_index)
        tubes.append(tube)
        hits_per_tube.append(hits)
        counts[hits] += 1

    hits_per_tube = [_tube_hits(t, centers, 1.0, cube_index) for t in tubes]
    counts = np.zeros(len(cubes), dtype=np.int64)
    for h in hits_per_tube:
        counts[h] += 1

    # Corner cubes see few legal long chords, so the fan alone can leave them
    # under the per-cube floor; route extra center-pointing chords straight
    # through any cube still short of 3 tubes (each sweep revisits only the
    # cubes that earlier additions did not already fix).
    for _ in range(32):
        starved = np.nonzero(counts < 3)[0]
        if starved.size == 0:
            break
        for ci in starved:
            if counts[ci] >= 3:
                continue
            c = centers[ci]
            theta = math.atan2(mid[1] - c[2], mid[0] - c[1]) + rng.uniform(-0.08, 0.08)
            add_tube(chord_tube(int(c[0] - 0.5), c[1:].copy(), theta))
    else:
        raise PreconditionError("could not reach the per-cube floor; increase tube_budget")

    # A cube whose few tubes all run nearly parallel would let one direction
    # pair capture everything; give such cubes chords rotated well away from
    # their cluster until the pair-escape condition holds at the E this
    # configuration will be measured with.
    for _ in range(12):
        tube_counts_arr = np.array([h.size for h in hits_per_tube])
        endpoints = np.concatenate(
            [np.stack([t.base, t.base + t.length * t.direction]) for t in tubes]
        )
        extent = float(
            max(np.max(np.linalg.norm(centers, axis=1)), np.max(np.linalg.norm(endpoints, axis=1)))
        )
        e_est = _e_from_stats(tube_counts_arr, counts, extent, n)
        dirs_c = _canonical_dirs(np.array([t.direction for t in tubes]))
        by_cube = {}
        for j, h in enumerate(hits_per_tube):
            for ci in h:
                by_cube.setdefault(int(ci), []).append(j)
        ids, fracs = _direction_spread_fractions(dirs_c, by_cube, 1.0 / e_est)
        failing = ids[fracs < 1.0 / e_est + 1e-3]
        if failing.size == 0:
            break
        for ci in failing:
            c = centers[ci]
            own = dirs_c[np.asarray(by_cube[int(ci)])]
            phi = 0.5 * math.atan2(
                float(np.sum(2.0 * own[:, 1] * own[:, 2])),
                float(np.sum(own[:, 1] ** 2 - own[:, 2] ** 2)),
            )
            for dth in (0.96, -0.96):
                theta = phi + dth + rng.uniform(-0.05, 0.05)
                if in_square_chord(c[1:], theta) < min_chord:
                    theta = math.atan2(mid[1] - c[2], mid[0] - c[1]) + rng.uniform(-0.3, 0.3)
                add_tube(chord_tube(int(c[0] - 0.5), c[1:].copy(), theta))
    else:
        raise PreconditionError("direction diversity pass did not converge; increase tube_budget")

    levels = [i + 0.5 for i in range(w)]
    config, _ = _measure_params(
        n, sigma, "slab", cubes, tubes, {"surface": {"type": "sheets", "axis": 0, "levels": levels}},
        rho_floor=3,
        inc=_pairs_from_hits(hits_per_tube, len(cubes), len(tubes)),
    )
    return config


def regulus_config(n: int, sigma: float, tube_budget: int | None = None, rng_seed: int = 0) -> TubeConfig:
    """Regulus example: cubes along {|x3 - x1*x2/n| <= n^(1-sigma)}, tubes =
    thickened lines of the two ruling families, translated vertically.

    Family A runs along (0, 1, a/n) through (a, t, a*t/n + v); family B is
    the x1 <-> x2 mirror.  The central tubes (a = 0 and b = 0 with no
    vertical shift) are always included, so the x1-axis tube is present.
    """
    if n <= 1:
        raise PreconditionError("need n > 1")
    if not 0.0 < sigma < 1.0:
        raise PreconditionError("need 0 < sigma < 1")
    th = n ** (1.0 - sigma)

    coords = np.arange(-n, n) + 0.5
    ii, jj = np.meshgrid(coords, coords, indexing="ij")
    mids = (ii * jj / n).ravel()
    i_flat = ii.ravel()
    j_flat = jj.ravel()
    centers = []
    for idx in range(mids.size):
        kmin = math.ceil(mids[idx] - th - 0.5 - 0.5)
        kmax = math.floor(mids[idx] + th + 0.5 - 0.5)
        for k in range(kmin, kmax + 1):
            centers.append((i_flat[idx], j_flat[idx], k + 0.5))
    centers = np.array(centers)
    keep = np.abs(centers[:, 2] - centers[:, 0] * centers[:, 1] / n) <= th + 0.5
    cubes = [UnitCube(c) for c in centers[keep]]

    n_shifts = max(1, math.ceil(2.0 * (th + 0.5) / 1.5) + 1)
    if tube_budget is None:
        a_count = 2 * n
    else:
        a_count = max(3, min(2 * n, tube_budget // (2 * n_shifts)))
    a_values = np.linspace(-(n - 0.5), n - 0.5, a_count)
    shift_values = np.linspace(-(th + 0.5), th + 0.5, n_shifts) if n_shifts > 1 else np.array([0.0])
    rng = substream(rng_seed, "regulus-shifts")

    span = 2.0 * n + 4.0
    tubes = []

    def ruling_tube(a, v, family):
        if family == 0:
            d = np.array([0.0, 1.0, a / n])
            p0 = np.array([a, -n - 2.0, a * (-n - 2.0) / n + v])
        else:
            d = np.array([1.0, 0.0, a / n])
            p0 = np.array([-n - 2.0, a, a * (-n - 2.0) / n + v])
        s = np.linalg.norm(d)
        return Tube(base=p0, direction=d / s, radius=1.0, length=float(span * s))

    for family in (0, 1):
        tubes.append(ruling_tube(0.0, 0.0, family))
        for a in a_values:
            for v0 in shift_values:
                v = v0 + rng.uniform(-0.2, 0.2)
                tubes.append(ruling_tube(float(a), float(v), family))

    config, _ = _measure_params(
        n, sigma, "regulus", cubes, tubes, {"surface": {"type": "regulus", "scale": n}},
        rho_floor=2,
    )
    return config


def slab_surface_poly(config: TubeConfig) -> Poly3:
    """Product of the slab's layer mid-planes: P = prod (x1 - level)."""
    info = config.params.get("surface", {})
    if info.get("type") != "sheets":
        raise PreconditionError("config has no sheet surface")
    from numpy.polynomial import polynomial as npoly

    return Poly3.from_univariate(npoly.polyfromroots(info["levels"]), axis=info["axis"])


def regulus_surface_poly(config: TubeConfig) -> Poly3:
    """The regulus itself: P = x1*x2 - n*x3 (gradient (x2, x1, -n))."""
    info = config.params.get("surface", {})
    if info.get("type") != "regulus":
        raise PreconditionError("config has no regulus surface")
    s = info["scale"]
    return Poly3.from_terms(2, {(1, 1, 0): 1.0, (0, 0, 1): -float(s)})


# ---------------------------------------------------------------------------
# hypotheses checker


@dataclass
class ConditionReport:
    name: str
    passed: bool
    worst_value: float
    bound: str
    witnesses: list


@dataclass
class HypothesesReport:
    per_tube: ConditionReport
    per_cube: ConditionReport
    multiplicity: ConditionReport
    directions: ConditionReport

    @property
    def passed(self) -> bool:
        return all(
            c.passed for c in (self.per_tube, self.per_cube, self.multiplicity, self.directions)
        )

    def conditions(self):
        return [self.per_tube, self.per_cube, self.multiplicity, self.directions]


def _canonical_dirs(vectors: np.ndarray) -> np.ndarray:
    """Flip each unit vector so its largest-|.| component is positive."""
    v = np.array(vectors, dtype=float)
    idx = np.argmax(np.abs(v), axis=1)
    signs = np.sign(v[np.arange(v.shape[0]), idx])
    signs[signs == 0] = 1.0
    return v * signs[:, None]


def check_hypotheses(
    config: TubeConfig,
    inc: IncidenceSet | None = None,
    rng_seed: int = 0,
    grid_limit: int = 100_000,
) -> HypothesesReport:
    """Evaluate the four incidence hypotheses against the measured E, rho.

    1. every tube meets between N and E*N cubes;
    2. every cube meets between rho and E*rho tubes;
    3. no point of the half-integer grid lies in more than E*rho tubes
       (grid nodes are sub-sampled to `grid_limit` with the seeded stream);
    4. for every cube, no pair of directions captures too many of its
       tubes: at least a fraction 1/E of the incident tubes must make an
       angle >= 1/E with both members of the pair.  Candidate pairs are the
       cube's own incident directions - a cap pair that swallows all but a
       1/E fraction must sit within the cap radius of incident directions,
       so this finite sweep is equivalent to a mesh-E/4 net sweep.
    """
    if inc is None:
        inc = incidences(config)
    n = config.params["n"]
    e = config.params["e"]
    rho = config.params["rho"]

    tube_counts = inc.tube_counts()
    lo_t, hi_t = float(n), float(e * n)
    bad_t = np.nonzero((tube_counts < lo_t) | (tube_counts > hi_t))[0]
    per_tube = ConditionReport(
        name="per-tube cube count",
        passed=bad_t.size == 0,
        worst_value=float(tube_counts.max(initial=0)),
        bound=f"[{lo_t:g}, {hi_t:g}]",
        witnesses=bad_t[:10].tolist(),
    )

    cube_counts = inc.cube_counts()
    lo_c, hi_c = float(rho), float(e * rho)
    bad_c = np.nonzero((cube_counts < lo_c) | (cube_counts > hi_c))[0]
    per_cube = ConditionReport(
        name="per-cube tube count",
        passed=bad_c.size == 0,
        worst_value=float(cube_counts.max(initial=0)),
        bound=f"[{lo_c:g}, {hi_c:g}]",
        witnesses=bad_c[:10].tolist(),
    )

    multiplicity = _check_grid_multiplicity(config, hi_c, rng_seed, grid_limit)
    directions = _check_direction_spread(config, inc, e)
    return HypothesesReport(
        per_tube=per_tube, per_cube=per_cube, multiplicity=multiplicity, directions=directions
    )


def _check_grid_multiplicity(config, bound, rng_seed, grid_limit):
    centers = config.cube_centers()
    lo = centers.min(axis=0) - 2.0
    hi = centers.max(axis=0) + 2.0
    axes = [np.arange(lo[i], hi[i] + 0.25, 0.5) for i in range(3)]
    total = axes[0].size * axes[1].size * axes[2].size
    if total > grid_limit:
        rng = substream(rng_seed, "grid-multiplicity")
        flat = rng.choice(total, size=grid_limit, replace=False)
        flat.sort()
        i0, rem = np.divmod(flat, axes[1].size * axes[2].size)
        i1, i2 = np.divmod(rem, axes[2].size)
        nodes = np.stack([axes[0][i0], axes[1][i1], axes[2][i2]], axis=1)
    else:
        g = np.meshgrid(*axes, indexing="ij")
        nodes = np.stack([a.ravel() for a in g], axis=1)

    mult = np.zeros(nodes.shape[0], dtype=np.int64)
    for tube in config.tubes:
        w = nodes - tube.base[None, :]
        t = w @ tube.direction
        t = np.clip(t, 0.0, tube.length)
        p = tube.base[None, :] + t[:, None] * tube.direction[None, :]
        inside = ((nodes - p) ** 2).sum(axis=1) <= tube.radius**2 + _TOUCH_TOL
        mult += inside
    worst = int(mult.max(initial=0))
    witnesses = np.nonzero(mult > bound)[0][:10]
    return ConditionReport(
        name="grid point multiplicity",
        passed=worst <= bound,
        worst_value=float(worst),
        bound=f"<= {bound:g}",
        witnesses=[tuple(np.round(nodes[i], 2)) for i in witnesses],
    )


def _direction_spread_fractions(dirs, by_cube: dict, thresh_angle: float, chunk: int = 2048):
    """Worst pair-escape fraction per cube.

    For each cube, over all pairs (v1, v2) of its incident directions (the
    equivalent finite candidate set for the cap-pair sweep), the smallest
    fraction of its tubes making an angle >= thresh_angle with both.
    Returns (cube_ids, fractions) in cube order.
    """
    cube_ids = np.array(sorted(by_cube.keys()), dtype=np.int64)
    if cube_ids.size == 0:
        return cube_ids, np.empty(0)
    n_max = max(len(by_cube[i]) for i in cube_ids)
    fracs = np.empty(cube_ids.size)
    for start in range(0, cube_ids.size, chunk):
        ids = cube_ids[start : start + chunk]
        nc = np.array([len(by_cube[i]) for i in ids])
        pack = np.zeros((ids.size, n_max, 3), dtype=np.float32)
        for row, i in enumerate(ids):
            pack[row, : len(by_cube[i])] = dirs[np.asarray(by_cube[i])]
        dots = np.abs(np.einsum("cia,cja->cij", pack, pack))
        ang = np.arccos(np.clip(dots, -1.0, 1.0))
        wide = (ang >= thresh_angle).astype(np.float32)
        live = (np.linalg.norm(pack, axis=2) > 0.5).astype(np.float32)
        wide *= live[:, :, None] * live[:, None, :]
        gram = np.matmul(np.transpose(wide, (0, 2, 1)), wide)
        # pairs touching padded slots must not drive the minimum
        pair_live = live[:, :, None] * live[:, None, :]
        gram = gram + (1.0 - pair_live) * 1e9
        mins = gram.reshape(ids.size, -1).min(axis=1)
        fracs[start : start + ids.size] = mins / np.maximum(nc, 1)
    return cube_ids, fracs


def _check_direction_spread(config, inc, e):
    thresh = 1.0 / e
    dirs = _canonical_dirs(np.array([t.direction for t in config.tubes]))
    cube_ids, fracs = _direction_spread_fractions(dirs, inc.by_cube(), thresh)
    if cube_ids.size == 0:
        return ConditionReport("direction spread", True, 1.0, f">= {thresh:g}", [])
    k = int(np.argmin(fracs))
    worst_frac = float(fracs[k])
    return ConditionReport(
        name="direction spread",
        passed=worst_frac >= thresh,
        worst_value=worst_frac,
        bound=f">= {thresh:g}",
        witnesses=[int(cube_ids[k])] if worst_frac < thresh else [],
    )


# ---------------------------------------------------------------------------
# tube segments


def segments_between_cubes(tube: Tube, marked: list) -> list:
    """Split the tube at the axis heights of the marked cubes.

    Marked cubes must all meet the tube and be pairwise at distance >= 6
    (center to center); both are checked.  With that spacing, consecutive
    axis heights always differ by > 1, which is asserted.
    """
    if len(marked) < 2:
        raise PreconditionError("need at least two marked cubes")
    centers = np.array([c.center for c in marked])
    for i, cube in enumerate(marked):
        if not tube_cube_intersects(tube, cube):
            raise PreconditionError(f"marked cube {i} does not meet the tube")
    d2 = ((centers[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    if d2.min() < 36.0 - 1e-9:
        raise PreconditionError("marked cubes must be pairwise at distance >= 6")
    heights = np.sort(centers @ tube.direction - tube.base @ tube.direction)
    gaps = np.diff(heights)
    assert np.all(gaps > 1.0), "spacing >= 6 on a common tube forces height gaps > 1"
    segments = []
    for a, b in zip(heights[:-1], heights[1:]):
        t0, t1 = max(float(a), 0.0), min(float(b), tube.length)
        if t1 > t0:
            segments.append(Segment(tube=tube, t0=t0, t1=t1, role="between-cubes", clipped=(t0 != a or t1 != b)))
    return segments


def seg_centered(cube: UnitCube, tube: Tube, k: float, n: float, sigma: float) -> Segment:
    """Length K^-1 N^sigma piece of the 100-fattened tube, centered at the cube.

    The range is clipped to the tube's parameter interval; `clipped` is set
    when the nominal window did not fit (including the whole-tube case).
    """
    if k <= 0 or n <= 1:
        raise PreconditionError("need k > 0 and n > 1")
    fat = Tube(base=tube.base, direction=tube.direction, radius=100.0, length=tube.length)
    h = float((cube.center - tube.base) @ tube.direction)
    half = (n**sigma) / (2.0 * k)
    t0, t1 = h - half, h + half
    c0, c1 = max(t0, 0.0), min(t1, tube.length)
    if c1 <= c0:
        raise PreconditionError("cube projects outside the tube segment")
    return Segment(tube=fat, t0=c0, t1=c1, role="centered-at-cube", clipped=(c0 != t0 or c1 != t1))


# ---------------------------------------------------------------------------
# serialization


def config_to_dict(config: TubeConfig) -> dict:
    return {
        "schema": "kakeya-lab/config-v1",
        "params": config.params,
        "cubes": [[float(v) for v in c.center] for c in config.cubes],
        "cube_side": config.cubes[0].side if config.cubes else 1.0,
        "tubes": [
            {
                "base": [float(v) for v in t.base],
                "direction": [float(v) for v in t.direction],
                "radius": t.radius,
                "length": t.length,
            }
            for t in config.tubes
        ],
    }


def config_from_dict(data: dict) -> TubeConfig:
    if data.get("schema") != "kakeya-lab/config-v1":
        raise PreconditionError("not a kakeya-lab config file")
    side = float(data.get("cube_side", 1.0))
    cubes = [UnitCube(np.array(c), side=side) for c in data["cubes"]]
    tubes = [
        Tube(
            base=np.array(t["base"]),
            direction=np.array(t["direction"]),
            radius=float(t["radius"]),
            length=float(t["length"]),
        )
        for t in data["tubes"]
    ]
    return TubeConfig(cubes=cubes, tubes=tubes, params=dict(data["params"]))
