"""Randomized degree-reduction experiment over tube configurations.

Given an incidence configuration with measured parameters (N, E, rho),
the experiment fits one low-degree polynomial that is forced — by linear
algebra alone — to have mean zero on a union of cubes chosen along a
random subsample of tubes, then measures how many cubes of the whole
configuration that polynomial actually cuts at scale r.  The plan
parameters follow the randomized construction: target degree
D = ceil(K |X| / N^2), tube-selection probability K^(-1/2) D^2 / |T|,
and ceil(K^(1/2) D) cubes per selected tube, evenly spaced by axis
height.  K is a free experiment knob and is always reported.

``run_lines_mode`` is the exact, non-statistical analogue for lines: a
polynomial of degree D vanishing at more than D points of a line
vanishes on the whole line, so fitting through sampled points forces
identically-zero restrictions, which are asserted symbolically.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from kakeya_lab.cutting import cuts_at_scale, fit_cutting_poly, fit_vanishing_poly
from kakeya_lab.errors import PreconditionError
from kakeya_lab.geometry import TubeConfig, UnitCube, check_hypotheses, incidences
from kakeya_lab.poly3 import Poly3, dim_poly_space
from kakeya_lab.seeding import substream

_SUBSAMPLE_ATTEMPTS = 8


@dataclass
class DegRedPlan:
    """Derived parameters of one degree-reduction run."""

    k: float
    n_cubes: int
    n_tubes: int
    n: float
    degree_target: int
    subsample_prob: float
    cubes_per_tube: int
    scale_r: float

    def __post_init__(self):
        if self.degree_target < 1:
            raise PreconditionError("plan degree must be >= 1")
        if not 0.0 < self.subsample_prob <= 1.0:
            raise PreconditionError("subsample probability must lie in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "n_cubes": self.n_cubes,
            "n_tubes": self.n_tubes,
            "n": self.n,
            "degree_target": self.degree_target,
            "subsample_prob": self.subsample_prob,
            "cubes_per_tube": self.cubes_per_tube,
            "scale_r": self.scale_r,
        }


def build_plan(config: TubeConfig, k: float, r: float) -> DegRedPlan:
    if k <= 0:
        raise PreconditionError("need K > 0")
    n_cubes = len(config.cubes)
    n_tubes = len(config.tubes)
    n = float(config.params["n"])
    degree = math.ceil(k * n_cubes / (n * n))
    prob = min(1.0, k ** -0.5 * degree * degree / n_tubes)
    return DegRedPlan(
        k=k,
        n_cubes=n_cubes,
        n_tubes=n_tubes,
        n=n,
        degree_target=degree,
        subsample_prob=prob,
        cubes_per_tube=math.ceil(k**0.5 * degree),
        scale_r=r,
    )


@dataclass
class DegRedReport:
    """Outcome of one run; `timings` is informational and excluded from
    to_dict so that equal seeds give byte-identical serialized reports."""

    plan: DegRedPlan
    selected_tubes: int
    chosen_cubes: int
    cells: int
    degree_used: int
    fit_residual: float
    fraction_cut: float
    verify_sample: int
    seed: int
    poly: Poly3
    timings: dict = field(default_factory=dict)

    def to_dict(self, include_poly: bool = False) -> dict:
        out = {
            "plan": self.plan.to_dict(),
            "selected_tubes": self.selected_tubes,
            "chosen_cubes": self.chosen_cubes,
            "cells": self.cells,
            "degree_used": self.degree_used,
            "fit_residual": self.fit_residual,
            "fraction_cut": self.fraction_cut,
            "verify_sample": self.verify_sample,
            "seed": self.seed,
        }
        if include_poly:
            out["poly"] = self.poly.to_dict()
        return out


def _evenly_spaced(order: np.ndarray, k: int) -> np.ndarray:
    """First-k stride selection over an already sorted index array."""
    count = order.size
    if count <= k:
        return order
    stride = max(1, count // k)
    return order[::stride][:k]


def smallest_cutting_degree(n_cells: int) -> int:
    """Least degree whose monomial count exceeds the number of constraints."""
    d = 1
    while dim_poly_space(d) <= n_cells:
        d += 1
    return d


def run_degree_reduction(
    config: TubeConfig,
    k: float,
    r: float,
    rng_seed: int = 0,
    verify_sample: int = 256,
    ball_budget: int = 32,
    samples: int = 2000,
    cells_per_axis: int = 1,
    threads: int = 1,
) -> DegRedReport:
    """Fit a mean-zero-on-chosen-cubes polynomial and measure its cutting.

    Requires the per-tube and per-cube incidence hypotheses to hold.  The
    Bernoulli tube subsample is redrawn up to 8 times if empty; fitting
    uses the smallest degree whose monomial count exceeds the cell count,
    so a nonzero kernel vector always exists."""
    if not 0.0 < r < 0.5:
        raise PreconditionError("need 0 < r < 0.5")
    if cells_per_axis < 1:
        raise PreconditionError("cells_per_axis must be >= 1")
    t_start = time.perf_counter()
    plan = build_plan(config, k, r)
    inc = incidences(config)
    hyp = check_hypotheses(config, inc=inc, rng_seed=rng_seed)
    if not (hyp.per_tube.passed and hyp.per_cube.passed):
        raise PreconditionError("per-tube / per-cube incidence hypotheses fail")
    timings = {"plan": time.perf_counter() - t_start}

    t0 = time.perf_counter()
    n_tubes = len(config.tubes)
    selected = np.empty(0, dtype=int)
    for attempt in range(_SUBSAMPLE_ATTEMPTS):
        rng = substream(rng_seed, "tube-subsample", attempt)
        mask = rng.uniform(0.0, 1.0, n_tubes) < plan.subsample_prob
        if mask.any():
            selected = np.nonzero(mask)[0]
            break
    if selected.size == 0:
        raise PreconditionError(
            f"empty tube subsample after {_SUBSAMPLE_ATTEMPTS} draws (K too small)"
        )

    by_tube = inc.by_tube()
    chosen: set = set()
    for t in selected:
        cubes_idx = np.asarray(by_tube.get(int(t), np.empty(0, dtype=int)))
        if cubes_idx.size == 0:
            continue
        tube = config.tubes[int(t)]
        centers = np.array([config.cubes[int(c)].center for c in cubes_idx])
        heights = (centers - tube.base[None, :]) @ tube.direction
        order = cubes_idx[np.argsort(heights, kind="stable")]  # ties -> lower index
        chosen.update(int(c) for c in _evenly_spaced(order, plan.cubes_per_tube))
    chosen_sorted = sorted(chosen)
    timings["select"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    cells = []
    for ci in chosen_sorted:
        cube = config.cubes[ci]
        if cells_per_axis == 1:
            cells.append(cube)
        else:
            m = cells_per_axis
            side = cube.side / m
            offs = (np.arange(m) + 0.5) / m - 0.5
            for ox in offs:
                for oy in offs:
                    for oz in offs:
                        cells.append(
                            UnitCube(cube.center + cube.side * np.array([ox, oy, oz]), side)
                        )
    degree_used = smallest_cutting_degree(len(cells))
    poly, fit_report = fit_cutting_poly(cells, degree_used)
    timings["fit"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    rng = substream(rng_seed, "verify-cubes")
    n_cubes = len(config.cubes)
    sample_size = min(verify_sample, n_cubes)
    sample_idx = np.sort(rng.choice(n_cubes, size=sample_size, replace=False))

    def check(ci: int) -> bool:
        verdict = cuts_at_scale(
            poly,
            config.cubes[int(ci)],
            r,
            ball_budget=ball_budget,
            samples=samples,
            rng_seed=rng_seed,
        )
        return verdict.passed

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(check, sample_idx))
    else:
        results = [check(ci) for ci in sample_idx]
    fraction = float(np.mean(results)) if results else 0.0
    timings["verify"] = time.perf_counter() - t0

    return DegRedReport(
        plan=plan,
        selected_tubes=int(selected.size),
        chosen_cubes=len(chosen_sorted),
        cells=len(cells),
        degree_used=degree_used,
        fit_residual=fit_report.residual,
        fraction_cut=fraction,
        verify_sample=sample_size,
        seed=rng_seed,
        poly=poly,
        timings=timings,
    )


# ---------------------------------------------------------------------------
# exact lines mode


@dataclass
class LinesReport:
    """Fit through >D points per line and the symbolic vanishing check."""

    n_lines: int
    points_per_line: int
    degree: int
    vanished_lines: int
    max_restriction_coeff: float
    fit_residual: float
    poly: Poly3

    def to_dict(self, include_poly: bool = True) -> dict:
        out = {
            "n_lines": self.n_lines,
            "points_per_line": self.points_per_line,
            "degree": self.degree,
            "vanished_lines": self.vanished_lines,
            "max_restriction_coeff": self.max_restriction_coeff,
            "fit_residual": self.fit_residual,
        }
        if include_poly:
            out["poly"] = self.poly.to_dict()
        return out


_RESTRICTION_TOL = 1e-8


def run_lines_mode(
    lines: list,
    points_per_line: int,
    degree_target: int,
    rng_seed: int = 0,
) -> LinesReport:
    """Fit a degree-D polynomial through points_per_line > D points on each
    line, then assert the restriction to every line is the zero polynomial.

    Vanishing at more than D points of a line forces the degree-<=D
    restriction to vanish identically; the check is on exact restriction
    coefficients (after max-coefficient normalization), not on samples."""
    if points_per_line <= degree_target:
        raise PreconditionError("need points_per_line > degree_target")
    if not lines:
        raise PreconditionError("need at least one line")
    bases = []
    dirs = []
    for base, direction in lines:
        b = np.asarray(base, dtype=float)
        d = np.asarray(direction, dtype=float)
        norm = float(np.linalg.norm(d))
        if norm == 0.0:
            raise PreconditionError("line direction must be nonzero")
        bases.append(b)
        dirs.append(d / norm)

    pts = []
    grid = np.linspace(-1.0, 1.0, points_per_line)
    gap = grid[1] - grid[0] if points_per_line > 1 else 1.0
    for i, (b, d) in enumerate(zip(bases, dirs)):
        rng = substream(rng_seed, "line-points", i)
        ts = grid + rng.uniform(-0.25 * gap, 0.25 * gap, points_per_line)
        pts.append(b[None, :] + ts[:, None] * d[None, :])
    points = np.concatenate(pts, axis=0)

    poly = fit_vanishing_poly(points, degree_target)
    residual = float(np.max(np.abs(poly(points))))
    vanished = 0
    worst = 0.0
    for b, d in zip(bases, dirs):
        q = poly.restrict_to_line(b, d)
        top = float(np.max(np.abs(q.coeffs))) if q.coeffs.size else 0.0
        worst = max(worst, top)
        if top <= _RESTRICTION_TOL:
            vanished += 1
    return LinesReport(
        n_lines=len(lines),
        points_per_line=points_per_line,
        degree=degree_target,
        vanished_lines=vanished,
        max_restriction_coeff=worst,
        fit_residual=residual,
        poly=poly,
    )
