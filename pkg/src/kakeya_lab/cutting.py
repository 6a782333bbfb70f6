"""Fitting polynomials that vanish at points or mean-zero over cells, and
Monte Carlo verification that a polynomial cuts a cube at a given scale.

"P cuts Q at scale r" means: for every ball B with radius in [r, 1] and
center within distance 1/r of Q, the positive set {P > 0} fills between
(1/2 - r) and (1/2 + r) of B's volume.  The universal quantifier is
replaced by a finite recorded family of balls (``ball_family``) and the
volume fractions by uniform sampling with a 3-sigma statistical margin,
so verdicts are cheap and reproducible.

Fits are linear-algebra constructions: a kernel vector of the evaluation
matrix (point fits) or of the exact cell-mean matrix (cutting fits).
Mean zero over a cell forces a sign change inside it, which is the linear
surrogate used instead of true volume bisection; whether the result
really cuts is always checked a posteriori with ``cuts_at_scale``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from kakeya_lab.errors import DegradedConditioningError, PreconditionError
from kakeya_lab.geometry import UnitCube
from kakeya_lab.poly3 import Poly3, dim_poly_space, monomial_exponents
from kakeya_lab.seeding import substream, uniform_in_ball

_POINT_RESIDUAL_TOL = 1e-9
_CELL_RESIDUAL_TOL = 1e-8


@dataclass
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.center.shape != (3,):
            raise PreconditionError("ball center must be a 3-vector")
        if not self.radius > 0:
            raise PreconditionError("ball radius must be positive")

    def to_dict(self) -> dict:
        return {"center": [float(v) for v in self.center], "radius": float(self.radius)}


@dataclass
class CutVerdict:
    cube: UnitCube
    scale_r: float
    passed: bool
    worst_ball: dict  # {"center", "radius", "positive_fraction"}
    balls_tested: int
    samples_per_ball: int

    def to_dict(self) -> dict:
        return {
            "scale_r": self.scale_r,
            "passed": self.passed,
            "worst_ball": self.worst_ball,
            "balls_tested": self.balls_tested,
            "samples_per_ball": self.samples_per_ball,
        }


@dataclass
class FitReport:
    degree_used: int
    cells: int
    residual: float
    kernel_dim: int


# ---------------------------------------------------------------------------
# kernel fits


def _kernel_vector(matrix: np.ndarray):
    """Smallest-right-singular-vector kernel extraction with column scaling.

    Returns (coeffs, kernel_dim): coefficients in the original (unscaled)
    column basis, and the numerical kernel dimension of the scaled matrix.
    """
    scale = np.abs(matrix).max(axis=0)
    scale[scale == 0.0] = 1.0
    scaled = matrix / scale[None, :]
    _, s, vt = scipy.linalg.svd(scaled, full_matrices=True)
    n = matrix.shape[1]
    tol = (s[0] if s.size else 0.0) * max(matrix.shape) * np.finfo(float).eps
    rank = int(np.sum(s > tol))
    kernel_dim = n - rank
    coeffs = vt[-1] / scale
    return coeffs, kernel_dim


def fit_vanishing_poly(points, degree: int) -> Poly3:
    """Non-zero polynomial of degree <= `degree` vanishing at all the points.

    Guaranteed to exist when there are fewer points than coefficients
    (dim_poly_space(degree)); degenerate point sets (e.g. collinear) may
    admit a kernel even at or above that count, and are accepted whenever
    a numerical kernel exists.  The result is normalized so its largest
    coefficient is +1 and re-checked: max |P(q_i)| must be <= 1e-9."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise PreconditionError("points must be an (m, 3) array")
    dim = dim_poly_space(degree)
    exps = monomial_exponents(degree)
    vander = (
        pts[:, 0][:, None] ** exps[:, 0][None, :]
        * pts[:, 1][:, None] ** exps[:, 1][None, :]
        * pts[:, 2][:, None] ** exps[:, 2][None, :]
    )
    coeffs, kernel_dim = _kernel_vector(vander)
    if kernel_dim < 1:
        if pts.shape[0] >= dim:
            raise PreconditionError(
                f"{pts.shape[0]} points with only {dim} coefficients at degree "
                f"{degree}: no kernel; use fewer points or a higher degree"
            )
        raise DegradedConditioningError(
            "evaluation matrix has no numerically reliable kernel"
        )
    poly = Poly3(degree, coeffs).normalized()
    residual = float(np.max(np.abs(poly(pts))))
    if residual > _POINT_RESIDUAL_TOL:
        raise DegradedConditioningError(
            f"fitted polynomial misses the points by {residual:.3e} "
            f"(tolerance {_POINT_RESIDUAL_TOL:g})"
        )
    return poly


def _box_power_means(values_lo, values_hi, degree: int) -> np.ndarray:
    """means[i, e] = mean of t^e over [lo_i, hi_i], e = 0..degree (exact)."""
    m = values_lo.shape[0]
    pow_lo = np.empty((m, degree + 2))
    pow_hi = np.empty((m, degree + 2))
    pow_lo[:, 0] = 1.0
    pow_hi[:, 0] = 1.0
    for e in range(1, degree + 2):
        pow_lo[:, e] = pow_lo[:, e - 1] * values_lo
        pow_hi[:, e] = pow_hi[:, e - 1] * values_hi
    widths = values_hi - values_lo
    e1 = np.arange(1, degree + 2)[None, :]
    return (pow_hi[:, 1:] - pow_lo[:, 1:]) / (e1 * widths[:, None])


def _moment_matrix(degree: int, cells) -> np.ndarray:
    """Row i, column k: exact mean of monomial k over cell i (closed form)."""
    exps = monomial_exponents(degree)
    lo = np.array([c.lo for c in cells])
    hi = np.array([c.hi for c in cells])
    per_axis = [_box_power_means(lo[:, d], hi[:, d], degree) for d in range(3)]
    return (
        per_axis[0][:, exps[:, 0]]
        * per_axis[1][:, exps[:, 1]]
        * per_axis[2][:, exps[:, 2]]
    )


def cell_means(poly: Poly3, cells) -> np.ndarray:
    """Exact mean of the polynomial over each axis-aligned cell."""
    return _moment_matrix(poly.degree, cells) @ poly.coeffs


def fit_cutting_poly(cells, degree: int):
    """Non-zero polynomial of degree <= `degree` with exact mean zero over
    every cell, plus a FitReport.

    Mean zero forces a sign change in each cell; at desk scale this
    near-bisects, but ``cuts_at_scale`` remains the arbiter.  Returns
    (Poly3, FitReport); the report's residual is the largest |cell mean|
    after max-coefficient normalization and must be <= 1e-8."""
    cells = list(cells)
    if not cells:
        raise PreconditionError("need at least one cell")
    dim = dim_poly_space(degree)
    moments = _moment_matrix(degree, cells)
    coeffs, kernel_dim = _kernel_vector(moments)
    if kernel_dim < 1:
        if len(cells) >= dim:
            raise PreconditionError(
                f"{len(cells)} cells with only {dim} coefficients at degree "
                f"{degree}: no kernel; use fewer cells or a higher degree"
            )
        raise DegradedConditioningError("moment matrix has no numerically reliable kernel")
    poly = Poly3(degree, coeffs).normalized()
    residual = float(np.max(np.abs(moments @ poly.coeffs)))
    if residual > _CELL_RESIDUAL_TOL:
        raise DegradedConditioningError(
            f"cell means off by {residual:.3e} (tolerance {_CELL_RESIDUAL_TOL:g})"
        )
    report = FitReport(
        degree_used=degree, cells=len(cells), residual=residual, kernel_dim=kernel_dim
    )
    return poly, report


# ---------------------------------------------------------------------------
# Monte Carlo cut verification


def positive_fraction(
    poly: Poly3,
    ball: Ball,
    samples: int = 10_000,
    rng_seed: int = 0,
    stream_tag: str = "positive-fraction",
    stream_index: int = 0,
) -> float:
    """Fraction of the ball's volume where P > 0, by uniform sampling.

    Unbiased; standard error <= 1/(2 sqrt(samples)).  The optional stream
    tag/index select an independent derived RNG stream so that callers
    verifying many balls stay order- and thread-independent."""
    if samples < 1000:
        raise PreconditionError("need samples >= 1000")
    rng = substream(rng_seed, stream_tag, stream_index)
    pts = uniform_in_ball(rng, ball.center, ball.radius, samples)
    return float(np.mean(poly(pts) > 0.0))


def ball_family(cube: UnitCube, r: float, ball_budget: int = 64, rng_seed: int = 0):
    """The recorded finite family standing in for "all balls near Q".

    Radii double from r and are capped at (and include) 1.0.  Centers stay
    within 1/r - radius of the cube center, so each ball lies inside the
    distance-1/r ball around Q.  Per radius, half the centers are
    deterministic (the cube center, six axis points, one extreme point
    along +x1) and half are seeded uniform draws."""
    if not 0.0 < r < 0.5:
        raise PreconditionError("need 0 < r < 1/2")
    if ball_budget < 2:
        raise PreconditionError("need ball_budget >= 2")
    radii = []
    rho = r
    while rho < 1.0:
        radii.append(rho)
        rho *= 2.0
    radii.append(1.0)
    per_radius = max(1, ball_budget // len(radii))
    family = []
    for i, rho in enumerate(radii):
        cap = 1.0 / r - rho
        reach = min(2.0, cap)
        det = [cube.center.copy()]
        for axis in range(3):
            for sign in (1.0, -1.0):
                p = cube.center.copy()
                p[axis] += sign * reach
                det.append(p)
        far = cube.center.copy()
        far[0] += cap
        det.append(far)
        n_det = min(per_radius // 2, len(det))
        n_rand = per_radius - n_det
        rng = substream(rng_seed, "ball-centers", i)
        centers = det[:n_det] + list(uniform_in_ball(rng, cube.center, cap, n_rand))
        family.extend(Ball(center=c, radius=rho) for c in centers)
    return family


def cuts_at_scale(
    poly: Poly3,
    cube: UnitCube,
    r: float,
    ball_budget: int = 64,
    samples: int = 10_000,
    rng_seed: int = 0,
    family=None,
) -> CutVerdict:
    """Monte Carlo verdict on "P cuts Q at scale r".

    Each ball of the family must have its positive fraction within
    r + margin of 1/2, where margin = 3/(2 sqrt(samples)) covers sampling
    noise.  The worst-deviating ball is recorded either way.  Passing an
    explicit `family` freezes the balls (e.g. to compare scales on
    identical data); only the signs of P matter, so scaling P by any
    positive constant cannot change the verdict."""
    if not 0.0 < r < 0.5:
        raise PreconditionError("need 0 < r < 1/2")
    if family is None:
        family = ball_family(cube, r, ball_budget=ball_budget, rng_seed=rng_seed)
    margin = 3.0 / (2.0 * math.sqrt(samples))
    worst_dev = -1.0
    worst = None
    passed = True
    for i, ball in enumerate(family):
        frac = positive_fraction(
            poly, ball, samples=samples, rng_seed=rng_seed,
            stream_tag="cut-ball-samples", stream_index=i,
        )
        dev = abs(frac - 0.5)
        if dev > worst_dev:
            worst_dev = dev
            worst = {**ball.to_dict(), "positive_fraction": frac}
        if dev > r + margin:
            passed = False
    return CutVerdict(
        cube=cube,
        scale_r=r,
        passed=passed,
        worst_ball=worst,
        balls_tested=len(family),
        samples_per_ball=samples,
    )


def alternating_sheets(r: float, axis: int = 0) -> Poly3:
    """Stack of parallel zero-sheets with spacing r^2 spanning |x_axis| <= 1/r.

    P = prod_{k=-M}^{M} (x_axis - k r^2) with M = ceil(1/r^3), the canonical
    example of a polynomial that cuts at scale r: its sign alternates in
    slabs of width r^2 << r, so every admissible ball is nearly bisected."""
    if not 0.0 < r < 0.5:
        raise PreconditionError("need 0 < r < 1/2")
    delta = r * r
    m = math.ceil(1.0 / (r * delta))
    roots = np.arange(-m, m + 1) * delta
    return Poly3.from_univariate_roots(roots, axis=axis)
