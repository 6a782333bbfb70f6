"""Tests for random-line area estimation and planar slice extraction."""

import numpy as np
import numpy.polynomial.polynomial as npoly
import pytest

from kakeya_lab import crofton
from kakeya_lab.crofton import (
    Ball,
    LineSample,
    SliceCurve,
    check_degree_area_bound,
    crofton_calibration,
    estimate_area,
    extract_slice,
    plane_frame,
    sample_lines,
    slice_average,
)
from kakeya_lab.errors import PreconditionError
from kakeya_lab.poly3 import Poly3, monomial_exponents

PLANE_X3 = Poly3.from_univariate([0.0, 1.0], axis=2)
UNIT_SPHERE = Poly3.from_terms(
    2, {(2, 0, 0): 1.0, (0, 2, 0): 1.0, (0, 0, 2): 1.0, (0, 0, 0): -1.0}
)


def planes_product(offsets, axis=2):
    return Poly3.from_univariate(npoly.polyfromroots(list(offsets)), axis=axis)


# ---------------------------------------------------------------------------
# line sampling and calibration


def test_line_samples_perpendicular_and_inside_disk():
    region = Ball(np.array([1.0, -2.0, 0.5]), 3.0)
    lines = sample_lines(region, 2000, rng_seed=11)
    assert len(lines) == 2000
    dirs = np.array([l.dir for l in lines])
    offs = np.array([l.offset for l in lines])
    assert np.abs(np.linalg.norm(dirs, axis=1) - 1.0).max() <= 1e-9
    assert np.abs((dirs * offs).sum(axis=1)).max() <= 1e-9
    r = np.linalg.norm(offs, axis=1)
    assert r.max() <= 3.0 + 1e-12
    # uniform in the disk: mean squared radius R^2/2 (law of large numbers)
    assert abs((r**2).mean() / (9.0 / 2.0) - 1.0) < 0.08


def test_line_sample_rejects_skew_offset():
    with pytest.raises(PreconditionError):
        LineSample(dir=np.array([1.0, 0.0, 0.0]), offset=np.array([0.5, 1.0, 0.0]))


def test_calibration_close_to_half_and_cached():
    kappa = crofton_calibration()
    assert abs(kappa - 0.5) < 0.01
    assert crofton_calibration() == kappa


# ---------------------------------------------------------------------------
# area estimates against known surfaces


def test_plane_section_of_unit_ball_has_area_pi():
    est = estimate_area(PLANE_X3, Ball(np.zeros(3), 1.0), lines=100_000, rng_seed=1)
    assert abs(est / np.pi - 1.0) <= 0.05


def test_unit_sphere_has_area_four_pi():
    est = estimate_area(UNIT_SPHERE, Ball(np.zeros(3), 2.0), lines=100_000, rng_seed=1)
    assert abs(est / (4.0 * np.pi) - 1.0) <= 0.05


def test_three_close_planes_add_up():
    triple = planes_product([-0.05, 0.0, 0.05])
    ball = Ball(np.zeros(3), 1.0)
    est3 = estimate_area(triple, ball, lines=100_000, rng_seed=4)
    est1 = estimate_area(PLANE_X3, ball, lines=100_000, rng_seed=4)
    assert abs(est3 / (3.0 * est1) - 1.0) <= 0.05


def test_rigid_motion_tilted_plane_matches_axis_plane():
    s = 1.0 / np.sqrt(3.0)
    tilted = Poly3.from_terms(1, {(1, 0, 0): s, (0, 1, 0): s, (0, 0, 1): s})
    ball = Ball(np.zeros(3), 1.0)
    a_t = estimate_area(tilted, ball, lines=100_000, rng_seed=5)
    a_z = estimate_area(PLANE_X3, ball, lines=100_000, rng_seed=5)
    assert abs(a_t - a_z) / a_z <= 0.03


def test_monotone_under_adding_surface_sheets():
    # same seed -> same lines; extra factor can only add crossings
    ball = Ball(np.zeros(3), 1.0)
    single = estimate_area(PLANE_X3, ball, lines=20_000, rng_seed=5)
    double = estimate_area(planes_product([0.0, 0.4]), ball, lines=20_000, rng_seed=5)
    assert double >= single


def test_estimate_requires_enough_lines():
    with pytest.raises(PreconditionError):
        estimate_area(PLANE_X3, Ball(np.zeros(3), 1.0), lines=5000)


def test_estimate_deterministic_and_thread_invariant():
    ball = Ball(np.zeros(3), 1.5)
    a = estimate_area(UNIT_SPHERE, ball, lines=20_000, rng_seed=9, threads=1)
    b = estimate_area(UNIT_SPHERE, ball, lines=20_000, rng_seed=9, threads=4)
    c = estimate_area(UNIT_SPHERE, ball, lines=20_000, rng_seed=9, threads=1)
    assert a == b == c
    d = estimate_area(UNIT_SPHERE, ball, lines=20_000, rng_seed=10)
    assert d != a


def test_surface_missing_region_gives_zero():
    far = Poly3.from_terms(
        2, {(2, 0, 0): 1.0, (0, 2, 0): 1.0, (0, 0, 2): 1.0, (0, 0, 0): -1.0e6}
    )
    est = estimate_area(far, Ball(np.zeros(3), 1.0), lines=20_000, rng_seed=0)
    assert est == 0.0


# ---------------------------------------------------------------------------
# degree-area comparisons


def test_full_crossing_planes_hit_the_degree_bound():
    roots = np.linspace(-1.5, 1.5, 5)
    rep = check_degree_area_bound(planes_product(roots), 4.0, trials=40_000, rng_seed=2)
    assert rep["degree"] == 5
    assert abs(rep["bound_ratio"] - 1.0) <= 0.1


def test_axis_plane_ratio_one():
    rep = check_degree_area_bound(PLANE_X3, 4.0, trials=40_000, rng_seed=3)
    assert rep["degree"] == 1
    assert abs(rep["bound_ratio"] - 1.0) <= 0.1


def test_far_surface_ratio_zero():
    far = Poly3.from_terms(
        2, {(2, 0, 0): 1.0, (0, 2, 0): 1.0, (0, 0, 2): 1.0, (0, 0, 0): -1.0e6}
    )
    rep = check_degree_area_bound(far, 4.0, trials=20_000, rng_seed=0)
    assert rep["area"] == 0.0
    assert rep["bound_ratio"] == 0.0


def test_random_sextics_stay_under_bound():
    rng = np.random.default_rng(7)
    dim = monomial_exponents(6).shape[0]
    for i in range(5):
        poly = Poly3(6, rng.standard_normal(dim))
        rep = check_degree_area_bound(poly, 4.0, trials=20_000, rng_seed=i)
        assert rep["bound_ratio"] <= 1.5


def test_degree_uses_effective_degree():
    # declared degree 6 but only the x3 coefficient is nonzero
    padded = Poly3.from_terms(6, {(0, 0, 1): 2.0})
    rep = check_degree_area_bound(padded, 4.0, trials=20_000, rng_seed=1)
    assert rep["degree"] == 1


def test_degree_area_validates_side():
    with pytest.raises(PreconditionError):
        check_degree_area_bound(PLANE_X3, 0.0)


# ---------------------------------------------------------------------------
# planar slices


def test_plane_frame_orthonormal_and_on_plane():
    for a, b in [(0.0, 0.0), (0.1, -1.3), (-0.07, 2.0)]:
        p0, u, w = plane_frame(a, b)
        assert abs(p0[0] + a * p0[1] - b) <= 1e-12
        for v in (u, w):
            assert abs(np.linalg.norm(v) - 1.0) <= 1e-12
            assert abs(v[0] + a * v[1]) <= 1e-12  # tangent to the plane
        assert abs(u @ w) <= 1e-12


def test_circle_slice_length_two_pi():
    cyl = Poly3.from_terms(2, {(0, 2, 0): 1.0, (0, 0, 2): 1.0, (0, 0, 0): -1.0})
    curve = extract_slice(cyl, (0.0, 0.0), ((-1.5, 1.5), (-1.5, 1.5)), 0.02)
    assert len(curve.polylines) == 1
    length = curve.total_length()
    assert abs(length / (2.0 * np.pi) - 1.0) <= 0.01
    verts = curve.polylines[0]
    assert np.allclose(verts[0], verts[-1])  # closed loop
    assert np.abs(verts[:, 0]).max() <= 1e-9  # on the plane x1 = 0
    # on the surface up to first-order interpolation error (|grad| <= 2 here)
    assert np.abs(cyl(verts)).max() <= 2.0 * 0.02


def test_plane_surface_slices_to_straight_line():
    curve = extract_slice(PLANE_X3, (0.0, 0.0), ((-2.0, 2.0), (-1.0, 1.0)), 0.05)
    verts = np.concatenate(curve.polylines)
    assert np.abs(verts[:, 2]).max() <= 1e-9


def test_saddle_slice_is_the_line_x3_equals_x2():
    saddle = Poly3.from_terms(2, {(0, 0, 1): 1.0, (1, 1, 0): -1.0})
    curve = extract_slice(saddle, (0.0, 1.0), ((-2.0, 2.0), (-2.0, 2.0)), 0.05)
    verts = np.concatenate(curve.polylines)
    assert np.abs(verts[:, 0] - 1.0).max() <= 1e-9
    assert np.abs(verts[:, 2] - verts[:, 1]).max() <= 1e-9


def test_slice_components_ordered_by_first_vertex():
    # two radius-0.2 circles at x2 = -1 and x2 = +1 in the plane x1 = 0:
    # expanded product (x2^2+x3^2+2x2+0.96)(x2^2+x3^2-2x2+0.96)
    both = Poly3.from_terms(
        4,
        {
            (0, 4, 0): 1.0,
            (0, 2, 2): 2.0,
            (0, 0, 4): 1.0,
            (0, 2, 0): -2.08,
            (0, 0, 2): 1.92,
            (0, 0, 0): 0.9216,
        },
    )
    curve = extract_slice(both, (0.0, 0.0), ((-2.0, 2.0), (-1.0, 1.0)), 0.02)
    assert len(curve.polylines) == 2
    firsts = [tuple(np.round(pl[0], 9)) for pl in curve.polylines]
    assert firsts == sorted(firsts)


def test_slice_translation_invariance():
    cyl = Poly3.from_terms(2, {(0, 2, 0): 1.0, (0, 0, 2): 1.0, (0, 0, 0): -1.0})
    shifted = Poly3.from_terms(
        2, {(0, 2, 0): 1.0, (0, 0, 2): 1.0, (0, 0, 1): -0.6, (0, 0, 0): -0.91}
    )  # (x2)^2 + (x3 - 0.3)^2 - 1
    base = extract_slice(cyl, (0.0, 0.0), ((-1.5, 1.5), (-1.5, 1.5)), 0.02)
    moved = extract_slice(shifted, (0.0, 0.0), ((-1.5, 1.5), (-1.2, 1.8)), 0.02)
    assert abs(base.total_length() - moved.total_length()) <= 3.0 * 0.02


def test_slice_length_first_order_convergence():
    cyl = Poly3.from_terms(2, {(0, 2, 0): 1.0, (0, 0, 2): 1.0, (0, 0, 0): -1.0})
    window = ((-1.5, 1.5), (-1.5, 1.5))
    coarse = extract_slice(cyl, (0.0, 0.0), window, 0.04).total_length()
    fine = extract_slice(cyl, (0.0, 0.0), window, 0.02).total_length()
    target = 2.0 * np.pi
    assert abs(fine - target) <= abs(coarse - target) + 1e-6
    assert abs(coarse - fine) <= 0.04


def test_extract_slice_validates_cell_and_window():
    with pytest.raises(PreconditionError):
        extract_slice(PLANE_X3, (0.0, 0.0), ((-1.0, 1.0), (-1.0, 1.0)), 0.5)
    with pytest.raises(PreconditionError):
        extract_slice(PLANE_X3, (0.0, 0.0), ((-1.0, 1.0), (-1.0, 1.0)), 0.0)
    with pytest.raises(PreconditionError):
        extract_slice(PLANE_X3, (0.0, 0.0), ((1.0, -1.0), (-1.0, 1.0)), 0.05)


# ---------------------------------------------------------------------------
# slice averages


def chord_oracle(radius):
    """Mean full chord of the radius-R disk over hitting planes, by quadrature."""
    aa = np.linspace(-0.1, 0.1, 201)
    bb = np.linspace(-2.0 * radius, 2.0 * radius, 4001)
    A, B = np.meshgrid(aa, bb, indexing="ij")
    d2 = B**2 / (1.0 + A**2)
    hit = d2 <= radius * radius
    chord = np.where(hit, 2.0 * np.sqrt(np.maximum(radius * radius - d2, 0.0)), 0.0)
    return chord[hit].mean()


def test_slice_average_matches_chord_oracle():
    avg, skipped = slice_average(
        PLANE_X3, lambda p: np.ones(len(p)), 1.0, 2.0, slices=128, rng_seed=3
    )
    assert skipped > 0  # |b| up to 2R: many planes miss the unit disk
    assert abs(avg / chord_oracle(1.0) - 1.0) <= 0.1


def test_slice_average_weights_by_integrand():
    # f = x2^2 along the chord at height 0: integral = 2 u_max^3 / 3 per chord
    def f(p):
        return p[:, 1] ** 2

    avg, _ = slice_average(PLANE_X3, f, 1.0, 2.0, slices=128, rng_seed=3)
    aa = np.linspace(-0.1, 0.1, 201)
    bb = np.linspace(-2.0, 2.0, 4001)
    A, B = np.meshgrid(aa, bb, indexing="ij")
    d2 = B**2 / (1.0 + A**2)
    hit = d2 <= 1.0
    # chord parametrized by u: x2 = (b/(1+a^2))*a + u/sqrt(1+a^2) ... oracle by
    # numeric integration along each hitting chord
    vals = []
    for a, b in zip(A[hit], B[hit]):
        p0, u_hat, w_hat = plane_frame(a, b)
        umax = np.sqrt(max(1.0 - b * b / (1.0 + a * a), 0.0))
        us = np.linspace(-umax, umax, 400)
        x2 = p0[1] + us * u_hat[1]
        vals.append(np.trapezoid(x2**2, us))
    assert abs(avg / np.mean(vals) - 1.0) <= 0.1


def test_slice_average_empty_surface():
    far = Poly3.from_univariate([-100.0, 1.0], axis=2)
    avg, skipped = slice_average(far, lambda p: np.ones(len(p)), 1.0, 2.0, slices=16, rng_seed=0)
    assert avg == 0.0
    assert skipped == 16


def test_slice_average_deterministic():
    out1 = slice_average(PLANE_X3, lambda p: np.ones(len(p)), 1.0, 2.0, slices=32, rng_seed=8)
    out2 = slice_average(PLANE_X3, lambda p: np.ones(len(p)), 1.0, 2.0, slices=32, rng_seed=8)
    assert out1 == out2


def test_slice_average_validates_slices():
    with pytest.raises(PreconditionError):
        slice_average(PLANE_X3, lambda p: np.ones(len(p)), 1.0, 2.0, slices=0)


def test_slice_curve_roundtrip_fields():
    cyl = Poly3.from_terms(2, {(0, 2, 0): 1.0, (0, 0, 2): 1.0, (0, 0, 0): -1.0})
    curve = extract_slice(cyl, (0.0, 0.0), ((-1.5, 1.5), (-1.5, 1.5)), 0.05)
    assert isinstance(curve, SliceCurve)
    assert curve.plane == (0.0, 0.0)
    assert curve.cell_size == 0.05
    assert all(pl.ndim == 2 and pl.shape[1] == 3 for pl in curve.polylines)
