"""Shadow measurements and cutting contagion along tube segments.

A tube segment is "good" for a polynomial P when the zero surface,
thickened by R and intersected with the segment, casts a small shadow on
the cross-section plane: the area of the axis-parallel projection is
estimated by throwing axis-parallel random lines through the radius-(R+1)
cross-section disk and asking whether the line meets Z(P) within the
segment's height range.  Hits are decided by exact root counting on the
univariate restriction, never by sign sampling — sign changes miss thin
sheets and tangent crossings.

``classify_segments`` applies the good/bad threshold (100n)^-n r^(2n)
with n = 3 to every inter-cube segment, and ``verify_contagion`` checks
the advertised consequence empirically: if P cuts the marked cubes at
scale r, probe cubes placed on good segments should be cut at scale 2r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from kakeya_lab.cutting import cuts_at_scale
from kakeya_lab.errors import PreconditionError
from kakeya_lab.geometry import Segment, Tube, UnitCube, segments_between_cubes
from kakeya_lab.poly3 import Poly3, batch_count_in_range
from kakeya_lab.seeding import substream

_TASK_LINES = 4096


def default_shadow_radius(r: float) -> float:
    """Neighborhood radius R = 3 + 1/r used by the segment classifier."""
    if not 0.0 < r < 0.5:
        raise PreconditionError("need 0 < r < 0.5")
    return 3.0 + 1.0 / r


def good_threshold(r: float, n: int = 3) -> float:
    """Shadow-area threshold (100 n)^-n r^(2n) separating good from bad."""
    if not 0.0 < r < 0.5:
        raise PreconditionError("need 0 < r < 0.5")
    return float((100.0 * n) ** (-n) * r ** (2 * n))


@dataclass
class SegmentReport:
    """Per-segment shadow estimate and the good/bad verdict."""

    segment: Segment
    shadow_area: float
    is_good: bool
    threshold: float
    lines_sampled: int
    lines_excluded: int = 0

    def __post_init__(self):
        if self.is_good != (self.shadow_area <= self.threshold):
            raise PreconditionError("is_good must equal shadow_area <= threshold")

    def to_dict(self) -> dict:
        return {
            "t0": self.segment.t0,
            "t1": self.segment.t1,
            "shadow_area": self.shadow_area,
            "is_good": self.is_good,
            "threshold": self.threshold,
            "lines_sampled": self.lines_sampled,
            "lines_excluded": self.lines_excluded,
        }


@dataclass
class ContagionReport:
    """Outcome of probing good segments at the doubled scale."""

    segments: list
    probes: int
    passes: int
    marked_checked: int

    @property
    def fraction_passed(self) -> float:
        # no good segments -> nothing to refute; report full marks
        return self.passes / self.probes if self.probes else 1.0

    def to_dict(self) -> dict:
        return {
            "segments": [s.to_dict() for s in self.segments],
            "probes": self.probes,
            "passes": self.passes,
            "marked_checked": self.marked_checked,
            "fraction_passed": self.fraction_passed,
        }


def _disk_basis(direction: np.ndarray):
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(direction)))] = 1.0
    u = axis - (axis @ direction) * direction
    u /= np.linalg.norm(u)
    return u, np.cross(direction, u)


def _shadow_details(
    poly: Poly3,
    seg: Segment,
    radius: float,
    lines: int,
    rng_seed: int,
    stream_index: int = 0,
):
    """(shadow_area, valid_lines, excluded_lines) for one segment."""
    if radius < 1.0:
        raise PreconditionError("need R >= 1")
    if lines < 1:
        raise PreconditionError("need at least one line")
    tube = seg.tube
    direction = tube.direction
    u, w = _disk_basis(direction)
    start = tube.base + seg.t0 * direction
    height = seg.t1 - seg.t0
    disk_r = radius + 1.0
    hits = 0
    valid = 0
    excluded = 0
    done = 0
    task = 0
    while done < lines:
        n = min(_TASK_LINES, lines - done)
        rng = substream(rng_seed, "shadow-lines", stream_index * 100_003 + task)
        rad = disk_r * np.sqrt(rng.uniform(0.0, 1.0, n))
        phi = rng.uniform(0.0, 2.0 * math.pi, n)
        offs = (rad * np.cos(phi))[:, None] * u[None, :] + (rad * np.sin(phi))[:, None] * w[None, :]
        bases = start[None, :] + offs
        rows = poly.restrict_lines(bases, np.broadcast_to(direction, (n, 3)))
        counts, zero_mask = batch_count_in_range(rows, 0.0, height)
        ok = ~zero_mask
        hits += int((counts[ok] >= 1).sum())
        valid += int(ok.sum())
        excluded += int(zero_mask.sum())
        done += n
        task += 1
    area = math.pi * disk_r * disk_r * (hits / valid) if valid else 0.0
    return area, valid, excluded


def shadow_area(
    poly: Poly3,
    seg: Segment,
    radius: float,
    lines: int = 20_000,
    rng_seed: int = 0,
) -> float:
    """Monte Carlo area of the axis-parallel shadow of Z(P) in the segment.

    Fraction of lines through the radius-(R+1) cross-section disk whose
    restriction has a real root in the height range, times the disk area.
    Lines lying inside Z(P) are excluded from the fraction (measure zero)."""
    area, _, _ = _shadow_details(poly, seg, radius, lines, rng_seed)
    return area


def classify_segments(
    poly: Poly3,
    tube: Tube,
    marked: list,
    r: float,
    radius: float | None = None,
    lines: int = 2000,
    rng_seed: int = 0,
    threshold: float | None = None,
) -> list:
    """Good/bad verdict for every segment between consecutive marked cubes."""
    if not 0.0 < r < 0.5:
        raise PreconditionError("need 0 < r < 0.5")
    if radius is None:
        radius = default_shadow_radius(r)
    if threshold is None:
        threshold = good_threshold(r)
    segs = segments_between_cubes(tube, marked)
    out = []
    for i, seg in enumerate(segs):
        area, valid, excl = _shadow_details(poly, seg, radius, lines, rng_seed, stream_index=i)
        out.append(
            SegmentReport(
                segment=seg,
                shadow_area=area,
                is_good=area <= threshold,
                threshold=threshold,
                lines_sampled=valid,
                lines_excluded=excl,
            )
        )
    return out


def verify_contagion(
    poly: Poly3,
    tube: Tube,
    marked: list,
    r: float,
    probe_cubes: int = 50,
    radius: float | None = None,
    lines: int = 2000,
    rng_seed: int = 0,
    ball_budget: int = 64,
    samples: int = 10_000,
    threshold: float | None = None,
) -> ContagionReport:
    """Probe good segments at scale 2r after checking the marked premise.

    Raises PreconditionError if P fails to cut any marked cube at scale r
    (the contagion statement assumes it).  Probe cubes are centered on the
    tube axis, at least 0.5 inside their good segment; an empty good set
    yields an empty report, not an error."""
    if not 0.0 < r < 0.25:
        raise PreconditionError("need 0 < r < 0.25 so that 2r is a valid scale")
    for i, cube in enumerate(marked):
        verdict = cuts_at_scale(
            poly, cube, r, ball_budget=ball_budget, samples=samples, rng_seed=rng_seed
        )
        if not verdict.passed:
            raise PreconditionError(f"P does not cut marked cube {i} at scale r={r}")
    reports = classify_segments(
        poly, tube, marked, r, radius=radius, lines=lines, rng_seed=rng_seed, threshold=threshold
    )
    usable = [rep.segment for rep in reports if rep.is_good and rep.segment.t1 - rep.segment.t0 > 1.0]
    probes = 0
    passes = 0
    if usable and probe_cubes > 0:
        rng = substream(rng_seed, "contagion-probes")
        for i in range(probe_cubes):
            seg = usable[i % len(usable)]
            t = rng.uniform(seg.t0 + 0.5, seg.t1 - 0.5)
            center = seg.tube.base + t * seg.tube.direction
            verdict = cuts_at_scale(
                poly,
                UnitCube(center),
                2.0 * r,
                ball_budget=ball_budget,
                samples=samples,
                rng_seed=rng_seed,
            )
            probes += 1
            passes += int(verdict.passed)
    return ContagionReport(
        segments=reports, probes=probes, passes=passes, marked_checked=len(marked)
    )
