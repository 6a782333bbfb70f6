"""Dense trivariate polynomials, line restrictions, and real-root counting.

Coefficient layout
------------------
A polynomial of degree bound D on R^3 is stored as one flat float64 vector
of length (D+3 choose 3), ordered by total degree and, within each degree
block, by exponent triple (a, b, c) in lexicographic *descending* order:

    1;  x1, x2, x3;  x1^2, x1*x2, x1*x3, x2^2, x2*x3, x3^2;  x1^3, ...

``monomial_exponents(D)`` materializes this order; ``monomial_index`` is its
closed-form inverse.  The same vector order is used by the fitting code and
by the ``{"degree": D, "coeffs": [...]}`` JSON files, so a coefficient
vector is meaningful on its own.

Evaluation goes through a per-axis-trimmed coefficient cube and
``numpy.polynomial.polynomial.polyval3d``.  Effectively univariate
polynomials of degree > 30 (products of many parallel sheets, say) are
routed through a compensated double-double Horner scheme instead; root
counting for degree > 30 switches to exact rational arithmetic.

High-degree sheet products are so ill-conditioned in the monomial basis
(condition numbers past 1e25 beyond roughly |x| ~ 0.3) that *no*
fixed-precision coefficient evaluation recovers true signs out there —
the rounding of the coefficients alone swamps the value.  Polynomials
constructed from an explicit list of real roots therefore carry their
factorization along (``from_univariate_roots``); evaluation then uses the
numerically benign product of linear factors, which is sign-exact up to
one ulp around each root, while every coefficient-level operation keeps
using the canonical dense vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as npoly

from kakeya_lab.errors import LineInZeroSet, PreconditionError

# Degree above which effectively-univariate evaluation goes compensated and
# root counting goes exact-rational.
HIGH_DEGREE = 30

# Relative coefficient threshold under which a restriction is treated as
# structurally zero by batch helpers (single-line counting uses exact zeros).
_SIGN_TOL = 1e-14


def dim_poly_space(degree: int) -> int:
    """Dimension of the space of degree <= `degree` polynomials on R^3."""
    if degree < 0:
        raise PreconditionError("degree must be >= 0")
    return math.comb(degree + 3, 3)


@lru_cache(maxsize=64)
def monomial_exponents(degree: int) -> np.ndarray:
    """Exponent triples (a, b, c) in storage order, shape (dim, 3)."""
    out = []
    for d in range(degree + 1):
        for a in range(d, -1, -1):
            for b in range(d - a, -1, -1):
                out.append((a, b, d - a - b))
    exps = np.array(out, dtype=np.int64)
    exps.setflags(write=False)
    return exps


def monomial_index(a: int, b: int, c: int) -> int:
    """Position of x1^a x2^b x3^c in the storage order (closed form)."""
    if min(a, b, c) < 0:
        raise PreconditionError("exponents must be non-negative")
    d = a + b + c
    block = dim_poly_space(d - 1) if d > 0 else 0
    m = d - a
    return block + m * (m + 1) // 2 + (m - b)


# ---------------------------------------------------------------------------
# compensated double-double helpers (no FMA in numpy, so Dekker splitting)

_SPLIT = 134217729.0  # 2**27 + 1


def _two_sum(a, b):
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def _two_prod(a, b):
    p = a * b
    ca = _SPLIT * a
    ahi = ca - (ca - a)
    alo = a - ahi
    cb = _SPLIT * b
    bhi = cb - (cb - b)
    blo = b - bhi
    err = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo
    return p, err


def compensated_horner(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Evaluate an ascending-coefficient polynomial with ~2x working precision.

    Classic compensated Horner: run Horner in float64 while accumulating the
    exact rounding residue of every step in a parallel correction term.  The
    result is as accurate as Horner performed in double-double arithmetic.
    """
    x = np.asarray(x, dtype=float)
    s = np.full(x.shape, coeffs[-1], dtype=float)
    corr = np.zeros(x.shape, dtype=float)
    for k in range(len(coeffs) - 2, -1, -1):
        p, pi = _two_prod(s, x)
        s, sg = _two_sum(p, coeffs[k])
        corr = corr * x + (pi + sg)
    return s + corr


# ---------------------------------------------------------------------------


@dataclass
class Poly1:
    """Univariate real polynomial with ascending coefficients.

    Mostly produced by `Poly3.restrict_to_line`; `degree` is the length of
    `coeffs` minus one and may overstate the true degree when trailing
    coefficients vanished in the restriction.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if self.coeffs.ndim != 1 or self.coeffs.size == 0:
            raise PreconditionError("Poly1 needs a non-empty 1-D coefficient array")

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.coeffs.size - 1 > HIGH_DEGREE:
            return compensated_horner(self.coeffs, t)
        return npoly.polyval(t, self.coeffs)

    def derivative(self) -> "Poly1":
        if self.coeffs.size == 1:
            return Poly1(np.zeros(1))
        return Poly1(npoly.polyder(self.coeffs))

    def trimmed(self) -> "Poly1":
        """Drop exactly-zero trailing coefficients."""
        nz = np.nonzero(self.coeffs)[0]
        if nz.size == 0:
            return Poly1(np.zeros(1))
        return Poly1(self.coeffs[: nz[-1] + 1])


class Poly3:
    """Trivariate polynomial of declared degree bound, dense storage.

    Attributes
    ----------
    degree : int
        Declared degree bound D; the actual degree may be lower.
    coeffs : np.ndarray
        Flat coefficient vector of length (D+3 choose 3) in the module's
        graded-lex order.  Treated as immutable.
    """

    def __init__(self, degree: int, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.ndim != 1:
            raise PreconditionError("coeffs must be a 1-D array")
        if coeffs.size != dim_poly_space(degree):
            raise PreconditionError(
                f"degree {degree} needs {dim_poly_space(degree)} coefficients, "
                f"got {coeffs.size}"
            )
        if not np.all(np.isfinite(coeffs)):
            raise PreconditionError("coefficients must be finite")
        self.degree = int(degree)
        self.coeffs = coeffs
        # optional exact factorization {"axis", "roots", "scale"}, meaning
        # P(x) = scale * prod_k (x_axis - roots[k]); set by constructors that
        # know the roots and used by eval() for sign-reliable arithmetic
        self.factored = None
        self._cube = None
        self._grad_cubes = None
        self._hess_cubes = None

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, degree: int = 0) -> "Poly3":
        return cls(degree, np.zeros(dim_poly_space(degree)))

    @classmethod
    def from_terms(cls, degree: int, terms: dict) -> "Poly3":
        """Build from {(a, b, c): coefficient} with declared degree bound."""
        vec = np.zeros(dim_poly_space(degree))
        for (a, b, c), val in terms.items():
            if a + b + c > degree:
                raise PreconditionError("term exceeds the declared degree bound")
            vec[monomial_index(a, b, c)] = val
        return cls(degree, vec)

    @classmethod
    def from_univariate(cls, coeffs_1d, axis: int) -> "Poly3":
        """Lift an ascending univariate coefficient array onto one axis."""
        c = np.asarray(coeffs_1d, dtype=float)
        if c.ndim != 1 or c.size == 0:
            raise PreconditionError("need a non-empty 1-D coefficient array")
        if axis not in (0, 1, 2):
            raise PreconditionError("axis must be 0, 1 or 2")
        d = c.size - 1
        vec = np.zeros(dim_poly_space(d))
        for k, val in enumerate(c):
            e = [0, 0, 0]
            e[axis] = k
            vec[monomial_index(*e)] = val
        return cls(d, vec)

    @classmethod
    def from_univariate_roots(cls, roots, axis: int = 0, scale: float = 1.0) -> "Poly3":
        """Product of linear factors scale * prod (x_axis - root).

        The dense coefficient vector is built as usual, and the exact root
        list is kept as the `factored` annotation so evaluation can use the
        product form (see the module docstring on conditioning)."""
        roots = np.asarray(roots, dtype=float)
        if roots.ndim != 1 or roots.size == 0:
            raise PreconditionError("need a non-empty 1-D array of roots")
        if not np.all(np.isfinite(roots)) or not math.isfinite(scale):
            raise PreconditionError("roots and scale must be finite")
        poly = cls.from_univariate(scale * npoly.polyfromroots(roots), axis)
        poly.factored = {"axis": int(axis), "roots": roots.copy(), "scale": float(scale)}
        return poly

    @classmethod
    def from_dict(cls, data: dict) -> "Poly3":
        if "degree" not in data or "coeffs" not in data:
            raise PreconditionError("polynomial dict needs 'degree' and 'coeffs'")
        poly = cls(int(data["degree"]), np.asarray(data["coeffs"], dtype=float))
        if data.get("factored") is not None:
            f = data["factored"]
            poly.factored = {
                "axis": int(f["axis"]),
                "roots": np.asarray(f["roots"], dtype=float),
                "scale": float(f["scale"]),
            }
        return poly

    def to_dict(self) -> dict:
        out = {
            "schema": "kakeya-lab/poly-v1",
            "degree": self.degree,
            "coeffs": [float(v) for v in self.coeffs],
        }
        if self.factored is not None:
            out["factored"] = {
                "axis": self.factored["axis"],
                "roots": [float(r) for r in self.factored["roots"]],
                "scale": self.factored["scale"],
            }
        return out

    # -- structure ----------------------------------------------------------

    def effective_degree(self, rtol: float = 0.0) -> int:
        """Largest total degree carrying a coefficient, or -1 for the zero poly.

        With rtol > 0, coefficients below rtol * max|coeffs| are ignored.
        """
        scale = np.max(np.abs(self.coeffs)) if self.coeffs.size else 0.0
        if scale == 0.0:
            return -1
        mask = np.abs(self.coeffs) > rtol * scale
        if not mask.any():
            return -1
        exps = monomial_exponents(self.degree)
        return int(exps[mask].sum(axis=1).max())

    def normalized(self) -> "Poly3":
        """Scale so the largest-|.| coefficient is exactly +1 (first on ties)."""
        idx = int(np.argmax(np.abs(self.coeffs)))
        pivot = self.coeffs[idx]
        if pivot == 0.0:
            raise PreconditionError("cannot normalize the zero polynomial")
        out = Poly3(self.degree, self.coeffs / pivot)
        if self.factored is not None:
            out.factored = {**self.factored, "scale": self.factored["scale"] / pivot}
        return out

    def coeff_cube(self) -> np.ndarray:
        """Per-axis-trimmed cube C with C[a, b, c] the coefficient of x1^a x2^b x3^c."""
        if self._cube is None:
            exps = monomial_exponents(self.degree)
            nz = np.nonzero(self.coeffs)[0]
            if nz.size == 0:
                self._cube = np.zeros((1, 1, 1))
            else:
                tops = exps[nz].max(axis=0)
                if np.prod(tops + 1) > 5e7:
                    raise PreconditionError("coefficient cube would be too large")
                cube = np.zeros(tuple(tops + 1))
                keep = np.all(exps <= tops, axis=1)
                e = exps[keep]
                cube[e[:, 0], e[:, 1], e[:, 2]] = self.coeffs[keep]
                self._cube = cube
        return self._cube

    # -- evaluation ---------------------------------------------------------

    def __call__(self, points):
        return self.eval(points)

    def eval(self, points) -> np.ndarray:
        """Evaluate at one point (3,) or a batch (..., 3)."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[-1] != 3:
            raise PreconditionError("points must have shape (..., 3)")
        flat = pts.reshape(-1, 3)
        if self.factored is not None:
            out = self._eval_factored(flat)
        else:
            out = _eval_cube(self.coeff_cube(), flat)
        out = out.reshape(pts.shape[:-1])
        return float(out[0]) if single else out

    def _eval_factored(self, pts: np.ndarray) -> np.ndarray:
        """Product-of-linear-factors evaluation; sign-exact, overflow-safe."""
        info = self.factored
        x = pts[:, info["axis"]]
        out = np.full(x.shape, info["scale"], dtype=float)
        zero = np.zeros(x.shape, dtype=bool)
        with np.errstate(over="ignore", invalid="ignore"):
            for r in info["roots"]:
                f = x - r
                zero |= f == 0.0
                out *= f
        out[zero] = 0.0  # also scrubs inf*0 artifacts after overflow
        return out

    def grad(self, points) -> np.ndarray:
        """Gradient at (3,) -> (3,) or (..., 3) -> (..., 3)."""
        if self._grad_cubes is None:
            cube = self.coeff_cube()
            self._grad_cubes = [_polyder_cube(cube, ax) for ax in range(3)]
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts).reshape(-1, 3)
        out = np.stack([_eval_cube(g, pts) for g in self._grad_cubes], axis=-1)
        return out[0] if single else out

    def hessian(self, points) -> np.ndarray:
        """Hessian at (3,) -> (3, 3) or (..., 3) -> (..., 3, 3)."""
        if self._hess_cubes is None:
            cube = self.coeff_cube()
            firsts = [_polyder_cube(cube, ax) for ax in range(3)]
            self._hess_cubes = {
                (i, j): _polyder_cube(firsts[i], j) for i in range(3) for j in range(i, 3)
            }
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts).reshape(-1, 3)
        h = np.empty((pts.shape[0], 3, 3))
        for (i, j), c in self._hess_cubes.items():
            h[:, i, j] = _eval_cube(c, pts)
            if i != j:
                h[:, j, i] = h[:, i, j]
        return h[0] if single else h

    # -- restriction to lines ----------------------------------------------

    def restrict_to_line(self, base, direction) -> Poly1:
        """Exact composition q(t) = P(base + t * direction).

        `direction` must be unit length to 1e-9.  Trailing coefficients that
        vanish structurally (an axis the line does not move along) come out
        exactly zero and are trimmed.
        """
        q = self.restrict_lines(np.asarray(base, float)[None], np.asarray(direction, float)[None])
        return Poly1(q[0]).trimmed()

    def restrict_lines(self, bases, dirs, chunk: int = 256) -> np.ndarray:
        """Restrict onto many lines at once; returns (L, m) ascending coeffs.

        Rows share one width m; individual lines may have exact zero tails.
        """
        bases = np.asarray(bases, dtype=float)
        dirs = np.asarray(dirs, dtype=float)
        if bases.shape != dirs.shape or bases.ndim != 2 or bases.shape[1] != 3:
            raise PreconditionError("bases and dirs must both have shape (L, 3)")
        norms = np.linalg.norm(dirs, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise PreconditionError("directions must be unit vectors (|.|-1| <= 1e-9)")
        cube = self.coeff_cube()
        pieces = [
            _compose_lines(cube, bases[i : i + chunk], dirs[i : i + chunk])
            for i in range(0, bases.shape[0], chunk)
        ]
        width = max(p.shape[1] for p in pieces)
        out = np.zeros((bases.shape[0], width))
        row = 0
        for p in pieces:
            out[row : row + p.shape[0], : p.shape[1]] = p
            row += p.shape[0]
        return out

    def __repr__(self):
        return f"Poly3(degree={self.degree}, dim={self.coeffs.size})"


# ---------------------------------------------------------------------------
# cube-level helpers


def _polyder_cube(cube: np.ndarray, axis: int) -> np.ndarray:
    if cube.shape[axis] == 1:
        shape = list(cube.shape)
        return np.zeros(tuple(shape))
    return npoly.polyder(cube, m=1, axis=axis)


def _univariate_axis(cube: np.ndarray):
    """Axis index if the cube depends on a single axis, else None."""
    live = [ax for ax in range(3) if cube.shape[ax] > 1]
    if len(live) == 1:
        return live[0]
    return None


def _eval_cube(cube: np.ndarray, pts: np.ndarray, chunk: int = 1 << 18) -> np.ndarray:
    """Evaluate a coefficient cube at (N, 3) points with memory-bounded chunks."""
    ax = _univariate_axis(cube)
    if ax is not None and cube.shape[ax] - 1 > HIGH_DEGREE:
        c1 = cube.reshape(cube.shape[ax])
        return compensated_horner(c1, pts[:, ax])
    if max(cube.shape) == 1:
        return np.full(pts.shape[0], cube[0, 0, 0])
    out = np.empty(pts.shape[0])
    for i in range(0, pts.shape[0], chunk):
        p = pts[i : i + chunk]
        out[i : i + chunk] = npoly.polyval3d(p[:, 0], p[:, 1], p[:, 2], cube)
    return out


def _lin_mul(p: np.ndarray, u0: np.ndarray, u1: np.ndarray) -> np.ndarray:
    """Multiply ascending-coefficient polys (last axis) by (u0 + u1 * t)."""
    if np.all(u1 == 0.0):
        return p * u0
    out = np.zeros(p.shape[:-1] + (p.shape[-1] + 1,))
    out[..., :-1] = p * u0
    out[..., 1:] += p * u1
    return out


def _compose_lines(cube: np.ndarray, bases: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Nested Horner composition of the cube with t -> base + t*dir, batched."""
    length = bases.shape[0]
    da, db, dc = (s - 1 for s in cube.shape)
    u = [(bases[:, i].reshape(length, 1, 1, 1), dirs[:, i].reshape(length, 1, 1, 1)) for i in range(3)]

    # axis 3 (innermost): (L, A, B, m)
    q = np.broadcast_to(cube[None, :, :, dc : dc + 1], (length, da + 1, db + 1, 1)).copy()
    for k in range(dc - 1, -1, -1):
        q = _lin_mul(q, *u[2])
        q[..., 0] += cube[None, :, :, k]

    # axis 2: (L, A, m)
    u20 = u[1][0][..., 0, :]
    u21 = u[1][1][..., 0, :]
    r = q[:, :, db, :]
    for k in range(db - 1, -1, -1):
        r = _lin_mul(r, u20, u21)
        r[..., : q.shape[-1]] += q[:, :, k, :]

    # axis 1: (L, m)
    u10 = u[0][0][..., 0, 0, :]
    u11 = u[0][1][..., 0, 0, :]
    s = r[:, da, :]
    for k in range(da - 1, -1, -1):
        s = _lin_mul(s, u10, u11)
        s[..., : r.shape[-1]] += r[:, k, :]
    return s


# ---------------------------------------------------------------------------
# real-root counting: Descartes / interval-bisection, exact above degree 30


def _shift_by_one(c: list) -> None:
    """In-place Taylor shift p(x) -> p(x + 1)."""
    n = len(c)
    for i in range(n - 1):
        for j in range(n - 2, i - 1, -1):
            c[j] += c[j + 1]


def _taylor_shift(c: list, s) -> None:
    """In-place Taylor shift p(x) -> p(x + s)."""
    n = len(c)
    for i in range(n - 1):
        for j in range(n - 2, i - 1, -1):
            c[j] += s * c[j + 1]


def _variations(c, tol) -> int:
    v = 0
    prev = 0
    for x in c:
        if tol and abs(x) <= tol:
            continue
        if x == 0:
            continue
        s = 1 if x > 0 else -1
        if prev and s != prev:
            v += 1
        prev = s
    return v


def _bound_01(c, tol) -> int:
    """Descartes bound on distinct roots in the open interval (0, 1)."""
    rc = list(c[::-1])
    _shift_by_one(rc)
    return _variations(rc, tol)


def _count_01(c, depth: int, exact: bool) -> int:
    tol = 0.0 if exact else _SIGN_TOL * max(abs(x) for x in c)
    v = _bound_01(c, tol)
    if v == 0:
        return 0
    if v == 1:
        return 1
    if depth <= 0:
        # Unresolved cluster at the subdivision floor (typically an even
        # multiplicity root): counted as one distinct root.
        return 1
    half = Fraction(1, 2) if exact else 0.5
    left = [ci * half**i for i, ci in enumerate(c)]
    right = list(left)
    _shift_by_one(right)
    mid = 0
    if (right[0] == 0) if exact else (abs(right[0]) <= tol):
        mid = 1
        right[0] = type(right[0])(0)
    return _count_01(left, depth - 1, exact) + mid + _count_01(right, depth - 1, exact)


def count_real_roots(q, t0: float, t1: float, *, max_depth: int = 80) -> int:
    """Count distinct real roots of q on the closed interval [t0, t1].

    Multiplicity is ignored: a tangential root counts once.  Clusters that
    survive `max_depth` bisections are counted as a single root (the even
    multiplicity fallback).  Polynomials of degree > 30 are counted in exact
    rational arithmetic, so high-degree products of real-rooted factors are
    handled faithfully.

    Raises LineInZeroSet when every coefficient is exactly zero, and
    PreconditionError when t1 <= t0.
    """
    coeffs = q.coeffs if isinstance(q, Poly1) else np.atleast_1d(np.asarray(q, dtype=float))
    if t1 <= t0:
        raise PreconditionError("need t0 < t1")
    nz = np.nonzero(coeffs)[0]
    if nz.size == 0:
        raise LineInZeroSet(coeffs=coeffs)
    coeffs = coeffs[: nz[-1] + 1]
    if coeffs.size == 1:
        return 0

    exact = coeffs.size - 1 > HIGH_DEGREE
    if exact:
        c = [Fraction(float(x)) for x in coeffs]
        _taylor_shift(c, Fraction(float(t0)))
        h = Fraction(float(t1)) - Fraction(float(t0))
        c = [ci * h**i for i, ci in enumerate(c)]
        ends = sum(1 for val in (c[0], sum(c)) if val == 0)
        if all(ci == 0 for ci in c):  # pragma: no cover - excluded by nz check
            raise LineInZeroSet(coeffs=coeffs)
        return ends + _count_01(c, max(max_depth, 120), True)

    c = list(map(float, coeffs))
    _taylor_shift(c, float(t0))
    h = float(t1) - float(t0)
    c = [ci * h**i for i, ci in enumerate(c)]
    tol = _SIGN_TOL * max(abs(x) for x in c)
    ends = sum(1 for val in (c[0], sum(c)) if abs(val) <= tol)
    return ends + _count_01(c, max_depth, False)


# ---------------------------------------------------------------------------
# batched counting via companion eigenvalues (Monte Carlo throughput path)


def batch_real_roots(coeff_rows: np.ndarray, rtol_trim: float = 1e-12):
    """Real roots of many ascending-coefficient rows at once.

    Returns (line_index, root_value) flat arrays plus a boolean mask of rows
    whose coefficients were all ~zero (relative to the batch scale) and were
    skipped.  Root realness uses |Im| <= 1e-7 * (1 + |Re|).  Near-coincident
    roots are NOT deduplicated; sampled lines almost surely meet a surface
    transversally, and `count_real_roots` remains the careful single-line
    path.
    """
    rows = np.asarray(coeff_rows, dtype=float)
    if rows.ndim != 2:
        raise PreconditionError("coeff_rows must be 2-D")
    scales = np.max(np.abs(rows), axis=1)
    zero_mask = scales == 0.0
    idx_out = []
    root_out = []
    live = np.nonzero(~zero_mask)[0]
    if live.size == 0:
        return np.empty(0, dtype=np.int64), np.empty(0), zero_mask

    live_rows = rows[live] / scales[live, None]
    nz = np.abs(live_rows) > rtol_trim
    degs = nz.shape[1] - 1 - np.argmax(nz[:, ::-1], axis=1)

    for d in np.unique(degs):
        if d == 0:
            continue
        sel = degs == d
        sub = live_rows[sel][:, : d + 1]
        sub_idx = live[sel]
        if d == 1:
            roots = (-sub[:, 0] / sub[:, 1])[:, None]
        else:
            comp = np.zeros((sub.shape[0], d, d))
            comp[:, np.arange(1, d), np.arange(d - 1)] = 1.0
            comp[:, :, -1] = -sub[:, :d] / sub[:, d : d + 1]
            ev = np.linalg.eigvals(comp)
            real = np.abs(ev.imag) <= 1e-7 * (1.0 + np.abs(ev.real))
            roots = np.where(real, ev.real, np.nan)
        keep = np.isfinite(roots)
        counts = keep.sum(axis=1)
        idx_out.append(np.repeat(sub_idx, counts))
        root_out.append(roots[keep])
    if idx_out:
        idx = np.concatenate(idx_out)
        vals = np.concatenate(root_out)
        order = np.lexsort((vals, idx))
        return idx[order], vals[order], zero_mask
    return np.empty(0, dtype=np.int64), np.empty(0), zero_mask


def batch_count_in_range(coeff_rows: np.ndarray, t0, t1, rtol_trim: float = 1e-12):
    """Distinct-root counts per row on [t0, t1] plus the skipped-row mask.

    t0/t1 may be scalars or per-row arrays.
    """
    rows = np.asarray(coeff_rows, dtype=float)
    idx, vals, zero_mask = batch_real_roots(rows, rtol_trim=rtol_trim)
    lo = np.broadcast_to(np.asarray(t0, dtype=float), (rows.shape[0],))
    hi = np.broadcast_to(np.asarray(t1, dtype=float), (rows.shape[0],))
    counts = np.zeros(rows.shape[0], dtype=np.int64)
    if idx.size:
        in_range = (vals >= lo[idx]) & (vals <= hi[idx])
        np.add.at(counts, idx[in_range], 1)
    return counts, zero_mask
