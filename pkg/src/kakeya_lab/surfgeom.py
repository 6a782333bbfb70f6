"""Differential geometry of the zero surface Z(P).

Everything here is derived from exact polynomial derivatives: the unit
normal N = grad P / |grad P|, the shape operator expressed in a
deterministic orthonormal tangent basis (A_ij = e_i^T Hess(P) e_j /
|grad P|), its norm recomputed through an independent coordinate-free
cross-product formula (``sff_norm``) as a cross-validation, the sign of
the Gauss curvature, straight directions (tangent vectors v with
A(v,v) = 0), curvature eigen-directions, the straightness measure S(x, v),
and four scalar "detector" polynomials whose zero sets flag tangency,
straightness, eigenness and the |A| = H level set.

Points too close to a critical point of P (|grad| below ``TOL_GRAD``) are
rejected rather than handled: the intended inputs are generic smooth
surfaces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from kakeya_lab.errors import PreconditionError, ProjectionError, SingularSurfaceError
from kakeya_lab.poly3 import Poly3

TOL_GRAD = 1e-7
_NEWTON_STEPS = 50

DEGENERATE_FLAT = "degenerate-flat"
UMBILIC = "umbilic"


def _surface_tol(poly: Poly3) -> float:
    scale = float(np.max(np.abs(poly.coeffs))) if poly.coeffs.size else 0.0
    return 1e-9 * max(scale, 1.0)


@dataclass
class TangentFrame:
    """Orthonormal frame of Z(P) at an on-surface point.

    `normal` is +grad P / |grad P|; (`basis`[0], `basis`[1]) spans the
    tangent plane with basis[1] = normal x basis[0]; `shape` is the 2x2
    symmetric shape matrix in that basis."""

    point: np.ndarray
    normal: np.ndarray
    basis: tuple
    shape: np.ndarray

    def __post_init__(self):
        for e in self.basis:
            if abs(float(e @ self.normal)) > 1e-9:
                raise PreconditionError("tangent basis must be perpendicular to the normal")
        if abs(float(self.shape[0, 1] - self.shape[1, 0])) > 1e-9:
            raise PreconditionError("shape matrix must be symmetric")

    def frobenius(self) -> float:
        return float(np.sqrt((self.shape**2).sum()))


def _grad_or_raise(poly: Poly3, x: np.ndarray) -> np.ndarray:
    g = poly.grad(x)
    if float(np.linalg.norm(g)) <= TOL_GRAD:
        raise SingularSurfaceError(
            f"gradient norm {np.linalg.norm(g):.3e} below {TOL_GRAD:.0e} at {x.tolist()}"
        )
    return g


def project_to_surface(poly: Poly3, x0, tol: float | None = None) -> np.ndarray:
    """Newton-project a nearby point onto Z(P) along the gradient.

    Iterates x <- x - P(x) grad/|grad|^2 until |P(x)| <= tol; raises
    ProjectionError after 50 steps and SingularSurfaceError if the
    gradient vanishes along the way."""
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (3,):
        raise PreconditionError("x0 must be a 3-vector")
    if tol is None:
        tol = _surface_tol(poly)
    for _ in range(_NEWTON_STEPS):
        val = float(poly(x))
        if abs(val) <= tol:
            return x
        g = _grad_or_raise(poly, x)
        x = x - val * g / float(g @ g)
    if abs(float(poly(x))) <= tol:
        return x
    raise ProjectionError(f"no convergence to |P| <= {tol:.3e} in {_NEWTON_STEPS} steps")


def _tangent_basis(normal: np.ndarray):
    """Deterministic orthonormal tangent pair: Gram-Schmidt of the
    coordinate axis least aligned with the normal, then normal x e1."""
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(normal)))] = 1.0
    e1 = axis - (axis @ normal) * normal
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    return e1, e2


def tangent_frame(poly: Poly3, x) -> TangentFrame:
    """Frame + shape matrix at an on-surface point (|P(x)| <= tol)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise PreconditionError("x must be a 3-vector")
    if abs(float(poly(x))) > _surface_tol(poly):
        raise PreconditionError("point is not on Z(P) within tolerance")
    g = _grad_or_raise(poly, x)
    gn = float(np.linalg.norm(g))
    normal = g / gn
    e1, e2 = _tangent_basis(normal)
    hess = poly.hessian(x)
    shape = np.array(
        [
            [e1 @ hess @ e1, e1 @ hess @ e2],
            [e2 @ hess @ e1, e2 @ hess @ e2],
        ]
    ) / gn
    shape = 0.5 * (shape + shape.T)  # kill roundoff asymmetry
    return TangentFrame(point=x, normal=normal, basis=(e1, e2), shape=shape)


def sff_norm(poly: Poly3, x) -> float:
    """|A| via the coordinate-free formula |grad|^-6 sum_ij [(Hess c_i) . c_j]^2
    with c_i = grad P x E_i over the three coordinate axes.

    Cross-validates the tangent-basis shape matrix: the two must agree to
    1e-9 at any regular surface point."""
    x = np.asarray(x, dtype=float)
    g = _grad_or_raise(poly, x)
    hess = poly.hessian(x)
    eye = np.eye(3)
    c = np.cross(g[None, :], eye)  # rows: grad x E_i
    m = c @ hess @ c.T  # m[i, j] = (Hess c_i) . c_j
    gn2 = float(g @ g)
    return float(np.sqrt((m**2).sum() / gn2**3))


def _curvature_scale(poly: Poly3, x) -> float:
    """Natural size of shape-matrix entries at x, for relative tolerances."""
    g = _grad_or_raise(poly, x)
    h = poly.hessian(x)
    return float(np.sqrt((h**2).sum()) / np.linalg.norm(g))


def gauss_sign(poly: Poly3, x) -> str:
    """Sign of det(shape): 'negative', 'zero' (tolerance band) or 'positive'."""
    frame = tangent_frame(poly, x)
    det = float(np.linalg.det(frame.shape))
    band = 1e-9 * max(frame.frobenius() ** 2, 1e-30)
    if abs(det) <= band:
        return "zero"
    return "negative" if det < 0.0 else "positive"


def _canonical_sign(v: np.ndarray) -> np.ndarray:
    for comp in v:
        if abs(comp) > 1e-12:
            return v if comp > 0.0 else -v
    return v


def straight_directions(poly: Poly3, x):
    """Unit tangent vectors v with A(v, v) = 0.

    Two for negative Gauss sign, one for a rank-one shape in the zero
    band, none for positive sign; a vanishing shape matrix means every
    direction is straight and the string 'degenerate-flat' is returned."""
    frame = tangent_frame(poly, x)
    a, b, d = frame.shape[0, 0], frame.shape[0, 1], frame.shape[1, 1]
    norm = frame.frobenius()
    scale = _curvature_scale(poly, frame.point)
    if norm <= 1e-9 * max(scale, 1e-20):
        return DEGENERATE_FLAT
    sign = gauss_sign(poly, x)
    if sign == "positive":
        return []
    # v = c*e1 + s*e2 with a c^2 + 2b cs + d s^2 = 0
    sols = []
    if abs(d) > 1e-12 * norm:
        disc = max(b * b - a * d, 0.0)
        for t in ((-b + np.sqrt(disc)) / d, (-b - np.sqrt(disc)) / d):
            sols.append(np.array([1.0, t]) / np.hypot(1.0, t))
    else:
        sols.append(np.array([0.0, 1.0]))  # s = 1, c = 0 solves d = 0
        if abs(b) > 1e-12 * norm:
            t = -a / (2.0 * b)
            sols.append(np.array([1.0, t]) / np.hypot(1.0, t))
    e1, e2 = frame.basis
    out = []
    for cs in sols:
        v = _canonical_sign(cs[0] * e1 + cs[1] * e2)
        if not any(np.allclose(v, w, atol=1e-9) for w in out):
            out.append(v)
    if sign == "zero":
        out = out[:1]
    return out


def eigen_directions(poly: Poly3, x):
    """Principal curvature directions, or 'umbilic' if the eigenvalues tie."""
    frame = tangent_frame(poly, x)
    vals, vecs = np.linalg.eigh(frame.shape)
    if abs(vals[1] - vals[0]) <= 1e-8 * max(frame.frobenius(), 1.0):
        return UMBILIC
    e1, e2 = frame.basis
    return [
        _canonical_sign(vecs[0, k] * e1 + vecs[1, k] * e2) for k in range(2)
    ]


def straightness_measure(poly: Poly3, x, v) -> float:
    """S(x, v): distance from v to the nearest straight direction
    (negative Gauss sign), to the nearest eigen-direction (otherwise),
    or 1 at umbilic points."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    frame = tangent_frame(poly, x)
    if abs(float(np.linalg.norm(v)) - 1.0) > 1e-6 or abs(float(v @ frame.normal)) > 1e-6:
        raise PreconditionError("v must be a unit tangent vector (within 1e-6)")
    sign = gauss_sign(poly, x)
    if sign == "negative":
        targets = straight_directions(poly, x)
    else:
        targets = eigen_directions(poly, x)
        if targets == UMBILIC:
            return 1.0
    if targets == DEGENERATE_FLAT or not targets:
        return 1.0
    best = np.inf
    for w in targets:
        best = min(best, float(np.linalg.norm(v - w)), float(np.linalg.norm(v + w)))
    return best


def detector_values(poly: Poly3, x, w, h_level: float) -> dict:
    """The four detector polynomials evaluated at x for probe direction w.

    tan = grad.w (tangency); str = (grad x w)^T Hess (grad x w)
    (straightness of grad x w); eig = (grad x w)^T Hess (grad x (grad x w))
    (eigenness); aH = H^2 |grad|^6 - sum_ij [(grad x E_i)^T Hess (grad x E_j)]^2
    (the |A| = H level set).  Pure evaluations — no on-surface requirement."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    g = poly.grad(x)
    hess = poly.hessian(x)
    c = np.cross(g, w)
    eye = np.eye(3)
    cs = np.cross(g[None, :], eye)
    m = cs @ hess @ cs.T
    gn2 = float(g @ g)
    return {
        "tan": float(g @ w),
        "str": float(c @ hess @ c),
        "eig": float(c @ hess @ np.cross(g, c)),
        "aH": float(h_level**2 * gn2**3 - (m**2).sum()),
    }


def detector_degrees(degree: int) -> dict:
    """Degree bounds of the four detectors for a degree-D input."""
    return {"tan": degree, "str": 3 * degree, "eig": 4 * degree, "aH": 6 * degree}
