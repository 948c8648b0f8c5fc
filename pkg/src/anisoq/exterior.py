"""Exact exterior algebra on 2-vectors in R^4.

Everything in this package uses one fixed coordinate convention for
Lambda^2 R^4, declared here once and used bit-exactly everywhere:

* ordered basis  (e12, e13, e14, e23, e24, e34),
* wedge coefficients  p_ij = u_i v_j - u_j v_i,
* Pluecker form  Pl(p) = p12*p34 - p13*p24 + p14*p23, which vanishes
  exactly on simple (decomposable) 2-vectors,
* graph lift  LambdaM(X) = wedge of the two columns of (id_2; X):

      LambdaM(X) = e12 + X[0,1] e13 + X[1,1] e14
                       - X[0,0] e23 - X[1,0] e24 + det(X) e34,

* minors vector  ad(X) = (X[0,0], X[0,1], X[1,0], X[1,1], det X).

The map between ad(X) and the non-e12 coefficients of LambdaM(X) is
therefore (e13, e14, e23, e24, e34) <-> (+X01, +X11, -X00, -X10, +det).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

# index pairs (i, j) of the ordered basis e_i ^ e_j
BASIS_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))

E12 = np.array([1.0, 0.0, 0.0, 0.0, 0.0, 0.0])
E34 = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 1.0])

HORIZONTAL = "horizontal"
VERTICAL = "vertical"
MIXED = "mixed"

DEFAULT_SIMPLE_TOL = 1e-10


class MultiVector2:
    """Element of Lambda^2 R^4 in the fixed basis (e12,e13,e14,e23,e24,e34)."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        c = np.asarray(coeffs, dtype=float)
        if c.shape != (6,):
            raise ValueError("MultiVector2 needs exactly 6 coefficients")
        self.coeffs = c

    def norm(self):
        return float(np.linalg.norm(self.coeffs))

    def plucker(self):
        return plucker(self.coeffs)

    def is_simple(self, tol=DEFAULT_SIMPLE_TOL):
        return is_simple(self.coeffs, tol)

    def __repr__(self):
        return f"MultiVector2({self.coeffs.tolist()})"

    def __eq__(self, other):
        if not isinstance(other, MultiVector2):
            return NotImplemented
        return bool(np.array_equal(self.coeffs, other.coeffs))

    def to_json(self):
        return json.dumps(self.coeffs.tolist())

    @classmethod
    def from_json(cls, s):
        return cls(json.loads(s))


def _coeffs(v):
    """Accept a MultiVector2 or a length-6 array."""
    if isinstance(v, MultiVector2):
        return v.coeffs
    return np.asarray(v, dtype=float)


def wedge(u, v):
    """Wedge product of two vectors of R^4 as a length-6 coefficient array."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.array([u[i] * v[j] - u[j] * v[i] for (i, j) in BASIS_PAIRS])


def plucker(v):
    """Pluecker quadratic form; zero exactly on simple 2-vectors."""
    p = _coeffs(v)
    return float(p[0] * p[5] - p[1] * p[4] + p[2] * p[3])


def is_simple(v, tol=DEFAULT_SIMPLE_TOL):
    """Relative simplicity test: |Pl(v)| <= tol * (1 + ||v||^2)."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    p = _coeffs(v)
    return bool(abs(plucker(p)) <= tol * (1.0 + float(p @ p)))


def lambda_m(X):
    """Tangent 2-vector of the graph of x -> X x, i.e. wedge of the columns of (id; X).

    The e12 coefficient is identically 1; the remaining coefficients are the
    signed 1x1 minors of X and det(X), per the module sign table.
    """
    X = np.asarray(X, dtype=float)
    return np.array(
        [1.0, X[0, 1], X[1, 1], -X[0, 0], -X[1, 0], X[0, 0] * X[1, 1] - X[0, 1] * X[1, 0]]
    )


def lambda_m_batch(Xs):
    """Vectorised lambda_m for an (N, 2, 2) stack of matrices."""
    Xs = np.asarray(Xs, dtype=float)
    n = Xs.shape[0]
    out = np.empty((n, 6))
    out[:, 0] = 1.0
    out[:, 1] = Xs[:, 0, 1]
    out[:, 2] = Xs[:, 1, 1]
    out[:, 3] = -Xs[:, 0, 0]
    out[:, 4] = -Xs[:, 1, 0]
    out[:, 5] = Xs[:, 0, 0] * Xs[:, 1, 1] - Xs[:, 0, 1] * Xs[:, 1, 0]
    return out


def ad(X):
    """Minors vector (X00, X01, X10, X11, det X) of a 2x2 matrix."""
    X = np.asarray(X, dtype=float)
    return np.array(
        [X[0, 0], X[0, 1], X[1, 0], X[1, 1], X[0, 0] * X[1, 1] - X[0, 1] * X[1, 0]]
    )


@dataclass(frozen=True)
class OrientedPlane:
    """Oriented 2-plane in R^4: an orthonormal basis plus its unit wedge.

    basis is a (4, 2) array whose columns b1, b2 are orthonormal; vector is
    the length-6 coefficient array of b1 ^ b2 (unit and simple).
    """

    basis: np.ndarray
    vector: np.ndarray

    @classmethod
    def from_basis(cls, b1, b2, tol=1e-12):
        b1 = np.asarray(b1, dtype=float)
        b2 = np.asarray(b2, dtype=float)
        g = np.array([[b1 @ b1, b1 @ b2], [b1 @ b2, b2 @ b2]])
        if np.max(np.abs(g - np.eye(2))) > tol:
            raise ValueError("non-orthonormal basis")
        return cls(basis=np.stack([b1, b2], axis=1), vector=wedge(b1, b2))

    @classmethod
    def from_bivector(cls, v, tol=1e-9):
        """Recover the oriented plane of a unit simple 2-vector.

        The 2-vector is viewed as the antisymmetric contraction matrix
        A x = sum_ij p_ij (e_i <e_j, x> - e_j <e_i, x>); for a simple
        2-vector the range of A is the plane, recovered by SVD.
        """
        p = _coeffs(v)
        nrm = float(np.linalg.norm(p))
        if nrm == 0.0:
            raise ValueError("zero 2-vector has no plane")
        if not is_simple(p / nrm, tol):
            raise ValueError("2-vector is not simple")
        A = np.zeros((4, 4))
        for k, (i, j) in enumerate(BASIS_PAIRS):
            A[i, j] = p[k]
            A[j, i] = -p[k]
        U, _, _ = np.linalg.svd(A)
        b1, b2 = U[:, 0], U[:, 1]
        if wedge(b1, b2) @ p < 0.0:
            b1, b2 = b2, b1
        return cls.from_basis(b1, b2)

    def check(self, tol=1e-12):
        g = self.basis.T @ self.basis
        if np.max(np.abs(g - np.eye(2))) > tol:
            raise ValueError("non-orthonormal basis")
        if abs(plucker(self.vector)) > tol:
            raise ValueError("plane 2-vector is not simple")
        if abs(np.linalg.norm(self.vector) - 1.0) > tol:
            raise ValueError("plane 2-vector is not unit")


def principal_angles(p, q):
    """Principal angles (theta1 <= theta2) between two oriented planes, radians.

    The cosines are the singular values of the 2x2 matrix of pairwise basis
    inner products; for compatibly oriented planes their product equals the
    inner product of the two unit wedges.
    """
    p.check()
    q.check()
    g = p.basis.T @ q.basis
    s = np.linalg.svd(g, compute_uv=False)
    s = np.clip(s, -1.0, 1.0)
    th = np.sort(np.arccos(s))
    return float(th[0]), float(th[1])


def _classify_from_blocks(mh, mv, eps, strict):
    """Classification from the two 2x2 projection blocks of an orthonormal basis."""
    thresh = 1.0 / (1.0 + eps)
    sh = np.linalg.svd(mh, compute_uv=False)
    sv = np.linalg.svd(mv, compute_uv=False)
    det_h = float(np.linalg.det(mh))
    det_v = float(np.linalg.det(mv))
    if strict:
        horiz = sh[-1] > thresh and det_h > 0.0
        vert = sv[-1] > thresh and det_v < 0.0
    else:
        horiz = sh[-1] >= thresh and det_h > 0.0
        vert = sv[-1] >= thresh and det_v < 0.0
    if horiz:
        return HORIZONTAL
    if vert:
        return VERTICAL
    return MIXED


def classify_plane(plane, eps, strict=False):
    """eps-horizontal / eps-vertical / mixed decision for an oriented plane.

    Horizontal: the projection onto the e12-plane restricted to the plane is
    orientation-preserving with (1+eps)-Lipschitz inverse, i.e. both singular
    values of the projection block are >= 1/(1+eps) and its determinant is
    positive.  Vertical is the analogue for the e34-plane with the reversed
    orientation e4 ^ e3 (so the determinant of the e34 block is negative).
    `strict` uses strict inequalities on the singular values, assigning
    boundary cases to mixed (used for open classifier sets).

    The decision is by singular values directly; the scalar inner-product
    test <v, e12> >= ||v||/(1+eps) is only a sufficient condition for
    horizontal and is deliberately not used here.
    """
    if not (0.0 < eps < 1.0):
        raise ValueError("eps must be in (0, 1)")
    if not isinstance(plane, OrientedPlane):
        plane = OrientedPlane.from_bivector(plane)
    plane.check(tol=1e-9)
    B = plane.basis
    return _classify_from_blocks(B[:2, :], B[2:, :], eps, strict)


def classify_bivector(v, eps, strict=False):
    """Classify the plane of a simple 2-vector (need not be unit)."""
    p = _coeffs(v)
    return classify_plane(OrientedPlane.from_bivector(p / np.linalg.norm(p)), eps, strict)


def classify_batch(b1s, b2s, eps, strict=False):
    """Classify many planes given (N, 4) spanning vector pairs (not nec. orthonormal).

    Gram-Schmidt preserves span and orientation, so the classification agrees
    with classify_plane on each row.  Returns an array of label strings.
    """
    if not (0.0 < eps < 1.0):
        raise ValueError("eps must be in (0, 1)")
    b1s = np.asarray(b1s, dtype=float)
    b2s = np.asarray(b2s, dtype=float)
    e1 = b1s / np.linalg.norm(b1s, axis=1, keepdims=True)
    proj = np.sum(b2s * e1, axis=1, keepdims=True)
    w = b2s - proj * e1
    e2 = w / np.linalg.norm(w, axis=1, keepdims=True)
    B = np.stack([e1, e2], axis=2)  # (N, 4, 2)
    mh = B[:, :2, :]
    mv = B[:, 2:, :]
    sh = np.linalg.svd(mh, compute_uv=False)
    sv = np.linalg.svd(mv, compute_uv=False)
    det_h = mh[:, 0, 0] * mh[:, 1, 1] - mh[:, 0, 1] * mh[:, 1, 0]
    det_v = mv[:, 0, 0] * mv[:, 1, 1] - mv[:, 0, 1] * mv[:, 1, 0]
    thresh = 1.0 / (1.0 + eps)
    if strict:
        horiz = (sh[:, -1] > thresh) & (det_h > 0.0)
        vert = (sv[:, -1] > thresh) & (det_v < 0.0)
    else:
        horiz = (sh[:, -1] >= thresh) & (det_h > 0.0)
        vert = (sv[:, -1] >= thresh) & (det_v < 0.0)
    out = np.full(b1s.shape[0], MIXED, dtype=object)
    out[horiz] = HORIZONTAL
    out[vert & ~horiz] = VERTICAL
    return out


def scalar_horizontal_test(v, eps):
    """Sufficient scalar test for eps-horizontal: <v, e12> >= ||v||/(1+eps)."""
    p = _coeffs(v)
    return bool(p[0] >= np.linalg.norm(p) / (1.0 + eps))


def scalar_vertical_test(v, eps):
    """Sufficient scalar test for eps-vertical: <v, e43> >= ||v||/(1+eps)."""
    p = _coeffs(v)
    return bool(-p[5] >= np.linalg.norm(p) / (1.0 + eps))
