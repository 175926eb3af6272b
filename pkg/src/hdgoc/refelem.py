"""Polynomial bases and quadrature rules on reference simplices.

The reference d-simplex is {x in R^d : x_i >= 0, sum(x) <= 1}, with vertices
at the origin and the unit coordinate vectors; its measure is 1/d!.

Bases are spans of monomials of total degree at most k.  The default kind,
``"orthonormal"``, orthonormalizes the monomials against the exact Gram
matrix of the reference simplex (rational entries, factored in 60-digit
arithmetic), which keeps all element-local inverses well conditioned.  The
``"monomial"`` kind keeps raw monomials and is mainly useful for tests.

Quadrature uses conical-product (collapsed Gauss-Jacobi) rules: positive
weights and exactness for any requested total degree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np
from scipy.special import roots_jacobi

MAX_QUAD_DEGREE = 40


def monomial_exponents(dim: int, degree: int) -> np.ndarray:
    """Multi-indices of total degree <= degree, graded lexicographic order."""
    exps = []
    for total in range(degree + 1):
        exps.extend(_compositions(total, dim))
    return np.array(exps, dtype=int).reshape(len(exps), dim)


def _compositions(total, dim):
    if dim == 1:
        return [(total,)]
    out = []
    for head in range(total, -1, -1):
        out.extend((head,) + tail for tail in _compositions(total - head, dim - 1))
    return out


def simplex_monomial_integral(alpha) -> Fraction:
    """Exact integral of prod(x_i^alpha_i) over the reference simplex.

    Equals prod(alpha_i!) / (sum(alpha) + d)!.
    """
    num = 1
    for a in alpha:
        num *= math.factorial(int(a))
    return Fraction(num, math.factorial(int(sum(alpha)) + len(alpha)))


def _monomial_values(exps: np.ndarray, points: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return np.prod(points[None, :, :] ** exps[:, None, :], axis=2)


def _monomial_gradients(exps: np.ndarray, points: np.ndarray) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n, d = exps.shape
    out = np.zeros((n, points.shape[0], d))
    for c in range(d):
        lowered = exps.copy()
        lowered[:, c] = np.maximum(exps[:, c] - 1, 0)
        vals = np.prod(points[None, :, :] ** lowered[:, None, :], axis=2)
        out[:, :, c] = exps[:, c, None] * vals
    return out


@dataclass(frozen=True)
class QuadratureRule:
    """Quadrature on the reference simplex.

    Attributes
    ----------
    dim : spatial dimension of the simplex.
    degree : requested exactness degree (all polynomials of total degree
        up to this value are integrated exactly).
    points : (n, dim) array of nodes inside the reference simplex.
    weights : (n,) array of positive weights summing to 1/dim!.
    """

    dim: int
    degree: int
    points: np.ndarray
    weights: np.ndarray


def _gauss01(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


def _jacobi01(n, alpha):
    # nodes/weights for integral over [0,1] with weight (1-x)^alpha
    x, w = roots_jacobi(n, alpha, 0.0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


def make_quadrature(dim: int, degree: int) -> QuadratureRule:
    """Build a quadrature rule exact for polynomials of total degree <= degree.

    Parameters
    ----------
    dim : simplex dimension, 1, 2 or 3.
    degree : requested exactness degree, >= 0.

    Raises
    ------
    ValueError if the dimension is unsupported or the degree is negative or
    beyond the implemented range.
    """
    if dim not in (1, 2, 3):
        raise ValueError(f"unsupported simplex dimension {dim}")
    if degree < 0:
        raise ValueError("exactness degree must be >= 0")
    if degree > MAX_QUAD_DEGREE:
        raise ValueError(f"requested degree {degree} beyond implemented range "
                         f"(max {MAX_QUAD_DEGREE})")
    n = max(1, math.ceil((degree + 1) / 2))
    if dim == 1:
        x, w = _gauss01(n)
        pts = x.reshape(-1, 1)
        wts = w
    elif dim == 2:
        x1, w1 = _jacobi01(n, 1.0)
        x2, w2 = _gauss01(n)
        X1, X2 = np.meshgrid(x1, x2, indexing="ij")
        pts = np.column_stack([X1.ravel(), (X2 * (1.0 - X1)).ravel()])
        wts = np.outer(w1, w2).ravel()
    else:
        x1, w1 = _jacobi01(n, 2.0)
        x2, w2 = _jacobi01(n, 1.0)
        x3, w3 = _gauss01(n)
        X1, X2, X3 = np.meshgrid(x1, x2, x3, indexing="ij")
        pts = np.column_stack([
            X1.ravel(),
            (X2 * (1.0 - X1)).ravel(),
            (X3 * (1.0 - X1) * (1.0 - X2)).ravel(),
        ])
        wts = np.einsum("i,j,k->ijk", w1, w2, w3).ravel()
    return QuadratureRule(dim=dim, degree=degree, points=pts, weights=wts)


@lru_cache(maxsize=None)
def _basis_coefficients(dim: int, degree: int, kind: str) -> np.ndarray:
    """Coefficient matrix C with basis_i = sum_j C[i, j] * monomial_j."""
    exps = monomial_exponents(dim, degree)
    n = len(exps)
    if kind == "monomial":
        return np.eye(n)
    if kind != "orthonormal":
        raise ValueError(f"unknown basis kind {kind!r}")
    gram = [[simplex_monomial_integral(exps[i] + exps[j]) for j in range(n)]
            for i in range(n)]
    with mpmath.workdps(60):
        G = mpmath.matrix(n, n)
        for i in range(n):
            for j in range(n):
                G[i, j] = mpmath.mpf(gram[i][j].numerator) / gram[i][j].denominator
        L = mpmath.cholesky(G)
        C = mpmath.inverse(L)
        out = np.array([[float(C[i, j]) for j in range(n)] for i in range(n)])
    return out


def _ref_face_embedding(dim: int, local_face: int):
    """Affine map from the reference (d-1)-simplex onto a local face.

    Local face i is the face opposite reference vertex i; its vertices are
    taken in ascending local-vertex order.
    """
    verts = np.vstack([np.zeros(dim), np.eye(dim)])
    fverts = np.array([verts[j] for j in range(dim + 1) if j != local_face])
    return fverts[0], fverts[1:] - fverts[0]


@dataclass(frozen=True)
class ReferenceBasis:
    """Degree-k basis data on the reference simplex and on its faces.

    Holds tabulated values at the volume and face quadrature nodes plus the
    coefficient matrices needed to evaluate the basis anywhere.  ``psi`` is
    the basis of the face polynomial space (one dimension lower, same
    degree) at the face-rule nodes.  Immutable after construction.
    """

    dim: int
    degree: int
    kind: str
    n_dofs: int
    n_face_dofs: int
    vol_rule: QuadratureRule
    face_rule: QuadratureRule
    exponents: np.ndarray
    coeffs: np.ndarray
    face_exponents: np.ndarray
    face_coeffs: np.ndarray
    phi: np.ndarray           # (m, Q) values at volume nodes
    dphi: np.ndarray          # (m, Q, d) reference gradients at volume nodes
    psi: np.ndarray           # (mf, Qf) face-space values at face nodes
    phi_on_faces: np.ndarray  # (d+1, m, Qf) volume basis traced on local faces
    chat: np.ndarray          # (d, m, m), chat[c][i,j] = int phi_j d_c phi_i
    ref_mass: np.ndarray
    ref_face_mass: np.ndarray

    def eval(self, points: np.ndarray) -> np.ndarray:
        """Basis values at reference points, shape (n_dofs, n_points)."""
        return self.coeffs @ _monomial_values(self.exponents, points)

    def eval_grad(self, points: np.ndarray) -> np.ndarray:
        """Reference gradients at reference points, shape (n_dofs, n, d)."""
        return np.einsum("im,mqc->iqc", self.coeffs,
                         _monomial_gradients(self.exponents, points))

    def eval_face(self, points: np.ndarray) -> np.ndarray:
        """Face-space values at reference face points, shape (n_face_dofs, n)."""
        return self.face_coeffs @ _monomial_values(self.face_exponents, points)

    def constant_coefficients(self) -> np.ndarray:
        """Coefficients c with sum_i c_i phi_i = 1 on the reference simplex."""
        rhs = np.array([float(simplex_monomial_integral(a)) for a in self.exponents])
        return np.linalg.solve(self.ref_mass, self.coeffs @ rhs)


def make_basis(dim: int, degree: int, kind: str = "orthonormal") -> ReferenceBasis:
    """Build the reference basis for P^k on the d-simplex and its faces.

    Parameters
    ----------
    dim : 2 or 3.
    degree : polynomial degree k >= 0.
    kind : "orthonormal" (default) or "monomial".

    Returns
    -------
    ReferenceBasis with n_dofs = C(k+d, d), quadrature exact to degree
    2k+2 on both the element and its faces.
    """
    if dim not in (2, 3):
        raise ValueError(f"unsupported dimension {dim}")
    if degree < 0:
        raise ValueError("polynomial degree must be >= 0")
    exps = monomial_exponents(dim, degree)
    coeffs = _basis_coefficients(dim, degree, kind)
    fexps = monomial_exponents(dim - 1, degree)
    fcoeffs = _basis_coefficients(dim - 1, degree, kind)

    vol_rule = make_quadrature(dim, 2 * degree + 2)
    face_rule = make_quadrature(dim - 1, 2 * degree + 2)

    phi = coeffs @ _monomial_values(exps, vol_rule.points)
    dphi = np.einsum("im,mqc->iqc", coeffs, _monomial_gradients(exps, vol_rule.points))
    psi = fcoeffs @ _monomial_values(fexps, face_rule.points)

    m = len(exps)
    w = vol_rule.weights
    ref_mass = np.einsum("q,iq,jq->ij", w, phi, phi)
    chat = np.stack([np.einsum("q,jq,iq->ij", w, phi, dphi[:, :, c])
                     for c in range(dim)])
    ref_face_mass = np.einsum("q,iq,jq->ij", face_rule.weights, psi, psi)

    traces = np.empty((dim + 1, m, len(face_rule.weights)))
    for lf in range(dim + 1):
        origin, span = _ref_face_embedding(dim, lf)
        pts = origin + face_rule.points @ span
        traces[lf] = coeffs @ _monomial_values(exps, pts)

    return ReferenceBasis(
        dim=dim, degree=degree, kind=kind,
        n_dofs=m, n_face_dofs=len(fexps),
        vol_rule=vol_rule, face_rule=face_rule,
        exponents=exps, coeffs=coeffs,
        face_exponents=fexps, face_coeffs=fcoeffs,
        phi=phi, dphi=dphi, psi=psi, phi_on_faces=traces,
        chat=chat, ref_mass=ref_mass, ref_face_mass=ref_face_mass,
    )
