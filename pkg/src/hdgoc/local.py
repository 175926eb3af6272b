"""Element-local HDG blocks and static condensation.

Per element the discretization couples four local fields (the two fluxes
and the two scalar states) to the trace unknowns on the element's interior
faces.  This module assembles the dense local matrices of that coupling and
eliminates the local fields, producing each element's contribution to the
globally coupled trace system.

Degree-of-freedom layout, used consistently everywhere:

* scalar fields: m = C(k+d, d) coefficients per element;
* vector fields: component-major, dof (c, i) at index c*m + i, so the
  vector mass matrix is block diagonal with d copies of the scalar mass;
* local stacked unknowns: alpha = [q; p] (both fluxes), beta = [y; z]
  (state and adjoint state), traces = [yhat on interior faces; zhat on
  interior faces], faces in ascending local-face order.

Block names follow the assembled bilinear forms:

    M   scalar mass            Cc[c]  (phi_j, d_c phi_i)
    A2  (phi_j, div Phi_i)     A5     (beta phi_j, grad phi_i)
    A6  <tau1 phi_j, phi_i>    A7     <beta.n phi_j, phi_i>     (all faces)
    per face: T = <psi_j, phi_i>, A3 = <psi_j, Phi_i . n>,
    A8 = tau1*T, A9 = <beta.n psi_j, phi_i>, A10 = <tau1 psi_j, psi_i>,
    A11 = <beta.n psi_j, psi_i>
    A12 = A6 - A5,   A13 = A5 + A6 - A7

with the load vectors b1 = <g, Phi_i . n>, b2 = <(beta.n - tau1) g, phi_i>
(boundary faces only), b3 = (f, phi_i), b4 = (y_d, phi_i), b5 = b3 - b2.

All functions here are pure per-element maps with no shared mutable state,
so they can run concurrently across elements.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, lu_factor, lu_solve

from .mesh import SimplicialMesh
from .problem import ProblemSpec
from .refelem import ReferenceBasis


class AssemblyError(RuntimeError):
    pass


class CondensationError(RuntimeError):
    """A local block lost positive definiteness during elimination."""


@dataclass
class FaceBlocks:
    """Face-coupling matrices of one (element, local face) pair."""

    face: int
    local_face: int
    interior: bool
    normal: np.ndarray
    measure: float
    T: np.ndarray       # (m, mf)   <psi_j, phi_i>
    A3: np.ndarray      # (d*m, mf) <psi_j, Phi_i . n>
    A8: np.ndarray      # (m, mf)   <tau1 psi_j, phi_i>
    A9: np.ndarray      # (m, mf)   <beta.n psi_j, phi_i>
    A10: np.ndarray     # (mf, mf)  <tau1 psi_j, psi_i>
    A11: np.ndarray     # (mf, mf)  <beta.n psi_j, psi_i>
    FM: np.ndarray      # (m, m)    <phi_j, phi_i> on the face
    FMb: np.ndarray     # (m, m)    <beta.n phi_j, phi_i> on the face
    Qn: np.ndarray      # (m, d*m)  <Phi_j . n, phi_i>
    points: np.ndarray
    weights: np.ndarray
    bn: np.ndarray
    trace_phi: np.ndarray  # (m, nq) volume basis at the face nodes


@dataclass
class LocalBlocks:
    """Dense element-local matrices and load vectors."""

    element: int
    dim: int
    n_dofs: int
    n_face_dofs: int
    det: float
    M: np.ndarray
    Cc: np.ndarray      # (d, m, m)
    A2: np.ndarray      # (d*m, m)
    A5: np.ndarray
    A6: np.ndarray
    A7: np.ndarray
    faces: list
    b1: np.ndarray
    b2: np.ndarray
    b3: np.ndarray
    b4: np.ndarray

    @property
    def A1(self) -> np.ndarray:
        return np.kron(np.eye(self.dim), self.M)

    @property
    def A4(self) -> np.ndarray:
        return self.M

    @property
    def A12(self) -> np.ndarray:
        return self.A6 - self.A5

    @property
    def A13(self) -> np.ndarray:
        return self.A5 + self.A6 - self.A7

    @property
    def b5(self) -> np.ndarray:
        return self.b3 - self.b2

    @property
    def interior_faces(self) -> list:
        """Local-face-ordered FaceBlocks of the element's interior faces."""
        return [fb for fb in self.faces if fb.interior]

    @property
    def n_trace_dofs(self) -> int:
        return 2 * len(self.interior_faces) * self.n_face_dofs

    def saddle_blocks(self, gamma: float):
        """The grouped blocks B1..B8 and load vector of the local system.

        Rows/columns follow the alpha/beta/trace layout in the module
        docstring.  The load vector is b = [-b1; 0; b5; b4].
        """
        d, m, mf = self.dim, self.n_dofs, self.n_face_dofs
        dm = d * m
        ifaces = self.interior_faces
        nf = len(ifaces)
        ng = nf * mf

        A3s = (np.hstack([fb.A3 for fb in ifaces]) if nf
               else np.zeros((dm, 0)))
        A8s = (np.hstack([fb.A8 for fb in ifaces]) if nf
               else np.zeros((m, 0)))
        A9s = (np.hstack([fb.A9 for fb in ifaces]) if nf
               else np.zeros((m, 0)))

        A1 = self.A1
        B1 = np.kron(np.eye(2), A1)
        B2 = np.kron(np.eye(2), -self.A2)
        B3 = np.zeros((2 * dm, 2 * ng))
        B3[:dm, :ng] = A3s
        B3[dm:, ng:] = A3s
        B4 = np.block([[self.A12, -self.M / gamma],
                       [self.M, self.A13]])
        B5 = np.zeros((2 * m, 2 * ng))
        B5[:m, :ng] = A9s - A8s
        B5[m:, ng:] = -A8s

        B6 = np.zeros((2 * ng, 2 * dm))
        B7 = np.zeros((2 * ng, 2 * m))
        B8 = np.zeros((2 * ng, 2 * ng))
        for i, fb in enumerate(ifaces):
            r = slice(i * mf, (i + 1) * mf)
            rz = slice(ng + i * mf, ng + (i + 1) * mf)
            B6[r, :dm] = fb.A3.T
            B6[rz, dm:] = fb.A3.T
            B7[r, :m] = fb.A8.T
            B7[rz, m:] = (fb.A8 - fb.A9).T
            B8[r, r] = fb.A11 - fb.A10
            B8[rz, rz] = -fb.A10

        b = np.concatenate([-self.b1, np.zeros(dm), self.b5, self.b4])
        return B1, B2, B3, B4, B5, B6, B7, B8, b


def assemble_local_blocks(mesh: SimplicialMesh, spec: ProblemSpec,
                          basis: ReferenceBasis, element: int,
                          with_loads: bool = True) -> LocalBlocks:
    """Assemble the dense local matrices of one element.

    Parameters
    ----------
    mesh, spec, basis : mesh, problem instance, reference basis (the
        quadrature rules of the basis are used throughout).
    element : element index.
    with_loads : skip the f/g/y_d integrals when False (matrix-only use).

    Raises
    ------
    AssemblyError on a degenerate affine map; IndexError on a bad index.
    """
    if not 0 <= element < mesh.n_elements:
        raise IndexError(f"element {element} out of range")
    d = mesh.dim
    m = basis.n_dofs
    A = mesh.affine_mats[element]
    Ainv = mesh.affine_inv[element]
    det = mesh.affine_dets[element]
    if det <= 1e-14:
        raise AssemblyError(f"element {element}: degenerate affine map "
                            f"(det = {det:.3e})")
    v0 = mesh.vertices[mesh.elements[element, 0]]
    tau1 = spec.tau1

    w = basis.vol_rule.weights
    xq = basis.vol_rule.points @ A.T + v0
    beta_q = spec.beta(xq)
    # physical gradients: grad phi_i = Ainv^T gradref phi_i
    gp = np.einsum("iqD,Dc->iqc", basis.dphi, Ainv)

    M = det * basis.ref_mass
    Cc = det * np.einsum("Dc,Dij->cij", Ainv, basis.chat)
    A2 = Cc.reshape(d * m, m)
    A5 = det * np.einsum("q,jq,iqc,qc->ij", w, basis.phi, gp, beta_q)

    A6 = np.zeros((m, m))
    A7 = np.zeros((m, m))
    b1 = np.zeros(d * m)
    b2 = np.zeros(m)

    faces = []
    psi = basis.psi
    for lf in range(d + 1):
        f = mesh.elem_faces[element, lf]
        fx, fw, normal = mesh.face_quad_points(element, lf, basis.face_rule)
        xi = (fx - v0) @ Ainv.T
        phif = basis.eval(xi)
        bn = spec.beta(fx) @ normal

        wphi = fw * phif            # (m, nq) scaled rows
        FM = wphi @ phif.T
        FMb = (wphi * bn) @ phif.T
        T = wphi @ psi.T
        A9 = (wphi * bn) @ psi.T
        A10 = tau1 * ((fw * psi) @ psi.T)
        A11 = ((fw * bn) * psi) @ psi.T
        A3 = np.concatenate([normal[c] * T for c in range(d)], axis=0)
        Qn = np.concatenate([normal[c] * FM for c in range(d)], axis=1)

        interior = not mesh.boundary_flags[f]
        if not interior and with_loads:
            gv = spec.g(fx)
            tg = phif @ (fw * gv)
            b1 += np.concatenate([normal[c] * tg for c in range(d)])
            b2 += phif @ (fw * (bn - tau1) * gv)

        faces.append(FaceBlocks(
            face=int(f), local_face=lf, interior=interior, normal=normal,
            measure=float(mesh.face_measures[f]), T=T, A3=A3,
            A8=tau1 * T, A9=A9, A10=A10, A11=A11, FM=FM, FMb=FMb, Qn=Qn,
            points=fx, weights=fw, bn=bn, trace_phi=phif,
        ))
        A6 += tau1 * FM
        A7 += FMb

    if with_loads:
        b3 = det * (basis.phi @ (w * spec.f(xq)))
        b4 = det * (basis.phi @ (w * spec.y_d(xq)))
    else:
        b3 = np.zeros(m)
        b4 = np.zeros(m)

    return LocalBlocks(element=element, dim=d, n_dofs=m,
                       n_face_dofs=basis.n_face_dofs, det=det, M=M, Cc=Cc,
                       A2=A2, A5=A5, A6=A6, A7=A7, faces=faces,
                       b1=b1, b2=b2, b3=b3, b4=b4)


@dataclass
class CondensationFactors:
    """Element response maps from traces and loads to local fields.

    [alpha; beta] = [G1 H1; G2 H2] [traces; b] with alpha = [q; p],
    beta = [y; z], and b the local load vector.  K_el and F_el are the
    element's contributions to the condensed trace system.
    """

    element: int
    dim: int
    n_dofs: int
    n_face_dofs: int
    interior_faces: np.ndarray   # face indices, local-face order
    G1: np.ndarray
    G2: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    K_el: np.ndarray
    F_el: np.ndarray
    b_el: np.ndarray


def _positive_solver(X, what, element):
    """Factor a (possibly nonsymmetric) positive definite block.

    Symmetric blocks get a Cholesky factorization; others a pivoted LU
    after verifying the symmetric part is positive definite.  Failure in
    either path signals a violated stabilization assumption or a
    quadrature bug.
    """
    scale = np.linalg.norm(X)
    if np.linalg.norm(X - X.T) <= 1e-12 * max(scale, 1.0):
        try:
            fac = cho_factor(X)
        except np.linalg.LinAlgError as err:
            raise CondensationError(
                f"element {element}: block {what} lost positive "
                f"definiteness ({err})") from None
        return lambda B: cho_solve(fac, B)
    lo = np.linalg.eigvalsh(0.5 * (X + X.T)).min()
    if lo <= 0.0:
        raise CondensationError(
            f"element {element}: symmetric part of block {what} has "
            f"minimum eigenvalue {lo:.3e} <= 0")
    fac = lu_factor(X)
    return lambda B: lu_solve(fac, B)


def condense(blocks: LocalBlocks, gamma: float) -> CondensationFactors:
    """Eliminate the local fields of one element.

    Solves the first two block rows of the local saddle system for
    [alpha; beta] in terms of the traces and loads.  The middle inverse
    (B4 + B2^T B1^{-1} B2)^{-1} is taken through its 2x2 block form: with
    C1, C2 the diagonal blocks and D = C2 + gamma^{-1} A4 C1^{-1} A4,

        [[C1, -A4/gamma], [A4, C2]]^{-1}
          = [[C1i - C1i A4 Di A4 C1i / gamma,  C1i A4 Di / gamma],
             [-Di A4 C1i,                      Di]],

    so only C1 and D are factored.  No matrix larger than the element's
    own blocks is formed.
    """
    if gamma <= 0.0:
        raise ValueError("control-cost weight must be positive")
    m = blocks.n_dofs
    dm = blocks.dim * m
    B1, B2, B3, B4, B5, B6, B7, B8, b = blocks.saddle_blocks(gamma)

    facB1 = cho_factor(B1)
    Y2 = cho_solve(facB1, B2)                  # B1^{-1} B2
    Y3 = cho_solve(facB1, B3)                  # B1^{-1} B3
    S = B4 + B2.T @ Y2

    A4 = blocks.A4
    C1 = S[:m, :m]
    solve_C1 = _positive_solver(C1, "C1", blocks.element)
    C1i = solve_C1(np.eye(m))
    D = S[m:, m:] + (A4 @ C1i @ A4) / gamma
    solve_D = _positive_solver(D, "D", blocks.element)
    Di = solve_D(np.eye(m))

    C1iA4 = C1i @ A4
    A4C1i = A4 @ C1i
    Sinv = np.empty((2 * m, 2 * m))
    Sinv[:m, :m] = C1i - (C1iA4 @ Di @ A4C1i) / gamma
    Sinv[:m, m:] = (C1iA4 @ Di) / gamma
    Sinv[m:, :m] = -Di @ A4C1i
    Sinv[m:, m:] = Di

    P = B5 + B2.T @ Y3
    G2 = -Sinv @ P
    H2 = Sinv @ np.hstack([Y2.T, np.eye(2 * m)])
    G1 = -(Y2 @ G2 + Y3)
    H1 = np.hstack([cho_solve(facB1, np.eye(2 * dm)),
                    np.zeros((2 * dm, 2 * m))]) - Y2 @ H2

    K_el = B6 @ G1 + B7 @ G2 + B8
    F_el = -(B6 @ H1 + B7 @ H2) @ b

    return CondensationFactors(
        element=blocks.element, dim=blocks.dim, n_dofs=m,
        n_face_dofs=blocks.n_face_dofs,
        interior_faces=np.array([fb.face for fb in blocks.interior_faces],
                                dtype=int),
        G1=G1, G2=G2, H1=H1, H2=H2, K_el=K_el, F_el=F_el, b_el=b)


def local_recover(factors: CondensationFactors, trace_values: np.ndarray,
                  loads: np.ndarray):
    """Back-substitute traces and loads into the local fields of an element.

    Returns (q, p, y, z) coefficient vectors; appending u = z / gamma is
    the caller's job.
    """
    ng = 2 * len(factors.interior_faces) * factors.n_face_dofs
    if len(trace_values) != ng:
        raise ValueError(f"expected {ng} trace values, got "
                         f"{len(trace_values)}")
    if len(loads) != factors.H1.shape[1]:
        raise ValueError(f"expected {factors.H1.shape[1]} load entries, "
                         f"got {len(loads)}")
    alpha = factors.G1 @ trace_values + factors.H1 @ loads
    beta = factors.G2 @ trace_values + factors.H2 @ loads
    dm = factors.dim * factors.n_dofs
    m = factors.n_dofs
    return alpha[:dm], alpha[dm:], beta[:m], beta[m:]
