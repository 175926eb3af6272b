"""Verification machinery: dense monolithic oracle and algebraic identities.

The condensed production path is cross-checked in three independent ways:

* the full coupled system over all six unknown blocks is assembled as one
  dense matrix and solved directly (the monolithic oracle);
* the two bilinear operators of the scheme are evaluated on arbitrary
  discrete tuples, so the energy identity (operator on a tuple against
  itself equals a weighted penalty norm computed by direct quadrature) and
  the adjoint-pairing identity (the two operators cancel on swapped
  arguments) can be tested;
* per-element positivity of the convection-stabilization blocks.

Everything here targets small meshes; the dense solve scales as the cube
of the total unknown count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .local import assemble_local_blocks, condense, local_recover
from .mesh import SimplicialMesh
from .problem import ProblemSpec, validate_assumptions
from .refelem import ReferenceBasis
from .solve import SolutionFields, build_numbering


@dataclass
class DenseLayout:
    """Index offsets of the monolithic unknown vector [q p y z yhat zhat]."""

    dim: int
    m: int
    mf: int
    n_elements: int
    n_interior: int

    @property
    def dm(self) -> int:
        return self.dim * self.m

    @property
    def size(self) -> int:
        return (2 * self.n_elements * (self.dm + self.m)
                + 2 * self.n_interior * self.mf)

    def q(self, e):
        return np.arange(e * self.dm, (e + 1) * self.dm)

    def p(self, e):
        off = self.n_elements * self.dm
        return off + np.arange(e * self.dm, (e + 1) * self.dm)

    def y(self, e):
        off = 2 * self.n_elements * self.dm
        return off + np.arange(e * self.m, (e + 1) * self.m)

    def z(self, e):
        off = 2 * self.n_elements * self.dm + self.n_elements * self.m
        return off + np.arange(e * self.m, (e + 1) * self.m)

    def yhat(self, rank):
        off = 2 * self.n_elements * (self.dm + self.m)
        return off + np.arange(rank * self.mf, (rank + 1) * self.mf)

    def zhat(self, rank):
        off = (2 * self.n_elements * (self.dm + self.m)
               + self.n_interior * self.mf)
        return off + np.arange(rank * self.mf, (rank + 1) * self.mf)


def assemble_monolithic(mesh: SimplicialMesh, spec: ProblemSpec,
                        basis: ReferenceBasis):
    """Assemble the full coupled system as one dense matrix.

    Returns (matrix, rhs, layout, numbering).  Row blocks follow the weak
    formulation: flux equations, scalar equations, trace equations; trace
    rows accumulate contributions from both incident elements.
    """
    numbering = build_numbering(mesh, basis)
    layout = DenseLayout(dim=mesh.dim, m=basis.n_dofs, mf=basis.n_face_dofs,
                         n_elements=mesh.n_elements,
                         n_interior=numbering.n_interior)
    N = layout.size
    K = np.zeros((N, N))
    rhs = np.zeros(N)
    gam = spec.gamma

    for e in range(mesh.n_elements):
        lb = assemble_local_blocks(mesh, spec, basis, e)
        iq, ip = layout.q(e), layout.p(e)
        iy, iz = layout.y(e), layout.z(e)
        A1 = lb.A1
        K[np.ix_(iq, iq)] += A1
        K[np.ix_(iq, iy)] -= lb.A2
        K[np.ix_(ip, ip)] += A1
        K[np.ix_(ip, iz)] -= lb.A2
        K[np.ix_(iy, iq)] += lb.A2.T
        K[np.ix_(iy, iy)] += lb.A12
        K[np.ix_(iy, iz)] -= lb.A4 / gam
        K[np.ix_(iz, ip)] += lb.A2.T
        K[np.ix_(iz, iy)] += lb.A4
        K[np.ix_(iz, iz)] += lb.A13
        rhs[iq] -= lb.b1
        rhs[iy] += lb.b5
        rhs[iz] += lb.b4
        for fb in lb.faces:
            if not fb.interior:
                continue
            r = numbering.rank[fb.face]
            ih, izh = layout.yhat(r), layout.zhat(r)
            K[np.ix_(iq, ih)] += fb.A3
            K[np.ix_(ip, izh)] += fb.A3
            K[np.ix_(iy, ih)] += fb.A9 - fb.A8
            K[np.ix_(iz, izh)] -= fb.A8
            K[np.ix_(ih, iq)] += fb.A3.T
            K[np.ix_(ih, iy)] += fb.A8.T
            K[np.ix_(ih, ih)] += fb.A11 - fb.A10
            K[np.ix_(izh, ip)] += fb.A3.T
            K[np.ix_(izh, iz)] += (fb.A8 - fb.A9).T
            K[np.ix_(izh, izh)] -= fb.A10
    return K, rhs, layout, numbering


def dense_solve(mesh: SimplicialMesh, spec: ProblemSpec,
                basis: ReferenceBasis) -> SolutionFields:
    """Solve the monolithic system directly; the condensation oracle."""
    K, rhs, layout, numbering = assemble_monolithic(mesh, spec, basis)
    x = np.linalg.solve(K, rhs)
    E = mesh.n_elements
    q = np.vstack([x[layout.q(e)] for e in range(E)])
    p = np.vstack([x[layout.p(e)] for e in range(E)])
    y = np.vstack([x[layout.y(e)] for e in range(E)])
    z = np.vstack([x[layout.z(e)] for e in range(E)])
    nio = numbering.n_interior
    if nio:
        yhat = np.vstack([x[layout.yhat(r)] for r in range(nio)])
        zhat = np.vstack([x[layout.zhat(r)] for r in range(nio)])
    else:
        yhat = np.zeros((0, layout.mf))
        zhat = np.zeros((0, layout.mf))
    return SolutionFields(gamma_weight=spec.gamma, q=q, p=p, y=y, z=z,
                          u=z / spec.gamma, yhat=yhat, zhat=zhat)


def _gather_blocks(mesh, spec, basis):
    return [assemble_local_blocks(mesh, spec, basis, e, with_loads=False)
            for e in range(mesh.n_elements)]


def operator_state(blocks, numbering, trial, test) -> float:
    """State-side HDG bilinear operator on discrete coefficient tuples.

    ``trial`` and ``test`` are (flux, scalar, trace) triples of arrays with
    shapes (n_elements, d*m), (n_elements, m), (n_interior, mf).
    """
    v, s, tr = trial
    vt, st, trt = test
    total = 0.0
    for lb in blocks:
        e = lb.element
        q, y = v[e], s[e]
        r, w = vt[e], st[e]
        grad_pair = np.hstack(list(lb.Cc))     # (m, d*m): (q, grad w) pairing
        total += r @ lb.A1 @ q - r @ lb.A2 @ y
        total += -w @ grad_pair @ q - w @ lb.A5 @ y + w @ lb.A6 @ y
        for fb in lb.faces:
            total += w @ fb.Qn @ q
            if not fb.interior:
                continue
            rk = numbering.rank[fb.face]
            mu, mut = tr[rk], trt[rk]
            total += r @ fb.A3 @ mu
            total += w @ (fb.A9 - fb.A8) @ mu
            total -= (mut @ fb.A3.T @ q + mut @ fb.A8.T @ y
                      + mut @ (fb.A11 - fb.A10) @ mu)
    return total


def operator_adjoint(blocks, numbering, trial, test) -> float:
    """Adjoint-side HDG bilinear operator (tau2 = tau1 - beta.n penalty)."""
    v, s, tr = trial
    vt, st, trt = test
    total = 0.0
    for lb in blocks:
        e = lb.element
        p, z = v[e], s[e]
        r, w = vt[e], st[e]
        grad_pair = np.hstack(list(lb.Cc))
        total += r @ lb.A1 @ p - r @ lb.A2 @ z
        total += -w @ grad_pair @ p + w @ lb.A5 @ z + w @ (lb.A6 - lb.A7) @ z
        for fb in lb.faces:
            total += w @ fb.Qn @ p
            if not fb.interior:
                continue
            rk = numbering.rank[fb.face]
            mu, mut = tr[rk], trt[rk]
            total += r @ fb.A3 @ mu
            total -= w @ fb.A8 @ mu
            total -= (mut @ fb.A3.T @ p + mut @ (fb.A8 - fb.A9).T @ z
                      - mut @ fb.A10 @ mu)
    return total


def _penalty_norm(blocks, numbering, basis, tau1, v, s, tr) -> float:
    """Direct-quadrature value of the energy-identity right-hand side.

    ||v||^2 over the elements plus the (tau1 - beta.n/2)-weighted face
    penalty of s - trace on interior element boundaries and of s on the
    domain boundary.  Under the tau2 rule the adjoint-side weight
    tau2 + beta.n/2 coincides with this one.
    """
    total = 0.0
    wq = basis.vol_rule.weights
    m = basis.n_dofs
    for lb in blocks:
        e = lb.element
        vals = v[e].reshape(lb.dim, m) @ basis.phi   # (d, Q)
        total += lb.det * float(wq @ (vals ** 2).sum(axis=0))
        for fb in lb.faces:
            wvals = s[e] @ fb.trace_phi
            if fb.interior:
                mvals = tr[numbering.rank[fb.face]] @ basis.psi
                diff = wvals - mvals
            else:
                diff = wvals
            total += float(fb.weights @ ((tau1 - 0.5 * fb.bn) * diff ** 2))
    return total


def _random_tuple(rng, n_elements, d, m, mf, n_interior):
    return (rng.standard_normal((n_elements, d * m)),
            rng.standard_normal((n_elements, m)),
            rng.standard_normal((n_interior, mf)))


def energy_identity_errors(mesh, spec, basis, n_samples=50, seed=0):
    """Relative energy-identity error per random tuple, for both operators."""
    blocks = _gather_blocks(mesh, spec, basis)
    numbering = build_numbering(mesh, basis)
    rng = np.random.default_rng(seed)
    errs = []
    for _ in range(n_samples):
        tup = _random_tuple(rng, mesh.n_elements, mesh.dim, basis.n_dofs,
                            basis.n_face_dofs, numbering.n_interior)
        rhs = _penalty_norm(blocks, numbering, basis, spec.tau1, *tup)
        for op in (operator_state, operator_adjoint):
            lhs = op(blocks, numbering, tup, tup)
            errs.append(abs(lhs - rhs) / max(abs(rhs), 1.0))
    return np.array(errs)


def adjoint_identity_errors(mesh, spec, basis, n_samples=50, seed=0):
    """Relative cancellation error of the operator-pairing identity.

    For tuples (q, y, yhat) and (p, z, zhat), the state operator tested
    with (p, -z, -zhat) plus the adjoint operator tested with (-q, y, yhat)
    must vanish when the tau2 rule holds.
    """
    blocks = _gather_blocks(mesh, spec, basis)
    numbering = build_numbering(mesh, basis)
    rng = np.random.default_rng(seed)
    errs = []
    for _ in range(n_samples):
        args = (mesh.n_elements, mesh.dim, basis.n_dofs, basis.n_face_dofs,
                numbering.n_interior)
        qa = _random_tuple(rng, *args)
        pa = _random_tuple(rng, *args)
        t1 = operator_state(blocks, numbering, qa,
                            (pa[0], -pa[1], -pa[2]))
        t2 = operator_adjoint(blocks, numbering, pa,
                              (-qa[0], qa[1], qa[2]))
        errs.append(abs(t1 + t2) / max(abs(t1), abs(t2), 1.0))
    return np.array(errs)


def positivity_margins(mesh, spec, basis, n_samples=100, seed=0):
    """Smallest normalized quadratic-form values of the A12/A13 blocks.

    Returns the minimum over all elements and random vectors of
    x^T A x / |x|^2 together with the smallest eigenvalue of the symmetric
    parts; all must be positive for a well-posed problem.
    """
    rng = np.random.default_rng(seed)
    min_quad = np.inf
    min_eig = np.inf
    for e in range(mesh.n_elements):
        lb = assemble_local_blocks(mesh, spec, basis, e, with_loads=False)
        for mat in (lb.A12, lb.A13):
            X = rng.standard_normal((n_samples, lb.n_dofs))
            quad = np.einsum("si,ij,sj->s", X, mat, X) / (X ** 2).sum(axis=1)
            min_quad = min(min_quad, float(quad.min()))
            min_eig = min(min_eig, float(
                np.linalg.eigvalsh(0.5 * (mat + mat.T)).min()))
    return min_quad, min_eig


def condensation_errors(mesh, spec, basis, n_samples=20, seed=0):
    """Back-substitution residuals of the condensation factors.

    For random traces and loads on every element, the recovered local
    fields are substituted into the first two block rows of the local
    saddle system (relative residual) and compared against a direct dense
    solve of the same local system (relative difference).  Returns the
    worst of each.
    """
    rng = np.random.default_rng(seed)
    worst_res = 0.0
    worst_diff = 0.0
    for e in range(mesh.n_elements):
        lb = assemble_local_blocks(mesh, spec, basis, e)
        fact = condense(lb, spec.gamma)
        B1, B2, B3, B4, B5 = lb.saddle_blocks(spec.gamma)[:5]
        ng = fact.G1.shape[1]
        nloads = fact.H1.shape[1]
        top = np.block([[B1, B2], [-B2.T, B4]])
        for _ in range(n_samples):
            gl = rng.standard_normal(ng)
            bl = rng.standard_normal(nloads)
            qe, pe, ye, ze = local_recover(fact, gl, bl)
            ab = np.concatenate([qe, pe, ye, ze])
            rhs = bl - np.vstack([B3, B5]) @ gl
            res = top @ ab - rhs
            scale = max(np.linalg.norm(rhs), 1e-30)
            worst_res = max(worst_res, float(np.linalg.norm(res) / scale))
            direct = np.linalg.solve(top, rhs)
            dscale = max(np.linalg.norm(direct), 1e-30)
            worst_diff = max(worst_diff, float(
                np.linalg.norm(direct - ab) / dscale))
    return worst_res, worst_diff


def compare_with_dense(mesh, spec, basis):
    """Relative per-block differences between condensed and dense solves."""
    from .solve import solve_problem

    fields, _ = solve_problem(mesh, spec, basis, check_assumptions=False)
    dense = dense_solve(mesh, spec, basis)
    diffs = {}
    for name in ("q", "p", "y", "z", "u", "yhat", "zhat"):
        a = getattr(fields, name)
        b = getattr(dense, name)
        scale = max(np.linalg.norm(b), 1e-12)
        diffs[name] = float(np.linalg.norm(a - b) / scale)
    return diffs


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: {self.value:.3e} "
                f"(tolerance {self.tolerance:.1e})")


@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def n_passed(self) -> int:
        return sum(c.passed for c in self.checks)

    def __str__(self):
        lines = [str(c) for c in self.checks]
        lines.append(f"{self.n_passed}/{len(self.checks)} checks passed")
        return "\n".join(lines)


def run_verification(mesh: SimplicialMesh, spec: ProblemSpec,
                     basis: ReferenceBasis, n_samples: int = 50,
                     seed: int = 0) -> VerificationReport:
    """Run the full identity suite on one mesh/problem pair."""
    report = VerificationReport()

    ass = validate_assumptions(spec, mesh, face_degree=2 * basis.degree + 2)
    report.checks.append(CheckResult(
        "stabilization positivity min(tau1 - beta.n/2)",
        ass.min_tau1_term > 0.0 and ass.min_tau2_term > 0.0,
        min(ass.min_tau1_term, ass.min_tau2_term), 0.0))
    report.checks.append(CheckResult(
        "divergence-free surface flux", ass.max_element_flux <= ass.flux_tol,
        ass.max_element_flux, ass.flux_tol))

    errs = energy_identity_errors(mesh, spec, basis, n_samples, seed)
    report.checks.append(CheckResult(
        "energy identity", float(errs.max()) <= 1e-10, float(errs.max()),
        1e-10))

    errs = adjoint_identity_errors(mesh, spec, basis, n_samples, seed)
    report.checks.append(CheckResult(
        "adjoint pairing identity", float(errs.max()) <= 1e-10,
        float(errs.max()), 1e-10))

    quad, eig = positivity_margins(mesh, spec, basis, 100, seed)
    report.checks.append(CheckResult(
        "convection-stabilization positive definiteness",
        quad > 0.0 and eig > 0.0, min(quad, eig), 0.0))

    res, diff = condensation_errors(mesh, spec, basis, 20, seed)
    report.checks.append(CheckResult(
        "local back-substitution residual", res <= 1e-10, res, 1e-10))
    report.checks.append(CheckResult(
        "local elimination vs dense local solve", diff <= 1e-9, diff, 1e-9))

    diffs = compare_with_dense(mesh, spec, basis)
    worst = max(diffs.values())
    report.checks.append(CheckResult(
        "condensed vs monolithic solution", worst <= 1e-9, worst, 1e-9))

    return report
