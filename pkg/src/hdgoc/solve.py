"""Trace numbering, condensed global system, sparse solve, and recovery.

Only interior faces carry unknowns: the state trace block comes first, the
adjoint trace block second, each ordered by ascending face index with the
face's dofs contiguous.  Assembly scatter-adds element contributions in
ascending element order, which makes every run bit-reproducible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .local import assemble_local_blocks, condense, local_recover
from .mesh import SimplicialMesh
from .problem import AssumptionViolation, ProblemSpec, validate_assumptions
from .refelem import ReferenceBasis


class SingularSystemError(RuntimeError):
    """The condensed trace system could not be factored or solved."""


@dataclass(frozen=True)
class TraceNumbering:
    """Bijection (interior face, face dof, variable) -> global index.

    Variable 0 is the state trace, variable 1 the adjoint trace.  The total
    system size is 2 * n_interior * n_face_dofs.
    """

    n_face_dofs: int
    interior_faces: np.ndarray
    rank: np.ndarray           # (n_faces,) dense rank of interior faces, -1 else

    @property
    def n_interior(self) -> int:
        return len(self.interior_faces)

    @property
    def size(self) -> int:
        return 2 * self.n_interior * self.n_face_dofs

    def index(self, face: int, dof: int, var: int) -> int:
        r = self.rank[face]
        if r < 0:
            raise KeyError(f"face {face} is not an interior face")
        if not 0 <= dof < self.n_face_dofs or var not in (0, 1):
            raise KeyError(f"invalid trace dof ({face}, {dof}, {var})")
        half = self.n_interior * self.n_face_dofs
        return var * half + r * self.n_face_dofs + dof

    def face_dofs(self, face: int, var: int) -> np.ndarray:
        r = self.rank[face]
        if r < 0:
            raise KeyError(f"face {face} is not an interior face")
        half = self.n_interior * self.n_face_dofs
        base = var * half + r * self.n_face_dofs
        return np.arange(base, base + self.n_face_dofs)

    def element_dofs(self, interior_face_ids) -> np.ndarray:
        """Global dofs of an element's trace block, in its local layout."""
        if len(interior_face_ids) == 0:
            return np.empty(0, dtype=int)
        ydofs = np.concatenate([self.face_dofs(f, 0) for f in interior_face_ids])
        zdofs = np.concatenate([self.face_dofs(f, 1) for f in interior_face_ids])
        return np.concatenate([ydofs, zdofs])


def build_numbering(mesh: SimplicialMesh, basis: ReferenceBasis) -> TraceNumbering:
    interior = mesh.interior_faces
    rank = np.full(mesh.n_faces, -1, dtype=int)
    rank[interior] = np.arange(len(interior))
    return TraceNumbering(n_face_dofs=basis.n_face_dofs,
                          interior_faces=interior, rank=rank)


@dataclass
class CondensedSystem:
    """Sparse condensed trace system K gamma = F."""

    matrix: sp.csc_matrix
    rhs: np.ndarray
    numbering: TraceNumbering
    symmetric: bool = False

    @property
    def size(self) -> int:
        return len(self.rhs)

    def dump(self, path) -> None:
        """Write the system in plain-text coordinate format (debug aid)."""
        coo = self.matrix.tocoo()
        with open(path, "w") as fh:
            fh.write(f"K {self.size} {coo.nnz}\n")
            for i, j, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i} {j} {v:.17g}\n")
            fh.write(f"F {self.size}\n")
            for i, v in enumerate(self.rhs):
                fh.write(f"{i} {v:.17g}\n")


def compute_factors(mesh: SimplicialMesh, spec: ProblemSpec,
                    basis: ReferenceBasis) -> list:
    """Assemble and condense every element, in ascending element order."""
    out = []
    for e in range(mesh.n_elements):
        blocks = assemble_local_blocks(mesh, spec, basis, e)
        out.append(condense(blocks, spec.gamma))
    return out


def assemble(mesh: SimplicialMesh, spec: ProblemSpec, basis: ReferenceBasis,
             factors: list) -> CondensedSystem:
    """Scatter-add per-element condensed contributions into K gamma = F.

    Boundary data enters only through the right-hand side (it is folded
    into the element load vectors during local assembly).
    """
    numbering = build_numbering(mesh, basis)
    N = numbering.size
    rhs = np.zeros(N)
    rows, cols, vals = [], [], []
    for fact in factors:
        gdofs = numbering.element_dofs(fact.interior_faces)
        if len(gdofs) != fact.K_el.shape[0]:
            raise RuntimeError(
                f"element {fact.element}: trace dof count mismatch "
                f"({len(gdofs)} vs {fact.K_el.shape[0]})")
        if len(gdofs) == 0:
            continue
        rows.append(np.repeat(gdofs, len(gdofs)))
        cols.append(np.tile(gdofs, len(gdofs)))
        vals.append(fact.K_el.ravel())
        np.add.at(rhs, gdofs, fact.F_el)
    if rows:
        matrix = sp.coo_matrix(
            (np.concatenate(vals),
             (np.concatenate(rows), np.concatenate(cols))),
            shape=(N, N)).tocsc()
    else:
        matrix = sp.csc_matrix((N, N))
    return CondensedSystem(matrix=matrix, rhs=rhs, numbering=numbering)


# Above this system size the complete LU fill of the 3D trace systems
# exceeds the memory of small machines, so the solver switches to an
# incomplete-LU preconditioned Krylov iteration with the same residual
# contract.
DIRECT_SIZE_LIMIT = 150_000


def solve(system: CondensedSystem, rtol: float = 1e-10,
          method: str = "auto") -> np.ndarray:
    """Solve the condensed trace system.

    The primary path is sparse direct LU with pivoting.  For systems
    larger than ``DIRECT_SIZE_LIMIT`` unknowns, ``method="auto"`` falls
    back to ILU-preconditioned GMRES, which needs an order of magnitude
    less memory; both paths must meet the same relative-residual bound.

    Parameters
    ----------
    system : assembled condensed system; empty systems return an empty
        vector.
    rtol : relative residual bound enforced after the solve (one step of
        iterative refinement is applied first if the direct solve misses).
    method : "auto", "direct", or "ilu".

    Raises
    ------
    SingularSystemError on a singular factorization or when the residual
    bound cannot be met (either signals a violated assumption or an
    assembly bug; the condensed system of a well-posed problem is
    nonsingular).
    """
    if system.size == 0:
        return np.zeros(0)
    if method == "auto":
        method = "direct" if system.size <= DIRECT_SIZE_LIMIT else "ilu"
    if method not in ("direct", "ilu"):
        raise ValueError(f"unknown solve method {method!r}")
    K = system.matrix
    F = system.rhs
    scale = max(np.linalg.norm(F), np.finfo(float).tiny)
    try:
        if method == "direct":
            lu = spla.splu(K)
            gamma = lu.solve(F)
            res = np.linalg.norm(K @ gamma - F) / scale
            if res > rtol:
                gamma = gamma + lu.solve(F - K @ gamma)
        else:
            ilu = spla.spilu(K, drop_tol=1e-4, fill_factor=10.0)
            precond = spla.LinearOperator(K.shape, ilu.solve)
            gamma, info = spla.gmres(K, F, M=precond, rtol=1e-13, atol=0.0,
                                     restart=150, maxiter=40)
            if info != 0:
                raise SingularSystemError(
                    f"preconditioned GMRES stalled (info={info})")
    except (RuntimeError, MemoryError) as err:
        raise SingularSystemError(
            f"sparse factorization failed: {err}") from None
    res = np.linalg.norm(K @ gamma - F) / scale
    if not np.isfinite(res) or res > rtol:
        raise SingularSystemError(
            f"trace solve residual {res:.3e} exceeds {rtol:.1e}")
    return gamma


@dataclass
class SolutionFields:
    """Coefficient vectors of all computed fields.

    Element fields are stored per element: fluxes with component-major
    layout (n_elements, dim*m), scalars as (n_elements, m).  Trace fields
    are stored per interior face, (n_interior, n_face_dofs), in the order
    of ``numbering.interior_faces``.  The control satisfies
    u = z / gamma coefficientwise by construction.
    """

    gamma_weight: float
    q: np.ndarray
    p: np.ndarray
    y: np.ndarray
    z: np.ndarray
    u: np.ndarray
    yhat: np.ndarray
    zhat: np.ndarray

    def coefficient_norm(self) -> float:
        return float(max(np.abs(block).max() if block.size else 0.0
                         for block in (self.q, self.p, self.y, self.z,
                                       self.u, self.yhat, self.zhat)))


def recover_all(mesh: SimplicialMesh, factors: list, trace: np.ndarray,
                numbering: TraceNumbering, gamma_weight: float) -> SolutionFields:
    """Recover all element fields from the solved traces, element by element.

    The element loads stored with the condensation factors supply the load
    part of the back-substitution; the control is set to z / gamma
    coefficientwise.
    """
    if not factors:
        raise ValueError("no condensation factors given")
    d = factors[0].dim
    m = factors[0].n_dofs
    mf = factors[0].n_face_dofs
    E = mesh.n_elements
    q = np.empty((E, d * m))
    p = np.empty((E, d * m))
    y = np.empty((E, m))
    z = np.empty((E, m))
    for fact in factors:
        gdofs = numbering.element_dofs(fact.interior_faces)
        qe, pe, ye, ze = local_recover(fact, trace[gdofs], fact.b_el)
        q[fact.element] = qe
        p[fact.element] = pe
        y[fact.element] = ye
        z[fact.element] = ze
    nio = numbering.n_interior
    yhat = trace[:nio * mf].reshape(nio, mf).copy()
    zhat = trace[nio * mf:].reshape(nio, mf).copy()
    return SolutionFields(gamma_weight=gamma_weight, q=q, p=p, y=y, z=z,
                          u=z / gamma_weight, yhat=yhat, zhat=zhat)


@dataclass
class SolveInfo:
    n_trace_dofs: int
    residual: float
    assumption_report: object
    seconds: float


def solve_problem(mesh: SimplicialMesh, spec: ProblemSpec,
                  basis: ReferenceBasis, check_assumptions: bool = True):
    """Run the full pipeline: validate, condense, assemble, solve, recover.

    Returns (fields, info).  Raises AssumptionViolation when the
    stabilization/divergence checks fail and SingularSystemError when the
    trace solve does.
    """
    t0 = time.perf_counter()
    report = None
    if check_assumptions:
        report = validate_assumptions(
            spec, mesh, face_degree=2 * basis.degree + 2)
        if not report.ok:
            raise AssumptionViolation(report)
    factors = compute_factors(mesh, spec, basis)
    system = assemble(mesh, spec, basis, factors)
    trace = solve(system)
    if system.size:
        scale = max(np.linalg.norm(system.rhs), np.finfo(float).tiny)
        residual = float(np.linalg.norm(
            system.matrix @ trace - system.rhs) / scale)
    else:
        residual = 0.0
    fields = recover_all(mesh, factors, trace, system.numbering, spec.gamma)
    info = SolveInfo(n_trace_dofs=system.size, residual=residual,
                     assumption_report=report,
                     seconds=time.perf_counter() - t0)
    return fields, info
