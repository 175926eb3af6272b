"""L2 error measurement and convergence-rate studies.

Errors of the five computed fields (both fluxes, both states, the control)
against an exact solution bundle, and a refinement-study driver that
reports observed orders.  Error integration uses a quadrature rule one
degree above the assembly rule so the measured errors are not flattered by
shared integration points.

Reports carry the mesh parameter as ``h_over_sqrt2 = 1/n``, the
cell-count-based convention used when tabulating structured-mesh runs.
"""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .mesh import SimplicialMesh, build_structured_mesh
from .problem import ProblemSpec, get_example
from .refelem import ReferenceBasis, make_basis, make_quadrature
from .solve import SolutionFields, solve_problem

FIELD_NAMES = ("q", "p", "y", "z", "u")


def _physical_points(mesh, rule):
    pts = np.einsum("qD,eCD->eqC", rule.points, mesh.affine_mats)
    return pts + mesh.vertices[mesh.elements[:, 0]][:, None, :]


def l2_error_scalar(mesh: SimplicialMesh, basis: ReferenceBasis,
                    coeffs: np.ndarray, exact, rule=None) -> float:
    """L2(Omega) distance between a piecewise polynomial and a callable.

    Parameters
    ----------
    coeffs : (n_elements, n_dofs) coefficient array.
    exact : vectorized callable on (N, dim) point arrays.
    rule : optional quadrature rule; defaults to exactness 2k+3.
    """
    rule = rule or make_quadrature(mesh.dim, 2 * basis.degree + 3)
    phi = basis.eval(rule.points)
    x = _physical_points(mesh, rule)
    uh = coeffs @ phi
    ue = exact(x.reshape(-1, mesh.dim)).reshape(uh.shape)
    err2 = np.einsum("e,q,eq->", mesh.affine_dets, rule.weights,
                     (ue - uh) ** 2)
    return float(np.sqrt(err2))


def l2_error_vector(mesh: SimplicialMesh, basis: ReferenceBasis,
                    coeffs: np.ndarray, exact, rule=None) -> float:
    """Vector-field version of :func:`l2_error_scalar`.

    ``coeffs`` has shape (n_elements, dim*n_dofs), component-major.
    """
    rule = rule or make_quadrature(mesh.dim, 2 * basis.degree + 3)
    phi = basis.eval(rule.points)
    x = _physical_points(mesh, rule)
    E = mesh.n_elements
    comp = coeffs.reshape(E, mesh.dim, basis.n_dofs)
    uh = np.einsum("ecm,mq->eqc", comp, phi)
    ue = exact(x.reshape(-1, mesh.dim)).reshape(uh.shape)
    err2 = np.einsum("e,q,eqc->", mesh.affine_dets, rule.weights,
                     (ue - uh) ** 2)
    return float(np.sqrt(err2))


def solution_errors(mesh: SimplicialMesh, basis: ReferenceBasis,
                    spec: ProblemSpec, fields: SolutionFields) -> dict:
    """All five L2 errors against the exact bundle of the problem."""
    if spec.exact is None:
        raise ValueError("problem has no exact solution bundle")
    ex = spec.exact
    rule = make_quadrature(mesh.dim, 2 * basis.degree + 3)
    gamma = spec.gamma

    def q_exact(x):
        return -ex.grad_y(x)

    def p_exact(x):
        return -ex.grad_z(x)

    def u_exact(x):
        return ex.z(x) / gamma

    return {
        "q": l2_error_vector(mesh, basis, fields.q, q_exact, rule),
        "p": l2_error_vector(mesh, basis, fields.p, p_exact, rule),
        "y": l2_error_scalar(mesh, basis, fields.y, ex.y, rule),
        "z": l2_error_scalar(mesh, basis, fields.z, ex.z, rule),
        "u": l2_error_scalar(mesh, basis, fields.u, u_exact, rule),
    }


@dataclass
class ErrorRecord:
    """Errors of one refinement level; orders filled from the second on."""

    n: int
    h_over_sqrt2: float
    errors: dict
    orders: dict = field(default_factory=dict)
    seconds: float = 0.0
    residual: float = 0.0


@dataclass
class ConvergenceReport:
    """Error history of one example/degree combination."""

    label: str
    degree: int
    records: list = field(default_factory=list)

    def compute_orders(self) -> None:
        for prev, rec in zip(self.records, self.records[1:]):
            rec.orders = {
                name: float(np.log2(prev.errors[name] / rec.errors[name]))
                if rec.errors[name] > 0.0 else float("inf")
                for name in FIELD_NAMES
            }

    def final_orders(self) -> dict:
        if len(self.records) < 2:
            return {}
        return self.records[-1].orders

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        header = ["n", "h_over_sqrt2"]
        for name in FIELD_NAMES:
            header += [f"err_{name}", f"ord_{name}"]
        writer.writerow(header)
        for rec in self.records:
            row = [rec.n, f"{rec.h_over_sqrt2:.12e}"]
            for name in FIELD_NAMES:
                row.append(f"{rec.errors[name]:.12e}")
                row.append(f"{rec.orders[name]:.2f}" if rec.orders else "")
            writer.writerow(row)
        return buf.getvalue()

    def to_markdown(self) -> str:
        """Markdown table in the row-per-field layout of convergence tables."""
        cols = [f"1/{rec.n}" for rec in self.records]
        lines = ["| h/sqrt(2) | " + " | ".join(cols) + " |",
                 "|---" * (len(cols) + 1) + "|"]
        for name in FIELD_NAMES:
            errs = " | ".join(f"{rec.errors[name]:.4e}" for rec in self.records)
            lines.append(f"| \\|{name}-{name}_h\\| | {errs} |")
            ords = " | ".join(f"{rec.orders[name]:.2f}" if rec.orders else "-"
                              for rec in self.records)
            lines.append(f"| order | {ords} |")
        return "\n".join(lines) + "\n"


def run_single(example, k: int, n: int, basis_kind: str = "orthonormal"):
    """Solve one example on one mesh; returns (record, fields, mesh, basis)."""
    spec = example if isinstance(example, ProblemSpec) else get_example(example)
    basis = make_basis(spec.dim, k, basis_kind)
    mesh = build_structured_mesh(spec.dim, n)
    t0 = time.perf_counter()
    fields, info = solve_problem(mesh, spec, basis)
    errors = solution_errors(mesh, basis, spec, fields)
    rec = ErrorRecord(n=n, h_over_sqrt2=1.0 / n, errors=errors,
                      seconds=time.perf_counter() - t0,
                      residual=info.residual)
    return rec, fields, mesh, basis


def run_convergence_study(example, k: int, n_list,
                          threads: int = 1,
                          basis_kind: str = "orthonormal") -> ConvergenceReport:
    """Solve an example on a doubling mesh sequence and report orders.

    Parameters
    ----------
    example : example id (1, 2, 3 or name) or a ProblemSpec with an exact
        solution bundle.
    k : polynomial degree.
    n_list : strictly increasing, each entry double the previous.
    threads : worker ceiling for running refinement levels concurrently;
        the per-level computation itself stays deterministic.
    """
    n_list = list(n_list)
    if any(b != 2 * a for a, b in zip(n_list, n_list[1:])):
        raise ValueError(f"mesh sequence must double: {n_list}")
    if isinstance(example, (str, int)):
        label = str(example)
    else:
        label = getattr(example, "label", "custom")
    report = ConvergenceReport(label=label, degree=k)
    if threads > 1 and len(n_list) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(run_single, example, k, n)
                       for n in n_list]
            report.records = [f.result()[0] for f in futures]
    else:
        report.records = [run_single(example, k, n)[0] for n in n_list]
    report.compute_orders()
    return report
