"""Optimal control problem instances: convection field, data, stabilization.

A problem couples the state equation -lap(y) + beta.grad(y) = f + u with
Dirichlet data g, the adjoint equation -lap(z) - div(beta z) = y_d - y with
homogeneous Dirichlet data, and the optimality condition z = gamma*u, for a
divergence-free convection field beta and control-cost weight gamma > 0.

All field callables are vectorized: they take an (N, dim) array of points
and return (N,) values for scalar fields or (N, dim) values for vector
fields.  They must be pure, which makes a ProblemSpec safe to share across
workers.

The face stabilization is a constant tau1 on every element boundary, with
the second stabilization function derived pointwise as
tau2 = tau1 - beta.n; the well-posedness conditions then reduce to
min(tau1 - beta.n/2) > 0 over all face quadrature points, which
``validate_assumptions`` checks together with the surface-flux test for
divergence-freeness.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Field = Callable[[np.ndarray], np.ndarray]


class AssumptionViolation(RuntimeError):
    """A stabilization or divergence-free assumption failed on a mesh."""

    def __init__(self, report):
        self.report = report
        super().__init__(str(report))


@dataclass(frozen=True)
class ExactSolution:
    """Exact state/adjoint pair with gradients, for error measurement.

    The fluxes are q = -grad(y) and p = -grad(z); the control is
    u = z / gamma with gamma taken from the owning ProblemSpec.
    """

    y: Field
    grad_y: Field
    z: Field
    grad_z: Field


class TauField:
    """Pointwise evaluation rule for the adjoint stabilization tau2.

    tau2(x; n) = tau1 - beta(x).n, which enforces tau1 = tau2 + beta.n
    exactly.  tau2 is double-valued across interior faces because the
    outward normal flips between the two incident elements.
    """

    def __init__(self, tau1: float, beta: Field):
        self.tau1 = float(tau1)
        self.beta = beta

    def tau2(self, points: np.ndarray, normal: np.ndarray) -> np.ndarray:
        return self.tau1 - self.beta(points) @ normal


@dataclass(frozen=True)
class ProblemSpec:
    """Immutable description of one control problem instance."""

    dim: int
    beta: Field
    gamma: float
    f: Field
    g: Field
    y_d: Field
    tau1: float = 1.0
    exact: Optional[ExactSolution] = None

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise ValueError(f"control-cost weight must be positive, "
                             f"got {self.gamma}")
        if self.tau1 <= 0.0:
            raise ValueError("stabilization tau1 must be positive")

    @property
    def tau(self) -> TauField:
        return TauField(self.tau1, self.beta)


def constant_vector_field(values) -> Field:
    """Vectorized constant field x -> values."""
    vec = np.asarray(values, dtype=float)

    def beta(x):
        return np.broadcast_to(vec, (len(x), len(vec)))

    return beta


def zero_scalar_field(x):
    return np.zeros(len(x))


def _boundary_sample(dim: int, n: int = 21) -> np.ndarray:
    """Points covering the boundary of the unit square/cube."""
    grid = np.linspace(0.0, 1.0, n)
    if dim == 2:
        axes = [grid]
    else:
        a, b = np.meshgrid(grid, grid, indexing="ij")
        axes = [np.column_stack([a.ravel(), b.ravel()])]
    pts = []
    for c in range(dim):
        for val in (0.0, 1.0):
            rest = axes[0]
            if dim == 2:
                block = np.empty((n, 2))
                block[:, c] = val
                block[:, 1 - c] = rest
            else:
                block = np.empty((len(rest), 3))
                block[:, c] = val
                others = [i for i in range(3) if i != c]
                block[:, others[0]] = rest[:, 0]
                block[:, others[1]] = rest[:, 1]
            pts.append(block)
    return np.vstack(pts)


def derive_manufactured_data(dim: int, y: Field, grad_y: Field, lap_y: Field,
                             z: Field, grad_z: Field, lap_z: Field,
                             beta: Field, gamma: float = 1.0,
                             tau1: float = 1.0,
                             divergence_free: bool = True) -> ProblemSpec:
    """Build a ProblemSpec whose exact optimality-system solution is (y, z).

    Given the exact state y and adjoint state z (with gradients and
    Laplacians), the data are

        u   = z / gamma,
        f   = -lap(y) + beta.grad(y) - u,
        y_d = y - lap(z) - beta.grad(z),
        g   = y restricted to the boundary,

    where the y_d formula uses div(beta z) = beta.grad(z), valid because
    beta is divergence free.

    Parameters
    ----------
    dim : spatial dimension of the domain [0,1]^dim.
    y, grad_y, lap_y : exact state and its derivatives (vectorized).
    z, grad_z, lap_z : exact adjoint state and its derivatives; z must
        vanish on the domain boundary.
    beta : divergence-free convection field.
    gamma : control-cost weight, > 0.
    tau1 : stabilization constant.
    divergence_free : explicit declaration that div(beta) = 0; passing
        False raises, since non-solenoidal fields are out of scope.

    Raises
    ------
    ValueError on gamma <= 0, on divergence_free=False, or when z fails
    the boundary-vanishing check at sampled boundary points.
    """
    if not divergence_free:
        raise ValueError("beta must be declared divergence free; "
                         "non-solenoidal convection fields are unsupported")
    if gamma <= 0.0:
        raise ValueError("control-cost weight must be positive")
    bpts = _boundary_sample(dim)
    zb = np.max(np.abs(z(bpts)))
    if zb > 1e-12:
        raise ValueError(f"adjoint state must vanish on the boundary; "
                         f"max |z| on boundary samples is {zb:.3e}")

    def f(x):
        return -lap_y(x) + np.sum(beta(x) * grad_y(x), axis=1) - z(x) / gamma

    def y_d(x):
        return y(x) - lap_z(x) - np.sum(beta(x) * grad_z(x), axis=1)

    exact = ExactSolution(y=y, grad_y=grad_y, z=z, grad_z=grad_z)
    return ProblemSpec(dim=dim, beta=beta, gamma=gamma, f=f, g=y,
                       y_d=y_d, tau1=tau1, exact=exact)


@dataclass
class AssumptionReport:
    """Result of checking the stabilization and divergence-free conditions.

    ``min_tau1_term`` is the minimum of tau1 - beta.n/2 and
    ``min_tau2_term`` the minimum of tau2 + beta.n/2 over all face
    quadrature points of all elements; both must be positive.
    ``max_element_flux`` is the largest |sum over faces of int(beta.n)| of
    any element, the discrete divergence-free probe.  ``violations`` lists
    (element, local_face, value) triples where positivity failed.
    """

    min_tau1_term: float
    min_tau2_term: float
    max_element_flux: float
    flux_tol: float
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (not self.violations
                and self.min_tau1_term > 0.0
                and self.min_tau2_term > 0.0
                and self.max_element_flux <= self.flux_tol)

    def __str__(self):
        lines = [f"min(tau1 - beta.n/2) = {self.min_tau1_term:.6g}",
                 f"min(tau2 + beta.n/2) = {self.min_tau2_term:.6g}",
                 f"max element surface flux = {self.max_element_flux:.3e}"]
        for elem, lf, val in self.violations[:10]:
            lines.append(f"violated on element {elem}, local face {lf}: "
                         f"{val:.6g} <= 0")
        if len(self.violations) > 10:
            lines.append(f"... {len(self.violations) - 10} more")
        return "\n".join(lines)


def validate_assumptions(spec: ProblemSpec, mesh, face_degree: int = 6,
                         flux_tol: float = 1e-10) -> AssumptionReport:
    """Check the stabilization positivity and divergence-free conditions.

    Evaluates tau1 - beta.n/2 and tau2 + beta.n/2 at face quadrature
    points of every element, and the per-element surface integral of
    beta.n.  Returns a report; it does not raise, so callers decide how
    to react to ``report.ok``.
    """
    from .refelem import make_quadrature

    rule = make_quadrature(mesh.dim - 1, face_degree)
    tau = spec.tau
    min_t1 = np.inf
    min_t2 = np.inf
    max_flux = 0.0
    violations = []
    for e in range(mesh.n_elements):
        flux = 0.0
        for lf in range(mesh.dim + 1):
            pts, w, normal = mesh.face_quad_points(e, lf, rule)
            bn = spec.beta(pts) @ normal
            t1 = spec.tau1 - 0.5 * bn
            t2 = tau.tau2(pts, normal) + 0.5 * bn
            lo1 = float(t1.min())
            lo2 = float(t2.min())
            min_t1 = min(min_t1, lo1)
            min_t2 = min(min_t2, lo2)
            if lo1 <= 0.0 or lo2 <= 0.0:
                violations.append((e, lf, min(lo1, lo2)))
            flux += float(w @ bn)
        max_flux = max(max_flux, abs(flux))
    return AssumptionReport(min_tau1_term=min_t1, min_tau2_term=min_t2,
                            max_element_flux=max_flux, flux_tol=flux_tol,
                            violations=violations)


def _planar_sine_pair():
    # shared by the two 2D benchmarks: y = sin(pi x1), z = sin(pi x1) sin(pi x2)
    pi = np.pi

    def y(x):
        return np.sin(pi * x[:, 0])

    def grad_y(x):
        g = np.zeros_like(x)
        g[:, 0] = pi * np.cos(pi * x[:, 0])
        return g

    def lap_y(x):
        return -pi ** 2 * np.sin(pi * x[:, 0])

    def z(x):
        return np.sin(pi * x[:, 0]) * np.sin(pi * x[:, 1])

    def grad_z(x):
        s0, s1 = np.sin(pi * x[:, 0]), np.sin(pi * x[:, 1])
        c0, c1 = np.cos(pi * x[:, 0]), np.cos(pi * x[:, 1])
        return np.column_stack([pi * c0 * s1, pi * s0 * c1])

    def lap_z(x):
        return -2.0 * pi ** 2 * z(x)

    return y, grad_y, lap_y, z, grad_z, lap_z


def _example1() -> ProblemSpec:
    return derive_manufactured_data(2, *_planar_sine_pair(),
                                    beta=constant_vector_field([1.0, 1.0]))


def _example2() -> ProblemSpec:
    def beta(x):
        return np.column_stack([x[:, 1], x[:, 0]])

    return derive_manufactured_data(2, *_planar_sine_pair(), beta=beta)


def _example3() -> ProblemSpec:
    pi = np.pi

    def y(x):
        return np.sin(pi * x[:, 0])

    def grad_y(x):
        g = np.zeros_like(x)
        g[:, 0] = pi * np.cos(pi * x[:, 0])
        return g

    def lap_y(x):
        return -pi ** 2 * np.sin(pi * x[:, 0])

    def z(x):
        return (np.sin(pi * x[:, 0]) * np.sin(pi * x[:, 1])
                * np.sin(pi * x[:, 2]))

    def grad_z(x):
        s = np.sin(pi * x)
        c = np.cos(pi * x)
        return np.column_stack([
            pi * c[:, 0] * s[:, 1] * s[:, 2],
            pi * s[:, 0] * c[:, 1] * s[:, 2],
            pi * s[:, 0] * s[:, 1] * c[:, 2],
        ])

    def lap_z(x):
        return -3.0 * pi ** 2 * z(x)

    return derive_manufactured_data(3, y, grad_y, lap_y, z, grad_z, lap_z,
                                    beta=constant_vector_field([1.0, 1.0, 1.0]))


EXAMPLES = {
    "example1": _example1,
    "example2": _example2,
    "example3": _example3,
}


def register_example(name: str, factory) -> None:
    """Add a problem factory to the registry used by the CLI."""
    EXAMPLES[name] = factory


def get_example(name) -> ProblemSpec:
    """Look up a built-in problem by name or numeric id (1, 2, 3)."""
    key = str(name)
    if key in ("1", "2", "3"):
        key = f"example{key}"
    try:
        return EXAMPLES[key]()
    except KeyError:
        raise KeyError(f"unknown example {name!r}; "
                       f"known: {sorted(EXAMPLES)}") from None
