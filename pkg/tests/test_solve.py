"""Trace numbering, global assembly, sparse solve, and field recovery."""

import numpy as np
import pytest

from hdgoc.mesh import SimplicialMesh, build_structured_mesh
from hdgoc.problem import (ProblemSpec, constant_vector_field,
                           get_example, zero_scalar_field)
from hdgoc.refelem import make_basis
from hdgoc.solve import (assemble, build_numbering, compute_factors,
                         recover_all, solve, solve_problem)
from hdgoc.verify import dense_solve

PROBES = [(1, 2, 1), (1, 2, 2), (2, 2, 1), (2, 2, 2), (3, 3, 1)]


def _zero_spec(dim):
    return ProblemSpec(dim=dim, beta=constant_vector_field([1.0] * dim),
                       gamma=1.0, f=zero_scalar_field, g=zero_scalar_field,
                       y_d=zero_scalar_field)


def test_trace_numbering_is_a_bijection():
    mesh = build_structured_mesh(2, 2)
    basis = make_basis(2, 1)
    numbering = build_numbering(mesh, basis)
    assert numbering.size == 2 * len(mesh.interior_faces) * basis.n_face_dofs
    seen = set()
    for f in mesh.interior_faces:
        for var in (0, 1):
            for dof in range(basis.n_face_dofs):
                seen.add(numbering.index(int(f), dof, var))
    assert seen == set(range(numbering.size))
    boundary_face = int(np.nonzero(mesh.boundary_flags)[0][0])
    with pytest.raises(KeyError):
        numbering.index(boundary_face, 0, 0)
    with pytest.raises(KeyError):
        numbering.index(int(mesh.interior_faces[0]), 0, 2)


def test_expected_system_size_on_split_square():
    # 8 triangles and 8 interior faces at n = 2; with constants on faces
    # the system carries two unknowns per interior face
    mesh = build_structured_mesh(2, 2)
    assert len(mesh.interior_faces) == 8
    basis = make_basis(2, 0)
    spec = get_example(1)
    system = assemble(mesh, spec, basis, compute_factors(mesh, spec, basis))
    assert system.size == 16


def test_single_element_mesh_has_empty_system():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    mesh = SimplicialMesh.from_arrays(2, verts, np.array([[0, 1, 2]]))
    spec = _zero_spec(2)
    basis = make_basis(2, 1)
    factors = compute_factors(mesh, spec, basis)
    system = assemble(mesh, spec, basis, factors)
    assert system.size == 0
    trace = solve(system)
    assert trace.shape == (0,)
    fields = recover_all(mesh, factors, trace, system.numbering, spec.gamma)
    assert fields.coefficient_norm() == 0.0


@pytest.mark.parametrize("dim,n", [(2, 1), (2, 2), (3, 1)])
def test_zero_data_gives_trivial_solution(dim, n):
    # uniqueness: zero data forces the identically zero solution
    spec = _zero_spec(dim)
    mesh = build_structured_mesh(dim, n)
    for k in (0, 1):
        fields, info = solve_problem(mesh, spec, make_basis(dim, k))
        assert fields.coefficient_norm() <= 1e-12


@pytest.mark.parametrize("ex,dim,n", PROBES)
@pytest.mark.parametrize("k", [0, 1])
def test_condensation_matches_monolithic_solve(ex, dim, n, k):
    # the meshes here stay at or below 16 elements so the dense solve of
    # the full coupled system is cheap
    spec = get_example(ex)
    mesh = build_structured_mesh(dim, n)
    if mesh.n_elements > 16:
        pytest.skip("probe meshes only")
    basis = make_basis(dim, k)
    fields, _ = solve_problem(mesh, spec, basis)
    oracle = dense_solve(mesh, spec, basis)
    for name in ("q", "p", "y", "z", "u", "yhat", "zhat"):
        a, b = getattr(fields, name), getattr(oracle, name)
        assert np.linalg.norm(a - b) <= 1e-9 * max(np.linalg.norm(b), 1e-3)


def test_solve_residual_contract():
    spec = get_example(1)
    mesh = build_structured_mesh(2, 8)
    fields, info = solve_problem(mesh, spec, make_basis(2, 1))
    assert info.residual <= 1e-10
    assert info.n_trace_dofs == 2 * len(mesh.interior_faces) * 2


def test_iterative_fallback_matches_direct():
    spec = get_example(1)
    mesh = build_structured_mesh(2, 8)
    basis = make_basis(2, 1)
    factors = compute_factors(mesh, spec, basis)
    system = assemble(mesh, spec, basis, factors)
    direct = solve(system, method="direct")
    iterative = solve(system, method="ilu")
    assert np.linalg.norm(direct - iterative) <= 1e-9 * np.linalg.norm(direct)
    with pytest.raises(ValueError):
        solve(system, method="cg")


def test_linearity_in_data():
    # solution(f1 + f2, g, y_d) = solution(f1, g, y_d) + solution(f2, 0, 0)
    def f1(x):
        return np.sin(x[:, 0])

    def f2(x):
        return np.cos(3 * x[:, 1])

    def f12(x):
        return f1(x) + f2(x)

    def gdata(x):
        return x[:, 0] * x[:, 1]

    def ydata(x):
        return np.exp(-x[:, 0])

    beta = constant_vector_field([1.0, 1.0])
    mesh = build_structured_mesh(2, 3)
    basis = make_basis(2, 1)
    mk = lambda f, g, yd: ProblemSpec(dim=2, beta=beta, gamma=1.0, f=f, g=g,
                                      y_d=yd)
    full, _ = solve_problem(mesh, mk(f12, gdata, ydata), basis)
    part1, _ = solve_problem(mesh, mk(f1, gdata, ydata), basis)
    part2, _ = solve_problem(mesh, mk(f2, zero_scalar_field,
                                      zero_scalar_field), basis)
    for name in ("q", "p", "y", "z", "u", "yhat", "zhat"):
        a = getattr(full, name)
        b = getattr(part1, name) + getattr(part2, name)
        assert np.linalg.norm(a - b) <= 1e-10 * max(np.linalg.norm(a), 1.0)


def test_control_is_exact_rescaling_of_adjoint():
    spec = get_example(2)
    mesh = build_structured_mesh(2, 4)
    fields, _ = solve_problem(mesh, spec, make_basis(2, 1))
    assert np.array_equal(fields.u, fields.z / spec.gamma)


def test_solution_is_deterministic():
    spec = get_example(1)
    mesh = build_structured_mesh(2, 4)
    basis = make_basis(2, 1)
    a, _ = solve_problem(mesh, spec, basis)
    b, _ = solve_problem(mesh, spec, basis)
    for name in ("q", "p", "y", "z", "u", "yhat", "zhat"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_assumption_gate_raises():
    from hdgoc.problem import AssumptionViolation

    spec = ProblemSpec(dim=2, beta=constant_vector_field([1.0, 1.0]),
                       gamma=1.0, f=zero_scalar_field, g=zero_scalar_field,
                       y_d=zero_scalar_field, tau1=0.1)
    mesh = build_structured_mesh(2, 2)
    with pytest.raises(AssumptionViolation):
        solve_problem(mesh, spec, make_basis(2, 1))


def test_sparsity_couples_only_element_sharing_faces():
    # every stored entry ties trace dofs of two faces with a common element
    spec = get_example(1)
    mesh = build_structured_mesh(2, 3)
    basis = make_basis(2, 1)
    system = assemble(mesh, spec, basis, compute_factors(mesh, spec, basis))
    numbering = system.numbering
    half = numbering.n_interior * basis.n_face_dofs
    dof_face = np.empty(system.size, dtype=int)
    for f in mesh.interior_faces:
        for var in (0, 1):
            dof_face[numbering.face_dofs(int(f), var)] = f
    face_elems = {int(f): {int(e) for e in mesh.face_elems[f] if e >= 0}
                  for f in mesh.interior_faces}
    coo = system.matrix.tocoo()
    for i, j in zip(coo.row, coo.col):
        shared = face_elems[dof_face[i]] & face_elems[dof_face[j]]
        assert shared, (dof_face[i], dof_face[j])


def test_system_dump(tmp_path):
    spec = get_example(1)
    mesh = build_structured_mesh(2, 2)
    basis = make_basis(2, 0)
    system = assemble(mesh, spec, basis, compute_factors(mesh, spec, basis))
    path = tmp_path / "system.txt"
    system.dump(path)
    lines = path.read_text().splitlines()
    header = lines[0].split()
    assert header[0] == "K"
    assert int(header[1]) == system.size
    assert int(header[2]) == system.matrix.nnz
    assert lines[1 + system.matrix.nnz].split()[0] == "F"
