"""Anatomy of the element-by-element elimination.

Walks through what the solver does on a tiny mesh: assemble the dense
local blocks of one element, eliminate its flux/state unknowns to get the
response maps onto the face traces, assemble and solve the globally
coupled trace system, and confirm the result coincides with a direct dense
solve of the full coupled system.
"""

import numpy as np

from hdgoc import (assemble, assemble_local_blocks, build_structured_mesh,
                   condense, dense_solve, get_example, make_basis,
                   recover_all, solve)
from hdgoc.solve import compute_factors

spec = get_example("example1")
basis = make_basis(2, 1)
mesh = build_structured_mesh(2, 2)
print(f"{mesh.n_elements} elements, {len(mesh.interior_faces)} interior faces")

# one element's local system: 2*d*m flux dofs and 2*m scalar dofs couple
# to 2*mf trace dofs per interior face
blocks = assemble_local_blocks(mesh, spec, basis, element=0)
print(f"element 0: {blocks.dim * blocks.n_dofs} dofs per flux, "
      f"{blocks.n_dofs} per scalar, {blocks.n_trace_dofs} trace dofs")
factors = condense(blocks, spec.gamma)
print(f"condensed element matrix: {factors.K_el.shape}, "
      f"response maps G1 {factors.G1.shape}, H1 {factors.H1.shape}")

# the globally coupled system lives on interior-face traces only
all_factors = compute_factors(mesh, spec, basis)
system = assemble(mesh, spec, basis, all_factors)
print(f"trace system: {system.size} unknowns, "
      f"{system.matrix.nnz} stored entries")
trace = solve(system)
fields = recover_all(mesh, all_factors, trace, system.numbering, spec.gamma)

# oracle: solving all six coupled blocks at once must give the same answer
oracle = dense_solve(mesh, spec, basis)
worst = max(np.abs(getattr(fields, name) - getattr(oracle, name)).max()
            for name in ("q", "p", "y", "z", "u", "yhat", "zhat"))
print(f"largest coefficient difference vs monolithic solve: {worst:.2e}")
