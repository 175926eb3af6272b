"""Structured simplicial meshes of the unit square and unit cube.

Triangles come from splitting every grid square along the diagonal running
from its lower-right to its upper-left corner, so the diagonal edges carry
normals proportional to (1, 1).  Tetrahedra come from the six-tet Kuhn split
of every grid cube (all tets share the cube's main diagonal), which is
conforming across cube boundaries.  All elements are positively oriented.

Faces are identified by their sorted global vertex tuple, and every face
quadrature runs through that canonical parameterization, so the two elements
sharing an interior face see bitwise-identical physical quadrature points.

A mesh is immutable after construction and safe for concurrent reads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .refelem import QuadratureRule


@dataclass
class SimplicialMesh:
    """Simplicial mesh with full element-face connectivity.

    Attributes
    ----------
    dim : spatial dimension, 2 or 3.
    vertices : (n_vertices, dim) coordinates in [0, 1]^dim.
    elements : (n_elements, dim+1) vertex indices, positively oriented.
    faces : (n_faces, dim) sorted vertex indices (edges in 2D, triangles
        in 3D), canonical identification.
    face_elems : (n_faces, 2) incident element indices, -1 when absent.
    face_local : (n_faces, 2) matching local face indices, -1 when absent.
    boundary_flags : (n_faces,) True on the domain boundary.
    elem_faces : (n_elements, dim+1) face index of each local face; local
        face i sits opposite local vertex i.
    normals : (n_elements, dim+1, dim) unit outward normals per local face.
    elem_measures : (n_elements,) element areas/volumes.
    face_measures : (n_faces,) face lengths/areas.
    affine_mats / affine_inv / affine_dets : per-element affine maps
        x = A xi + v0 from the reference simplex, with det(A) > 0.
    h : mesh size, the maximum element diameter.
    """

    dim: int
    vertices: np.ndarray
    elements: np.ndarray
    faces: np.ndarray
    face_elems: np.ndarray
    face_local: np.ndarray
    boundary_flags: np.ndarray
    elem_faces: np.ndarray
    normals: np.ndarray
    elem_measures: np.ndarray
    face_measures: np.ndarray
    affine_mats: np.ndarray
    affine_inv: np.ndarray
    affine_dets: np.ndarray
    h: float
    face_origin: np.ndarray = field(repr=False, default=None)
    face_span: np.ndarray = field(repr=False, default=None)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def interior_faces(self) -> np.ndarray:
        """Indices of faces shared by two elements, ascending."""
        return np.nonzero(~self.boundary_flags)[0]

    @property
    def face_adjacency(self):
        """Per face, the list of incident (element, local face) pairs."""
        out = []
        for f in range(self.n_faces):
            pairs = [(int(self.face_elems[f, s]), int(self.face_local[f, s]))
                     for s in range(2) if self.face_elems[f, s] >= 0]
            out.append(pairs)
        return out

    @classmethod
    def from_arrays(cls, dim: int, vertices, elements) -> "SimplicialMesh":
        """Build a mesh from raw vertex/element arrays.

        Elements must be positively oriented; a non-positive affine
        determinant raises ValueError.  The mesh size is the measured
        maximum element diameter.
        """
        vertices = np.asarray(vertices, dtype=float)
        elements = np.asarray(elements, dtype=int)
        if vertices.shape[1] != dim or elements.shape[1] != dim + 1:
            raise ValueError("inconsistent vertex/element array shapes")
        mesh = _build(cls, dim, vertices, elements)
        diam = 0.0
        for e in range(len(elements)):
            pts = vertices[elements[e]]
            for i in range(dim + 1):
                for j in range(i + 1, dim + 1):
                    diam = max(diam, float(np.linalg.norm(pts[i] - pts[j])))
        mesh.h = diam
        return mesh

    def face_quad_points(self, element: int, local_face: int,
                         rule: QuadratureRule):
        """Physical face quadrature points, weights, and outward normal.

        Parameters
        ----------
        element, local_face : indices into the mesh connectivity.
        rule : quadrature rule on the reference (dim-1)-simplex.

        Returns
        -------
        (points, weights, normal) where points has shape (n, dim), the
        weights sum to the face measure, and normal is the unit outward
        normal of the element on that face.  Points are generated from the
        canonical sorted-vertex parameterization, so both elements sharing
        an interior face receive identical points.
        """
        if not (0 <= element < self.n_elements and 0 <= local_face <= self.dim):
            raise IndexError(f"invalid element/local face pair "
                             f"({element}, {local_face})")
        f = self.elem_faces[element, local_face]
        pts = self.face_origin[f] + rule.points @ self.face_span[f]
        scale = self.face_measures[f] * math.factorial(self.dim - 1)
        return pts, rule.weights * scale, self.normals[element, local_face]

    def dump(self, path) -> None:
        """Write a plain-text mesh description (debugging aid).

        One header line ``dim n_vertices n_elements n_faces``, then vertex
        coordinate lines, element connectivity lines, and face lines with
        their (element, local face) adjacency.
        """
        with open(path, "w") as fh:
            fh.write(f"{self.dim} {self.n_vertices} {self.n_elements} "
                     f"{self.n_faces}\n")
            for v in self.vertices:
                fh.write(" ".join(f"{c:.17g}" for c in v) + "\n")
            for el in self.elements:
                fh.write(" ".join(str(i) for i in el) + "\n")
            for f in range(self.n_faces):
                adj = " ".join(f"{self.face_elems[f, s]} {self.face_local[f, s]}"
                               for s in range(2) if self.face_elems[f, s] >= 0)
                tag = "b" if self.boundary_flags[f] else "i"
                fh.write(" ".join(str(i) for i in self.faces[f])
                         + f" {tag} {adj}\n")


def build_structured_mesh(dim: int, n: int) -> SimplicialMesh:
    """Uniform simplicial mesh of [0,1]^dim with n cells per axis.

    In 2D each of the n*n squares is split into two triangles along the
    same diagonal (lower-right to upper-left), giving h = sqrt(2)/n.  In 3D
    each of the n^3 cubes is split into six positively oriented tetrahedra
    (Kuhn split), giving h = sqrt(3)/n.

    Raises
    ------
    ValueError if n < 1 or dim not in {2, 3}.
    """
    if dim not in (2, 3):
        raise ValueError(f"unsupported dimension {dim}")
    if n < 1:
        raise ValueError("need at least one cell per axis")
    if dim == 2:
        vertices, elements = _square_grid(n)
        h = math.sqrt(2.0) / n
    else:
        vertices, elements = _cube_grid(n)
        h = math.sqrt(3.0) / n
    mesh = _build(SimplicialMesh, dim, vertices, elements)
    mesh.h = h
    return mesh


def _square_grid(n):
    idx = lambda i, j: i + j * (n + 1)
    coords = np.linspace(0.0, 1.0, n + 1)
    vertices = np.array([[coords[i], coords[j]]
                         for j in range(n + 1) for i in range(n + 1)])
    elements = []
    for j in range(n):
        for i in range(n):
            v00, v10 = idx(i, j), idx(i + 1, j)
            v01, v11 = idx(i, j + 1), idx(i + 1, j + 1)
            # diagonal from v10 to v01
            elements.append((v00, v10, v01))
            elements.append((v10, v11, v01))
    return vertices, np.array(elements, dtype=int)


def _cube_grid(n):
    idx = lambda i, j, k: i + (n + 1) * (j + (n + 1) * k)
    coords = np.linspace(0.0, 1.0, n + 1)
    vertices = np.array([[coords[i], coords[j], coords[k]]
                         for k in range(n + 1)
                         for j in range(n + 1)
                         for i in range(n + 1)])
    eye = np.eye(3, dtype=int)
    elements = []
    for k in range(n):
        for j in range(n):
            for i in range(n):
                base = np.array([i, j, k])
                for perm in permutations(range(3)):
                    corners = [base.copy()]
                    for axis in perm:
                        corners.append(corners[-1] + eye[axis])
                    sign = _perm_sign(perm)
                    if sign < 0:
                        corners[1], corners[2] = corners[2], corners[1]
                    elements.append(tuple(idx(*c) for c in corners))
    return vertices, np.array(elements, dtype=int)


def _perm_sign(perm):
    sign = 1
    perm = list(perm)
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
    return sign


def _build(cls, dim, vertices, elements):
    n_elem = len(elements)
    v0 = vertices[elements[:, 0]]
    mats = np.stack([vertices[elements[:, i + 1]] - v0 for i in range(dim)],
                    axis=2)
    dets = np.linalg.det(mats)
    if np.any(dets <= 1e-14):
        bad = int(np.argmin(dets))
        raise ValueError(f"element {bad} is degenerate or negatively oriented "
                         f"(det = {dets[bad]:.3e})")
    inv = np.linalg.inv(mats)
    measures = dets / math.factorial(dim)

    face_index: dict[tuple, int] = {}
    face_list = []
    face_elems = []
    face_local = []
    elem_faces = np.empty((n_elem, dim + 1), dtype=int)
    for e in range(n_elem):
        conn = elements[e]
        for lf in range(dim + 1):
            key = tuple(sorted(int(conn[i]) for i in range(dim + 1) if i != lf))
            f = face_index.get(key)
            if f is None:
                f = len(face_list)
                face_index[key] = f
                face_list.append(key)
                face_elems.append([e, -1])
                face_local.append([lf, -1])
            else:
                if face_elems[f][1] != -1:
                    raise ValueError(f"face {key} incident to >2 elements")
                face_elems[f][1] = e
                face_local[f][1] = lf
            elem_faces[e, lf] = f

    faces = np.array(face_list, dtype=int)
    face_elems = np.array(face_elems, dtype=int)
    face_local = np.array(face_local, dtype=int)
    boundary = face_elems[:, 1] < 0

    fverts = vertices[faces]                      # (nf, dim, dim)
    face_origin = fverts[:, 0, :]
    face_span = fverts[:, 1:, :] - face_origin[:, None, :]
    if dim == 2:
        tang = face_span[:, 0, :]
        face_measures = np.linalg.norm(tang, axis=1)
    else:
        cross = np.cross(face_span[:, 0, :], face_span[:, 1, :])
        face_measures = 0.5 * np.linalg.norm(cross, axis=1)

    normals = np.empty((n_elem, dim + 1, dim))
    centroids = vertices[elements].mean(axis=1)
    for e in range(n_elem):
        for lf in range(dim + 1):
            f = elem_faces[e, lf]
            pts = fverts[f]
            if dim == 2:
                t = pts[1] - pts[0]
                nvec = np.array([t[1], -t[0]])
            else:
                nvec = np.cross(pts[1] - pts[0], pts[2] - pts[0])
            nvec = nvec / np.linalg.norm(nvec)
            if np.dot(nvec, pts.mean(axis=0) - centroids[e]) < 0.0:
                nvec = -nvec
            normals[e, lf] = nvec

    return cls(
        dim=dim, vertices=vertices, elements=elements, faces=faces,
        face_elems=face_elems, face_local=face_local,
        boundary_flags=boundary, elem_faces=elem_faces, normals=normals,
        elem_measures=measures, face_measures=face_measures,
        affine_mats=mats, affine_inv=inv, affine_dets=dets, h=0.0,
        face_origin=face_origin, face_span=face_span,
    )
