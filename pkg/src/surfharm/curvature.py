"""Per-vertex differential geometry: normals and discrete curvatures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import factorized

from .errors import MeshError
from .spectral import assemble_mass, assemble_stiffness

__all__ = [
    "vertex_normals",
    "gaussian_curvature",
    "mean_curvature",
    "curvature_field",
    "CurvatureField",
]


def vertex_normals(mesh):
    """Area-weighted average of incident face normals, normalized per vertex.

    Raises MeshError for vertices with no incident faces (no normal exists).
    """
    acc = np.zeros((mesh.n_vertices, 3))
    # cross products carry the area weighting already (|cross| = 2 * area)
    v = mesh.vertices[mesh.faces]
    cross = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    for c in range(3):
        np.add.at(acc, mesh.faces[:, c], cross)
    norms = np.linalg.norm(acc, axis=1)
    counts = np.bincount(mesh.faces.ravel(), minlength=mesh.n_vertices)
    if (counts == 0).any():
        raise MeshError(
            f"vertex {int(np.flatnonzero(counts == 0)[0])} has no incident faces"
        )
    if (norms == 0).any():
        raise MeshError(
            f"vertex {int(np.flatnonzero(norms == 0)[0])} has a vanishing normal"
        )
    return acc / norms[:, None]


def _barycentric_vertex_areas(mesh):
    acc = np.zeros(mesh.n_vertices)
    np.add.at(acc, mesh.faces.ravel(), np.repeat(mesh.face_areas, 3))
    return acc / 3.0


def gaussian_curvature(mesh):
    """Angle-defect Gaussian curvature.

    K(i) = (2*pi - sum of incident corner angles) / (barycentric vertex area);
    boundary vertices use pi in place of 2*pi.  The integrated defects of a
    closed mesh sum to 2*pi times its Euler characteristic.
    """
    angle_sum = np.zeros(mesh.n_vertices)
    np.add.at(angle_sum, mesh.faces.ravel(), mesh.corner_angles.ravel())
    full_turn = np.where(mesh.boundary_vertex_mask, np.pi, 2.0 * np.pi)
    areas = _barycentric_vertex_areas(mesh)
    if (areas == 0).any():
        raise MeshError("isolated vertex has no area; run cleanup_mesh first")
    return (full_turn - angle_sum) / areas


def mean_curvature(mesh, stiffness=None, mass=None):
    """Signed mean curvature from the mass-normalized cotangent displacement.

    With delta = B^{-1} (L @ xyz), H(i) = +-|delta_i| / 2, positive where
    delta_i points along the outward vertex normal (convex regions of an
    outward-oriented mesh are positive).  Values at boundary vertices are
    unreliable; flag them via ``mesh.boundary_vertex_mask``.
    """
    L = stiffness if stiffness is not None else assemble_stiffness(mesh)
    B = mass if mass is not None else assemble_mass(mesh)
    solve = factorized(B.tocsc())
    lx = L @ mesh.vertices
    delta = np.column_stack([solve(lx[:, c]) for c in range(3)])
    normals = vertex_normals(mesh)
    sign = np.where(np.einsum("ij,ij->i", delta, normals) >= 0, 1.0, -1.0)
    return 0.5 * sign * np.linalg.norm(delta, axis=1)


@dataclass(frozen=True)
class CurvatureField:
    """Bundle of per-vertex normals and curvatures plus the boundary flag."""

    gaussian: np.ndarray
    mean: np.ndarray
    normals: np.ndarray
    boundary: np.ndarray

    def __post_init__(self):
        n = self.gaussian.shape[0]
        if not (
            self.mean.shape == (n,)
            and self.normals.shape == (n, 3)
            and self.boundary.shape == (n,)
        ):
            raise ValueError("curvature arrays disagree in length")
        unit_dev = np.abs(np.linalg.norm(self.normals, axis=1) - 1.0).max() if n else 0.0
        if unit_dev > 1e-9:
            raise ValueError(f"normals deviate from unit length by {unit_dev:.3e}")


def curvature_field(mesh, stiffness=None, mass=None):
    """Compute normals plus both curvatures in one pass."""
    return CurvatureField(
        gaussian=gaussian_curvature(mesh),
        mean=mean_curvature(mesh, stiffness=stiffness, mass=mass),
        normals=vertex_normals(mesh),
        boundary=mesh.boundary_vertex_mask.copy(),
    )
