"""Triangle mesh data model, hygiene pass, and synthetic fixture generators."""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import MeshError

__all__ = [
    "TriangleMesh",
    "CleanupReport",
    "cleanup_mesh",
    "icosphere",
    "bumpy_icosphere",
    "plane_grid",
    "surface_area",
]


class TriangleMesh:
    """Immutable triangle mesh: float64 vertices (N, 3) and int64 faces (F, 3).

    Face indices are validated at construction (in range, no repeated vertex
    within a face).  Adjacency-style derived quantities (areas, angles, edges,
    boundary flags, ...) are computed lazily, once, under an internal lock, so
    a mesh can be shared across worker threads.
    """

    __slots__ = ("vertices", "faces", "_cache", "_lock")

    def __init__(self, vertices, faces):
        vertices = np.array(vertices, dtype=np.float64, order="C", copy=True)
        faces = np.array(faces, dtype=np.int64, order="C", copy=True)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise MeshError(f"vertices must have shape (N, 3), got {vertices.shape}")
        if not np.isfinite(vertices).all():
            raise MeshError("vertices contain non-finite coordinates")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshError(f"faces must have shape (F, 3), got {faces.shape}")
        if faces.size:
            if faces.min() < 0 or faces.max() >= len(vertices):
                raise MeshError(
                    f"face index out of range (mesh has {len(vertices)} vertices)"
                )
            repeated = (
                (faces[:, 0] == faces[:, 1])
                | (faces[:, 1] == faces[:, 2])
                | (faces[:, 0] == faces[:, 2])
            )
            if repeated.any():
                raise MeshError(
                    f"face {int(np.flatnonzero(repeated)[0])} repeats a vertex index"
                )
        vertices.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "_cache", {})
        # reentrant: builders are allowed to pull in other derived quantities
        object.__setattr__(self, "_lock", threading.RLock())

    def __setattr__(self, name, value):
        raise AttributeError("TriangleMesh is immutable")

    # -- basic counts ------------------------------------------------------

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    def __repr__(self):
        return f"TriangleMesh({self.n_vertices} vertices, {self.n_faces} faces)"

    # -- lazy derived quantities ------------------------------------------

    def _derived(self, key, builder):
        cache = self._cache
        if key in cache:
            return cache[key]
        with self._lock:
            if key not in cache:
                cache[key] = builder()
        return cache[key]

    def _corner_geometry(self):
        """Per-face normals (unnormalized cross products), areas and corner angles."""
        v = self.vertices[self.faces]  # (F, 3, 3)
        cross = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        areas = 0.5 * np.linalg.norm(cross, axis=1)
        angles = np.empty((self.n_faces, 3))
        for c in range(3):
            a = v[:, (c + 1) % 3] - v[:, c]
            b = v[:, (c + 2) % 3] - v[:, c]
            num = np.einsum("ij,ij->i", a, b)
            den = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                cosang = np.clip(num / np.where(den > 0, den, 1.0), -1.0, 1.0)
            angles[:, c] = np.arccos(cosang)
        return cross, areas, angles

    @property
    def face_areas(self):
        return self._derived("geom", self._corner_geometry)[1]

    @property
    def corner_angles(self):
        """Interior angle at corner c of face f, shape (F, 3)."""
        return self._derived("geom", self._corner_geometry)[2]

    @property
    def face_normals(self):
        def build():
            cross, areas, _ = self._derived("geom", self._corner_geometry)
            norm = np.linalg.norm(cross, axis=1, keepdims=True)
            if (norm == 0).any():
                raise MeshError("zero-area face has no normal; run cleanup_mesh first")
            return cross / norm

        return self._derived("face_normals", build)

    def _edge_tables(self):
        f = self.faces
        # edge opposite corner c of face f, as a sorted (lo, hi) pair
        raw = np.stack(
            [
                np.sort(f[:, [1, 2]], axis=1),
                np.sort(f[:, [2, 0]], axis=1),
                np.sort(f[:, [0, 1]], axis=1),
            ],
            axis=1,
        ).reshape(-1, 2)  # (3F, 2), rows grouped face-major
        keys = raw[:, 0] * np.int64(self.n_vertices) + raw[:, 1]
        edges_keys, inverse, counts = np.unique(
            keys, return_inverse=True, return_counts=True
        )
        edges = np.column_stack(
            [edges_keys // self.n_vertices, edges_keys % self.n_vertices]
        )
        # angles opposite each edge occurrence (cotangent pairs live per edge)
        opp = np.full((len(edges_keys), 2), np.nan)
        slot = np.zeros(len(edges_keys), dtype=np.int64)
        angles = self.corner_angles.reshape(-1)
        for occ, e in enumerate(inverse):
            s = slot[e]
            if s < 2:
                opp[e, s] = angles[occ]
                slot[e] = s + 1
        return edges, counts, opp

    @property
    def edges(self):
        """Unique undirected edges, shape (E, 2), lexicographically sorted."""
        return self._derived("edges", self._edge_tables)[0]

    @property
    def edge_face_count(self):
        """Number of faces incident to each edge (1 = boundary, >2 = non-manifold)."""
        return self._derived("edges", self._edge_tables)[1]

    @property
    def edge_opposite_angles(self):
        """Angles opposite each edge in its (up to two) incident faces; NaN if absent."""
        return self._derived("edges", self._edge_tables)[2]

    @property
    def boundary_edge_mask(self):
        return self.edge_face_count == 1

    @property
    def boundary_vertex_mask(self):
        def build():
            mask = np.zeros(self.n_vertices, dtype=bool)
            mask[self.edges[self.boundary_edge_mask].ravel()] = True
            return mask

        return self._derived("boundary_vertices", build)

    @property
    def vertex_faces(self):
        """Vertex-to-face incidence as (indptr, face_indices) CSR arrays."""

        def build():
            flat = self.faces.ravel()
            order = np.argsort(flat, kind="stable")
            counts = np.bincount(flat, minlength=self.n_vertices)
            indptr = np.concatenate([[0], np.cumsum(counts)])
            return indptr, order // 3

        return self._derived("vertex_faces", build)

    @property
    def is_closed(self):
        return self.n_faces > 0 and not self.boundary_edge_mask.any()

    @property
    def euler_characteristic(self):
        return self.n_vertices - self.n_edges + self.n_faces

    @property
    def identity_hash(self):
        """SHA-256 over vertex and face bytes; identifies the mesh for provenance."""

        def build():
            h = hashlib.sha256()
            h.update(self.vertices.tobytes())
            h.update(b"|")
            h.update(self.faces.tobytes())
            return h.hexdigest()

        return self._derived("hash", build)

    # -- validation --------------------------------------------------------

    def validate(self, min_area=0.0):
        """Check manifoldness and face areas; raise MeshError on violation."""
        bad = np.flatnonzero(self.edge_face_count > 2)
        if bad.size:
            i, j = self.edges[bad[0]]
            raise MeshError(
                f"non-manifold edge ({int(i)}, {int(j)}) shared by "
                f"{int(self.edge_face_count[bad[0]])} faces"
            )
        if self.n_faces and self.face_areas.min() <= min_area:
            f = int(np.argmin(self.face_areas))
            raise MeshError(f"face {f} has area {self.face_areas[f]:g} <= {min_area:g}")
        return self


def surface_area(mesh):
    """Total surface area (sum of triangle areas)."""
    return float(mesh.face_areas.sum())


# -- cleanup ---------------------------------------------------------------


@dataclass
class CleanupReport:
    """Counts of everything cleanup_mesh changed; falsy when nothing changed."""

    vertices_merged: int = 0
    degenerate_faces_removed: int = 0
    zero_area_faces_removed: int = 0
    components_dropped: int = 0
    faces_in_dropped_components: int = 0
    unreferenced_vertices_removed: int = 0

    def __bool__(self):
        return any(
            (
                self.vertices_merged,
                self.degenerate_faces_removed,
                self.zero_area_faces_removed,
                self.components_dropped,
                self.faces_in_dropped_components,
                self.unreferenced_vertices_removed,
            )
        )

    def summary(self):
        parts = []
        if self.vertices_merged:
            parts.append(f"{self.vertices_merged} vertices merged")
        if self.degenerate_faces_removed:
            parts.append(f"{self.degenerate_faces_removed} degenerate faces removed")
        if self.zero_area_faces_removed:
            parts.append(f"{self.zero_area_faces_removed} zero-area faces removed")
        if self.components_dropped:
            parts.append(
                f"{self.components_dropped} component(s) dropped "
                f"({self.faces_in_dropped_components} faces)"
            )
        if self.unreferenced_vertices_removed:
            parts.append(
                f"{self.unreferenced_vertices_removed} unreferenced vertices removed"
            )
        return "; ".join(parts) if parts else "already clean"

    def as_dict(self):
        return {
            "vertices_merged": self.vertices_merged,
            "degenerate_faces_removed": self.degenerate_faces_removed,
            "zero_area_faces_removed": self.zero_area_faces_removed,
            "components_dropped": self.components_dropped,
            "faces_in_dropped_components": self.faces_in_dropped_components,
            "unreferenced_vertices_removed": self.unreferenced_vertices_removed,
        }


def _merge_close_vertices(vertices, merge_eps):
    """Union-find merge of vertex pairs closer than merge_eps.

    Returns (representative index per vertex, number of vertices merged away).
    Representatives are the smallest original index of each group, so vertex
    order stays stable.
    """
    n = len(vertices)
    parent = np.arange(n)

    def find(a):
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    pairs = cKDTree(vertices).query_pairs(r=merge_eps, output_type="ndarray")
    for a, b in pairs:
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            if ra < rb:
                parent[rb] = ra
            else:
                parent[ra] = rb
    rep = np.array([find(i) for i in range(n)])
    return rep, int(n - len(np.unique(rep)))


def cleanup_mesh(mesh, merge_eps=1e-6, min_area=1e-12):
    """Mesh hygiene pass.

    Merges duplicate vertices closer than ``merge_eps``, drops faces that are
    degenerate (repeated index after merging) or have area <= ``min_area``,
    keeps only the largest connected component (by face count, ties by area),
    and removes vertices left unreferenced.  Vertex and face order is stable.
    Idempotent.

    Returns
    -------
    (TriangleMesh, CleanupReport)
    """
    report = CleanupReport()
    rep, n_merged = _merge_close_vertices(mesh.vertices, merge_eps)
    report.vertices_merged = n_merged
    faces = rep[mesh.faces]

    repeated = (
        (faces[:, 0] == faces[:, 1])
        | (faces[:, 1] == faces[:, 2])
        | (faces[:, 0] == faces[:, 2])
    )
    report.degenerate_faces_removed = int(repeated.sum())
    faces = faces[~repeated]

    if len(faces):
        v = mesh.vertices[faces]
        areas = 0.5 * np.linalg.norm(
            np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1
        )
        tiny = areas <= min_area
        report.zero_area_faces_removed = int(tiny.sum())
        faces = faces[~tiny]
        areas = areas[~tiny]

    if not len(faces):
        raise MeshError("cleanup removed every face; nothing left to keep")

    # largest connected component over the vertex adjacency graph
    n = mesh.n_vertices
    ij = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    adj = coo_matrix((np.ones(len(ij)), (ij[:, 0], ij[:, 1])), shape=(n, n))
    n_comp, labels = connected_components(adj, directed=False)
    face_labels = labels[faces[:, 0]]
    used_labels, face_counts = np.unique(face_labels, return_counts=True)
    if len(used_labels) > 1:
        best = face_counts == face_counts.max()
        candidates = used_labels[best]
        if len(candidates) > 1:
            comp_areas = np.array(
                [areas[face_labels == lab].sum() for lab in candidates]
            )
            keep_label = candidates[int(np.argmax(comp_areas))]
        else:
            keep_label = candidates[0]
        drop = face_labels != keep_label
        report.components_dropped = int(len(used_labels) - 1)
        report.faces_in_dropped_components = int(drop.sum())
        faces = faces[~drop]

    referenced = np.zeros(n, dtype=bool)
    referenced[faces.ravel()] = True
    report.unreferenced_vertices_removed = int(n - referenced.sum())
    new_index = np.cumsum(referenced) - 1
    clean = TriangleMesh(mesh.vertices[referenced], new_index[faces])
    clean.validate(min_area=min_area)
    return clean, report


# -- fixture generators ------------------------------------------------------

_PHI = (1.0 + np.sqrt(5.0)) / 2.0

_ICOSA_VERTS = np.array(
    [
        (-1, _PHI, 0), (1, _PHI, 0), (-1, -_PHI, 0), (1, -_PHI, 0),
        (0, -1, _PHI), (0, 1, _PHI), (0, -1, -_PHI), (0, 1, -_PHI),
        (_PHI, 0, -1), (_PHI, 0, 1), (-_PHI, 0, -1), (-_PHI, 0, 1),
    ],
    dtype=np.float64,
)

_ICOSA_FACES = np.array(
    [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ],
    dtype=np.int64,
)


def icosphere(subdivisions, radius=1.0):
    """Subdivided icosahedron projected onto a sphere.

    ``subdivisions`` in [0, 7]; the result has 10 * 4**subdivisions + 2
    vertices, consistently outward-oriented faces, and is deterministic.
    """
    subdivisions = int(subdivisions)
    if not 0 <= subdivisions <= 7:
        raise ValueError(f"subdivisions must be in [0, 7], got {subdivisions}")
    radius = float(radius)
    if not np.isfinite(radius) or radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")

    verts = _ICOSA_VERTS / np.linalg.norm(_ICOSA_VERTS[0])
    faces = _ICOSA_FACES.copy()
    for _ in range(subdivisions):
        verts_list = list(verts)
        midpoint = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            idx = midpoint.get(key)
            if idx is None:
                m = verts_list[a] + verts_list[b]
                m = m / np.linalg.norm(m)
                idx = len(verts_list)
                verts_list.append(m)
                midpoint[key] = idx
            return idx

        new_faces = np.empty((4 * len(faces), 3), dtype=np.int64)
        for f, (a, b, c) in enumerate(faces):
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new_faces[4 * f : 4 * f + 4] = [
                (a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca),
            ]
        verts = np.asarray(verts_list)
        faces = new_faces

    verts = verts * radius
    # enforce outward orientation (normal pointing away from the origin)
    v = verts[faces]
    flip = (
        np.einsum("ij,ij->i", np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), v.mean(axis=1))
        < 0
    )
    faces[flip] = faces[flip][:, ::-1]
    return TriangleMesh(verts, faces)


def bumpy_icosphere(subdivisions, radius=1.0, amplitude=0.1, seed=0):
    """Icosphere with seeded radial bumps; breaks every spherical symmetry."""
    base = icosphere(subdivisions, radius)
    rng = np.random.default_rng(seed)
    bump = 1.0 + amplitude * rng.uniform(-1.0, 1.0, size=base.n_vertices)
    return TriangleMesh(base.vertices * bump[:, None], base.faces)


def plane_grid(nx, ny, spacing=1.0, origin=(0.0, 0.0, 0.0)):
    """Flat rectangular triangle grid in the z = origin[2] plane.

    (nx+1)*(ny+1) vertices, 2*nx*ny faces, consistently oriented toward +z.
    """
    nx, ny = int(nx), int(ny)
    if nx < 1 or ny < 1:
        raise ValueError("plane_grid needs nx >= 1 and ny >= 1")
    ox, oy, oz = (float(c) for c in origin)
    xs = ox + spacing * np.arange(nx + 1)
    ys = oy + spacing * np.arange(ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, oz)])

    def vid(i, j):
        return i * (ny + 1) + j

    faces = []
    for i in range(nx):
        for j in range(ny):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            faces.append((a, b, c))
            faces.append((a, c, d))
    return TriangleMesh(verts, np.asarray(faces, dtype=np.int64))
