"""Spectral correspondence between two surfaces and rigid alignment on top.

The pipeline matches two surface patches through a small linear map between
their spectral coefficient spaces, converts it to a per-vertex map by
nearest neighbors in the mapped spectral embedding, and extracts a rigid
transform from the paired vertex positions.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import MatchError
from .harmonics import SpectralCoeffs, SurfaceField, default_hks_times, heat_kernel_signature
from .mesh import TriangleMesh
from .spectral import solve_spectrum
from .validation import check_index_array, check_points, check_positive

__all__ = [
    "InterfaceResult",
    "extract_interface",
    "submesh",
    "FunctionalMap",
    "solve_fmap",
    "VertexCorrespondence",
    "fmap_to_p2p",
    "RigidTransform",
    "kabsch",
    "complex_rmsd",
    "interface_rmsd",
    "DockOptions",
    "DockReport",
    "rigid_dock",
]


# -- interface extraction -----------------------------------------------------


@dataclass(frozen=True)
class InterfaceResult:
    """Vertices of each surface near the other one, plus mutual-NN pairs."""

    left_indices: np.ndarray
    right_indices: np.ndarray
    pairs: np.ndarray  # (m, 2) rows of (left vertex, right vertex)

    @property
    def is_empty(self):
        return self.left_indices.size == 0 and self.right_indices.size == 0


def extract_interface(mesh_left, mesh_right, threshold=3.0):
    """Vertices of each mesh within ``threshold`` of the other mesh's vertices.

    Pairs are mutual nearest neighbors between the two selections.  An empty
    interface is reported through the result, not raised.
    """
    threshold = check_positive(threshold, "threshold")
    left, right = mesh_left.vertices, mesh_right.vertices
    tree_l, tree_r = cKDTree(left), cKDTree(right)
    d_l, _ = tree_r.query(left)
    d_r, _ = tree_l.query(right)
    sel_l = np.flatnonzero(d_l <= threshold)
    sel_r = np.flatnonzero(d_r <= threshold)
    if sel_l.size == 0 or sel_r.size == 0:
        return InterfaceResult(sel_l, sel_r, np.empty((0, 2), dtype=np.int64))
    sub_l, sub_r = left[sel_l], right[sel_r]
    _, nn_of_l = cKDTree(sub_r).query(sub_l)  # index into sel_r per left vertex
    _, nn_of_r = cKDTree(sub_l).query(sub_r)
    mutual = nn_of_r[nn_of_l] == np.arange(sel_l.size)
    pairs = np.column_stack([sel_l[mutual], sel_r[nn_of_l[mutual]]])
    return InterfaceResult(sel_l, sel_r, pairs)


def submesh(mesh, vertex_indices, largest_component=True):
    """Whole-face submesh over a vertex selection.

    Keeps the faces whose three corners are all selected, optionally keeps
    only the largest face-connected component (by face count, ties by area),
    and drops unreferenced vertices.

    Returns
    -------
    (TriangleMesh, np.ndarray)
        The submesh and the original vertex index of each submesh vertex.
    """
    idx = check_index_array(vertex_indices, mesh.n_vertices, "vertex_indices")
    selected = np.zeros(mesh.n_vertices, dtype=bool)
    selected[idx] = True
    keep = selected[mesh.faces].all(axis=1)
    faces = mesh.faces[keep]
    if faces.size == 0:
        raise MatchError("vertex selection spans no complete face", stage="interface")

    if largest_component:
        n = mesh.n_vertices
        ij = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
        adj = coo_matrix((np.ones(len(ij)), (ij[:, 0], ij[:, 1])), shape=(n, n))
        _, labels = connected_components(adj, directed=False)
        face_labels = labels[faces[:, 0]]
        used, counts = np.unique(face_labels, return_counts=True)
        if used.size > 1:
            v = mesh.vertices[faces]
            areas = 0.5 * np.linalg.norm(
                np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1
            )
            best = used[counts == counts.max()]
            if best.size > 1:
                comp_area = [areas[face_labels == lab].sum() for lab in best]
                label = best[int(np.argmax(comp_area))]
            else:
                label = best[0]
            faces = faces[face_labels == label]

    referenced = np.zeros(mesh.n_vertices, dtype=bool)
    referenced[faces.ravel()] = True
    mapping = np.flatnonzero(referenced)
    new_index = np.cumsum(referenced) - 1
    return TriangleMesh(mesh.vertices[referenced], new_index[faces]), mapping


# -- functional map -----------------------------------------------------------


@dataclass(frozen=True)
class FunctionalMap:
    """Linear map C taking source spectral coefficients to target ones."""

    matrix: np.ndarray  # (k_target, k_source)
    alpha: float
    residual: float = 0.0
    source_basis_hash: str | None = None
    target_basis_hash: str | None = None


def _coeff_matrix(coeffs):
    if isinstance(coeffs, SpectralCoeffs):
        return coeffs.values, coeffs.basis_hash
    arr = np.atleast_2d(np.asarray(coeffs, dtype=np.float64))
    return arr, None


def solve_fmap(coeffs_src, coeffs_tgt, eigs_src, eigs_tgt, alpha=1e-3, ridge_scale=1e-10):
    """Least-squares functional map with a spectral commutativity penalty.

    Minimizes ||C A - B||_F^2 + alpha * ||C diag(eigs_src) - diag(eigs_tgt) C||_F^2
    row by row in closed form: row i solves (A A^T + alpha D_i + rho I) c_i =
    A b_i with D_i = diag((eigs_src_j - eigs_tgt_i)^2) and ridge
    rho = ridge_scale * trace(A A^T) / k_source.
    """
    a, src_hash = _coeff_matrix(coeffs_src)
    b, tgt_hash = _coeff_matrix(coeffs_tgt)
    if a.shape[1] != b.shape[1]:
        raise ValueError(
            f"descriptor counts differ: source {a.shape[1]}, target {b.shape[1]}"
        )
    if a.shape[1] == 0:
        raise ValueError("cannot fit a functional map with zero descriptor channels")
    lam_src = np.asarray(eigs_src, dtype=np.float64).ravel()
    lam_tgt = np.asarray(eigs_tgt, dtype=np.float64).ravel()
    k_src, k_tgt = a.shape[0], b.shape[0]
    if lam_src.shape[0] != k_src or lam_tgt.shape[0] != k_tgt:
        raise ValueError("eigenvalue vectors do not match coefficient row counts")
    alpha = float(alpha)
    if alpha < 0 or not np.isfinite(alpha):
        raise ValueError(f"alpha must be non-negative and finite, got {alpha}")

    gram = a @ a.T
    rho = ridge_scale * float(np.trace(gram)) / k_src
    rhs = (a @ b.T).T  # (k_tgt, k_src)
    mismatch = (lam_src[None, :] - lam_tgt[:, None]) ** 2  # (k_tgt, k_src)
    systems = np.broadcast_to(gram, (k_tgt, k_src, k_src)).copy()
    step = k_src + 1
    systems.reshape(k_tgt, -1)[:, ::step] += alpha * mismatch + rho
    try:
        c = np.linalg.solve(systems, rhs[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError as exc:
        raise MatchError(f"functional-map system is singular: {exc}", stage="fmap")
    residual = float(np.linalg.norm(c @ a - b))
    return FunctionalMap(
        matrix=c,
        alpha=alpha,
        residual=residual,
        source_basis_hash=src_hash,
        target_basis_hash=tgt_hash,
    )


@dataclass(frozen=True)
class VertexCorrespondence:
    """For each target vertex, the index of its matched source vertex."""

    indices: np.ndarray
    n_source: int
    n_target: int


def fmap_to_p2p(fmap, basis_src, basis_tgt):
    """Vertex map from a functional map by nearest spectral embeddings.

    Each target vertex y picks the source vertex x minimizing
    ||C z_src(x) - z_tgt(y)||_2 over the mapped source embedding rows.
    Exact ties break to the lowest source index; repeated calls are
    identical.
    """
    c = fmap.matrix if isinstance(fmap, FunctionalMap) else np.asarray(fmap, dtype=np.float64)
    if isinstance(fmap, FunctionalMap):
        if (
            fmap.source_basis_hash is not None
            and fmap.source_basis_hash != basis_src.identity_hash
        ):
            raise ValueError("functional map was fit against a different source basis")
        if (
            fmap.target_basis_hash is not None
            and fmap.target_basis_hash != basis_tgt.identity_hash
        ):
            raise ValueError("functional map was fit against a different target basis")
    if c.shape != (basis_tgt.k, basis_src.k):
        raise ValueError(
            f"map shape {c.shape} does not match bases ({basis_tgt.k}, {basis_src.k})"
        )
    mapped = basis_src.vectors @ c.T  # (n_src, k_tgt)
    targets = basis_tgt.vectors  # (n_tgt, k_tgt)
    src_sq = np.einsum("ij,ij->i", mapped, mapped)
    indices = np.empty(targets.shape[0], dtype=np.int64)
    chunk = max(1, int(2**22 // max(mapped.shape[0], 1)))
    for start in range(0, targets.shape[0], chunk):
        block = targets[start : start + chunk]
        d2 = src_sq[None, :] - 2.0 * (block @ mapped.T)
        indices[start : start + block.shape[0]] = np.argmin(d2, axis=1)
    return VertexCorrespondence(
        indices=indices, n_source=mapped.shape[0], n_target=targets.shape[0]
    )


# -- rigid alignment ----------------------------------------------------------


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid motion x -> R x + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).ravel()
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be (3, 3) and translation (3,)")
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-10:
            raise ValueError("rotation is not orthogonal")
        if abs(np.linalg.det(r) - 1.0) > 1e-10:
            raise ValueError("rotation must be proper (det = +1)")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def apply(self, points):
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def inverse(self):
        return RigidTransform(self.rotation.T, -(self.rotation.T @ self.translation))

    def as_matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @classmethod
    def from_matrix(cls, matrix):
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"expected a 4x4 matrix, got {m.shape}")
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))


def kabsch(source, target, weights=None):
    """Optimal proper rigid motion taking ``source`` points onto ``target``.

    Minimizes sum_i w_i ||R p_i + t - q_i||^2 via SVD of the weighted cross
    covariance with the determinant sign correction, so the result is always
    a rotation (never a reflection).  Needs >= 3 point pairs whose covariance
    has rank >= 2.
    """
    p = check_points(source, "source", min_points=3)
    q = check_points(target, "target", min_points=3)
    if p.shape != q.shape:
        raise ValueError(f"point sets differ in shape: {p.shape} vs {q.shape}")
    if weights is None:
        w = np.full(len(p), 1.0 / len(p))
    else:
        w = np.asarray(weights, dtype=np.float64).ravel()
        if w.shape[0] != len(p):
            raise ValueError("weights length does not match point count")
        if (w < 0).any() or w.sum() <= 0:
            raise ValueError("weights must be non-negative with a positive sum")
        w = w / w.sum()
    p_bar = w @ p
    q_bar = w @ q
    h = (p - p_bar).T @ ((q - q_bar) * w[:, None])
    u, s, vt = np.linalg.svd(h)
    if s[1] <= 1e-12 * max(s[0], 1e-300):
        raise MatchError(
            "degenerate point configuration (cross-covariance rank < 2)",
            stage="align",
        )
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = q_bar - r @ p_bar
    return RigidTransform(r, t)


def complex_rmsd(reference, predicted):
    """RMSD between two copies of a complex after optimal superposition.

    Superimposes ``predicted`` onto ``reference`` with kabsch, then returns
    sqrt(mean squared distance) over all points.  Symmetric in its arguments
    up to floating-point noise.
    """
    ref = check_points(reference, "reference", min_points=3)
    pred = check_points(predicted, "predicted", min_points=3)
    if ref.shape != pred.shape:
        raise ValueError(f"point sets differ in shape: {ref.shape} vs {pred.shape}")
    moved = kabsch(pred, ref).apply(pred)
    return float(np.sqrt(np.mean(np.sum((moved - ref) ** 2, axis=1))))


def interface_rmsd(reference, predicted, n_first, interface_threshold=8.0):
    """Complex RMSD restricted to the interface of the reference complex.

    ``n_first`` splits both point sets into the two bodies; interface points
    are those of either body within ``interface_threshold`` of the other body
    *in the reference complex*.
    """
    ref = check_points(reference, "reference", min_points=3)
    pred = check_points(predicted, "predicted", min_points=3)
    if ref.shape != pred.shape:
        raise ValueError(f"point sets differ in shape: {ref.shape} vs {pred.shape}")
    n_first = int(n_first)
    if not 0 < n_first < len(ref):
        raise ValueError("n_first must split the points into two non-empty bodies")
    threshold = check_positive(interface_threshold, "interface_threshold")
    body_a, body_b = ref[:n_first], ref[n_first:]
    d_a, _ = cKDTree(body_b).query(body_a)
    d_b, _ = cKDTree(body_a).query(body_b)
    selected = np.concatenate(
        [np.flatnonzero(d_a <= threshold), n_first + np.flatnonzero(d_b <= threshold)]
    )
    if selected.size < 3:
        raise MatchError(
            f"interface has {selected.size} points within {threshold:g}; "
            "too few to align",
            stage="interface",
        )
    return complex_rmsd(ref[selected], pred[selected])


# -- docking pipeline ---------------------------------------------------------


@dataclass
class DockOptions:
    """Knobs for rigid_dock; spectral request defaults to lambda_max=0.3."""

    interface_threshold: float = 3.0
    min_interface_vertices: int = 10
    k: int | None = None
    lambda_max: float | None = None
    alpha: float = 1e-3
    include_hks: bool = True
    n_hks: int = 16
    solver_tol: float = 1e-9
    residual_tol: float = 1e-8

    def spectral_request(self, n_sub):
        if self.k is not None:
            return {"k": min(int(self.k), n_sub)}
        return {"lambda_max": self.lambda_max if self.lambda_max is not None else 0.3}


@dataclass
class DockReport:
    """Everything rigid_dock measured along the way."""

    interface_size_source: int = 0
    interface_size_target: int = 0
    submesh_vertices_source: int = 0
    submesh_vertices_target: int = 0
    k_source: int = 0
    k_target: int = 0
    fmap_residual: float = 0.0
    correlations: dict = field(default_factory=dict)
    channel_names: tuple = ()
    timing: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "interface_size_source": self.interface_size_source,
            "interface_size_target": self.interface_size_target,
            "submesh_vertices_source": self.submesh_vertices_source,
            "submesh_vertices_target": self.submesh_vertices_target,
            "k_source": self.k_source,
            "k_target": self.k_target,
            "fmap_residual": self.fmap_residual,
            "correlations": dict(self.correlations),
            "timing": dict(self.timing),
        }


def _safe_pearson(a, b):
    """Pearson r with a deterministic convention for constant channels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-300)
    sa, sb = a.std(), b.std()
    if sa <= 1e-12 * scale or sb <= 1e-12 * scale:
        return 1.0 if np.abs(a - b).max(initial=0.0) <= 1e-9 * scale else 0.0
    return float(np.corrcoef(a, b)[0, 1])


def _shared_hks_times(eigs_a, eigs_b, n_times):
    lam = lambda e: e[e > 1e-12 * max(float(e.max()), 1.0)]
    nz_a, nz_b = lam(eigs_a), lam(eigs_b)
    if nz_a.size == 0 or nz_b.size == 0:
        raise MatchError(
            "a submesh spectrum has no nonzero eigenvalue; interface too small",
            stage="spectrum",
        )
    t_lo = 4.0 * np.log(10.0) / min(nz_a[-1], nz_b[-1])
    t_hi = 4.0 * np.log(10.0) / max(nz_a[0], nz_b[0])
    return np.geomspace(min(t_lo, t_hi), max(t_lo, t_hi), n_times)


def _restricted_field(fields, mapping, n_full, side):
    if fields is None:
        return None, ()
    if isinstance(fields, SurfaceField):
        values, names = fields.values, fields.names
    else:
        values = np.atleast_2d(np.asarray(fields, dtype=np.float64))
        names = tuple(f"c{i}" for i in range(values.shape[1]))
    if values.shape[0] != n_full:
        raise ValueError(
            f"{side} fields have {values.shape[0]} rows for {n_full} vertices"
        )
    return values[mapping], names


def rigid_dock(
    mesh_source,
    mesh_target,
    fields_source=None,
    fields_target=None,
    interface_source=None,
    interface_target=None,
    options=None,
):
    """Dock ``mesh_target`` onto ``mesh_source`` through spectral matching.

    Interface submeshes (supplied masks, or extracted from the meshes' common
    frame) get fresh spectra; descriptors (heat-kernel signatures on a shared
    time grid plus any supplied per-vertex fields) drive a functional map
    from source to target, that map becomes a per-vertex correspondence, and
    the correspondence is read out as the rigid motion carrying the target
    interface onto its matched source positions.

    Returns
    -------
    (RigidTransform, DockReport)
        The transform maps target-mesh coordinates into the source frame.
    """
    opts = options or DockOptions()
    report = DockReport()
    clock = time.perf_counter

    t0 = clock()
    if interface_source is None or interface_target is None:
        found = extract_interface(mesh_source, mesh_target, opts.interface_threshold)
        if interface_source is None:
            interface_source = found.left_indices
        if interface_target is None:
            interface_target = found.right_indices
    interface_source = check_index_array(
        interface_source, mesh_source.n_vertices, "interface_source"
    )
    interface_target = check_index_array(
        interface_target, mesh_target.n_vertices, "interface_target"
    )
    report.interface_size_source = int(interface_source.size)
    report.interface_size_target = int(interface_target.size)
    if interface_source.size == 0 or interface_target.size == 0:
        raise MatchError(
            f"empty interface at threshold {opts.interface_threshold:g}",
            stage="interface",
        )
    sub_s, map_s = submesh(mesh_source, interface_source)
    sub_t, map_t = submesh(mesh_target, interface_target)
    report.submesh_vertices_source = sub_s.n_vertices
    report.submesh_vertices_target = sub_t.n_vertices
    if min(sub_s.n_vertices, sub_t.n_vertices) < opts.min_interface_vertices:
        raise MatchError(
            f"interface too small: {sub_s.n_vertices} / {sub_t.n_vertices} vertices "
            f"(need {opts.min_interface_vertices})",
            stage="interface",
        )
    report.timing["interface_s"] = clock() - t0

    t0 = clock()
    basis_s = solve_spectrum(
        sub_s,
        tol=opts.solver_tol,
        residual_tol=opts.residual_tol,
        **opts.spectral_request(sub_s.n_vertices),
    )
    basis_t = solve_spectrum(
        sub_t,
        tol=opts.solver_tol,
        residual_tol=opts.residual_tol,
        **opts.spectral_request(sub_t.n_vertices),
    )
    report.k_source, report.k_target = basis_s.k, basis_t.k
    report.timing["spectrum_s"] = clock() - t0

    t0 = clock()
    desc_s, desc_t = [], []
    names = []
    if opts.include_hks:
        times = _shared_hks_times(basis_s.eigenvalues, basis_t.eigenvalues, opts.n_hks)
        hks_s = heat_kernel_signature(basis_s, times=times)
        hks_t = heat_kernel_signature(basis_t, times=times)
        desc_s.append(hks_s.values)
        desc_t.append(hks_t.values)
        names.extend(hks_s.names)
    f_s, names_s = _restricted_field(fields_source, map_s, mesh_source.n_vertices, "source")
    f_t, names_t = _restricted_field(fields_target, map_t, mesh_target.n_vertices, "target")
    if (f_s is None) != (f_t is None):
        raise ValueError("supply per-vertex fields for both surfaces or neither")
    if f_s is not None:
        if f_s.shape[1] != f_t.shape[1]:
            raise ValueError("source and target fields disagree in channel count")
        desc_s.append(f_s)
        desc_t.append(f_t)
        names.extend(f"field:{n}" for n in names_s)
    if not desc_s:
        raise ValueError("no descriptors: enable include_hks or supply fields")
    d_s = np.hstack(desc_s)
    d_t = np.hstack(desc_t)
    report.channel_names = tuple(names)

    coeffs_s = basis_s.vectors.T @ (basis_s.mass @ d_s)
    coeffs_t = basis_t.vectors.T @ (basis_t.mass @ d_t)
    fmap = solve_fmap(
        coeffs_s, coeffs_t, basis_s.eigenvalues, basis_t.eigenvalues, alpha=opts.alpha
    )
    report.fmap_residual = fmap.residual
    report.timing["fmap_s"] = clock() - t0

    t0 = clock()
    p2p = fmap_to_p2p(fmap, basis_s, basis_t)
    matched = d_s[p2p.indices]
    for c, name in enumerate(names):
        report.correlations[name] = _safe_pearson(d_t[:, c], matched[:, c])
    report.timing["p2p_s"] = clock() - t0

    t0 = clock()
    transform = kabsch(sub_t.vertices, sub_s.vertices[p2p.indices])
    report.timing["align_s"] = clock() - t0
    return transform, report
