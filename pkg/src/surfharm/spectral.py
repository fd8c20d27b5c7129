"""Linear-FEM Laplace-Beltrami operator and its truncated eigenbasis.

assemble_stiffness builds the positive semi-definite cotangent operator L
(quadratic form = Dirichlet energy, row sums zero, constants in the kernel);
assemble_mass builds the non-lumped FEM mass matrix B.  solve_spectrum solves
L z = lambda B z for the low end of the spectrum via a shift-inverted Lanczos
iteration (ARPACK) with a deterministic start vector, or densely when the
requested count approaches the mesh size.
"""

from __future__ import annotations

import hashlib
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sparse
import scipy.sparse.linalg as splinalg

from .errors import MeshError, SpectralError
from .mesh import TriangleMesh

__all__ = [
    "assemble_stiffness",
    "assemble_mass",
    "solve_spectrum",
    "SpectralBasis",
    "weyl_slope",
    "WeylFit",
]

DEFAULT_SOLVER_TOL = 1e-9
DEFAULT_RESIDUAL_TOL = 1e-8
DEFAULT_SHIFT_SCALE = 1e-8
_DENSE_CUTOFF = 96
_V0_SEED = 0x5EED


def _face_cotangents(mesh):
    """Half-cotangent weight opposite each face corner, shape (F, 3)."""
    v = mesh.vertices[mesh.faces]
    areas = mesh.face_areas
    if mesh.n_faces == 0:
        raise MeshError("cannot assemble operators on a mesh with no faces")
    if areas.min() <= 0:
        raise MeshError(
            f"face {int(np.argmin(areas))} has zero area; run cleanup_mesh first"
        )
    dots = np.empty((mesh.n_faces, 3))
    for c in range(3):
        a = v[:, (c + 1) % 3] - v[:, c]
        b = v[:, (c + 2) % 3] - v[:, c]
        dots[:, c] = np.einsum("ij,ij->i", a, b)
    cots = dots / (4.0 * areas[:, None])  # cot(theta_c) / 2 = dot / (2*|cross|) / 2
    if not np.isfinite(cots).all():
        raise MeshError("non-finite cotangent weight (zero-area face slipped through)")
    return cots


def assemble_stiffness(mesh):
    """Cotangent stiffness matrix L (CSR, symmetric, positive semi-definite).

    Off-diagonal entries are -(cot(alpha) + cot(beta)) / 2 for the two angles
    opposite each edge; each diagonal entry is the negated sum of its row's
    off-diagonals, stored *after* them so that ``L @ ones`` cancels to exactly
    0.0 per row in float arithmetic.  The index arrays are therefore not
    column-sorted; take ``L.copy()`` before handing the matrix to routines
    that canonicalize their input in place.
    """
    n = mesh.n_vertices
    f = mesh.faces
    w = _face_cotangents(mesh)
    rows = np.concatenate([f[:, 1], f[:, 2], f[:, 2], f[:, 0], f[:, 0], f[:, 1]])
    cols = np.concatenate([f[:, 2], f[:, 1], f[:, 0], f[:, 2], f[:, 1], f[:, 0]])
    vals = -np.concatenate([w[:, 0], w[:, 0], w[:, 1], w[:, 1], w[:, 2], w[:, 2]])
    off = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()

    # sequential per-row sums, matching CSR matvec accumulation order
    diag = np.empty(n)
    data, indptr = off.data, off.indptr
    for i in range(n):
        acc = 0.0
        for value in data[indptr[i] : indptr[i + 1]].tolist():
            acc += value
        diag[i] = -acc

    new_data = np.insert(off.data, off.indptr[1:], diag)
    new_indices = np.insert(off.indices, off.indptr[1:], np.arange(n))
    new_indptr = off.indptr + np.arange(n + 1)
    return sparse.csr_matrix((new_data, new_indices, new_indptr), shape=(n, n))


def assemble_mass(mesh):
    """Non-lumped FEM mass matrix B (CSR, symmetric positive definite).

    Per triangle of area ``a``: a/6 on each corner's diagonal entry and a/12
    on each of the six off-diagonal corner pairs; the total of all entries is
    the surface area.
    """
    n = mesh.n_vertices
    f = mesh.faces
    areas = mesh.face_areas
    if mesh.n_faces == 0:
        raise MeshError("cannot assemble operators on a mesh with no faces")
    if areas.min() <= 0:
        raise MeshError(
            f"face {int(np.argmin(areas))} has zero area; run cleanup_mesh first"
        )
    sixth = areas / 6.0
    twelfth = areas / 12.0
    rows = np.concatenate(
        [f[:, 0], f[:, 1], f[:, 2], f[:, 1], f[:, 2], f[:, 2], f[:, 0], f[:, 0], f[:, 1]]
    )
    cols = np.concatenate(
        [f[:, 0], f[:, 1], f[:, 2], f[:, 2], f[:, 1], f[:, 0], f[:, 2], f[:, 1], f[:, 0]]
    )
    vals = np.concatenate([sixth, sixth, sixth] + [twelfth] * 6)
    return sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


@dataclass(frozen=True)
class SpectralBasis:
    """Truncated Laplace-Beltrami eigenbasis of one mesh.

    ``eigenvalues`` ascend from (numerically) zero; the columns of ``vectors``
    are B-orthonormal; ``mass`` is the matrix they are orthonormal against.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    mass: sparse.csr_matrix
    mesh_hash: str | None = None
    request: dict = field(default_factory=dict)
    max_residual: float = 0.0
    tol: float = DEFAULT_SOLVER_TOL

    def __post_init__(self):
        evals = np.ascontiguousarray(self.eigenvalues, dtype=np.float64)
        vecs = np.ascontiguousarray(self.vectors, dtype=np.float64)
        if evals.ndim != 1 or vecs.ndim != 2 or vecs.shape[1] != evals.shape[0]:
            raise SpectralError(
                f"inconsistent basis shapes {evals.shape} / {vecs.shape}"
            )
        if evals.size and (np.diff(evals) < 0).any():
            raise SpectralError("eigenvalues must be ascending")
        if evals.size and evals[0] < 0:
            raise SpectralError("eigenvalues must be non-negative")
        evals.setflags(write=False)
        vecs.setflags(write=False)
        object.__setattr__(self, "eigenvalues", evals)
        object.__setattr__(self, "vectors", vecs)

    @property
    def k(self):
        return self.eigenvalues.shape[0]

    @property
    def n_vertices(self):
        return self.vectors.shape[0]

    @property
    def identity_hash(self):
        h = hashlib.sha256()
        h.update(self.eigenvalues.tobytes())
        h.update(self.vectors.tobytes())
        h.update((self.mesh_hash or "").encode())
        return h.hexdigest()


def _fix_signs(vecs):
    """Make the largest-magnitude entry of each column positive (in place)."""
    idx = np.argmax(np.abs(vecs), axis=0)
    flip = vecs[idx, np.arange(vecs.shape[1])] < 0
    vecs[:, flip] *= -1.0
    return vecs


def _eig_once(L, B, k, maxiter_factor, shift_scale):
    n = L.shape[0]
    # Lanczos can return a non-lowest eigenpair when the cut falls inside a
    # near-degenerate cluster (symmetric meshes do this constantly), so solve
    # with a guard band of extra pairs and keep the k lowest.
    pad = max(8, k // 4)
    if k + pad >= n - 1 or n <= _DENSE_CUTOFF:
        try:
            vals, vecs = scipy.linalg.eigh(
                L.toarray(), B.toarray(), subset_by_index=[0, k - 1]
            )
        except scipy.linalg.LinAlgError as exc:
            raise SpectralError(f"dense eigensolve failed: {exc}") from exc
        return vals, vecs
    k_solve = k + pad
    eps = shift_scale * (L.diagonal().sum() / n)
    v0 = np.random.default_rng(_V0_SEED).standard_normal(n)
    try:
        # tol=0 means machine-precision stopping.  A loosened ARPACK stopping
        # criterion can return accurate pairs that are NOT the lowest ones
        # (members of a degenerate cluster get skipped); the user-facing
        # tolerance is enforced on the residuals afterwards instead.
        vals, vecs = splinalg.eigsh(
            L.copy(),
            k=k_solve,
            M=B,
            sigma=-eps,
            which="LM",
            v0=v0,
            tol=0,
            ncv=min(n, max(2 * k_solve + 1, 64)),
            maxiter=max(maxiter_factor * k_solve, 100),
        )
    except splinalg.ArpackNoConvergence as exc:
        raise SpectralError(
            f"eigensolver did not converge for k={k} within the iteration cap"
        ) from exc
    except RuntimeError as exc:
        raise SpectralError(f"shifted factorization failed: {exc}") from exc
    order = np.argsort(vals, kind="stable")
    return vals[order[:k]], vecs[:, order[:k]]


def _postprocess(L, B, vals, vecs, tol, residual_tol):
    vals = vals.copy()
    # the operator's mean diagonal keeps the numerical-zero floor meaningful
    # even when every computed eigenvalue is itself a numerical zero (k=1)
    scale = max(
        abs(float(vals[-1])),
        abs(float(vals[0])),
        float(L.diagonal().sum()) / L.shape[0],
        1e-300,
    )
    floor = -max(residual_tol, 1e-10) * scale
    if vals[0] < floor:
        raise SpectralError(
            f"negative eigenvalue {vals[0]:g} exceeds the numerical-zero floor"
        )
    np.clip(vals, 0.0, None, out=vals)
    _fix_signs(vecs)

    bz = B @ vecs
    res = np.linalg.norm(L @ vecs - bz * vals, axis=0)
    denom = np.linalg.norm(bz, axis=0)
    rel = res / np.where(denom > 0, denom, 1.0)
    max_residual = float(rel.max()) if rel.size else 0.0
    if max_residual > tol:
        raise SpectralError(
            f"eigenpair residual {max_residual:.3e} exceeds the solver tolerance {tol:g}"
        )
    gram = vecs.T @ bz
    ortho_dev = float(np.abs(gram - np.eye(gram.shape[0])).max())
    if ortho_dev > max(residual_tol, 1e-8):
        raise SpectralError(
            f"eigenvectors deviate from B-orthonormality by {ortho_dev:.3e}"
        )
    return vals, vecs, max_residual


def solve_spectrum(
    operand,
    mass=None,
    *,
    k=None,
    lambda_max=None,
    tol=DEFAULT_SOLVER_TOL,
    residual_tol=DEFAULT_RESIDUAL_TOL,
    maxiter_factor=10,
    shift_scale=DEFAULT_SHIFT_SCALE,
    mesh_hash=None,
):
    """Low end of the generalized eigenproblem L z = lambda B z.

    ``operand`` is a TriangleMesh (operators assembled here) or a stiffness
    matrix with ``mass`` supplied.  Exactly one of ``k`` (eigenpair count) and
    ``lambda_max`` (eigenvalue cap) must be given; in cap mode the count is
    grown geometrically until the spectrum passes the cap, then truncated to
    the eigenvalues <= lambda_max.  The iteration itself converges to machine
    precision; ``tol`` bounds the accepted per-pair relative residual
    ||L z - lambda B z|| / ||B z||.  Eigenvector signs are fixed by making
    each column's largest-magnitude entry positive.
    """
    if isinstance(operand, TriangleMesh):
        L = assemble_stiffness(operand)
        B = assemble_mass(operand)
        mesh_hash = operand.identity_hash
    else:
        L = operand
        B = mass
        if B is None:
            raise ValueError("mass matrix required when passing a stiffness matrix")
    if (k is None) == (lambda_max is None):
        raise ValueError("specify exactly one of k and lambda_max")
    tol = float(tol)
    if not np.isfinite(tol) or tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")

    n = L.shape[0]
    if k is not None:
        k = int(k)
        if not 1 <= k <= n:
            raise ValueError(f"k must be in [1, {n}], got {k}")
        request = {"k": k}
        vals, vecs = _eig_once(L, B, k, maxiter_factor, shift_scale)
    else:
        lambda_max = float(lambda_max)
        if not np.isfinite(lambda_max) or lambda_max <= 0:
            raise ValueError(f"lambda_max must be positive, got {lambda_max}")
        request = {"lambda_max": lambda_max}
        kk = min(n, 32)
        while True:
            vals, vecs = _eig_once(L, B, kk, maxiter_factor, shift_scale)
            if vals[-1] > lambda_max or kk == n:
                break
            kk = min(n, 2 * kk)
        keep = int(np.searchsorted(vals, lambda_max, side="right"))
        if keep == 0:
            raise SpectralError(
                f"no eigenvalue at or below lambda_max={lambda_max:g}"
            )
        vals, vecs = vals[:keep], vecs[:, :keep]

    vals, vecs, max_residual = _postprocess(L, B, vals, vecs, tol, residual_tol)
    return SpectralBasis(
        eigenvalues=vals,
        vectors=vecs,
        mass=B,
        mesh_hash=mesh_hash,
        request=request,
        max_residual=max_residual,
        tol=tol,
    )


WeylFit = namedtuple("WeylFit", ["slope", "expected", "ratio"])


def weyl_slope(basis_or_eigenvalues, area):
    """Least-squares slope of eigenvalue vs. index over the top three quarters.

    For a closed surface the asymptotic count N(lambda) ~ area * lambda / 4pi
    predicts a slope of 4pi/area; the returned ratio is measured/predicted.
    Requires at least 30 eigenvalues.
    """
    eigenvalues = getattr(basis_or_eigenvalues, "eigenvalues", basis_or_eigenvalues)
    eigenvalues = np.asarray(eigenvalues, dtype=np.float64)
    k = eigenvalues.shape[0]
    if k < 30:
        raise ValueError(f"weyl_slope needs at least 30 eigenvalues, got {k}")
    area = float(area)
    if area <= 0:
        raise ValueError("area must be positive")
    idx = np.arange(k // 4, k)
    slope = float(np.polyfit(idx, eigenvalues[idx], 1)[0])
    expected = 4.0 * np.pi / area
    return WeylFit(slope=slope, expected=expected, ratio=slope / expected)
