"""Estimator wrappers around the functional core.

These follow the scikit-learn conventions: constructor arguments are stored
untouched, fitted state lives in trailing-underscore attributes, and
``get_params`` / ``set_params`` / ``check_is_fitted`` work as usual.  The
classes whose fit and transform inputs differ in kind (a mesh to fit, fields
to transform) deliberately do not inherit TransformerMixin, since the stock
``fit_transform(X)`` would be meaningless for them.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .correspondence import fmap_to_p2p, kabsch, solve_fmap
from .features import project_atom_features
from .harmonics import (
    FilterParams,
    apply_filter,
    default_hks_times,
    from_spectral,
    heat_diffuse,
    heat_kernel_signature,
    to_spectral,
)
from .mesh import TriangleMesh
from .spectral import (
    DEFAULT_RESIDUAL_TOL,
    DEFAULT_SOLVER_TOL,
    SpectralBasis,
    solve_spectrum,
)
from .validation import check_points

__all__ = [
    "ManifoldHarmonics",
    "HarmonicFilter",
    "HeatDiffusion",
    "HeatKernelSignature",
    "AtomFeatureProjector",
    "FunctionalMapping",
    "RigidAlignment",
]

DEFAULT_LAMBDA_MAX = 0.3


def _values(field_or_array):
    """Field wrappers and bare arrays both come through as plain arrays."""
    return getattr(field_or_array, "values", field_or_array)


def _resolve_basis(
    X, k, lambda_max, tol=DEFAULT_SOLVER_TOL, residual_tol=DEFAULT_RESIDUAL_TOL
):
    """Accept a ready basis or solve one from a mesh with the stored request."""
    if isinstance(X, SpectralBasis):
        return X
    if not isinstance(X, TriangleMesh):
        raise TypeError(
            f"expected a TriangleMesh or SpectralBasis, got {type(X).__name__}"
        )
    if k is None and lambda_max is None:
        lambda_max = DEFAULT_LAMBDA_MAX
    return solve_spectrum(
        X, k=k, lambda_max=lambda_max, tol=tol, residual_tol=residual_tol
    )


class ManifoldHarmonics(BaseEstimator):
    """Truncated Laplace-Beltrami eigenbasis as a transformer.

    ``fit`` takes a TriangleMesh (or a precomputed SpectralBasis) and solves
    the generalized eigenproblem; ``transform`` maps per-vertex fields to
    spectral coefficients and ``inverse_transform`` synthesizes them back.

    Parameters
    ----------
    k : int, optional
        Number of eigenpairs.  Mutually exclusive with ``lambda_max``.
    lambda_max : float, optional
        Keep every eigenvalue at or below this cap.  When neither argument
        is given the cap defaults to 0.3.
    tol, residual_tol : float
        Solver tolerance and acceptance threshold on the relative residual.
    """

    def __init__(
        self,
        k=None,
        lambda_max=None,
        tol=DEFAULT_SOLVER_TOL,
        residual_tol=DEFAULT_RESIDUAL_TOL,
    ):
        self.k = k
        self.lambda_max = lambda_max
        self.tol = tol
        self.residual_tol = residual_tol

    def fit(self, X, y=None):
        basis = _resolve_basis(X, self.k, self.lambda_max, self.tol, self.residual_tol)
        self.basis_ = basis
        self.eigenvalues_ = basis.eigenvalues
        self.eigenvectors_ = basis.vectors
        self.mass_ = basis.mass
        self.n_vertices_ = basis.n_vertices
        self.k_ = basis.k
        return self

    def transform(self, X):
        """Fields (n_vertices, n_channels) -> coefficients (k, n_channels)."""
        check_is_fitted(self, "basis_")
        return _values(to_spectral(X, self.basis_))

    def inverse_transform(self, X):
        """Coefficients (k, n_channels) -> fields (n_vertices, n_channels)."""
        check_is_fitted(self, "basis_")
        return _values(from_spectral(np.asarray(X, dtype=np.float64), self.basis_))


class HarmonicFilter(BaseEstimator):
    """Spectral band filter exp(-(lambda - mu)^2 / sigma^2 - lambda t).

    Fit on a mesh (or basis); transform per-vertex fields.  One parameter
    triple is applied to every channel.
    """

    def __init__(
        self,
        mu=0.0,
        sigma=1.0,
        t=0.0,
        k=None,
        lambda_max=None,
        tol=DEFAULT_SOLVER_TOL,
        residual_tol=DEFAULT_RESIDUAL_TOL,
    ):
        self.mu = mu
        self.sigma = sigma
        self.t = t
        self.k = k
        self.lambda_max = lambda_max
        self.tol = tol
        self.residual_tol = residual_tol

    def fit(self, X, y=None):
        self.basis_ = _resolve_basis(
            X, self.k, self.lambda_max, self.tol, self.residual_tol
        )
        self.params_ = FilterParams(mu=self.mu, sigma=self.sigma, t=self.t)
        self.response_ = self.params_.response(self.basis_.eigenvalues)
        return self

    def transform(self, X):
        check_is_fitted(self, "basis_")
        return _values(apply_filter(X, self.basis_, self.params_))


class HeatDiffusion(BaseEstimator):
    """Heat semigroup exp(-lambda t) in the truncated basis."""

    def __init__(
        self,
        t=1.0,
        k=None,
        lambda_max=None,
        tol=DEFAULT_SOLVER_TOL,
        residual_tol=DEFAULT_RESIDUAL_TOL,
    ):
        self.t = t
        self.k = k
        self.lambda_max = lambda_max
        self.tol = tol
        self.residual_tol = residual_tol

    def fit(self, X, y=None):
        self.basis_ = _resolve_basis(
            X, self.k, self.lambda_max, self.tol, self.residual_tol
        )
        return self

    def transform(self, X):
        check_is_fitted(self, "basis_")
        return _values(heat_diffuse(X, self.basis_, self.t))


class HeatKernelSignature(BaseEstimator):
    """Per-vertex heat-kernel signatures over a grid of diffusion times.

    ``fit`` solves the basis and fixes the time grid; ``transform`` checks the
    argument is the fitted mesh (or its basis, or None) and returns the
    (n_vertices, n_times) signature matrix.
    """

    def __init__(
        self,
        times=None,
        n_times=16,
        normalize=False,
        k=None,
        lambda_max=None,
        tol=DEFAULT_SOLVER_TOL,
        residual_tol=DEFAULT_RESIDUAL_TOL,
    ):
        self.times = times
        self.n_times = n_times
        self.normalize = normalize
        self.k = k
        self.lambda_max = lambda_max
        self.tol = tol
        self.residual_tol = residual_tol

    def fit(self, X, y=None):
        basis = _resolve_basis(X, self.k, self.lambda_max, self.tol, self.residual_tol)
        self.basis_ = basis
        if self.times is None:
            self.times_ = default_hks_times(basis.eigenvalues, n_times=self.n_times)
        else:
            self.times_ = np.asarray(self.times, dtype=np.float64)
        field = heat_kernel_signature(
            basis, times=self.times_, normalize=self.normalize
        )
        self.signatures_ = field.values
        self.channel_names_ = field.names
        return self

    def transform(self, X=None):
        check_is_fitted(self, "basis_")
        if isinstance(X, TriangleMesh) and X.identity_hash != self.basis_.mesh_hash:
            raise ValueError("transform argument is not the fitted mesh")
        return self.signatures_


class AtomFeatureProjector(BaseEstimator):
    """Project per-atom descriptors onto mesh vertices by neighborhood average.

    Fit stores the atom set; transform takes a TriangleMesh and returns the
    (n_vertices, n_columns + 1) channel matrix (descriptor columns plus mean
    inverse distance).
    """

    def __init__(self, table=None, radius=6.0, k_nearest=None):
        self.table = table
        self.radius = radius
        self.k_nearest = k_nearest

    def fit(self, X, y=None):
        if len(X) == 0:
            raise ValueError("cannot fit on an empty atom set")
        self.atoms_ = X
        return self

    def transform(self, X):
        check_is_fitted(self, "atoms_")
        field, report = project_atom_features(
            self.atoms_,
            X,
            table=self.table,
            radius=self.radius,
            k_nearest=self.k_nearest,
        )
        self.last_report_ = report
        self.channel_names_ = field.names
        return field.values


class FunctionalMapping(BaseEstimator):
    """Spectral correspondence between two meshes from matched descriptors.

    ``fit(X, y)`` takes ``(basis, field)`` pairs for the source and target
    shapes; the descriptor fields must have matching channels.  Attributes
    expose the functional-map matrix; ``point_map()`` converts it to a dense
    vertex-to-vertex correspondence.
    """

    def __init__(self, alpha=1e-3, ridge_scale=1e-10):
        self.alpha = alpha
        self.ridge_scale = ridge_scale

    def fit(self, X, y):
        basis_src, field_src = X
        basis_tgt, field_tgt = y
        coeffs_src = to_spectral(field_src, basis_src)
        coeffs_tgt = to_spectral(field_tgt, basis_tgt)
        self.map_ = solve_fmap(
            coeffs_src,
            coeffs_tgt,
            basis_src.eigenvalues,
            basis_tgt.eigenvalues,
            alpha=self.alpha,
            ridge_scale=self.ridge_scale,
        )
        self.matrix_ = self.map_.matrix
        self.residual_ = self.map_.residual
        self._basis_src = basis_src
        self._basis_tgt = basis_tgt
        return self

    def transform(self, X):
        """Map spectral coefficients from the source basis to the target's."""
        check_is_fitted(self, "map_")
        return self.matrix_ @ np.asarray(X, dtype=np.float64)

    def point_map(self):
        """Vertex correspondence target -> source implied by the fitted map."""
        check_is_fitted(self, "map_")
        return fmap_to_p2p(self.map_, self._basis_src, self._basis_tgt)


class RigidAlignment(BaseEstimator, TransformerMixin):
    """Least-squares rigid alignment (rotation + translation, no scaling).

    ``fit(X, y)`` finds the proper rigid transform carrying the points ``X``
    onto ``y``; ``transform`` applies it, ``score`` returns the negative RMSD
    after alignment.
    """

    def __init__(self):
        pass

    def fit(self, X, y, sample_weight=None):
        transform = kabsch(X, y, weights=sample_weight)
        self.transform_ = transform
        self.rotation_ = transform.rotation
        self.translation_ = transform.translation
        return self

    def transform(self, X):
        check_is_fitted(self, "transform_")
        return self.transform_.apply(check_points(X))

    def inverse_transform(self, X):
        check_is_fitted(self, "transform_")
        return self.transform_.inverse().apply(check_points(X))

    def score(self, X, y):
        """Negative root-mean-square deviation of transform(X) from y."""
        check_is_fitted(self, "transform_")
        moved = self.transform(X)
        y = check_points(y)
        return -float(np.sqrt(np.mean(np.sum((moved - y) ** 2, axis=1))))
