"""Harmonic analysis of per-vertex fields against a spectral basis.

Analysis is f_hat = Z^T B f, synthesis is f = Z f_hat; both accept either a
bare (n_vertices, n_channels) array or a named SurfaceField and return the
matching kind.  Filtering multiplies coefficients by the band response
F(lambda) = exp(-(lambda - mu)^2 / sigma^2) * exp(-lambda * t).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import SpectralError
from .mesh import TriangleMesh
from .spectral import SpectralBasis
from .validation import check_non_negative, check_positive, check_vertex_field

__all__ = [
    "SurfaceField",
    "SpectralCoeffs",
    "FilterParams",
    "to_spectral",
    "from_spectral",
    "apply_filter",
    "heat_diffuse",
    "default_hks_times",
    "heat_kernel_signature",
    "smooth_coordinates",
    "filter_gradients",
    "fit_filter",
]


def _default_names(n):
    return tuple(f"c{i}" for i in range(n))


@dataclass
class SurfaceField:
    """Named per-vertex channels, optionally tied to a mesh by its hash."""

    values: np.ndarray
    names: tuple = ()
    mesh_hash: str | None = None

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 2:
            raise ValueError("field values must be 2D (vertices x channels)")
        if not self.names:
            self.names = _default_names(self.values.shape[1])
        self.names = tuple(str(n) for n in self.names)
        if len(self.names) != self.values.shape[1]:
            raise ValueError(
                f"{len(self.names)} names for {self.values.shape[1]} channels"
            )

    @property
    def n_vertices(self):
        return self.values.shape[0]

    @property
    def n_channels(self):
        return self.values.shape[1]

    @classmethod
    def on_mesh(cls, mesh, values, names=()):
        values = check_vertex_field(values, mesh.n_vertices)
        return cls(values, names=tuple(names), mesh_hash=mesh.identity_hash)


@dataclass
class SpectralCoeffs:
    """Per-channel expansion coefficients against one spectral basis."""

    values: np.ndarray
    names: tuple = ()
    basis_hash: str | None = None

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        if not self.names:
            self.names = _default_names(self.values.shape[1])
        self.names = tuple(str(n) for n in self.names)
        if len(self.names) != self.values.shape[1]:
            raise ValueError(
                f"{len(self.names)} names for {self.values.shape[1]} channels"
            )

    @property
    def k(self):
        return self.values.shape[0]

    @property
    def n_channels(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class FilterParams:
    """Band filter parameters: Gaussian center mu, width sigma, heat time t."""

    mu: float
    sigma: float
    t: float = 0.0

    def __post_init__(self):
        mu = float(self.mu)
        if not np.isfinite(mu):
            raise ValueError(f"mu must be finite, got {mu}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", check_positive(self.sigma, "sigma"))
        object.__setattr__(self, "t", check_non_negative(self.t, "t"))

    def response(self, eigenvalues):
        lam = np.asarray(eigenvalues, dtype=np.float64)
        return np.exp(-((lam - self.mu) ** 2) / self.sigma**2 - lam * self.t)


# -- plumbing ---------------------------------------------------------------


def _field_values(field, basis, check_hash=True):
    """Extract (values, names, was_wrapped) and run consistency checks."""
    if isinstance(field, SurfaceField):
        if (
            check_hash
            and field.mesh_hash is not None
            and basis.mesh_hash is not None
            and field.mesh_hash != basis.mesh_hash
        ):
            raise ValueError("field and basis belong to different meshes (hash mismatch)")
        values, names, wrapped = field.values, field.names, True
    else:
        values = np.atleast_2d(np.asarray(field, dtype=np.float64))
        if np.asarray(field).ndim == 1:
            values = values.T
        names, wrapped = _default_names(values.shape[1]), False
    values = check_vertex_field(values, basis.n_vertices)
    return values, names, wrapped


def _coeff_values(coeffs, basis):
    if isinstance(coeffs, SpectralCoeffs):
        if (
            coeffs.basis_hash is not None
            and coeffs.basis_hash != basis.identity_hash
        ):
            raise ValueError("coefficients were computed against a different basis")
        values, names, wrapped = coeffs.values, coeffs.names, True
    else:
        values = np.atleast_2d(np.asarray(coeffs, dtype=np.float64))
        if np.asarray(coeffs).ndim == 1:
            values = values.T
        names, wrapped = _default_names(values.shape[1]), False
    if values.shape[0] != basis.k:
        raise ValueError(
            f"coefficient rows ({values.shape[0]}) do not match basis size ({basis.k})"
        )
    return values, names, wrapped


def _broadcast_params(params, n_channels):
    if isinstance(params, FilterParams):
        return [params] * n_channels
    params = list(params)
    for p in params:
        if not isinstance(p, FilterParams):
            raise TypeError("params must be FilterParams instances")
    if len(params) == 1 and n_channels > 1:
        return params * n_channels
    if len(params) != n_channels:
        raise ValueError(f"{len(params)} parameter triples for {n_channels} channels")
    return params


# -- transforms ---------------------------------------------------------------


def to_spectral(field, basis):
    """Analysis: coefficients = Z^T B f, one column per channel."""
    values, names, wrapped = _field_values(field, basis)
    coeffs = basis.vectors.T @ (basis.mass @ values)
    if wrapped:
        return SpectralCoeffs(coeffs, names=names, basis_hash=basis.identity_hash)
    return coeffs


def from_spectral(coeffs, basis):
    """Synthesis: f = Z coeffs, one column per channel."""
    values, names, wrapped = _coeff_values(coeffs, basis)
    out = basis.vectors @ values
    if wrapped:
        return SurfaceField(out, names=names, mesh_hash=basis.mesh_hash)
    return out


def _filtered(field, basis, response_matrix):
    values, names, wrapped = _field_values(field, basis)
    coeffs = basis.vectors.T @ (basis.mass @ values)
    out = basis.vectors @ (coeffs * response_matrix)
    if wrapped:
        return SurfaceField(out, names=names, mesh_hash=basis.mesh_hash)
    return out


def apply_filter(field, basis, params):
    """Band-filter every channel; ``params`` is one FilterParams per channel
    (a single instance broadcasts)."""
    values, _, _ = _field_values(field, basis)
    plist = _broadcast_params(params, values.shape[1])
    resp = np.column_stack([p.response(basis.eigenvalues) for p in plist])
    return _filtered(field, basis, resp)


def heat_diffuse(field, basis, t):
    """Heat semigroup exp(-lambda t) applied per channel (pure heat, no band)."""
    t = check_non_negative(t, "t")
    values, _, _ = _field_values(field, basis)
    resp = np.repeat(
        np.exp(-basis.eigenvalues * t)[:, None], values.shape[1], axis=1
    )
    return _filtered(field, basis, resp)


def default_hks_times(eigenvalues, n_times=16):
    """Log-spaced times covering the decay range of the nonzero spectrum."""
    lam = np.asarray(eigenvalues, dtype=np.float64)
    nonzero = lam[lam > 1e-12 * max(lam.max(), 1.0)]
    if nonzero.size == 0:
        raise SpectralError("heat-kernel times need at least one nonzero eigenvalue")
    t_min = 4.0 * np.log(10.0) / nonzero[-1]
    t_max = 4.0 * np.log(10.0) / nonzero[0]
    return np.geomspace(t_min, t_max, int(n_times))


def heat_kernel_signature(basis, times=None, n_times=16, normalize=False):
    """Heat-kernel signature HKS_t(v) = sum_i exp(-lambda_i t) z_i(v)^2.

    One channel per time; ``normalize`` divides each channel by its heat
    trace sum_i exp(-lambda_i t).  Returns a SurfaceField tied to the basis's
    mesh.
    """
    if times is None:
        times = default_hks_times(basis.eigenvalues, n_times=n_times)
    times = np.asarray(times, dtype=np.float64).ravel()
    if times.size == 0 or (times <= 0).any() or not np.isfinite(times).all():
        raise ValueError("times must be positive and finite")
    weights = np.exp(-np.outer(basis.eigenvalues, times))  # (k, T)
    hks = (basis.vectors**2) @ weights
    if normalize:
        hks = hks / weights.sum(axis=0)
    names = tuple("hks[%.9g]" % t for t in times)
    return SurfaceField(hks, names=names, mesh_hash=basis.mesh_hash)


def smooth_coordinates(mesh, basis, k_keep):
    """Project vertex coordinates onto the first ``k_keep`` basis functions.

    Returns a new mesh x' = Z_k Z_k^T B x with the same faces.  k_keep = 1
    collapses the mesh toward the (mass-weighted) centroid; a complete basis
    reproduces the coordinates.
    """
    k_keep = int(k_keep)
    if not 1 <= k_keep <= basis.k:
        raise ValueError(f"k_keep must be in [1, {basis.k}], got {k_keep}")
    if (
        basis.mesh_hash is not None
        and mesh.identity_hash != basis.mesh_hash
    ):
        raise ValueError("basis was computed on a different mesh (hash mismatch)")
    z = basis.vectors[:, :k_keep]
    smoothed = z @ (z.T @ (basis.mass @ mesh.vertices))
    return TriangleMesh(smoothed, mesh.faces)


# -- parameter gradients and fitting -----------------------------------------


def _response_and_gradients(eigenvalues, params):
    lam = np.asarray(eigenvalues, dtype=np.float64)
    f = params.response(lam)
    with np.errstate(invalid="ignore", over="ignore"):
        d_mu = f * (2.0 * (lam - params.mu) / params.sigma**2)
        d_sigma = f * (2.0 * (lam - params.mu) ** 2 / params.sigma**3)
    # where the response underflowed to zero its gradients vanish too
    d_mu = np.where(f > 0, d_mu, 0.0)
    d_sigma = np.where(f > 0, d_sigma, 0.0)
    d_t = -lam * f
    return f, d_mu, d_sigma, d_t


def filter_gradients(field, basis, params):
    """Derivatives of the filtered output w.r.t. (mu, sigma, t), per channel.

    Returns three outputs of the same kind as ``field``; entry [:, c] of each
    is the derivative of channel c of apply_filter(field, basis, params).
    """
    values, names, wrapped = _field_values(field, basis)
    plist = _broadcast_params(params, values.shape[1])
    coeffs = basis.vectors.T @ (basis.mass @ values)
    grads = []
    for which in range(3):
        resp = np.column_stack(
            [
                _response_and_gradients(basis.eigenvalues, p)[1 + which]
                for p in plist
            ]
        )
        out = basis.vectors @ (coeffs * resp)
        grads.append(
            SurfaceField(out, names=names, mesh_hash=basis.mesh_hash)
            if wrapped
            else out
        )
    return tuple(grads)


def fit_filter(
    input_field,
    target_field,
    basis,
    init=FilterParams(mu=0.0, sigma=1.0, t=0.0),
    steps=100,
    learning_rate=0.1,
):
    """Fit (mu, sigma, t) so the filtered input matches the target.

    Gradient descent on the B-norm loss 0.5 * ||filter(input) - target||_B^2
    with per-parameter step scaling (mu, sigma scale with the eigenvalue
    range, t with its inverse) and backtracking halving, so the loss curve is
    non-increasing.  Only single-channel fields are supported.

    Returns
    -------
    (FilterParams, list of float)
        Best parameters and the loss value before each accepted step plus the
        final loss.
    """
    in_vals, _, _ = _field_values(input_field, basis)
    tgt_vals, _, _ = _field_values(target_field, basis)
    if in_vals.shape[1] != 1 or tgt_vals.shape[1] != 1:
        raise ValueError("fit_filter expects single-channel fields")

    lam = basis.eigenvalues
    c = (basis.vectors.T @ (basis.mass @ in_vals)).ravel()
    d = (basis.vectors.T @ (basis.mass @ tgt_vals)).ravel()
    # target energy outside the basis span is a constant loss offset
    perp = tgt_vals.ravel() - basis.vectors @ d
    const = 0.5 * float(perp @ (basis.mass @ perp))

    lam_scale = max(float(lam.max()), 1e-8)
    scale = np.array([lam_scale, lam_scale, 1.0 / lam_scale])
    pre = scale**2
    # largest fraction of a parameter's natural scale one trial step may move
    trust = 0.25

    def loss_and_grad(theta):
        p = FilterParams(theta[0], theta[1], max(theta[2], 0.0))
        f, d_mu, d_sigma, d_t = _response_and_gradients(lam, p)
        r = f * c - d
        value = 0.5 * float(r @ r) + const
        grad = np.array(
            [float(r @ (d_mu * c)), float(r @ (d_sigma * c)), float(r @ (d_t * c))]
        )
        return value, grad

    def clamp(theta, sigma_prev):
        # sigma may shrink at most geometrically (keeps it positive and off
        # the zero-response plateau where every gradient vanishes); t >= 0
        return np.array(
            [theta[0], max(theta[1], 0.5 * sigma_prev), max(theta[2], 0.0)]
        )

    theta = np.array([init.mu, init.sigma, init.t], dtype=np.float64)
    theta[2] = max(theta[2], 0.0)
    value, grad = loss_and_grad(theta)
    if not np.isfinite(value):
        raise RuntimeError("fit_filter diverged: non-finite loss at the start")
    losses = [value]
    alpha = float(learning_rate)
    alpha_cap = alpha * 16.0
    for _ in range(int(steps)):
        if not np.any(grad):
            break
        direction = -pre * grad
        overshoot = float(np.max(np.abs(direction) / (trust * scale)))
        if overshoot > 1.0:
            direction /= overshoot
        step_alpha = alpha
        for _halving in range(60):
            candidate = clamp(theta + step_alpha * direction, theta[1])
            cand_value, cand_grad = loss_and_grad(candidate)
            if not np.isfinite(cand_value):
                raise RuntimeError("fit_filter diverged: non-finite loss")
            if cand_value <= value:
                break
            step_alpha *= 0.5
        else:
            break  # no improving step length found: converged
        if cand_value >= value and not np.any(cand_grad):
            break
        theta, value, grad = candidate, cand_value, cand_grad
        losses.append(value)
        alpha = min(step_alpha * 2.0, alpha_cap)
    return FilterParams(theta[0], theta[1], max(theta[2], 0.0)), losses
