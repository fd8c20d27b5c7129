"""Tests for the scikit-learn style estimator wrappers."""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from surfharm import (
    AtomFeatureProjector,
    AtomSet,
    FilterParams,
    FunctionalMapping,
    HarmonicFilter,
    HeatDiffusion,
    HeatKernelSignature,
    ManifoldHarmonics,
    RigidAlignment,
    RigidTransform,
    apply_filter,
    bumpy_icosphere,
    default_hks_times,
    fmap_to_p2p,
    heat_diffuse,
    heat_kernel_signature,
    project_atom_features,
    solve_fmap,
    solve_spectrum,
    to_spectral,
)
from surfharm.mesh import TriangleMesh


@pytest.fixture(scope="module")
def mesh():
    return bumpy_icosphere(1, radius=2.0, amplitude=0.1, seed=4)


@pytest.fixture(scope="module")
def basis(mesh):
    return solve_spectrum(mesh, k=12)


@pytest.fixture(scope="module")
def channels(mesh):
    rng = np.random.default_rng(0)
    return rng.normal(size=(mesh.n_vertices, 3))


# -- protocol conventions --------------------------------------------------------


ALL_ESTIMATORS = [
    ManifoldHarmonics(k=8),
    HarmonicFilter(mu=0.5, sigma=2.0, t=0.1, k=8),
    HeatDiffusion(t=0.25, k=8),
    HeatKernelSignature(n_times=6, k=8),
    AtomFeatureProjector(radius=4.0),
    FunctionalMapping(alpha=1e-2),
    RigidAlignment(),
]


@pytest.mark.parametrize(
    "estimator", ALL_ESTIMATORS, ids=lambda e: type(e).__name__
)
def test_get_params_and_clone_round_trip(estimator):
    params = estimator.get_params()
    duplicate = clone(estimator)
    assert duplicate is not estimator
    assert duplicate.get_params() == params


@pytest.mark.parametrize(
    "estimator", ALL_ESTIMATORS, ids=lambda e: type(e).__name__
)
def test_transform_requires_fit(estimator, channels):
    with pytest.raises(NotFittedError):
        estimator.transform(channels)


def test_set_params_updates_constructor_arguments():
    estimator = HarmonicFilter(mu=0.5)
    estimator.set_params(mu=1.25, sigma=3.0)
    assert estimator.mu == 1.25
    assert estimator.sigma == 3.0


def test_fit_does_not_mutate_constructor_arguments(mesh):
    estimator = ManifoldHarmonics(k=8)
    estimator.fit(mesh)
    assert estimator.k == 8
    assert estimator.lambda_max is None


# -- ManifoldHarmonics -------------------------------------------------------------


def test_manifold_harmonics_matches_functional_api(mesh, basis, channels):
    estimator = ManifoldHarmonics(k=12).fit(mesh)
    assert estimator.k_ == 12
    assert estimator.n_vertices_ == mesh.n_vertices
    assert np.array_equal(estimator.eigenvalues_, basis.eigenvalues)
    assert np.array_equal(estimator.eigenvectors_, basis.vectors)
    coeffs = estimator.transform(channels)
    assert np.array_equal(coeffs, to_spectral(channels, basis))
    round_trip = estimator.inverse_transform(coeffs)
    assert round_trip.shape == channels.shape


def test_manifold_harmonics_accepts_precomputed_basis(basis, channels):
    estimator = ManifoldHarmonics().fit(basis)
    assert estimator.basis_ is basis
    assert np.array_equal(estimator.transform(channels), to_spectral(channels, basis))


def test_manifold_harmonics_defaults_to_low_pass_cap(mesh):
    estimator = ManifoldHarmonics().fit(mesh)
    assert estimator.basis_.request == {"lambda_max": 0.3}


def test_manifold_harmonics_rejects_wrong_input_type():
    with pytest.raises(TypeError, match="TriangleMesh or SpectralBasis"):
        ManifoldHarmonics(k=4).fit(np.zeros((5, 3)))


# -- HarmonicFilter ------------------------------------------------------------------


def test_harmonic_filter_matches_functional_api(mesh, basis, channels):
    estimator = HarmonicFilter(mu=0.5, sigma=2.0, t=0.1, k=12).fit(mesh)
    params = FilterParams(mu=0.5, sigma=2.0, t=0.1)
    assert np.array_equal(
        estimator.response_, params.response(basis.eigenvalues)
    )
    assert np.array_equal(
        estimator.transform(channels), apply_filter(channels, basis, params)
    )


# -- HeatDiffusion -------------------------------------------------------------------


def test_heat_diffusion_matches_functional_api(mesh, basis, channels):
    estimator = HeatDiffusion(t=0.25, k=12).fit(mesh)
    assert np.array_equal(
        estimator.transform(channels), heat_diffuse(channels, basis, 0.25)
    )


# -- HeatKernelSignature -------------------------------------------------------------


def test_hks_estimator_matches_functional_api(mesh, basis):
    estimator = HeatKernelSignature(n_times=6, k=12).fit(mesh)
    expected_times = default_hks_times(basis.eigenvalues, n_times=6)
    assert np.array_equal(estimator.times_, expected_times)
    expected = heat_kernel_signature(basis, times=expected_times)
    assert np.array_equal(estimator.signatures_, expected.values)
    assert estimator.channel_names_ == expected.names
    assert np.array_equal(estimator.transform(), estimator.signatures_)
    assert np.array_equal(estimator.transform(mesh), estimator.signatures_)


def test_hks_estimator_accepts_explicit_times(mesh):
    times = [0.05, 0.2, 1.0]
    estimator = HeatKernelSignature(times=times, k=12).fit(mesh)
    assert np.array_equal(estimator.times_, times)
    assert estimator.signatures_.shape == (mesh.n_vertices, 3)


def test_hks_estimator_rejects_foreign_mesh(mesh):
    estimator = HeatKernelSignature(n_times=4, k=12).fit(mesh)
    other = bumpy_icosphere(1, radius=2.0, amplitude=0.1, seed=5)
    with pytest.raises(ValueError, match="not the fitted mesh"):
        estimator.transform(other)


# -- AtomFeatureProjector ------------------------------------------------------------


def test_atom_projector_matches_functional_api(mesh):
    rng = np.random.default_rng(2)
    atoms = AtomSet(
        rng.normal(size=(20, 3)) * 2.5, elements=["C", "N", "O", "S"] * 5
    )
    estimator = AtomFeatureProjector(radius=4.0).fit(atoms)
    values = estimator.transform(mesh)
    expected, report = project_atom_features(atoms, mesh, radius=4.0)
    assert np.array_equal(values, expected.values)
    assert estimator.channel_names_ == expected.names
    assert estimator.last_report_.n_empty == report.n_empty


def test_atom_projector_rejects_empty_fit():
    with pytest.raises(ValueError, match="empty atom set"):
        AtomFeatureProjector().fit([])


# -- FunctionalMapping ---------------------------------------------------------------


def test_functional_mapping_matches_functional_api(mesh, basis):
    signatures = heat_kernel_signature(basis, n_times=24)
    estimator = FunctionalMapping(alpha=1e-3).fit(
        (basis, signatures), (basis, signatures)
    )
    expected = solve_fmap(
        to_spectral(signatures, basis),
        to_spectral(signatures, basis),
        basis.eigenvalues,
        basis.eigenvalues,
        alpha=1e-3,
    )
    assert np.array_equal(estimator.matrix_, expected.matrix)
    assert estimator.residual_ == expected.residual
    coeffs = np.arange(float(basis.k))
    assert np.array_equal(estimator.transform(coeffs), expected.matrix @ coeffs)
    point_map = estimator.point_map()
    assert np.array_equal(
        point_map.indices, fmap_to_p2p(expected, basis, basis).indices
    )


def test_functional_mapping_self_map_is_identity_correspondence(mesh, basis):
    signatures = heat_kernel_signature(basis, n_times=24)
    estimator = FunctionalMapping().fit((basis, signatures), (basis, signatures))
    assert np.array_equal(
        estimator.point_map().indices, np.arange(mesh.n_vertices)
    )


# -- RigidAlignment ------------------------------------------------------------------


def test_rigid_alignment_recovers_planted_transform():
    rng = np.random.default_rng(5)
    points = rng.normal(size=(30, 3))
    rotation = Rotation.from_rotvec([0.4, -0.1, 0.8]).as_matrix()
    planted = RigidTransform(rotation, np.array([1.0, -2.0, 0.5]))
    moved = planted.apply(points)
    estimator = RigidAlignment().fit(points, moved)
    assert np.abs(estimator.rotation_ - planted.rotation).max() < 1e-9
    assert np.abs(estimator.translation_ - planted.translation).max() < 1e-9
    assert np.abs(estimator.transform(points) - moved).max() < 1e-9
    assert np.abs(estimator.inverse_transform(moved) - points).max() < 1e-9
    assert estimator.score(points, moved) == pytest.approx(0.0, abs=1e-9)


def test_rigid_alignment_supports_fit_transform():
    rng = np.random.default_rng(7)
    points = rng.normal(size=(15, 3))
    target = points + np.array([3.0, 0.0, 0.0])
    moved = RigidAlignment().fit_transform(points, target)
    assert np.abs(moved - target).max() < 1e-9


def test_rigid_alignment_uses_sample_weights():
    rng = np.random.default_rng(9)
    points = rng.normal(size=(10, 3))
    planted = RigidTransform(np.eye(3), np.array([0.0, 1.0, 0.0]))
    target = planted.apply(points)
    target[0] += 50.0
    weights = np.ones(10)
    weights[0] = 0.0
    estimator = RigidAlignment().fit(points, target, sample_weight=weights)
    assert np.abs(estimator.translation_ - planted.translation).max() < 1e-9


def test_rigid_alignment_score_is_negative_rmsd():
    rng = np.random.default_rng(11)
    points = rng.normal(size=(25, 3))
    noisy = points + 0.1 * rng.normal(size=points.shape)
    estimator = RigidAlignment().fit(points, noisy)
    moved = estimator.transform(points)
    expected = -np.sqrt(np.mean(np.sum((moved - noisy) ** 2, axis=1)))
    assert estimator.score(points, noisy) == pytest.approx(expected, rel=1e-12)
