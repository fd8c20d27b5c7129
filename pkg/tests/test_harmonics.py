import numpy as np
import pytest
from numpy.testing import assert_allclose

from surfharm import (
    FilterParams,
    SpectralCoeffs,
    SurfaceField,
    apply_filter,
    default_hks_times,
    filter_gradients,
    fit_filter,
    from_spectral,
    heat_diffuse,
    heat_kernel_signature,
    icosphere,
    smooth_coordinates,
    solve_spectrum,
    surface_area,
    to_spectral,
)

from conftest import random_rotation, transformed


def random_field(basis, rng, channels=1):
    return rng.standard_normal((basis.n_vertices, channels))


def b_norm_sq(basis, values):
    return float(np.einsum("ij,ij->", values, basis.mass @ values))


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------


def test_surface_field_defaults_and_names():
    f = SurfaceField(np.zeros((5, 2)))
    assert f.names == ("c0", "c1")
    assert f.n_vertices == 5 and f.n_channels == 2
    g = SurfaceField(np.zeros((5, 2)), names=("a", "b"))
    assert g.names == ("a", "b")
    with pytest.raises(ValueError, match="names"):
        SurfaceField(np.zeros((5, 2)), names=("only-one",))


def test_surface_field_on_mesh_checks_length(sphere2):
    with pytest.raises(ValueError):
        SurfaceField.on_mesh(sphere2, np.zeros((3, 1)))
    f = SurfaceField.on_mesh(sphere2, np.zeros((sphere2.n_vertices, 1)))
    assert f.mesh_hash == sphere2.identity_hash


def test_filter_params_validation():
    with pytest.raises(ValueError, match="sigma"):
        FilterParams(mu=0.0, sigma=0.0)
    with pytest.raises(ValueError, match="t"):
        FilterParams(mu=0.0, sigma=1.0, t=-1.0)
    with pytest.raises(ValueError, match="mu"):
        FilterParams(mu=np.nan, sigma=1.0)


def test_filter_params_response_formula():
    p = FilterParams(mu=1.5, sigma=0.7, t=0.3)
    lam = np.array([0.0, 1.0, 4.0])
    expected = np.exp(-((lam - 1.5) ** 2) / 0.7**2 - lam * 0.3)
    assert_allclose(p.response(lam), expected, rtol=1e-15)


# ---------------------------------------------------------------------------
# analysis / synthesis
# ---------------------------------------------------------------------------


def test_to_spectral_eigenvector_is_unit_coefficient(sphere2_basis):
    f = sphere2_basis.vectors[:, [0]]
    coeffs = to_spectral(f, sphere2_basis)
    expected = np.zeros((sphere2_basis.k, 1))
    expected[0, 0] = 1.0
    assert_allclose(coeffs, expected, atol=1e-10)


def test_to_spectral_constant_field(sphere2, sphere2_basis):
    c = 2.5
    f = np.full((sphere2.n_vertices, 1), c)
    coeffs = to_spectral(f, sphere2_basis)
    # z0 = +-area^(-1/2), so the constant projects to +-c*sqrt(area)
    assert abs(abs(coeffs[0, 0]) - c * np.sqrt(surface_area(sphere2))) < 1e-6
    assert np.abs(coeffs[1:]).max() < 1e-8


def test_to_spectral_linearity(sphere2_basis):
    f = sphere2_basis.vectors[:, [2]] + 3.0 * sphere2_basis.vectors[:, [5]]
    coeffs = to_spectral(f, sphere2_basis).ravel()
    assert coeffs[2] == pytest.approx(1.0, abs=1e-8)
    assert coeffs[5] == pytest.approx(3.0, abs=1e-8)
    others = np.delete(coeffs, [2, 5])
    assert np.abs(others).max() < 1e-8


def test_round_trip_identity_on_span(sphere2_basis):
    rng = np.random.default_rng(0)
    f = sphere2_basis.vectors @ rng.standard_normal((sphere2_basis.k, 1))
    back = from_spectral(to_spectral(f, sphere2_basis), sphere2_basis)
    assert np.abs(back - f).max() < 1e-8


def test_round_trip_idempotent(sphere2_basis):
    rng = np.random.default_rng(1)
    f = random_field(sphere2_basis, rng)
    once = from_spectral(to_spectral(f, sphere2_basis), sphere2_basis)
    twice = from_spectral(to_spectral(once, sphere2_basis), sphere2_basis)
    assert np.abs(twice - once).max() < 1e-10


def test_unit_coefficient_synthesizes_eigenvector(sphere2_basis):
    coeffs = np.zeros((sphere2_basis.k, 1))
    coeffs[7, 0] = 1.0
    f = from_spectral(coeffs, sphere2_basis)
    assert_allclose(f.ravel(), sphere2_basis.vectors[:, 7], atol=1e-14)


def test_parseval_on_span(sphere2_basis):
    rng = np.random.default_rng(2)
    coeffs = rng.standard_normal((sphere2_basis.k, 3))
    f = sphere2_basis.vectors @ coeffs
    assert b_norm_sq(sphere2_basis, f) == pytest.approx(
        float((coeffs**2).sum()), rel=1e-9
    )


def test_kind_preservation(sphere2, sphere2_basis):
    bare = np.zeros((sphere2.n_vertices, 2))
    assert isinstance(to_spectral(bare, sphere2_basis), np.ndarray)
    wrapped = SurfaceField.on_mesh(sphere2, bare, names=("u", "v"))
    coeffs = to_spectral(wrapped, sphere2_basis)
    assert isinstance(coeffs, SpectralCoeffs)
    assert coeffs.names == ("u", "v")
    back = from_spectral(coeffs, sphere2_basis)
    assert isinstance(back, SurfaceField)
    assert back.names == ("u", "v")
    assert back.mesh_hash == sphere2.identity_hash


def test_hash_mismatch_rejected(sphere2_basis, bumpy162):
    f = SurfaceField.on_mesh(bumpy162, np.zeros((bumpy162.n_vertices, 1)))
    with pytest.raises(ValueError, match="hash"):
        to_spectral(f, sphere2_basis)


def test_wrong_length_rejected(sphere2_basis):
    with pytest.raises(ValueError):
        to_spectral(np.zeros((7, 1)), sphere2_basis)


# ---------------------------------------------------------------------------
# filtering and heat diffusion
# ---------------------------------------------------------------------------


def test_wide_filter_is_projection(sphere2_basis):
    rng = np.random.default_rng(3)
    f = random_field(sphere2_basis, rng)
    wide = FilterParams(mu=0.0, sigma=1e9, t=0.0)
    out = apply_filter(f, sphere2_basis, wide)
    projected = from_spectral(to_spectral(f, sphere2_basis), sphere2_basis)
    assert np.abs(out - projected).max() < 1e-6


def test_long_heat_converges_to_mean(sphere2, sphere2_basis):
    rng = np.random.default_rng(4)
    f = random_field(sphere2_basis, rng)
    lam1 = sphere2_basis.eigenvalues[1]
    out = heat_diffuse(f, sphere2_basis, t=1e9 / lam1)
    B = sphere2_basis.mass
    mean = float((B @ f).sum() / surface_area(sphere2))
    assert np.abs(out - mean).max() < 1e-6


def test_heat_diffusion_of_delta(sphere2, sphere2_basis):
    f = np.zeros((sphere2.n_vertices, 1))
    f[17, 0] = 1.0
    out = heat_diffuse(f, sphere2_basis, t=0.1)
    B = sphere2_basis.mass
    # total B-weighted integral is carried by the lambda=0 coefficient alone
    assert float((B @ out).sum()) == pytest.approx(float((B @ f).sum()), abs=1e-8)
    assert out[17, 0] == pytest.approx(out.max())


def test_heat_semigroup(sphere2_basis):
    rng = np.random.default_rng(5)
    f = random_field(sphere2_basis, rng)
    two_step = heat_diffuse(heat_diffuse(f, sphere2_basis, 0.05), sphere2_basis, 0.15)
    one_step = heat_diffuse(f, sphere2_basis, 0.2)
    assert np.abs(two_step - one_step).max() < 1e-9


def test_heat_t_zero_is_projection(sphere2_basis):
    rng = np.random.default_rng(6)
    f = random_field(sphere2_basis, rng)
    out = heat_diffuse(f, sphere2_basis, 0.0)
    projected = from_spectral(to_spectral(f, sphere2_basis), sphere2_basis)
    assert_allclose(out, projected, atol=1e-14)


def test_heat_preserves_b_weighted_mean(sphere2_basis):
    rng = np.random.default_rng(7)
    f = random_field(sphere2_basis, rng)
    B = sphere2_basis.mass
    for t in (0.01, 0.3, 2.0):
        out = heat_diffuse(f, sphere2_basis, t)
        assert float((B @ out).sum()) == pytest.approx(
            float((B @ f).sum()), abs=1e-10
        )


def test_heat_rejects_negative_time(sphere2_basis):
    with pytest.raises(ValueError, match="t"):
        heat_diffuse(np.zeros((sphere2_basis.n_vertices, 1)), sphere2_basis, -0.1)


def test_filter_broadcast_and_per_channel(sphere2_basis):
    rng = np.random.default_rng(8)
    f = random_field(sphere2_basis, rng, channels=2)
    p1 = FilterParams(mu=1.0, sigma=2.0, t=0.1)
    p2 = FilterParams(mu=3.0, sigma=1.0, t=0.0)
    both = apply_filter(f, sphere2_basis, [p1, p2])
    assert_allclose(both[:, 0], apply_filter(f[:, [0]], sphere2_basis, p1).ravel())
    assert_allclose(both[:, 1], apply_filter(f[:, [1]], sphere2_basis, p2).ravel())
    broadcast = apply_filter(f, sphere2_basis, p1)
    assert_allclose(broadcast[:, 0], apply_filter(f[:, [0]], sphere2_basis, p1).ravel())
    with pytest.raises(ValueError, match="channel"):
        apply_filter(f, sphere2_basis, [p1, p2, p1])


# ---------------------------------------------------------------------------
# heat kernel signature
# ---------------------------------------------------------------------------


def test_hks_constant_on_sphere():
    basis = solve_spectrum(icosphere(3), k=16)
    hks = heat_kernel_signature(basis, n_times=8)
    spread = hks.values.max(axis=0) / hks.values.min(axis=0)
    assert (spread < 1.02).all()


def test_hks_positive(bumpy162_basis):
    hks = heat_kernel_signature(bumpy162_basis, n_times=8)
    assert hks.values.min() > 0


def test_hks_channel_count_and_names(bumpy162_basis):
    times = [0.1, 1.0, 10.0]
    hks = heat_kernel_signature(bumpy162_basis, times=times)
    assert hks.n_channels == 3
    assert hks.names == ("hks[0.1]", "hks[1]", "hks[10]")


def test_hks_matches_direct_sum(bumpy162_basis):
    t = 0.7
    hks = heat_kernel_signature(bumpy162_basis, times=[t])
    direct = (bumpy162_basis.vectors**2 * np.exp(-bumpy162_basis.eigenvalues * t)).sum(
        axis=1
    )
    assert_allclose(hks.values.ravel(), direct, rtol=1e-14)


def test_hks_normalized_sums_to_heat_trace(bumpy162_basis):
    t = 0.5
    raw = heat_kernel_signature(bumpy162_basis, times=[t])
    norm = heat_kernel_signature(bumpy162_basis, times=[t], normalize=True)
    trace = np.exp(-bumpy162_basis.eigenvalues * t).sum()
    assert_allclose(norm.values * trace, raw.values, rtol=1e-14)


def test_hks_rigid_invariance(bumpy162):
    rng = np.random.default_rng(10)
    moved = transformed(bumpy162, random_rotation(rng), np.array([4.0, 0.0, -2.0]))
    # k=16 keeps every near-degenerate cluster of this fixture intact
    times = [0.05, 0.2, 1.0]
    a = heat_kernel_signature(solve_spectrum(bumpy162, k=16), times=times)
    b = heat_kernel_signature(solve_spectrum(moved, k=16), times=times)
    assert np.abs(a.values - b.values).max() / np.abs(a.values).max() < 1e-6


def test_default_hks_times_cover_decay_range(bumpy162_basis):
    times = default_hks_times(bumpy162_basis.eigenvalues, n_times=16)
    assert times.shape == (16,)
    assert (np.diff(times) > 0).all()
    lam = bumpy162_basis.eigenvalues
    nonzero = lam[lam > 1e-12]
    # endpoints chosen so exp(-lambda t) spans about 4 decades
    assert np.exp(-nonzero[-1] * times[0]) == pytest.approx(1e-4, rel=1e-9)
    assert np.exp(-nonzero[0] * times[-1]) == pytest.approx(1e-4, rel=1e-9)


def test_hks_rejects_bad_times(bumpy162_basis):
    with pytest.raises(ValueError, match="times"):
        heat_kernel_signature(bumpy162_basis, times=[0.1, -1.0])
    with pytest.raises(ValueError, match="times"):
        heat_kernel_signature(bumpy162_basis, times=[])


# ---------------------------------------------------------------------------
# smoothing
# ---------------------------------------------------------------------------


def test_smooth_collapse_to_centroid(sphere2, sphere2_basis):
    collapsed = smooth_coordinates(sphere2, sphere2_basis, k_keep=1)
    B = sphere2_basis.mass
    centroid = (B @ sphere2.vertices).sum(axis=0) / surface_area(sphere2)
    assert np.abs(collapsed.vertices - centroid).max() < 1e-8


def test_smooth_complete_basis_identity(tetra):
    basis = solve_spectrum(tetra, k=4)
    back = smooth_coordinates(tetra, basis, k_keep=4)
    assert np.abs(back.vertices - tetra.vertices).max() < 1e-8
    assert (back.faces == tetra.faces).all()


def test_smooth_sphere_stays_spherical():
    mesh = icosphere(3)
    basis = solve_spectrum(mesh, k=16)
    smoothed = smooth_coordinates(mesh, basis, k_keep=16)
    radii = np.linalg.norm(smoothed.vertices, axis=1)
    assert radii.max() / radii.min() < 1.1


def test_smooth_error_monotone_in_k(bumpy162, bumpy162_basis):
    B = bumpy162_basis.mass
    errors = []
    for k_keep in (1, 4, 8, 16, 24):
        smoothed = smooth_coordinates(bumpy162, bumpy162_basis, k_keep)
        diff = smoothed.vertices - bumpy162.vertices
        errors.append(np.einsum("ij,ij->", diff, B @ diff))
    assert (np.diff(errors) <= 1e-12).all()


def test_smooth_validates_k_keep(sphere2, sphere2_basis):
    with pytest.raises(ValueError, match="k_keep"):
        smooth_coordinates(sphere2, sphere2_basis, 0)
    with pytest.raises(ValueError, match="k_keep"):
        smooth_coordinates(sphere2, sphere2_basis, sphere2_basis.k + 1)


def test_smooth_rejects_foreign_mesh(bumpy162, sphere2_basis):
    with pytest.raises(ValueError, match="hash"):
        smooth_coordinates(bumpy162, sphere2_basis, 4)


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


def test_filter_gradients_match_finite_differences(sphere2_basis):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(20):
        f = random_field(sphere2_basis, rng)
        params = FilterParams(
            mu=rng.uniform(0.5, 8.0),
            sigma=rng.uniform(0.5, 6.0),
            t=rng.uniform(0.0, 0.5),
        )
        analytic = filter_gradients(f, sphere2_basis, params)
        for which, name in enumerate(("mu", "sigma", "t")):
            base = [params.mu, params.sigma, params.t]
            h = 1e-5 * max(abs(base[which]), 1.0)
            hi, lo = list(base), list(base)
            hi[which] += h
            lo[which] -= h
            fd = (
                apply_filter(f, sphere2_basis, FilterParams(*hi))
                - apply_filter(f, sphere2_basis, FilterParams(*lo))
            ) / (2 * h)
            denom = max(np.abs(fd).max(), 1e-12)
            worst = max(worst, np.abs(analytic[which] - fd).max() / denom)
    assert worst < 1e-4


def test_gradient_t_is_negative_laplacian_action(sphere2_basis):
    # with a pure-heat filter, d(out)/dt synthesizes -lambda * e^(-lambda t) * coeffs
    rng = np.random.default_rng(12)
    f = random_field(sphere2_basis, rng)
    t = 0.2
    params = FilterParams(mu=0.0, sigma=1e12, t=t)
    _, _, d_t = filter_gradients(f, sphere2_basis, params)
    coeffs = to_spectral(f, sphere2_basis)
    lam = sphere2_basis.eigenvalues[:, None]
    expected = from_spectral(-lam * np.exp(-lam * t) * coeffs, sphere2_basis)
    assert np.abs(d_t - expected).max() < 1e-6 * np.abs(expected).max()


def test_gradient_mu_vanishes_for_huge_sigma(sphere2_basis):
    rng = np.random.default_rng(13)
    f = random_field(sphere2_basis, rng)
    d_mu, _, _ = filter_gradients(f, sphere2_basis, FilterParams(0.0, 1e12, 0.1))
    assert np.abs(d_mu).max() < 1e-12


# ---------------------------------------------------------------------------
# fit_filter
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def fit_fixture():
    mesh = icosphere(2, radius=3.0)
    basis = solve_spectrum(mesh, k=30)
    rng = np.random.default_rng(11)
    f = rng.standard_normal((mesh.n_vertices, 1))
    return basis, f


def test_fit_filter_recovers_planted_params(fit_fixture):
    basis, f = fit_fixture
    true = FilterParams(mu=0.5, sigma=0.2, t=1.0)
    target = apply_filter(f, basis, true)
    params, losses = fit_filter(
        f,
        target,
        basis,
        init=FilterParams(mu=0.4, sigma=0.3, t=0.5),
        steps=2000,
        learning_rate=0.1,
    )
    assert losses[-1] < 1e-6
    # the loss only sees the response at the discrete eigenvalues, so assert
    # recovery there rather than on the raw parameters
    lam = basis.eigenvalues
    assert np.abs(params.response(lam) - true.response(lam)).max() < 1e-3
    assert params.mu == pytest.approx(true.mu, abs=0.05)


def test_fit_filter_loss_non_increasing(fit_fixture):
    basis, f = fit_fixture
    target = apply_filter(f, basis, FilterParams(mu=2.0, sigma=1.0, t=0.2))
    _, losses = fit_filter(
        f, target, basis, init=FilterParams(0.5, 0.5, 0.0), steps=150
    )
    assert (np.diff(losses) <= 0).all()


def test_fit_filter_projection_target_improves(fit_fixture):
    basis, f = fit_fixture
    target = from_spectral(to_spectral(f, basis), basis)
    params, losses = fit_filter(
        f, target, basis, init=FilterParams(1.0, 1.0, 0.5), steps=300
    )
    assert losses[-1] < losses[0]
    # matching the plain projection wants a flat response: wide band, small t
    assert params.sigma > 1.0
    assert params.t < 0.5


def test_fit_filter_zero_input_is_noop(fit_fixture):
    basis, _ = fit_fixture
    zero = np.zeros((basis.n_vertices, 1))
    init = FilterParams(mu=1.2, sigma=0.8, t=0.3)
    params, losses = fit_filter(zero, zero, basis, init=init, steps=50)
    assert params == init
    assert losses == [0.0]


def test_fit_filter_rejects_multichannel(fit_fixture):
    basis, _ = fit_fixture
    two = np.zeros((basis.n_vertices, 2))
    with pytest.raises(ValueError, match="single-channel"):
        fit_filter(two, two, basis)
