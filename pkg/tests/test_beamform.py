"""Reference beamforming operations: delays, extraction, DAS, MV, EBMV."""

import numpy as np
import pytest

from oracles import covariance_by_outer_products
from pwvar import ChannelData, ImagingGrid, ProbeGeometry
from pwvar.beamform import (
    BeamformerConfig,
    CovarianceEstimate,
    aperture_interval,
    compute_delays,
    das,
    ebmv_image,
    ebmv_pixel,
    ebmv_weights,
    estimate_covariance,
    extract_delayed,
    mv_weights,
    signal_subspace,
)
from pwvar.errors import ConfigError, DegenerateInputError, NumericsError
from pwvar.phantom import GaussianPulse, ScattererCloud, simulate_channel_data
from pwvar.streams import stream


def small_geometry(ne=8):
    return ProbeGeometry(
        element_positions=(np.arange(ne) - (ne - 1) / 2) * 3e-4,
        center_frequency=5e6,
        sampling_frequency=2e7,
        sound_speed=1540.0,
    )


def random_data(ne=8, nt=400, seed=11):
    rng = stream(seed, "test-random-data")
    return ChannelData(
        samples=rng.standard_normal((nt, ne)),
        geometry=small_geometry(ne),
        transmit_angle=0.0,
        start_time=0.0,
    )


class TestConfig:
    def test_defaults_resolve(self):
        cfg = BeamformerConfig()
        assert cfg.resolved_subarray(64) == 64
        assert cfg.resolved_subarray(128) == 80

    def test_explicit_subarray_too_large(self):
        with pytest.raises(ConfigError):
            BeamformerConfig(subarray_length=10).resolved_subarray(8)

    @pytest.mark.parametrize("kwargs", [
        dict(subarray_length=0),
        dict(loading_coefficient=-0.1),
        dict(subspace_criterion=0.0),
        dict(subspace_criterion=1.5),
        dict(temporal_window=0),
        dict(f_number=0.0),
        dict(apodization="tukey"),
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ConfigError):
            BeamformerConfig(**kwargs)


class TestDelays:
    def test_matches_direct_formula(self):
        geom = small_geometry(5)
        grid = ImagingGrid.regular(-2e-3, 2e-3, 7, 5e-3, 9e-3, 6)
        angle = 0.2
        tau = compute_delays(grid, geom, angle)
        assert tau.shape == (6, 7, 5)
        for iz, ix, e in [(0, 0, 0), (3, 4, 2), (5, 6, 4)]:
            x, z = grid.x[ix], grid.z[iz]
            ex = geom.element_positions[e]
            want = (z * np.cos(angle) + x * np.sin(angle)) / 1540.0
            want += np.hypot(x - ex, z) / 1540.0
            assert tau[iz, ix, e] == pytest.approx(want, rel=1e-12)

    def test_rejects_steep_angle(self):
        geom = small_geometry()
        grid = ImagingGrid.regular(-1e-3, 1e-3, 3, 5e-3, 6e-3, 3)
        with pytest.raises(ConfigError):
            compute_delays(grid, geom, np.pi / 2)


class TestApertureInterval:
    def test_inclusive_bounds(self):
        pos = np.array([0.0, 1.0, 2.0, 3.0])
        # half-width z/(2 f#) = 1.0
        assert aperture_interval(pos, 1.5, 7.0, 3.5) == (1, 3)
        # elements sitting exactly on the edge stay in
        assert aperture_interval(pos, 1.0, 7.0, 3.5) == (0, 3)

    def test_none_means_full(self):
        pos = np.array([0.0, 1.0, 2.0])
        assert aperture_interval(pos, 50.0, 1.0, None) == (0, 3)

    def test_far_pixel_empty(self):
        pos = np.array([0.0, 1.0])
        e0, e1 = aperture_interval(pos, 100.0, 1.0, 2.0)
        assert e1 - e0 == 0


class TestExtractDelayed:
    def test_exact_sample_instants(self):
        data = random_data(ne=3, nt=50)
        fs = data.geometry.sampling_frequency
        delays = np.zeros((1, 1, 3))
        delays[0, 0, :] = np.array([10, 20, 30]) / fs
        y = extract_delayed(data, delays, 0, 0)
        assert y.shape == (3, 1)
        assert y[:, 0] == pytest.approx(
            [data.samples[10, 0], data.samples[20, 1], data.samples[30, 2]],
            abs=1e-12)

    def test_temporal_window_neighbors(self):
        data = random_data(ne=2, nt=40)
        fs = data.geometry.sampling_frequency
        delays = np.full((1, 1, 2), 15 / fs)
        y = extract_delayed(data, delays, 0, 0, temporal_window=3)
        assert y.shape == (2, 3)
        for e in range(2):
            assert y[e] == pytest.approx(data.samples[14:17, e], abs=1e-12)

    def test_fractional_interpolation(self):
        data = random_data(ne=2, nt=30)
        fs = data.geometry.sampling_frequency
        delays = np.full((1, 1, 2), 7.25 / fs)
        y = extract_delayed(data, delays, 0, 0)
        want = 0.75 * data.samples[7, 0] + 0.25 * data.samples[8, 0]
        assert y[0, 0] == pytest.approx(want, rel=1e-12)

    def test_edge_reads_contribute_zero(self):
        data = random_data(ne=2, nt=20)
        fs = data.geometry.sampling_frequency
        # index -0.25 sits between virtual sample -1 and sample 0; only the
        # in-range neighbor contributes, with interpolation weight 0.75
        delays = np.full((1, 1, 2), -0.25 / fs)
        y = extract_delayed(data, delays, 0, 0)
        assert y[0, 0] == pytest.approx(0.75 * data.samples[0, 0], rel=1e-12)
        # index 19.5: right neighbor is outside
        delays = np.full((1, 1, 2), 19.5 / fs)
        y = extract_delayed(data, delays, 0, 0)
        assert y[0, 0] == pytest.approx(0.5 * data.samples[19, 0], rel=1e-12)
        # fully outside on both sides
        delays = np.full((1, 1, 2), -5 / fs)
        assert extract_delayed(data, delays, 0, 0)[0, 0] == 0.0

    def test_mask_zeroes_rows(self):
        data = random_data(ne=4, nt=50)
        fs = data.geometry.sampling_frequency
        delays = np.full((1, 1, 4), 10 / fs)
        y = extract_delayed(data, delays, 0, 0,
                            mask=np.array([True, False, True, False]))
        assert y[1, 0] == 0.0 and y[3, 0] == 0.0
        assert y[0, 0] != 0.0 and y[2, 0] != 0.0


class TestDas:
    def test_zero_data_zero_image(self):
        geom = small_geometry()
        grid = ImagingGrid.regular(-1e-3, 1e-3, 5, 5e-3, 7e-3, 5)
        data = ChannelData(samples=np.zeros((100, 8)), geometry=geom)
        img = das(data, grid)
        assert np.all(img.values == 0.0)

    def test_peak_lands_on_scatterer(self):
        geom = small_geometry(32)
        grid = ImagingGrid.regular(-2e-3, 2e-3, 21, 9e-3, 11e-3, 21)
        # scatterer exactly on a grid node
        cloud = ScattererCloud(np.array([grid.x[8]]), np.array([grid.z[10]]),
                               np.array([1.0]))
        data = simulate_channel_data(cloud, geom, pulse=GaussianPulse(5e6))
        img = das(data, grid)
        iz, ix = np.unravel_index(np.argmax(np.abs(img.values)),
                                  img.values.shape)
        assert abs(int(ix) - 8) <= 1
        assert abs(int(iz) - 10) <= 1

    def test_linear_in_data(self):
        data = random_data(ne=8, nt=300)
        scaled = ChannelData(samples=3.0 * data.samples,
                             geometry=data.geometry)
        grid = ImagingGrid.regular(-1e-3, 1e-3, 5, 5e-3, 7e-3, 5)
        a = das(data, grid).values
        b = das(scaled, grid).values
        np.testing.assert_allclose(b, 3.0 * a, rtol=1e-12)

    def test_apodization_changes_image(self):
        data = random_data(ne=8, nt=300)
        grid = ImagingGrid.regular(-1e-3, 1e-3, 5, 5e-3, 7e-3, 5)
        hann = das(data, grid, BeamformerConfig(apodization="hann")).values
        none = das(data, grid, BeamformerConfig(apodization="none")).values
        assert not np.allclose(hann, none)


class TestCovariance:
    def test_two_element_hand_case(self):
        est = estimate_covariance(np.array([1.0, 1.0]),
                                  BeamformerConfig(subarray_length=2))
        np.testing.assert_allclose(est.matrix,
                                   [[1.01, 1.0], [1.0, 1.01]], atol=1e-15)
        assert est.subarray_length == 2
        assert est.loading == pytest.approx(0.01)

    def test_matches_outer_product_oracle(self):
        rng = stream(5, "cov-oracle")
        y = rng.standard_normal((6, 2))
        cfg = BeamformerConfig(subarray_length=3, loading_coefficient=0.02)
        est = estimate_covariance(y, cfg)
        want, eps = covariance_by_outer_products(y, 3, 0.02)
        np.testing.assert_allclose(est.matrix, want, atol=1e-12)
        assert est.loading == pytest.approx(eps, rel=1e-12)

    def test_loaded_matrix_is_positive_definite(self):
        rng = stream(6, "cov-pd")
        y = rng.standard_normal(10)
        est = estimate_covariance(y, BeamformerConfig(subarray_length=8))
        assert np.linalg.eigvalsh(est.matrix).min() > 0

    def test_zero_input_degenerate(self):
        with pytest.raises(DegenerateInputError):
            estimate_covariance(np.zeros(6),
                                BeamformerConfig(subarray_length=3))


class TestMvWeights:
    def test_identity_gives_uniform(self):
        w = mv_weights(CovarianceEstimate(np.eye(4), 4, 0.0))
        np.testing.assert_array_equal(w, np.full(4, 0.25))

    def test_diagonal_hand_case(self):
        w = mv_weights(CovarianceEstimate(np.diag([1.0, 2.0]), 2, 0.0))
        np.testing.assert_allclose(w, [2 / 3, 1 / 3], rtol=1e-14)

    def test_unit_sum(self):
        rng = stream(7, "mv-unit-sum")
        a = rng.standard_normal((5, 5))
        r = a @ a.T + 0.5 * np.eye(5)
        w = mv_weights(CovarianceEstimate(r, 5, 0.0))
        assert abs(w.sum() - 1.0) <= 1e-12

    def test_indefinite_matrix_raises(self):
        r = np.array([[1.0, 2.0], [2.0, 1.0]])
        with pytest.raises(NumericsError, match="condition"):
            mv_weights(CovarianceEstimate(r, 2, 0.0))


class TestSignalSubspace:
    def test_threshold_hand_case(self):
        basis = signal_subspace(np.diag([10.0, 1.0, 0.4]), criterion=0.05)
        assert basis.selected_count == 2
        np.testing.assert_allclose(basis.eigenvalues, [10.0, 1.0, 0.4],
                                   atol=1e-12)

    def test_identity_keeps_everything(self):
        assert signal_subspace(np.eye(5), 0.05).selected_count == 5

    def test_rank_one_plus_loading_keeps_one(self):
        v = np.ones(4)
        r = np.outer(v, v) + 0.01 * np.eye(4)
        assert signal_subspace(r, 0.05).selected_count == 1

    def test_orthonormal_and_reconstructs(self):
        rng = stream(8, "subspace-orth")
        a = rng.standard_normal((6, 6))
        r = a @ a.T
        basis = signal_subspace(r, 0.05)
        e = basis.eigenvectors
        assert np.max(np.abs(e.T @ e - np.eye(6))) <= 1e-10
        recon = (e * basis.eigenvalues) @ e.T
        assert np.max(np.abs(recon - r)) <= 1e-10

    def test_bad_criterion(self):
        with pytest.raises(ConfigError):
            signal_subspace(np.eye(3), 0.0)


class TestEbmvWeights:
    def test_full_basis_is_identity(self):
        rng = stream(9, "ebmv-full")
        a = rng.standard_normal((5, 5))
        r = a @ a.T + np.eye(5)
        basis = signal_subspace(r, criterion=1e-12)
        assert basis.selected_count == 5
        w = rng.standard_normal(5)
        np.testing.assert_allclose(ebmv_weights(w, basis), w, atol=1e-10)

    def test_projection_is_idempotent(self):
        basis = signal_subspace(np.diag([10.0, 1.0, 0.4]), 0.05)
        w = np.array([0.2, 0.5, 0.3])
        once = ebmv_weights(w, basis)
        np.testing.assert_allclose(ebmv_weights(once, basis), once,
                                   atol=1e-12)


class TestEbmvPixel:
    def test_constant_rows_pass_through(self):
        y = np.full(8, 3.7)
        cfg = BeamformerConfig(subarray_length=4)
        assert ebmv_pixel(y, cfg) == pytest.approx(3.7, abs=1e-10)

    def test_zero_input_degenerate(self):
        with pytest.raises(DegenerateInputError):
            ebmv_pixel(np.zeros(8), BeamformerConfig(subarray_length=4))

    def test_scale_equivariant(self):
        rng = stream(10, "ebmv-scale")
        y = rng.standard_normal((10, 3))
        cfg = BeamformerConfig(subarray_length=5, temporal_window=3)
        assert ebmv_pixel(4.0 * y, cfg) == pytest.approx(
            4.0 * ebmv_pixel(y, cfg), rel=1e-9)


class TestEbmvImage:
    def test_zero_data_zero_image(self):
        geom = small_geometry()
        grid = ImagingGrid.regular(-1e-3, 1e-3, 5, 5e-3, 7e-3, 5)
        data = ChannelData(samples=np.zeros((100, 8)), geometry=geom)
        img = ebmv_image(data, grid, BeamformerConfig(subarray_length=4))
        assert np.all(img.values == 0.0)

    def test_deterministic(self):
        data = random_data(ne=8, nt=300)
        grid = ImagingGrid.regular(-1e-3, 1e-3, 7, 5e-3, 7e-3, 9)
        cfg = BeamformerConfig(subarray_length=4)
        a = ebmv_image(data, grid, cfg).values
        b = ebmv_image(data, grid, cfg).values
        np.testing.assert_array_equal(a, b)

    def test_rejects_hann(self):
        data = random_data()
        grid = ImagingGrid.regular(-1e-3, 1e-3, 3, 5e-3, 6e-3, 3)
        with pytest.raises(ConfigError):
            ebmv_image(data, grid, BeamformerConfig(apodization="hann"))
