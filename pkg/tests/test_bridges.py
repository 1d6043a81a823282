"""Тождества расписаний, граничные значения мостов и форма шума."""

import numpy as np
import pytest

from src.core.errors import ShapeError
from src.models.schemas import Trajectory
from src.services.bridges import (
    DdbmSchedule,
    EbrSchedule,
    ddbm_sigma,
    ddbm_state,
    ebr_state,
    naive_state,
    noise_coefficient,
    sample_times,
    time_range,
    training_state,
)


@pytest.fixture
def endpoints():
    rng = np.random.default_rng(0)
    return rng.uniform(size=(4, 16)), rng.uniform(size=(4, 16)), rng.standard_normal((4, 16))


class TestScheduleIdentities:
    def test_sigma_identity(self):
        s = np.random.default_rng(1).exponential(3.0, size=1000)
        sigma = ddbm_sigma(s)
        np.testing.assert_allclose((1.0 - sigma) * s, sigma, atol=1e-12, rtol=0)

    def test_sigma_rejects_negative(self):
        with pytest.raises(ValueError):
            ddbm_sigma(-0.1)

    def test_ebr_noise_strictly_increasing(self):
        grid = np.linspace(0.0, 0.4, 1000)
        coefficient = noise_coefficient(Trajectory.EBR, grid)
        assert np.all(np.diff(coefficient) > 0)

    def test_ddbm_noise_vanishes_at_endpoints(self):
        grid = np.linspace(0.0, 1.0, 1000)
        s = DdbmSchedule(1.0).s(grid)
        assert s[0] == 0.0 and s[-1] == 0.0
        assert np.all(s[1:-1] > 0)

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            EbrSchedule(0.0)
        with pytest.raises(ValueError):
            DdbmSchedule(-1.0)


class TestEndpoints:
    def test_naive(self, endpoints):
        z_clean, z_deg, eps = endpoints
        np.testing.assert_array_equal(naive_state(z_deg, 0.0, eps), z_deg)
        np.testing.assert_array_equal(naive_state(z_deg, 1.0, eps), eps)

    def test_ddbm_pins_noiselessly(self, endpoints):
        z_clean, z_deg, eps = endpoints
        start, sigma0 = ddbm_state(z_clean, z_deg, 0.0, eps)
        end, sigma1 = ddbm_state(z_clean, z_deg, 1.0, eps)
        assert sigma0 == 0.0 and sigma1 == 0.0
        np.testing.assert_array_equal(start, z_clean)
        np.testing.assert_array_equal(end, z_deg)

    def test_ebr(self, endpoints):
        z_clean, z_deg, eps = endpoints
        np.testing.assert_array_equal(ebr_state(z_clean, z_deg, 0.0, eps), z_clean)
        np.testing.assert_allclose(
            ebr_state(z_clean, z_deg, 0.4, np.zeros_like(eps)), 0.6 * z_deg, rtol=0, atol=1e-15
        )

    def test_ebr_is_noisy_degraded_at_t0(self, endpoints):
        z_clean, z_deg, eps = endpoints
        np.testing.assert_allclose(ebr_state(z_clean, z_deg, 0.4, eps), naive_state(z_deg, 0.4, eps), atol=1e-15)


class TestValidation:
    def test_ebr_time_above_t0(self, endpoints):
        z_clean, z_deg, eps = endpoints
        with pytest.raises(ValueError):
            ebr_state(z_clean, z_deg, 0.5, eps)

    def test_time_outside_unit_interval(self, endpoints):
        _, z_deg, eps = endpoints
        with pytest.raises(ValueError):
            naive_state(z_deg, 1.2, eps)

    def test_shape_mismatch(self, endpoints):
        z_clean, z_deg, eps = endpoints
        with pytest.raises(ShapeError):
            ebr_state(z_clean, z_deg[:, :8], 0.1, eps)

    def test_per_row_times(self, endpoints):
        z_clean, z_deg, eps = endpoints
        times = np.array([0.0, 0.1, 0.2, 0.3])
        batched = ebr_state(z_clean, z_deg, times, eps)
        for i, t in enumerate(times):
            np.testing.assert_allclose(batched[i], ebr_state(z_clean[i], z_deg[i], float(t), eps[i]))

    def test_time_vector_length_must_match_batch(self, endpoints):
        z_clean, z_deg, eps = endpoints
        with pytest.raises(ShapeError):
            naive_state(z_deg, np.array([0.1, 0.2]), eps)


class TestDispatch:
    def test_time_ranges(self):
        assert time_range(Trajectory.EBR, 0.3) == (0.0, 0.3)
        assert time_range(Trajectory.NAIVE) == (0.0, 1.0)
        times = sample_times(Trajectory.EBR, np.random.default_rng(0), 500, 0.3)
        assert times.min() >= 0.0 and times.max() <= 0.3

    def test_ddbm_backbone_time_is_sigma(self, endpoints):
        z_clean, z_deg, eps = endpoints
        t = np.array([0.2, 0.5, 0.7, 0.9])
        _, backbone_time = training_state(Trajectory.DDBM, z_clean, z_deg, t, eps)
        np.testing.assert_allclose(backbone_time, ddbm_sigma(DdbmSchedule().s(t)))

    def test_naive_ignores_clean_latent(self, endpoints):
        z_clean, z_deg, eps = endpoints
        state, backbone_time = training_state(Trajectory.NAIVE, z_clean, z_deg, 0.3, eps)
        np.testing.assert_array_equal(state, naive_state(z_deg, 0.3, eps))
        assert backbone_time == 0.3
