import numpy as np
import pytest

from src.core.errors import ShapeError
from src.models.schemas import SamplerConfig, Trajectory
from src.services.sampler import (
    SamplerTrace,
    mix_velocities,
    restore,
    restore_ddbm,
    restore_ebr,
    restore_naive,
)


class OracleField:
    """Скорость, при которой предсказание чистого латента всегда равно target."""

    def __init__(self, target: np.ndarray) -> None:
        self.target = target
        self.calls = 0

    def velocity(self, z_t, t, context):
        self.calls += 1
        return (z_t - self.target) / t


class ContextField:
    """Скорость, зависящая только от контекста: v = mean(context) * ones."""

    def velocity(self, z_t, t, context):
        return np.full_like(np.asarray(z_t, dtype=np.float64), float(np.mean(context)))


@pytest.fixture
def latents():
    rng = np.random.default_rng(5)
    clean = rng.uniform(0.1, 0.9, size=8)
    return clean, 0.6 * clean + 0.4


class TestOracle:
    @pytest.mark.parametrize("steps", [1, 7])
    @pytest.mark.parametrize("trajectory", list(Trajectory))
    def test_recovers_clean_latent(self, trajectory, steps, latents):
        clean, degraded = latents
        config = SamplerConfig(trajectory=trajectory, steps=steps)
        oracle = OracleField(clean)
        out = restore(degraded, np.zeros((2, 4)), oracle, config)
        np.testing.assert_allclose(out, clean, atol=1e-10)
        assert oracle.calls == steps

    def test_ebr_final_state_is_last_prediction(self, tiny_backbone, tiny_pathway, latents):
        _, degraded = latents
        trace = SamplerTrace()
        out = restore_ebr(degraded, tiny_pathway.null_context(), tiny_backbone, SamplerConfig(steps=4), trace)
        np.testing.assert_allclose(out, trace.predictions[-1], atol=1e-12)

    def test_naive_starts_from_pure_noise(self, latents):
        clean, degraded = latents
        trace = SamplerTrace()
        config = SamplerConfig(trajectory="naive", steps=3, seed=2)
        restore_naive(degraded, np.zeros((2, 4)), OracleField(clean), config, trace)
        assert trace.times[0] == 1.0
        np.testing.assert_allclose(trace.states[0], np.random.default_rng(2).standard_normal(8), atol=1e-12)

    def test_ddbm_feeds_sigma_to_backbone(self, latents):
        clean, degraded = latents
        trace = SamplerTrace()
        restore_ddbm(degraded, np.zeros((2, 4)), OracleField(clean), SamplerConfig(trajectory="ddbm", steps=5), trace)
        assert trace.times[0] == pytest.approx(0.98)
        assert all(0.0 < s < 1.0 for s in trace.backbone_times)
        assert trace.backbone_times[0] == pytest.approx(0.14 / 1.14)


class TestBudget:
    @pytest.mark.parametrize("steps", [1, 3, 10])
    def test_single_prompt_nfe(self, steps, tiny_backbone, tiny_pathway, latents):
        trace = SamplerTrace()
        before = tiny_backbone.evaluations
        restore(latents[1], tiny_pathway.null_context(), tiny_backbone, SamplerConfig(steps=steps), trace)
        assert trace.nfe == steps
        assert tiny_backbone.evaluations - before == steps
        assert len(trace.states) == steps

    def test_mixture_nfe(self, tiny_backbone, tiny_pathway, latents):
        ctx = tiny_pathway.null_context()
        trace = SamplerTrace()
        restore(latents[1], [ctx, ctx + 0.1, ctx - 0.1], tiny_backbone, SamplerConfig(steps=4), trace)
        assert trace.nfe == 12

    def test_ebr_grid_starts_at_t0(self):
        grid = SamplerConfig(steps=4).time_grid()
        np.testing.assert_allclose(grid, [0.4, 0.3, 0.2, 0.1, 0.0])
        assert grid[-1] == 0.0

    def test_naive_grid_starts_at_one(self):
        config = SamplerConfig(trajectory="naive", steps=4)
        assert config.start_time() == 1.0
        np.testing.assert_allclose(config.time_grid(), [1.0, 0.75, 0.5, 0.25, 0.0])

    def test_naive_partial_start_is_opt_in(self):
        config = SamplerConfig(trajectory="naive", steps=2, naive_partial_start=0.4)
        np.testing.assert_allclose(config.time_grid(), [0.4, 0.2, 0.0])

    @pytest.mark.parametrize("trajectory", list(Trajectory))
    @pytest.mark.parametrize("steps", [1, 5])
    def test_grid_is_strictly_decreasing(self, trajectory, steps):
        grid = SamplerConfig(trajectory=trajectory, steps=steps).time_grid()
        assert np.all(np.diff(grid) < 0)
        assert grid[-1] == 0.0


class TestMixing:
    def test_identical_prompts_equal_single_prompt(self, tiny_backbone, tiny_pathway, latents):
        ctx = tiny_pathway.null_context()
        config = SamplerConfig(steps=5)
        single = restore(latents[1], ctx, tiny_backbone, config)
        mixed = restore(latents[1], [ctx, ctx.copy()], tiny_backbone, config)
        np.testing.assert_array_equal(mixed, single)

    def test_average_of_velocities(self):
        field = ContextField()
        contexts = [np.full((2, 4), 1.0), np.full((2, 4), 2.0), np.full((2, 4), 6.0)]
        v = mix_velocities(contexts, field, np.zeros(3), 0.5)
        np.testing.assert_allclose(v, np.full(3, 3.0))

    def test_empty_prompt_list(self, latents):
        with pytest.raises(ValueError):
            mix_velocities([], ContextField(), latents[1], 0.5)

    def test_context_shapes_must_agree(self, latents):
        with pytest.raises(ShapeError):
            mix_velocities([np.zeros((2, 4)), np.zeros((3, 4))], ContextField(), latents[1], 0.5)


class TestDeterminism:
    @pytest.mark.parametrize("trajectory", list(Trajectory))
    def test_same_seed_same_output(self, trajectory, tiny_backbone, tiny_pathway, latents):
        config = SamplerConfig(trajectory=trajectory, steps=3, seed=4)
        ctx = tiny_pathway.null_context()
        np.testing.assert_array_equal(
            restore(latents[1], ctx, tiny_backbone, config), restore(latents[1], ctx, tiny_backbone, config)
        )

    def test_batch_keeps_shape(self, tiny_backbone, tiny_pathway, latents):
        ctx = tiny_pathway.null_context()
        batch = np.stack([latents[1], latents[0]])
        config = SamplerConfig(steps=3)
        out = restore(batch, ctx, tiny_backbone, config)
        assert out.shape == (2, 8)


class TestTrajectoryCheck:
    def test_mismatched_sampler(self, latents):
        config = SamplerConfig(trajectory="ebr", steps=2)
        with pytest.raises(ValueError, match="naive"):
            restore_naive(latents[1], np.zeros((2, 4)), OracleField(latents[0]), config)
        with pytest.raises(ValueError):
            restore_ddbm(latents[1], np.zeros((2, 4)), OracleField(latents[0]), config)
