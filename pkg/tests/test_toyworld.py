import numpy as np
import pytest

from src.models.schemas import CleanSpec, Degradation, DegradationKind, ShapeClass
from src.services.toyworld import (
    DISK_MEAN_BAND,
    degrade,
    degrade_all,
    generate_clean,
    load_pgm,
    make_pairs,
    save_pgm,
    stack_pairs,
)


class TestGenerateClean:
    def test_deterministic_and_in_range(self):
        spec = CleanSpec(side=16, shape_class=ShapeClass.CROSS, seed=3)
        first, second = generate_clean(spec, 5), generate_clean(spec, 5)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a, b)
            assert a.shape == (256,)
            assert a.min() >= 0.0 and a.max() <= 1.0

    def test_disk_mean_brightness(self):
        images = generate_clean(CleanSpec(side=16, shape_class=ShapeClass.DISK, seed=0), 200)
        mean = float(np.mean(images))
        assert DISK_MEAN_BAND[0] <= mean <= DISK_MEAN_BAND[1]

    def test_rejects_empty_request(self):
        with pytest.raises(ValueError):
            generate_clean(CleanSpec(), 0)


class TestDegrade:
    @pytest.fixture
    def image(self):
        return generate_clean(CleanSpec(seed=1), 1)[0]

    @pytest.mark.parametrize("kind", list(DegradationKind))
    def test_stays_in_unit_range(self, image, kind):
        out = degrade(image, kind, seed=4)
        assert out.shape == image.shape
        assert out.min() >= 0.0 and out.max() <= 1.0

    @pytest.mark.parametrize("kind", list(DegradationKind))
    def test_deterministic_for_seed(self, image, kind):
        np.testing.assert_array_equal(degrade(image, kind, seed=9), degrade(image, kind, seed=9))

    def test_veil_formula(self, image):
        out = degrade(image, Degradation(kind=DegradationKind.VEIL, severity=0.5))
        np.testing.assert_allclose(out, 0.5 * image + 0.5)

    def test_gamma_darkens(self, image):
        out = degrade(image, Degradation(kind=DegradationKind.GAMMA, severity=2.0))
        np.testing.assert_allclose(out, image**2)

    @pytest.mark.parametrize(
        "degradation",
        [
            Degradation(kind=DegradationKind.VEIL, severity=1.0),
            Degradation(kind=DegradationKind.GAMMA, severity=1.0),
            Degradation(kind=DegradationKind.BLUR, severity=0.0),
            Degradation(kind=DegradationKind.STRIPE, severity=0.0),
        ],
    )
    def test_identity_severity_is_bitwise(self, image, degradation):
        np.testing.assert_array_equal(degrade(image, degradation, seed=2), image)

    def test_stripes_are_constant_per_column(self):
        flat = np.full(256, 0.5)
        out = degrade(flat, Degradation(kind=DegradationKind.STRIPE, severity=0.1), seed=0).reshape(16, 16)
        np.testing.assert_allclose(out, np.broadcast_to(out[0], (16, 16)))
        assert np.ptp(out[0]) > 0.0

    def test_blur_preserves_constant_image(self):
        flat = np.full(256, 0.3)
        np.testing.assert_allclose(degrade(flat, DegradationKind.BLUR), flat)

    def test_out_of_range_input(self):
        with pytest.raises(ValueError):
            degrade(np.array([1.5] * 16), DegradationKind.VEIL)

    def test_unknown_kind(self, image):
        with pytest.raises(ValueError, match="деградации"):
            degrade(image, "snow")

    def test_severity_out_of_range(self):
        with pytest.raises(ValueError):
            Degradation(kind=DegradationKind.VEIL, severity=0.1)

    def test_composite_applies_in_order(self, image):
        veil = Degradation(kind=DegradationKind.VEIL)
        gamma = Degradation(kind=DegradationKind.GAMMA)
        one = degrade_all(image, [veil, gamma], seed=0)
        other = degrade_all(image, [gamma, veil], seed=0)
        assert not np.allclose(one, other)


class TestPairs:
    def test_make_pairs_cycles_classes_and_labels(self):
        pairs = make_pairs([Degradation(kind=DegradationKind.VEIL), Degradation(kind=DegradationKind.STRIPE)], 6, seed=0)
        assert len(pairs) == 6
        assert pairs[0].label == "veil+stripe"
        with pytest.raises(ValueError):
            _ = pairs[0].kind
        z_clean, z_deg = stack_pairs(pairs)
        assert z_clean.shape == z_deg.shape == (6, 256)

    def test_single_kind(self):
        pairs = make_pairs([Degradation(kind=DegradationKind.BLUR)], 2, seed=5, side=8)
        assert pairs[0].kind == DegradationKind.BLUR
        assert pairs[0].z_clean.shape == (64,)

    def test_same_seed_same_pairs(self):
        degradations = [Degradation(kind=DegradationKind.STRIPE)]
        a, b = make_pairs(degradations, 3, seed=7), make_pairs(degradations, 3, seed=7)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.z_deg, y.z_deg)


class TestPgm:
    def test_roundtrip_is_8bit(self, tmp_path):
        image = generate_clean(CleanSpec(seed=2), 1)[0]
        path = tmp_path / "sample.pgm"
        save_pgm(path, image)
        assert path.read_bytes().startswith(b"P5")
        loaded = load_pgm(path)
        assert loaded.shape == image.shape
        assert np.max(np.abs(loaded - image)) <= 0.5 / 255.0 + 1e-12

    def test_rejects_non_square(self, tmp_path):
        with pytest.raises(ValueError):
            save_pgm(tmp_path / "bad.pgm", np.zeros(10))
