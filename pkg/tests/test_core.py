import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from segsynth.core import (
    AttributeLabel,
    ImageTensor,
    JointSample,
    LatentVector,
    SegmentationMap,
    ValidationError,
    denormalize_image,
    format_manifest_line,
    normalize_image,
    one_hot_encode,
    parse_manifest_line,
)


class TestOneHotEncode:
    def test_single_pixel(self):
        seg = one_hot_encode(np.array([[2]]), n_s=3)
        assert seg.data[0, 0].tolist() == [0.0, 0.0, 1.0]

    def test_constant_map(self):
        seg = one_hot_encode(np.zeros((2, 2), dtype=int), n_s=2)
        assert (seg.data[:, :, 0] == 1.0).all()
        assert (seg.data[:, :, 1] == 0.0).all()

    def test_round_trip_random(self):
        rng = np.random.default_rng(0)
        idx = rng.integers(0, 4, size=(8, 8))
        seg = one_hot_encode(idx, n_s=4)
        assert (seg.to_index_map() == idx).all()

    def test_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            one_hot_encode(np.array([[3]]), n_s=3)
        with pytest.raises(ValidationError):
            one_hot_encode(np.array([[-1]]), n_s=3)

    @given(
        st.integers(min_value=2, max_value=6),
        st.integers(min_value=1, max_value=12),
        st.integers(min_value=1, max_value=12),
        st.integers(min_value=0, max_value=2**31 - 1),
    )
    @settings(max_examples=40, deadline=None)
    def test_round_trip_property(self, n_s, h, w, seed):
        idx = np.random.default_rng(seed).integers(0, n_s, size=(h, w))
        assert (one_hot_encode(idx, n_s).to_index_map() == idx).all()


class TestNormalizeImage:
    def test_bounds(self):
        img = normalize_image(np.zeros((1, 1, 3), dtype=np.uint8))
        assert img.data.min() == img.data.max() == -1.0
        img = normalize_image(np.full((1, 1, 3), 255, dtype=np.uint8))
        assert img.data.min() == img.data.max() == 1.0

    def test_midpoint_value(self):
        img = normalize_image(np.full((1, 1, 3), 127, dtype=np.uint8))
        assert img.data[0, 0, 0] == pytest.approx(127 / 127.5 - 1.0, abs=1e-7)
        assert img.data[0, 0, 0] == pytest.approx(-0.00392, abs=1e-5)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            normalize_image(np.full((1, 1, 3), 256, dtype=np.int32))
        with pytest.raises(ValidationError):
            normalize_image(np.full((1, 1, 3), -1, dtype=np.int32))

    def test_round_trip_all_levels(self):
        # affine, monotone, bijective on the 256-level grid up to rounding
        levels = np.arange(256, dtype=np.uint8).reshape(16, 16)
        raw = np.stack([levels] * 3, axis=2)
        again = denormalize_image(normalize_image(raw))
        assert (again == raw).all()

    def test_monotone(self):
        raw = np.arange(256, dtype=np.uint8).reshape(16, 16)
        norm = normalize_image(np.stack([raw] * 3, axis=2)).data[:, :, 0].ravel()
        assert (np.diff(norm) > 0).all()


class TestDomainTypes:
    def test_image_range_enforced(self):
        with pytest.raises(ValidationError):
            ImageTensor(np.full((2, 2, 3), 1.5, dtype=np.float32))

    def test_image_nan_rejected(self):
        bad = np.zeros((2, 2, 3), dtype=np.float32)
        bad[0, 0, 0] = np.nan
        with pytest.raises(ValidationError):
            ImageTensor(bad)

    def test_segmentation_needs_one_hot(self):
        bad = np.zeros((2, 2, 2), dtype=np.float32)
        with pytest.raises(ValidationError):
            SegmentationMap(bad)
        bad[:, :, 0] = 0.5
        bad[:, :, 1] = 0.5
        with pytest.raises(ValidationError):
            SegmentationMap(bad)

    def test_segmentation_needs_two_classes(self):
        with pytest.raises(ValidationError):
            SegmentationMap(np.ones((2, 2, 1), dtype=np.float32))

    def test_attribute_bits_binary(self):
        AttributeLabel(np.array([0, 1, 1]))
        with pytest.raises(ValidationError):
            AttributeLabel(np.array([0.5, 1.0]))

    def test_latent_finite(self):
        LatentVector(np.zeros(8))
        with pytest.raises(ValidationError):
            LatentVector(np.array([np.inf, 0.0]))

    def test_joint_sample_size_mismatch_rejected(self):
        img = ImageTensor(np.zeros((4, 4, 3), dtype=np.float32))
        seg = one_hot_encode(np.zeros((2, 2), dtype=int), n_s=2)
        label = AttributeLabel(np.array([1, 0]))
        with pytest.raises(ValidationError):
            JointSample(image=img, label=label, segmentation=seg)

    def test_joint_sample_ok(self):
        img = ImageTensor(np.zeros((2, 2, 3), dtype=np.float32))
        seg = one_hot_encode(np.zeros((2, 2), dtype=int), n_s=2)
        JointSample(image=img, label=AttributeLabel(np.array([1])), segmentation=seg)


class TestManifest:
    def test_round_trip(self):
        line = format_manifest_line("img/a.png", "seg/a.png", [1, 0, 1])
        img, seg, bits = parse_manifest_line(line)
        assert img == "img/a.png"
        assert seg == "seg/a.png"
        assert bits.tolist() == [1.0, 0.0, 1.0]

    def test_malformed_rejected(self):
        with pytest.raises(ValidationError):
            parse_manifest_line("only two fields")
        with pytest.raises(ValidationError):
            parse_manifest_line("a.png b.png 1,2,0")
