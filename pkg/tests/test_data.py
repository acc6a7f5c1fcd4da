import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from segsynth.core import LandmarkSet, ValidationError
from segsynth.data import (
    DatasetSpec,
    EpochSampler,
    SHAPE_NAMES,
    ShapesConfig,
    build_face_template,
    generate_shapes_dataset,
    landmarks_to_segmentation,
    load_dataset,
    load_landmark_file,
    rasterize_polygon,
    sample_batch,
    shape_mask,
    write_dataset,
)


class TestRasterizePolygon:
    def test_triangle_on_2x2_grid(self):
        pts = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        mask = rasterize_polygon(pts, 2, 2)
        assert mask[0, 0] and mask[1, 0] and mask[0, 1]
        assert not mask[1, 1]

    def test_collinear_contributes_nothing(self):
        pts = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
        assert not rasterize_polygon(pts, 4, 4).any()

    def test_against_brute_force_oracle(self):
        rng = np.random.default_rng(0)
        for trial in range(30):
            k = int(rng.integers(3, 7))
            pts = rng.uniform(0, 15, size=(k, 2))
            mask = rasterize_polygon(pts, 16, 16)
            verts = [tuple(p) for p in pts]
            if oracles.polygon_area(verts) < 1e-12:
                assert not mask.any()
                continue
            for i in range(16):
                for j in range(16):
                    assert mask[i, j] == oracles.point_in_polygon(float(j), float(i), verts), (
                        trial, i, j)

    def test_boundary_counts_inside(self):
        pts = np.array([[1.0, 1.0], [5.0, 1.0], [5.0, 5.0], [1.0, 5.0]])
        mask = rasterize_polygon(pts, 8, 8)
        assert mask[1, 1] and mask[5, 5] and mask[1, 3]
        assert not mask[0, 0] and not mask[6, 6]


class TestFaceTemplate:
    def test_six_foreground_regions(self):
        template = build_face_template()
        assert len(template.regions) == 6
        assert template.n_s == 7

    def test_indices_in_bounds(self):
        template = build_face_template()
        for _, polygons in template.regions:
            for poly in polygons:
                assert all(0 <= idx < 68 for idx in poly)

    def test_mouth_uses_outer_lip_ring(self):
        template = build_face_template()
        mouthid, mouth_polys = template.regions[-1]
        assert mouth_polys[0] == list(range(48, 60))

    def test_template_missing_point_rejected(self):
        from segsynth.data import RegionTemplate

        bad = RegionTemplate(name="bad", point_count=5, regions=((1, ([0, 1, 7],)),))
        with pytest.raises(ValidationError):
            bad.validate()


def synthetic_face_landmarks(size=32, jitter=0.0, seed=0):
    """A rough 68-point face centered in the frame, optional jitter."""
    rng = np.random.default_rng(seed)
    s = size / 32.0
    pts = np.zeros((68, 2))
    # jaw: half ellipse
    for i in range(17):
        ang = np.pi * (i / 16.0)
        pts[i] = [16 - 11 * np.cos(ang), 14 + 12 * np.sin(ang)]
    # brows
    for i, t in enumerate(np.linspace(0, 1, 5)):
        pts[17 + i] = [7 + 7 * t, 9 - 2 * np.sin(np.pi * t)]
        pts[22 + i] = [18 + 7 * t, 9 - 2 * np.sin(np.pi * t)]
    # nose bridge + base
    for i in range(4):
        pts[27 + i] = [16, 10 + 2 * i]
    for i, t in enumerate(np.linspace(-1, 1, 5)):
        pts[31 + i] = [16 + 2.5 * t, 17]
    # eyes
    for i in range(6):
        ang = 2 * np.pi * i / 6
        pts[36 + i] = [10 + 2.2 * np.cos(ang), 11 + 1.2 * np.sin(ang)]
        pts[42 + i] = [22 + 2.2 * np.cos(ang), 11 + 1.2 * np.sin(ang)]
    # outer lip ring + inner ring
    for i in range(12):
        ang = 2 * np.pi * i / 12
        pts[48 + i] = [16 + 4 * np.cos(ang), 21.5 + 2 * np.sin(ang)]
    for i in range(8):
        ang = 2 * np.pi * i / 8
        pts[60 + i] = [16 + 2 * np.cos(ang), 21.5 + 1 * np.sin(ang)]
    pts *= s
    if jitter:
        pts += rng.uniform(-jitter, jitter, size=pts.shape) * s
    return LandmarkSet(np.clip(pts, 0, size - 1e-6))


class TestLandmarksToSegmentation:
    def test_valid_one_hot_output(self):
        template = build_face_template()
        seg = landmarks_to_segmentation(synthetic_face_landmarks(), 32, 32, template)
        assert seg.n_s == 7
        assert (seg.data.sum(axis=2) == 1.0).all()
        # face hull should cover something, and so should the mouth
        idx = seg.to_index_map()
        assert (idx == 1).any()
        assert (idx == 6).any()

    def test_wrong_point_count_rejected(self):
        template = build_face_template()
        with pytest.raises(ValidationError):
            landmarks_to_segmentation(LandmarkSet(np.zeros((5, 2))), 32, 32, template)

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=60, deadline=None)
    def test_one_hot_under_jitter(self, seed):
        template = build_face_template()
        lm = synthetic_face_landmarks(jitter=2.0, seed=seed)
        seg = landmarks_to_segmentation(lm, 32, 32, template)
        assert (seg.data.sum(axis=2) == 1.0).all()
        assert set(np.unique(seg.data)) <= {0.0, 1.0}

    def test_later_regions_overwrite(self):
        template = build_face_template()
        lm = synthetic_face_landmarks()
        seg = landmarks_to_segmentation(lm, 32, 32, template)
        idx = seg.to_index_map()
        # mouth sits inside the face hull; its pixels must not be class 1
        mouth_pts = lm.points[48:60]
        cx, cy = mouth_pts.mean(axis=0)
        assert idx[int(round(cy)), int(round(cx))] == 6


class TestShapesDataset:
    def test_deterministic(self):
        cfg = ShapesConfig(image_size=16, n_samples=6, seed=3)
        d1 = generate_shapes_dataset(cfg)
        d2 = generate_shapes_dataset(cfg)
        assert np.array_equal(d1.images, d2.images)
        assert np.array_equal(d1.index_maps, d2.index_maps)
        assert np.array_equal(d1.labels, d2.labels)

    def test_mask_matches_image_by_regeneration(self):
        cfg = ShapesConfig(image_size=24, n_samples=40, seed=5)
        ds = generate_shapes_dataset(cfg)
        for i in range(len(ds)):
            mask = ds.index_maps[i] > 0
            classes = np.unique(ds.index_maps[i][mask])
            assert len(classes) == 1
            # all foreground pixels share one palette-ish color
            fg = ds.images[i][mask]
            assert fg.std(axis=0).max() < 1e-5

    def test_attribute_decodes_dominant_color(self):
        cfg = ShapesConfig(image_size=24, n_samples=60, seed=6)
        ds = generate_shapes_dataset(cfg)
        palette = np.array(cfg.palette, dtype=np.float64)
        for i in range(len(ds)):
            mask = ds.index_maps[i] > 0
            mean_rgb = ((ds.images[i][mask] + 1.0) * 127.5).mean(axis=0)
            dist = np.linalg.norm(palette - mean_rgb, axis=1) / np.linalg.norm(palette, axis=1)
            assert int(np.argmin(dist)) == int(np.argmax(ds.labels[i]))

    def test_mask_is_exact_analytic_shape(self):
        # regenerate with the same rng draws and compare masks
        cfg = ShapesConfig(image_size=20, n_samples=25, seed=9)
        ds = generate_shapes_dataset(cfg)
        rng = np.random.default_rng(cfg.seed)
        for i in range(len(ds)):
            shape_class = int(rng.integers(1, cfg.n_shapes + 1))
            color_idx = int(rng.integers(0, cfg.n_c))
            r = rng.uniform(cfg.min_scale, cfg.max_scale) * cfg.image_size
            cx = rng.uniform(r + 1, cfg.image_size - r - 2)
            cy = rng.uniform(r + 1, cfg.image_size - r - 2)
            mask = shape_mask(SHAPE_NAMES[shape_class - 1], cx, cy, r, cfg.image_size)
            expected = np.where(mask, shape_class, 0).astype(np.uint8)
            assert np.array_equal(ds.index_maps[i], expected)
            # consume the rest of this sample's draws
            rng.uniform(90, 165)
            rng.uniform(-28, 28, size=2)
            rng.normal(0.0, cfg.background_noise * 255.0, size=(cfg.image_size, cfg.image_size, 3))
            rng.uniform(0.85, 1.1)
            assert color_idx == int(np.argmax(ds.labels[i]))

    def test_one_hot_batches(self, small_shapes_dataset):
        seg = small_shapes_dataset.one_hot_segmentations(np.arange(4))
        assert seg.shape == (4, 4, 32, 32)
        assert (seg.sum(axis=1) == 1.0).all()


class TestManifestRoundTrip:
    def test_write_then_load(self, tmp_path, small_shapes_dataset):
        manifest = write_dataset(small_shapes_dataset, str(tmp_path))
        spec = DatasetSpec(
            root=str(tmp_path),
            manifest=os.path.basename(manifest),
            image_size=32,
            n_s=4,
            n_c=3,
        )
        loaded = load_dataset(spec)
        assert len(loaded) == len(small_shapes_dataset)
        assert np.array_equal(loaded.index_maps, small_shapes_dataset.index_maps)
        assert np.array_equal(loaded.labels, small_shapes_dataset.labels)
        # images survive the 8-bit round trip
        assert np.allclose(loaded.images, small_shapes_dataset.images, atol=1 / 127.5)

    def test_manifest_row_count(self, tmp_path, small_shapes_dataset):
        manifest = write_dataset(small_shapes_dataset, str(tmp_path))
        with open(manifest) as fh:
            rows = [line for line in fh if line.strip()]
        assert len(rows) == len(small_shapes_dataset)

    def test_missing_file_names_row(self, tmp_path, small_shapes_dataset):
        manifest = write_dataset(small_shapes_dataset, str(tmp_path))
        os.unlink(str(tmp_path / "images" / "000001.png"))
        spec = DatasetSpec(
            root=str(tmp_path), manifest=os.path.basename(manifest),
            image_size=32, n_s=4, n_c=3,
        )
        with pytest.raises(ValidationError, match="row 2"):
            load_dataset(spec)

    def test_label_arity_mismatch_rejected(self, tmp_path, small_shapes_dataset):
        manifest = write_dataset(small_shapes_dataset, str(tmp_path))
        spec = DatasetSpec(
            root=str(tmp_path), manifest=os.path.basename(manifest),
            image_size=32, n_s=4, n_c=5,
        )
        with pytest.raises(ValidationError, match="attribute bits"):
            load_dataset(spec)

    def test_loaded_samples_satisfy_invariants(self, tmp_path):
        ds = generate_shapes_dataset(ShapesConfig(image_size=16, n_samples=30, seed=11))
        manifest = write_dataset(ds, str(tmp_path))
        spec = DatasetSpec(
            root=str(tmp_path), manifest=os.path.basename(manifest),
            image_size=16, n_s=4, n_c=3,
        )
        loaded = load_dataset(spec)
        assert loaded.images.min() >= -1.0 and loaded.images.max() <= 1.0
        assert (loaded.index_maps < 4).all()
        assert np.isin(loaded.labels, (0.0, 1.0)).all()


class TestSampling:
    def test_sample_batch_distinct(self, small_shapes_dataset):
        rng = np.random.default_rng(0)
        indices, _ = sample_batch(small_shapes_dataset, 16, rng)
        assert len(set(indices.tolist())) == 16

    def test_epoch_sampler_without_replacement(self):
        rng = np.random.default_rng(1)
        sampler = EpochSampler(20, 5, rng)
        seen = []
        for _ in range(4):
            seen.extend(sampler.next_indices().tolist())
        assert sorted(seen) == list(range(20))

    def test_sampler_smaller_dataset_rejected(self):
        with pytest.raises(ValidationError):
            EpochSampler(3, 5, np.random.default_rng(0))

    def test_landmark_sidecar_round_trip(self, tmp_path):
        lm = synthetic_face_landmarks()
        path = tmp_path / "face.txt"
        with open(path, "w") as fh:
            for x, y in lm.points:
                fh.write(f"{x} {y}\n")
        loaded = load_landmark_file(str(path))
        assert np.allclose(loaded.points, lm.points)


class TestHorizontalFlip:
    def test_image_and_mask_flip_consistently(self):
        from segsynth.data import horizontal_flip

        ds = generate_shapes_dataset(ShapesConfig(image_size=16, n_samples=5, seed=3))
        for i in range(len(ds)):
            f_img, f_mask = horizontal_flip(ds.images[i], ds.index_maps[i])
            assert np.array_equal(f_img, ds.images[i][:, ::-1])
            assert np.array_equal(f_mask, ds.index_maps[i][:, ::-1])
            # foreground pixels still carry the foreground color after the flip
            assert np.array_equal(f_img[f_mask > 0], ds.images[i][ds.index_maps[i] > 0][::-1])

    def test_mirror_landmarks(self):
        from segsynth.data import mirror_landmarks

        lm = synthetic_face_landmarks()
        mirrored = mirror_landmarks(lm, 32)
        assert np.allclose(mirrored.points[:, 0], 31 - lm.points[:, 0])
        assert np.allclose(mirrored.points[:, 1], lm.points[:, 1])
        assert np.allclose(mirror_landmarks(mirrored, 32).points, lm.points)

    def test_flag_gated_on_load(self, tmp_path):
        ds = generate_shapes_dataset(ShapesConfig(image_size=16, n_samples=4, seed=4))
        manifest = write_dataset(ds, str(tmp_path))
        base = DatasetSpec(root=str(tmp_path), manifest=os.path.basename(manifest),
                           image_size=16, n_s=4, n_c=3)
        flipped = DatasetSpec(root=str(tmp_path), manifest=os.path.basename(manifest),
                              image_size=16, n_s=4, n_c=3, augment_hflip=True)
        plain = load_dataset(base)
        augmented = load_dataset(flipped)
        assert len(augmented) == 2 * len(plain)
        assert np.array_equal(augmented.index_maps[len(plain)], plain.index_maps[0][:, ::-1])
        assert np.array_equal(augmented.labels[len(plain)], plain.labels[0])
