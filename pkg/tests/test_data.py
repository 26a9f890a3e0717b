import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from slgan import data
from slgan.errors import (
    DecodeError,
    EmptyDomain,
    InvalidConfig,
    MissingDirectory,
    NonRGBInput,
    OrphanImage,
    OutOfBoundsLandmark,
    UnknownLabel,
)
from slgan.synthetic import write_synthetic_dataset


@pytest.fixture(scope="module")
def fixture_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("mt_fixture")
    return write_synthetic_dataset(root, per_domain=3, resolution=64, seed=0)


@pytest.fixture(scope="module")
def index(fixture_root):
    return data.load_manifest(fixture_root, 64)


class TestLoadManifest:
    def test_fixture_counts(self, index):
        assert index.counts() == (3, 3)

    def test_empty_directories_ok(self, tmp_path):
        for sub in ("images", "segs"):
            for name in data.DOMAIN_NAMES:
                (tmp_path / sub / name).mkdir(parents=True)
        idx = data.load_manifest(tmp_path, 64)
        assert idx.counts() == (0, 0)

    def test_missing_directory(self, tmp_path):
        (tmp_path / "images" / "makeup").mkdir(parents=True)
        with pytest.raises(MissingDirectory):
            data.load_manifest(tmp_path, 64)

    def test_orphan_image(self, tmp_path):
        for sub in ("images", "segs"):
            for name in data.DOMAIN_NAMES:
                (tmp_path / sub / name).mkdir(parents=True)
        Image.new("RGB", (8, 8)).save(tmp_path / "images" / "makeup" / "a.png")
        with pytest.raises(OrphanImage):
            data.load_manifest(tmp_path, 64)

    def test_every_image_has_seg_and_landmarks(self, index):
        for path in index.makeup_paths + index.nonmakeup_paths:
            assert index.seg_paths[path].is_file()
            assert index.landmark_paths[path].is_file()


class TestPreprocess:
    def test_black_maps_to_minus_one(self):
        img = np.zeros((16, 16, 3), dtype=np.uint8)
        out = data.preprocess_image(img, 16)
        assert torch.all(out == -1.0)

    def test_white_maps_to_plus_one(self):
        img = np.full((16, 16, 3), 255, dtype=np.uint8)
        out = data.preprocess_image(img, 16)
        assert torch.all(out == 1.0)

    def test_mid_gray_value(self):
        img = np.full((16, 16, 3), 128, dtype=np.uint8)
        out = data.preprocess_image(img, 16)
        expected = 128.0 / 127.5 - 1.0
        # float32 cancellation against 1.0 leaves ~6e-8 of noise
        assert torch.allclose(out, torch.full_like(out, expected), atol=1e-6)

    def test_output_shape_and_range(self, index):
        out = data.preprocess_image(index.makeup_paths[0], 32)
        assert out.shape == (3, 32, 32)
        assert out.min() >= -1.0 and out.max() <= 1.0

    def test_non_rgb_rejected(self, tmp_path):
        p = tmp_path / "gray.png"
        Image.new("L", (8, 8)).save(p)
        with pytest.raises(NonRGBInput):
            data.preprocess_image(p, 8)
        with pytest.raises(NonRGBInput):
            data.preprocess_image(np.zeros((8, 8), dtype=np.uint8), 8)

    def test_decode_error(self, tmp_path):
        p = tmp_path / "junk.png"
        p.write_bytes(b"not an image")
        with pytest.raises(DecodeError):
            data.preprocess_image(p, 8)

    def test_invertible_on_8bit_lattice(self):
        # All 256 levels at native resolution; round((v'+1)*127.5) recovers v.
        vals = np.arange(256, dtype=np.uint8).reshape(16, 16)
        img = np.stack([vals] * 3, axis=2)
        out = data.preprocess_image(img, 16)
        recovered = data.postprocess_image(out)
        assert np.array_equal(recovered, img)

    def test_monotone_per_pixel(self):
        a = data.preprocess_image(np.full((8, 8, 3), 10, np.uint8), 8)
        b = data.preprocess_image(np.full((8, 8, 3), 11, np.uint8), 8)
        assert torch.all(b > a)


class TestRegionMasks:
    def test_lip_block_counts(self):
        seg = np.zeros((16, 16), dtype=np.int64)
        seg[6:10, 6:10] = data.LIP_LABELS[0]
        masks = data.derive_region_masks(seg, dilation_px=2)
        assert masks.lips.sum() == 16
        assert masks.eyes.sum() == 0
        assert masks.face.sum() == 0

    def test_no_eye_pixels_no_ring(self):
        seg = np.full((16, 16), data.SKIN, dtype=np.int64)
        masks = data.derive_region_masks(seg, dilation_px=3)
        assert masks.eyes.sum() == 0

    def test_zero_dilation_zero_ring(self, index):
        seg = data.load_parsing_map(index.seg_paths[index.makeup_paths[0]], 64)
        masks = data.derive_region_masks(seg, dilation_px=0)
        assert masks.eyes.sum() == 0

    def test_ring_surrounds_eyes(self, index):
        seg = data.load_parsing_map(index.seg_paths[index.makeup_paths[0]], 64)
        masks = data.derive_region_masks(seg, dilation_px=3)
        eye = np.isin(seg, data.EYE_LABELS)
        assert masks.eyes.sum() > 0
        assert not (masks.eyes & eye).any()

    def test_unknown_label(self):
        seg = np.full((8, 8), 19, dtype=np.int64)
        with pytest.raises(UnknownLabel):
            data.derive_region_masks(seg, dilation_px=1)

    @given(st.integers(0, 2 ** 32 - 1), st.integers(0, 4))
    @settings(max_examples=25, deadline=None)
    def test_regions_pairwise_disjoint_and_in_face(self, seed, dilation):
        rng = np.random.default_rng(seed)
        seg = rng.integers(0, 19, size=(24, 24))
        masks = data.derive_region_masks(seg, dilation_px=dilation)
        lips, eyes, face = masks.lips, masks.eyes, masks.face
        assert not (lips & eyes).any()
        assert not (lips & face).any()
        assert not (eyes & face).any()
        union = lips | eyes | face
        assert not (union & ~masks.full_face).any()


class TestHeatmap:
    def test_empty_landmarks_zero(self):
        heat = data.landmark_heatmap([], 32, sigma=2.0)
        assert heat.shape == (1, 32, 32)
        assert np.all(heat == 0)

    def test_center_peak_is_one(self):
        heat = data.landmark_heatmap([(16.0, 16.0)], 32, sigma=2.0)
        assert heat[0, 16, 16] == pytest.approx(1.0)
        assert heat.max() == pytest.approx(1.0)

    def test_coincident_landmarks_clip(self):
        one = data.landmark_heatmap([(10.0, 12.0)], 32, sigma=2.0)
        two = data.landmark_heatmap([(10.0, 12.0)] * 2, 32, sigma=2.0)
        assert np.allclose(one, two)

    def test_range_bounds(self):
        pts = [(float(x), float(x)) for x in range(0, 32, 3)]
        heat = data.landmark_heatmap(pts, 32, sigma=4.0)
        assert heat.min() >= 0.0 and heat.max() <= 1.0

    def test_out_of_bounds(self):
        with pytest.raises(OutOfBoundsLandmark):
            data.landmark_heatmap([(40.0, 2.0)], 32, sigma=2.0)
        with pytest.raises(OutOfBoundsLandmark):
            data.landmark_heatmap([(-1.0, 2.0)], 32, sigma=2.0)

    def test_bad_sigma(self):
        with pytest.raises(InvalidConfig):
            data.landmark_heatmap([(1.0, 1.0)], 32, sigma=0.0)


class TestSampling:
    def test_same_seed_bit_identical(self, index):
        a = data.sample_training_batch(index, rng_seed=11, batch_size=4)
        b = data.sample_training_batch(index, rng_seed=11, batch_size=4)
        assert a.source_ids == b.source_ids
        assert a.reference_ids == b.reference_ids
        assert torch.equal(a.source_images, b.source_images)
        assert torch.equal(a.source_heatmaps, b.source_heatmaps)
        assert torch.equal(a.source_masks.lips, b.source_masks.lips)

    def test_different_seed_differs(self, index):
        a = data.sample_training_batch(index, rng_seed=1, batch_size=4)
        b = data.sample_training_batch(index, rng_seed=2, batch_size=4)
        assert a.source_ids != b.source_ids or a.reference_ids != b.reference_ids

    def test_domains_opposite(self, index):
        batch = data.sample_training_batch(index, rng_seed=3, batch_size=8)
        assert torch.all(batch.source_domains + batch.reference_domains == 1)

    def test_batch_fields_uniform(self, index):
        batch = data.sample_training_batch(index, rng_seed=5, batch_size=4)
        assert batch.batch_size == 4
        assert batch.reference_images.shape == batch.source_images.shape
        assert batch.source_masks.lips.shape == (4, 64, 64)
        assert batch.source_heatmaps.shape == (4, 1, 64, 64)
        assert batch.heatmap_present.all()

    def test_single_image_domain_repeats(self, tmp_path):
        root = write_synthetic_dataset(tmp_path, per_domain=1, resolution=32, seed=1)
        idx = data.load_manifest(root, 32)
        batch = data.sample_training_batch(idx, rng_seed=0, batch_size=4)
        assert batch.batch_size == 4

    def test_empty_domain_raises(self, tmp_path):
        for sub in ("images", "segs"):
            for name in data.DOMAIN_NAMES:
                (tmp_path / sub / name).mkdir(parents=True)
        idx = data.load_manifest(tmp_path, 32)
        with pytest.raises(EmptyDomain):
            data.sample_training_batch(idx, rng_seed=0, batch_size=2)

    def test_batch_masks_disjoint(self, index):
        batch = data.sample_training_batch(index, rng_seed=9, batch_size=4)
        for masks in (batch.source_masks, batch.reference_masks):
            assert torch.all(masks.lips * masks.eyes == 0)
            assert torch.all(masks.lips * masks.face == 0)
            assert torch.all(masks.eyes * masks.face == 0)

    def test_missing_landmarks_zero_heatmap(self, tmp_path):
        root = write_synthetic_dataset(tmp_path, per_domain=2, resolution=32,
                                       seed=2, landmarks=False)
        idx = data.load_manifest(root, 32)
        batch = data.sample_training_batch(idx, rng_seed=0, batch_size=2)
        assert not batch.heatmap_present.any()
        assert torch.all(batch.source_heatmaps == 0)
