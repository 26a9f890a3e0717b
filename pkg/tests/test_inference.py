import dataclasses

import numpy as np
import pytest
import torch

from slgan import data, inference, training
from slgan.config import LATENT_DIM, desk_config
from slgan.data import MAKEUP, NON_MAKEUP
from slgan.errors import (
    DimensionMismatch,
    InvalidConfig,
    WeightSumViolation,
)
from slgan.synthetic import write_synthetic_dataset


def micro_config(**overrides):
    base = dict(resolution=16, base_channels=8, max_channels=32, mn_hidden=32,
                batch_size=2, total_steps=3, checkpoint_every=10)
    base.update(overrides)
    return desk_config(**base)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """A bundle trained a few steps so EMA and raw weights measurably differ."""
    root = tmp_path_factory.mktemp("inf_data")
    write_synthetic_dataset(root, per_domain=2, resolution=16, seed=1)
    cfg = micro_config()
    index = data.load_manifest(root, cfg.resolution)
    bundle = training.init_models(cfg, seed=0)
    opts = training.build_optimizers(bundle)
    for step in range(3):
        bseed, zseed = training.step_seeds(cfg.seed, bundle.step)
        batch = data.sample_training_batch(index, rng_seed=bseed,
                                           batch_size=cfg.batch_size)
        training.train_step(bundle, opts, batch, np.random.default_rng(zseed))
    return bundle, opts


@pytest.fixture(scope="module")
def frozen(trained):
    bundle, _ = trained
    return inference.freeze_bundle(bundle)


@pytest.fixture()
def source():
    rng = np.random.default_rng(11)
    return torch.from_numpy(rng.uniform(-1, 1, (3, 16, 16))).float()


@pytest.fixture()
def reference():
    rng = np.random.default_rng(22)
    return torch.from_numpy(rng.uniform(-1, 1, (3, 16, 16))).float()


class TestFreeze:
    def test_tag_and_step(self, trained, frozen):
        bundle, _ = trained
        assert frozen.source_tag == inference.EMA_TAG
        assert frozen.step == bundle.step == 3

    def test_uses_ema_weights_not_training_weights(self, trained, frozen):
        bundle, _ = trained
        ema_p = next(bundle.generator_ema.parameters())
        raw_p = next(bundle.generator.parameters())
        froz_p = next(frozen.generator.parameters())
        assert torch.equal(froz_p, ema_p)
        assert not torch.equal(froz_p, raw_p)

    def test_frozen_modules_detached(self, frozen):
        for module in (frozen.generator, frozen.style_encoder, frozen.mapping):
            assert not module.training
            assert all(not p.requires_grad for p in module.parameters())

    def test_outputs_match_manual_ema_forward(self, trained, frozen, source, reference):
        bundle, _ = trained
        with torch.no_grad():
            code = bundle.style_encoder_ema(reference[None], MAKEUP, None)
            manual = bundle.generator_ema(source[None], None, code)[0]
        got = inference.transfer(source, reference, frozen)
        assert torch.equal(got, manual)

    def test_tampered_tag_rejected(self, frozen, source, reference):
        fake = dataclasses.replace(frozen, source_tag="raw")
        with pytest.raises(InvalidConfig):
            inference.transfer(source, reference, fake)
        with pytest.raises(InvalidConfig):
            inference.encode_reference_style(fake, reference, MAKEUP)
        with pytest.raises(InvalidConfig):
            inference.map_latent_style(fake, torch.zeros(LATENT_DIM), MAKEUP)

    def test_load_inference_bundle(self, trained, frozen, tmp_path, source, reference):
        bundle, opts = trained
        path = training.save_checkpoint(bundle, tmp_path / "ck.pt", opts)
        loaded = inference.load_inference_bundle(path)
        assert loaded.source_tag == inference.EMA_TAG
        assert len(loaded.bundle_hash) == 64
        assert torch.equal(inference.transfer(source, reference, loaded),
                           inference.transfer(source, reference, frozen))


class TestTransfer:
    def test_shape_and_range(self, frozen, source, reference):
        out = inference.transfer(source, reference, frozen)
        assert out.shape == (3, 16, 16)
        assert out.min() >= -1.0 and out.max() <= 1.0

    def test_deterministic(self, frozen, source, reference):
        a = inference.transfer(source, reference, frozen)
        b = inference.transfer(source, reference, frozen)
        assert torch.equal(a, b)

    def test_batched_keeps_batch_dim(self, frozen, source, reference):
        out = inference.transfer(source[None], reference[None], frozen)
        assert out.shape == (1, 3, 16, 16)
        assert torch.equal(out[0], inference.transfer(source, reference, frozen))

    def test_references_steer_output(self, frozen, source, reference):
        other = torch.flip(reference, dims=[2])
        a = inference.transfer(source, reference, frozen)
        b = inference.transfer(source, other, frozen)
        assert not torch.equal(a, b)

    def test_alpha_one_matches_plain_transfer(self, frozen, source, reference):
        plain = inference.transfer(source, reference, frozen)
        full = inference.transfer(source, reference, frozen, alpha=1.0)
        assert torch.allclose(plain, full, atol=1e-6)

    def test_alpha_zero_uses_own_style(self, frozen, source, reference):
        own = inference.encode_reference_style(frozen, source, NON_MAKEUP)
        expected = inference.generate(frozen, source, own)
        got = inference.transfer(source, reference, frozen, alpha=0.0)
        assert torch.allclose(got, expected, atol=1e-6)


class TestRemove:
    def test_default_equals_seed_zero(self, frozen, source):
        assert torch.equal(inference.remove(source, frozen),
                           inference.remove(source, frozen, seed=0))

    def test_seed_reproducible(self, frozen, source):
        a = inference.remove(source, frozen, seed=9)
        b = inference.remove(source, frozen, seed=9)
        c = inference.remove(source, frozen, seed=10)
        assert torch.equal(a, b)
        assert not torch.equal(a, c)

    def test_explicit_latent_matches_seed_draw(self, frozen, source):
        z = torch.from_numpy(
            np.random.default_rng(9).standard_normal(LATENT_DIM)).float()
        assert torch.equal(inference.remove(source, frozen, latent=z),
                           inference.remove(source, frozen, seed=9))

    def test_reference_guided_differs_from_latent(self, frozen, source, reference):
        by_ref = inference.remove(source, frozen, reference=reference)
        by_seed = inference.remove(source, frozen, seed=0)
        assert not torch.equal(by_ref, by_seed)

    def test_bad_latent_dim(self, frozen, source):
        with pytest.raises(DimensionMismatch):
            inference.remove(source, frozen, latent=torch.zeros(LATENT_DIM + 1))


class TestInterpolateStyles:
    def codes(self, k=4, dim=8, seed=0):
        rng = np.random.default_rng(seed)
        return [torch.from_numpy(rng.standard_normal(dim)).float()
                for _ in range(k)]

    def test_one_hot_bitwise(self):
        codes = self.codes()
        out = inference.interpolate_styles(codes, [0.0, 0.0, 1.0, 0.0])
        assert torch.equal(out, codes[2])
        out[0] = 999.0  # returned tensor must be an independent copy
        assert codes[2][0] != 999.0

    def test_midpoint(self):
        a, b = self.codes(k=2)
        out = inference.interpolate_styles([a, b], [0.5, 0.5])
        expected = ((a.double() + b.double()) / 2).float()
        assert torch.allclose(out, expected, atol=1e-12, rtol=0)

    def test_k4_float64_oracle(self):
        codes = [c.double() for c in self.codes(k=4)]
        w = [0.1, 0.2, 0.3, 0.4]
        expected = np.zeros(8, dtype=np.float64)
        for wi, c in zip(w, codes):
            expected += wi * c.numpy()
        out = inference.interpolate_styles(codes, w)
        assert out.dtype == torch.float64
        np.testing.assert_allclose(out.numpy(), expected, atol=1e-12, rtol=0)

    def test_float32_codes_keep_dtype(self):
        codes = self.codes(k=3)
        out = inference.interpolate_styles(codes, [0.2, 0.3, 0.5])
        assert out.dtype == torch.float32
        expected = sum(w * c.double() for w, c in zip((0.2, 0.3, 0.5), codes))
        assert torch.allclose(out.double(), expected, atol=1e-7)

    def test_weight_sum_tolerance_boundary(self):
        codes = self.codes(k=2)
        inference.interpolate_styles(codes, [0.5, 0.5 + 5e-7])  # inside 1e-6
        with pytest.raises(WeightSumViolation):
            inference.interpolate_styles(codes, [0.5, 0.5 + 5e-6])

    def test_negative_weight(self):
        codes = self.codes(k=2)
        with pytest.raises(WeightSumViolation):
            inference.interpolate_styles(codes, [1.5, -0.5])

    def test_count_mismatch_and_empty(self):
        codes = self.codes(k=2)
        with pytest.raises(WeightSumViolation):
            inference.interpolate_styles(codes, [1.0])
        with pytest.raises(WeightSumViolation):
            inference.interpolate_styles([], [])

    def test_shape_mismatch(self):
        a = torch.zeros(8)
        b = torch.zeros(9)
        with pytest.raises(DimensionMismatch):
            inference.interpolate_styles([a, b], [0.5, 0.5])


class TestSweeps:
    def test_strength_sweep_frames(self, frozen, source, reference):
        frames = inference.strength_sweep(source, reference, 5, frozen)
        assert len(frames) == 5
        assert all(f.shape == (3, 16, 16) for f in frames)
        assert torch.equal(frames[-1], inference.transfer(source, reference, frozen))
        own = inference.encode_reference_style(frozen, source, NON_MAKEUP)
        assert torch.equal(frames[0], inference.generate(frozen, source, own))

    def test_strength_sweep_guard(self, frozen, source, reference):
        with pytest.raises(InvalidConfig):
            inference.strength_sweep(source, reference, 1, frozen)

    def test_latent_sweep_reproducible(self, frozen, source):
        a = inference.latent_sweep(source, 1, 2, 3, NON_MAKEUP, frozen)
        b = inference.latent_sweep(source, 1, 2, 3, NON_MAKEUP, frozen)
        assert len(a) == 3
        assert all(torch.equal(x, y) for x, y in zip(a, b))

    def test_latent_sweep_equal_seeds_constant(self, frozen, source):
        frames = inference.latent_sweep(source, 7, 7, 4, MAKEUP, frozen)
        assert all(torch.equal(frames[0], f) for f in frames[1:])

    def test_latent_sweep_guard(self, frozen, source):
        with pytest.raises(InvalidConfig):
            inference.latent_sweep(source, 1, 2, 1, MAKEUP, frozen)


class TestToUint8:
    def test_extremes_and_dtype(self):
        img = torch.tensor([[[-1.0, 1.0], [0.0, 2.0]]]).repeat(3, 1, 1)
        out = inference.to_uint8(img)
        assert out.dtype == np.uint8
        assert out.shape == (2, 2, 3)
        assert out[0, 0, 0] == 0 and out[0, 1, 0] == 255
        assert out[1, 0, 0] == 128  # round(0.0 * 127.5 + 127.5)
        assert out[1, 1, 0] == 255  # clipped before scaling
