"""Optimization loop: alternating D/G steps, EMA shadows, checkpoints.

Each iteration runs one discriminator step, then one generator-side step
covering both guidance modes (latent codes through MN, reference images
through SE), then an EMA update of G, SE, MN. All per-step randomness is
derived from (config.seed, step), so an interrupted run resumed from a
checkpoint retraces the unbroken run exactly.
"""

from __future__ import annotations

import copy
import hashlib
import io
import os
from pathlib import Path

import numpy as np
import torch

from . import losses as L
from .config import LATENT_DIM, TrainConfig
from .data import load_manifest, sample_training_batch
from .errors import CorruptCheckpoint, InvalidConfig, NonFiniteLoss, VersionMismatch
from .networks import (
    Discriminator,
    Generator,
    MappingNetwork,
    ModelBundle,
    StyleEncoder,
    he_init_,
)

CHECKPOINT_VERSION = 1
OPTIMIZER_KEYS = ("generator", "style_encoder", "mapping", "discriminator")


def init_models(config: TrainConfig, seed: int) -> ModelBundle:
    """He-initialized networks with EMA shadows equal to them, step 0."""
    if not isinstance(config, TrainConfig):
        raise InvalidConfig(f"expected TrainConfig, got {type(config).__name__}")
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        generator = he_init_(Generator(config))
        style_encoder = he_init_(StyleEncoder(config))
        mapping = he_init_(MappingNetwork(config))
        discriminator = he_init_(Discriminator(config))
    return ModelBundle(
        config=config,
        generator=generator,
        style_encoder=style_encoder,
        mapping=mapping,
        discriminator=discriminator,
        generator_ema=copy.deepcopy(generator),
        style_encoder_ema=copy.deepcopy(style_encoder),
        mapping_ema=copy.deepcopy(mapping),
        step=0,
    )


def build_optimizers(bundle: ModelBundle) -> dict:
    cfg = bundle.config
    lrs = {"generator": cfg.lr_g, "style_encoder": cfg.lr_se,
           "mapping": cfg.lr_mn, "discriminator": cfg.lr_d}
    return {
        name: torch.optim.AdamW(
            module.parameters(), lr=lrs[name],
            betas=(cfg.adam_beta1, cfg.adam_beta2), weight_decay=cfg.weight_decay)
        for name, module in bundle.train_modules().items()
    }


def update_ema(bundle: ModelBundle, decay: float) -> None:
    """shadow <- decay * shadow + (1 - decay) * current for G, SE, MN."""
    with torch.no_grad():
        for name, ema_module in bundle.ema_modules().items():
            current = bundle.train_modules()[name]
            for p_ema, p in zip(ema_module.parameters(), current.parameters()):
                p_ema.mul_(decay).add_(p, alpha=1.0 - decay)


def _active_modes(config: TrainConfig, step: int) -> list:
    if config.mode_schedule == "both":
        return ["latent", "style"]
    if config.mode_schedule == "alternate":
        return ["latent" if step % 2 == 0 else "style"]
    raise InvalidConfig(f"unknown mode_schedule {config.mode_schedule!r}")


def _set_requires_grad(module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


def discriminator_step(bundle: ModelBundle, optimizers: dict, batch,
                       z1: torch.Tensor, modes: list) -> tuple:
    """Update D against real images and fakes from the active modes."""
    G, SE, MN, D = (bundle.generator, bundle.style_encoder,
                    bundle.mapping, bundle.discriminator)
    src, src_d = batch.source_images, batch.source_domains
    ref, ref_d = batch.reference_images, batch.reference_domains
    hm = batch.source_heatmaps
    w = bundle.config.weights

    optimizers["discriminator"].zero_grad(set_to_none=True)
    with torch.no_grad():
        fakes = []
        if "latent" in modes:
            fakes.append(G(src, hm, MN(z1, ref_d)))
        if "style" in modes:
            fakes.append(G(src, hm, SE(ref, ref_d, batch.reference_masks.full_face)))
    if bundle.config.r1_gamma > 0:
        real_in = src.detach().requires_grad_(True)
        real_logit = D(real_in, src_d)
        (grad,) = torch.autograd.grad(real_logit.sum(), real_in, create_graph=True)
        r1 = 0.5 * bundle.config.r1_gamma * grad.pow(2).sum(dim=(1, 2, 3)).mean()
    else:
        real_logit = D(src, src_d)
        r1 = None
    adv_d = sum(L.adversarial_loss_d(real_logit, D(img, ref_d))
                for img in fakes) / len(fakes)
    d_total = L.total_discriminator_loss({"adv": adv_d}, w)
    if r1 is not None:
        d_total = d_total + r1
    d_total.backward()
    optimizers["discriminator"].step()
    return float(adv_d.detach()), float(d_total.detach())


def generator_step(bundle: ModelBundle, optimizers: dict, batch,
                   z1: torch.Tensor, z2: torch.Tensor, modes: list) -> tuple:
    """Update G, SE, MN on the averaged dual-mode total; D is left untouched."""
    cfg = bundle.config
    w = cfg.weights
    G, SE, MN, D = (bundle.generator, bundle.style_encoder,
                    bundle.mapping, bundle.discriminator)
    src, src_d = batch.source_images, batch.source_domains
    ref, ref_d = batch.reference_images, batch.reference_domains
    hm = batch.source_heatmaps
    ref_full = batch.reference_masks.full_face
    src_full = batch.source_masks.full_face

    for key in ("generator", "style_encoder", "mapping"):
        optimizers[key].zero_grad(set_to_none=True)
    _set_requires_grad(D, False)

    content_src = G.encode(src, hm)
    invariant = G.decode_invariant(content_src)
    s_bar = SE(src, src_d, src_full)
    part_sums = {k: 0.0 for k in L.GENERATOR_PARTS}
    g_total = None
    for mode in modes:
        if mode == "latent":
            s_hat = MN(z1, ref_d)
            s_hat2 = MN(z2, ref_d)
        else:
            s_hat = SE(ref, ref_d, ref_full)
            # second style source: the batch rolled by one, read on each
            # slot's own target branch
            s_hat2 = SE(ref.roll(1, dims=0), ref_d, ref_full.roll(1, dims=0))
        fake = G.decode(content_src, s_hat)
        fake2 = G.decode(content_src, s_hat2)
        parts = {
            "adv": L.adversarial_loss_g(D(fake, ref_d)),
            "diversity": L.style_diversity_loss(fake, fake2),
            "style_rec": L.style_reconstruction_loss(s_hat, SE(fake, ref_d, src_full)),
            "cycle": L.cycle_loss(src, G.decode(G.encode(fake, hm), s_bar)),
            "makeup": L.makeup_loss(fake, ref, batch.source_masks,
                                    batch.reference_masks, SE, w),
            "guide": L.guide_loss(src, invariant, fake, w.lambda_gamma, w.lambda_beta),
        }
        try:
            mode_total = L.total_generator_loss(parts, w)
        except NonFiniteLoss as exc:
            _set_requires_grad(D, True)
            raise NonFiniteLoss(f"step {bundle.step}, mode {mode}: {exc}") from exc
        g_total = mode_total if g_total is None else g_total + mode_total
        for k in part_sums:
            part_sums[k] += float(parts[k].detach())
    g_total = g_total / len(modes)
    g_total.backward()
    for key in ("generator", "style_encoder", "mapping"):
        optimizers[key].step()
    _set_requires_grad(D, True)
    averaged = {k: v / len(modes) for k, v in part_sums.items()}
    return averaged, float(g_total.detach())


def train_step(bundle: ModelBundle, optimizers: dict, batch, rng: np.random.Generator) -> L.LossReport:
    """One D step, one dual-mode G step, one EMA update; returns the report."""
    cfg = bundle.config
    b = batch.batch_size
    z1 = torch.from_numpy(rng.standard_normal((b, LATENT_DIM))).float()
    z2 = torch.from_numpy(rng.standard_normal((b, LATENT_DIM))).float()
    modes = _active_modes(cfg, bundle.step)

    adv_d, d_total = discriminator_step(bundle, optimizers, batch, z1, modes)
    parts, g_total = generator_step(bundle, optimizers, batch, z1, z2, modes)

    update_ema(bundle, cfg.ema_decay)
    bundle.step += 1

    report = L.LossReport(
        step=bundle.step,
        adv_d=adv_d,
        adv_g=parts["adv"],
        diversity=parts["diversity"],
        style_rec=parts["style_rec"],
        cycle=parts["cycle"],
        makeup=parts["makeup"],
        guide=parts["guide"],
        total_g=g_total,
        total_d=d_total,
    )
    if not report.finite():
        raise NonFiniteLoss(f"non-finite report at step {report.step}: {report}")
    return report


def step_seeds(seed: int, step: int) -> tuple:
    """(batch_seed, z_rng) derived statelessly from the run seed and step."""
    state = np.random.SeedSequence([seed, step]).generate_state(2)
    return int(state[0]), np.random.default_rng(int(state[1]))


def save_checkpoint(bundle: ModelBundle, path, optimizers: dict | None = None) -> Path:
    """Atomic write of all parameters, EMA shadows, optimizer state, and step.

    Parameter arrays are named "<network>.<layer path>.<param>" following the
    module state-dict convention; the archive embeds a content digest and the
    config hash.
    """
    payload = {
        "version": CHECKPOINT_VERSION,
        "step": bundle.step,
        "config": bundle.config.to_dict(),
        "config_hash": bundle.config.config_hash(),
        "modules": {name: m.state_dict() for name, m in bundle.all_modules().items()},
        "optimizers": {k: o.state_dict() for k, o in (optimizers or {}).items()},
    }
    buf = io.BytesIO()
    torch.save(payload, buf)
    blob = buf.getvalue()
    wrapper = {
        "sha256": hashlib.sha256(blob).hexdigest(),
        "payload": torch.from_numpy(np.frombuffer(blob, dtype=np.uint8).copy()),
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(wrapper, tmp)
    os.replace(tmp, path)
    return path


def load_checkpoint(path) -> tuple:
    """Returns (bundle, optimizer_state_dicts); verifies digest and version."""
    try:
        wrapper = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CorruptCheckpoint(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(wrapper, dict) or "payload" not in wrapper or "sha256" not in wrapper:
        raise CorruptCheckpoint(f"{path} is not a checkpoint archive")
    blob = wrapper["payload"].numpy().tobytes()
    if hashlib.sha256(blob).hexdigest() != wrapper["sha256"]:
        raise CorruptCheckpoint(f"content digest mismatch in {path}")
    payload = torch.load(io.BytesIO(blob), map_location="cpu", weights_only=True)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatch(
            f"checkpoint version {payload.get('version')} != {CHECKPOINT_VERSION}")
    config = TrainConfig.from_dict(payload["config"])
    if config.config_hash() != payload["config_hash"]:
        raise VersionMismatch("config hash does not match the stored config")
    bundle = init_models(config, seed=config.seed)
    for name, module in bundle.all_modules().items():
        module.load_state_dict(payload["modules"][name])
    bundle.step = payload["step"]
    return bundle, payload["optimizers"]


def fit(config: TrainConfig, dataset_root, out_dir, resume=None) -> Path:
    """Train for config.total_steps; returns the final checkpoint path.

    Writes ckpt_step<NNNNNN>.pt at the checkpoint cadence, final.pt at the
    end, and appends per-step reports to loss_log.tsv.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index = load_manifest(dataset_root, config.resolution)
    if resume is not None:
        bundle, opt_states = load_checkpoint(resume)
        if bundle.config.config_hash() != config.config_hash():
            raise VersionMismatch("resume checkpoint was produced by a different config")
        optimizers = build_optimizers(bundle)
        for name, opt in optimizers.items():
            if name in opt_states and opt_states[name]:
                opt.load_state_dict(opt_states[name])
    else:
        bundle = init_models(config, config.seed)
        optimizers = build_optimizers(bundle)

    log_path = out / "loss_log.tsv"
    new_log = not log_path.exists()
    cache: dict = {}
    with open(log_path, "a") as log:
        if new_log:
            log.write(L.LossReport.HEADER + "\n")
        while bundle.step < config.total_steps:
            batch_seed, z_rng = step_seeds(config.seed, bundle.step)
            batch = sample_training_batch(
                index, rng_seed=batch_seed, batch_size=config.batch_size,
                sigma=config.heatmap_sigma, cache=cache)
            report = train_step(bundle, optimizers, batch, z_rng)
            log.write(report.to_line() + "\n")
            log.flush()
            if config.checkpoint_every and bundle.step % config.checkpoint_every == 0:
                save_checkpoint(bundle, out / f"ckpt_step{bundle.step:06d}.pt", optimizers)
    final = save_checkpoint(bundle, out / "final.pt", optimizers)
    return final
