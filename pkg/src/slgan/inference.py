"""Frozen-model transfer, removal, interpolation, and sweep operations.

Every operation here consumes an InferenceBundle built from the EMA shadows
of a trained ModelBundle; the tag on the bundle makes accidental use of raw
training weights an error instead of a silent quality bug.
"""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import LATENT_DIM, TrainConfig
from .data import MAKEUP, NON_MAKEUP, RegionMasks, postprocess_image
from .errors import DimensionMismatch, InvalidConfig, WeightSumViolation
from .networks import Generator, MappingNetwork, ModelBundle, StyleEncoder

EMA_TAG = "ema"
WEIGHT_SUM_TOLERANCE = 1e-6


@dataclass
class InferenceBundle:
    """Read-only EMA view of a trained bundle plus provenance metadata."""

    config: TrainConfig
    generator: Generator
    style_encoder: StyleEncoder
    mapping: MappingNetwork
    step: int
    source_tag: str
    bundle_hash: str = ""


def freeze_bundle(bundle: ModelBundle, bundle_hash: str = "") -> InferenceBundle:
    """Deep-copied EMA modules in eval mode with gradients disabled."""
    modules = {}
    for name, module in bundle.ema_modules().items():
        frozen = copy.deepcopy(module).eval()
        for p in frozen.parameters():
            p.requires_grad_(False)
        modules[name] = frozen
    return InferenceBundle(
        config=bundle.config,
        generator=modules["generator"],
        style_encoder=modules["style_encoder"],
        mapping=modules["mapping"],
        step=bundle.step,
        source_tag=EMA_TAG,
        bundle_hash=bundle_hash,
    )


def load_inference_bundle(path) -> InferenceBundle:
    """Load a checkpoint and freeze its EMA weights; hash identifies the file."""
    from .training import load_checkpoint

    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    bundle, _ = load_checkpoint(path)
    return freeze_bundle(bundle, bundle_hash=digest)


def _require_ema(bundle: InferenceBundle) -> None:
    if getattr(bundle, "source_tag", None) != EMA_TAG:
        raise InvalidConfig("inference requires EMA weights; freeze_bundle() provides them")


def _batched(image: torch.Tensor) -> tuple:
    if image.dim() == 3:
        return image[None], True
    return image, False


def _full_face(masks) -> torch.Tensor | None:
    if masks is None:
        return None
    mask = masks.full_face if isinstance(masks, RegionMasks) else masks
    return torch.as_tensor(np.asarray(mask, dtype=np.float32))


def encode_reference_style(bundle: InferenceBundle, reference: torch.Tensor,
                           domain: int, masks=None) -> torch.Tensor:
    """Style code of a reference image on the requested domain branch."""
    _require_ema(bundle)
    ref, squeeze = _batched(reference)
    mask = _full_face(masks)
    if mask is not None and mask.dim() == 2:
        mask = mask[None]
    with torch.no_grad():
        code = bundle.style_encoder(ref, domain, mask)
    return code[0] if squeeze else code


def map_latent_style(bundle: InferenceBundle, z: torch.Tensor, domain: int) -> torch.Tensor:
    _require_ema(bundle)
    with torch.no_grad():
        return bundle.mapping(z, domain)


def generate(bundle: InferenceBundle, source: torch.Tensor, style: torch.Tensor,
             heatmap: torch.Tensor | None = None) -> torch.Tensor:
    _require_ema(bundle)
    src, squeeze = _batched(source)
    hm = heatmap
    if hm is not None and hm.dim() == 3:
        hm = hm[None]
    s = style[None] if style.dim() == 1 else style
    with torch.no_grad():
        out = bundle.generator(src, hm, s)
    return out[0] if squeeze else out


def transfer(source: torch.Tensor, reference: torch.Tensor, bundle: InferenceBundle,
             *, ref_masks=None, heatmap=None, alpha: float | None = None,
             src_masks=None) -> torch.Tensor:
    """Apply the reference's makeup style to the source.

    With `alpha` set, the style is the source-blend (1-alpha) * own-style +
    alpha * reference-style, the single-reference strength control.
    """
    style = encode_reference_style(bundle, reference, MAKEUP, ref_masks)
    if alpha is not None:
        own = encode_reference_style(bundle, source, NON_MAKEUP, src_masks)
        style = (1.0 - float(alpha)) * own + float(alpha) * style
    return generate(bundle, source, style, heatmap)


def remove(source: torch.Tensor, bundle: InferenceBundle, *, reference=None,
           ref_masks=None, latent=None, seed: int | None = None,
           heatmap=None) -> torch.Tensor:
    """Translate toward the non-makeup domain, style- or latent-guided.

    Exactly one guidance source applies: a reference image, an explicit
    latent, or a latent drawn from `seed` (default seed 0).
    """
    if reference is not None:
        style = encode_reference_style(bundle, reference, NON_MAKEUP, ref_masks)
    else:
        if latent is None:
            rng = np.random.default_rng(0 if seed is None else seed)
            latent = torch.from_numpy(rng.standard_normal(LATENT_DIM)).float()
        if latent.shape[-1] != LATENT_DIM:
            raise DimensionMismatch(f"latent dim {latent.shape[-1]} != {LATENT_DIM}")
        style = map_latent_style(bundle, latent, NON_MAKEUP)
    return generate(bundle, source, style, heatmap)


def interpolate_styles(codes, weights) -> torch.Tensor:
    """Convex combination of K style codes.

    One-hot weights short-circuit to the selected code bitwise; otherwise the
    sum accumulates in float64. Weights must be nonnegative and sum to 1
    within 1e-6.
    """
    codes = [torch.as_tensor(c) for c in codes]
    if not codes:
        raise WeightSumViolation("at least one code required")
    dims = {tuple(c.shape) for c in codes}
    if len(dims) != 1:
        raise DimensionMismatch(f"codes disagree on shape: {sorted(dims)}")
    w = np.asarray(list(weights), dtype=np.float64)
    if w.shape[0] != len(codes):
        raise WeightSumViolation(f"{w.shape[0]} weights for {len(codes)} codes")
    if (w < 0).any():
        raise WeightSumViolation("weights must be nonnegative")
    if abs(float(w.sum()) - 1.0) > WEIGHT_SUM_TOLERANCE:
        raise WeightSumViolation(f"weights sum to {w.sum():.8f}, expected 1")
    ones = np.nonzero(w == 1.0)[0]
    if len(ones) == 1 and np.count_nonzero(w) == 1:
        return codes[int(ones[0])].clone()
    acc = torch.zeros(codes[0].shape, dtype=torch.float64)
    for wi, code in zip(w, codes):
        acc += float(wi) * code.to(torch.float64)
    return acc.to(codes[0].dtype)


def strength_sweep(source: torch.Tensor, reference: torch.Tensor, alpha_steps: int,
                   bundle: InferenceBundle, *, src_masks=None, ref_masks=None,
                   heatmap=None, source_domain: int = NON_MAKEUP,
                   target_domain: int = MAKEUP) -> list:
    """Images along s(alpha) = (1-alpha) * own-style + alpha * reference-style."""
    if alpha_steps < 2:
        raise InvalidConfig("alpha_steps must be >= 2")
    own = encode_reference_style(bundle, source, source_domain, src_masks)
    ref_code = encode_reference_style(bundle, reference, target_domain, ref_masks)
    frames = []
    for alpha in np.linspace(0.0, 1.0, alpha_steps):
        style = (1.0 - float(alpha)) * own + float(alpha) * ref_code
        frames.append(generate(bundle, source, style, heatmap))
    return frames


def latent_sweep(source: torch.Tensor, seed_a: int, seed_b: int, steps: int,
                 domain: int, bundle: InferenceBundle, *, heatmap=None) -> list:
    """Interpolate between two mapped latents in style space, then generate."""
    if steps < 2:
        raise InvalidConfig("steps must be >= 2")
    za = torch.from_numpy(np.random.default_rng(seed_a).standard_normal(LATENT_DIM)).float()
    zb = torch.from_numpy(np.random.default_rng(seed_b).standard_normal(LATENT_DIM)).float()
    wa = map_latent_style(bundle, za, domain)
    wb = map_latent_style(bundle, zb, domain)
    if torch.equal(wa, wb):  # degenerate sweep: constant filmstrip, exactly
        frame = generate(bundle, source, wa, heatmap)
        return [frame.clone() for _ in range(steps)]
    frames = []
    for t in np.linspace(0.0, 1.0, steps):
        style = (1.0 - float(t)) * wa + float(t) * wb
        frames.append(generate(bundle, source, style, heatmap))
    return frames


def to_uint8(image: torch.Tensor) -> np.ndarray:
    """Round(clamp) conversion of a [-1, 1] image tensor to 8-bit HWC."""
    return postprocess_image(image)
