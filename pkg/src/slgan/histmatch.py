"""Exact histogram matching and the perceptual region loss built on it.

The matcher remaps a value population so its empirical distribution becomes
the target population's: each source value is replaced by the target quantile
at that value's rank. Tied source values share their average rank, so equal
inputs always map to equal outputs (classical histogram-matching semantics),
and matching a population against itself is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from scipy.stats import rankdata

from .errors import EmptyPopulation, ShapeMismatch

MASK_THRESHOLD = 0.5  # downsampled masks count a cell as inside when > 0.5


def match_rows(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Match each row of `source` against the corresponding row of `target`.

    Rows are independent populations; all source rows share one length, as do
    all target rows (lengths may differ between the two). Returns float64.
    """
    source = np.asarray(source, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if source.ndim != 2 or target.ndim != 2 or source.shape[0] != target.shape[0]:
        raise ShapeMismatch(f"expected matching row counts, got {source.shape} vs {target.shape}")
    if source.shape[1] == 0 or target.shape[1] == 0:
        raise EmptyPopulation("histogram matching needs non-empty populations")

    n_src, n_tgt = source.shape[1], target.shape[1]
    sorted_target = np.sort(target, axis=1)
    if n_tgt == 1:
        return np.repeat(sorted_target, n_src, axis=1)

    # Rank fractions are expressed directly in target index space; with equal
    # lengths and distinct values the positions are exact integers, so the
    # target multiset transfers bit-exactly.
    if n_src == 1:
        positions = np.full_like(source, 0.5 * (n_tgt - 1))
    else:
        ranks = rankdata(source, method="average", axis=1)  # 1-based, ties averaged
        positions = (ranks - 1.0) * (n_tgt - 1) / (n_src - 1)

    grid = np.arange(n_tgt, dtype=np.float64)
    out = np.empty_like(source)
    for i in range(source.shape[0]):
        out[i] = np.interp(positions[i], grid, sorted_target[i])
    return out


def match_histogram(source, target) -> np.ndarray:
    """Remap a 1-D value population onto a target population's distribution.

    The i-th ranked source value becomes the target quantile at rank fraction
    i/(n-1); quantiles interpolate linearly over the sorted target. Output
    keeps the source's length and order. With equal lengths and distinct
    values this transfers the target multiset exactly.
    """
    source = np.asarray(source, dtype=np.float64).reshape(-1)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if source.size == 0 or target.size == 0:
        raise EmptyPopulation("histogram matching needs non-empty populations")
    return match_rows(source[None, :], target[None, :])[0]


# --- region loss over style-encoder features --------------------------------


@dataclass
class LayerTargets:
    """Histogram-matched pseudo-target for one feature layer.

    `values` is aligned with the (channel, in-mask position) flattening of the
    generated features; None marks a layer with empty support on either side.
    """

    gen_index: torch.Tensor  # bool (h, w), generated-side support at this layer
    values: torch.Tensor | None  # (C, n_gen) matched values, or None if empty


def downsample_mask(mask: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    """Nearest-neighbor resize of a binary (H, W) mask; returns bool (h, w)."""
    m = mask.to(torch.float32)[None, None]
    m = F.interpolate(m, size=size, mode="nearest")
    return (m[0, 0] > MASK_THRESHOLD)


def extract_masked_features(image: torch.Tensor, region_mask: torch.Tensor,
                            style_encoder, domain=None) -> list[torch.Tensor]:
    """Feature maps of every style-encoder trunk convolution on the masked image.

    `image` is (3, H, W); the mask is applied elementwise before the trunk.
    The domain argument is accepted for call symmetry with the style heads but
    the shared trunk is domain-independent.
    """
    if image.shape[-2:] != region_mask.shape[-2:]:
        raise ShapeMismatch(f"mask {tuple(region_mask.shape)} does not cover image {tuple(image.shape)}")
    masked = image * region_mask.to(image.dtype)
    feats = style_encoder.trunk_features(masked[None])
    return [f[0] for f in feats]


def matched_feature_targets(gen_feats: list[torch.Tensor], ref_feats: list[torch.Tensor],
                            gen_mask: torch.Tensor, ref_mask: torch.Tensor) -> list[LayerTargets]:
    """Per-layer, per-channel histogram-matched targets (no autograd graph).

    Each channel's in-mask generated values form the source population and the
    reference's in-mask values the target. Layers where either support
    downsamples to nothing get values=None and contribute zero loss.
    """
    targets = []
    for gf, rf in zip(gen_feats, ref_feats):
        g_idx = downsample_mask(gen_mask, gf.shape[-2:])
        r_idx = downsample_mask(ref_mask, rf.shape[-2:])
        if not bool(g_idx.any()) or not bool(r_idx.any()):
            targets.append(LayerTargets(gen_index=g_idx, values=None))
            continue
        src = gf.detach()[:, g_idx].cpu().numpy()  # (C, n_gen)
        tgt = rf.detach()[:, r_idx].cpu().numpy()  # (C, n_ref)
        matched = match_rows(src, tgt)
        targets.append(LayerTargets(
            gen_index=g_idx,
            values=torch.as_tensor(matched, dtype=gf.dtype, device=gf.device),
        ))
    return targets


def _rms(x: torch.Tensor) -> torch.Tensor:
    return torch.sqrt(torch.mean(x * x))


def region_histogram_loss(generated: torch.Tensor, reference: torch.Tensor,
                          gen_mask: torch.Tensor, ref_mask: torch.Tensor,
                          style_encoder, domain=None, *,
                          fixed_targets: list[LayerTargets] | None = None,
                          return_flags: bool = False):
    """Sum over trunk layers of the masked feature distance to matched targets.

    Per layer the loss is the mean-reduced L2 distance between the generated
    in-mask features and their histogram-matched counterparts from the
    reference. The matched target is a constant (gradients flow only through
    the generated features). Pass `fixed_targets` to evaluate against
    previously computed targets, e.g. for finite-difference checks.
    """
    gen_feats = extract_masked_features(generated, gen_mask, style_encoder, domain)
    if fixed_targets is None:
        ref_feats = extract_masked_features(reference, ref_mask, style_encoder, domain)
        targets = matched_feature_targets(gen_feats, ref_feats, gen_mask, ref_mask)
    else:
        targets = fixed_targets

    total = generated.new_zeros(())
    empty_layers = []
    for layer, (gf, t) in enumerate(zip(gen_feats, targets)):
        if t.values is None:
            empty_layers.append(layer)
            continue
        population = gf[:, t.gen_index]  # (C, n)
        total = total + _rms(population - t.values)
    if return_flags:
        return total, empty_layers
    return total
