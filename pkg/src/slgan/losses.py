"""Training objectives and their weighted totals.

Sign conventions: every individual loss is reported nonnegative; the
diversity term enters the generator total with a negative weight (it is
maximized). The discriminator minimizes the standard stable form
softplus(-real) + softplus(fake); the generator the non-saturating
softplus(-fake).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .config import LossWeights
from .errors import DimensionMismatch, NonFiniteLoss, ShapeMismatch
from .histmatch import _rms, matched_feature_targets

MAKEUP_REGIONS = ("lips", "eyes", "face")


def adversarial_loss_d(real_logit: torch.Tensor, fake_logit: torch.Tensor) -> torch.Tensor:
    """-[log sigmoid(real) + log(1 - sigmoid(fake))], batch-averaged."""
    real = torch.as_tensor(real_logit)
    fake = torch.as_tensor(fake_logit)
    return (F.softplus(-real) + F.softplus(fake)).mean()


def adversarial_loss_g(fake_logit: torch.Tensor) -> torch.Tensor:
    """Non-saturating generator objective -log sigmoid(fake), batch-averaged."""
    return F.softplus(-torch.as_tensor(fake_logit)).mean()


def style_diversity_loss(img1: torch.Tensor, img2: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference between two stylizations of one source."""
    if img1.shape != img2.shape:
        raise ShapeMismatch(f"{tuple(img1.shape)} vs {tuple(img2.shape)}")
    return (img1 - img2).abs().mean()


def style_reconstruction_loss(target_style: torch.Tensor, reencoded_style: torch.Tensor) -> torch.Tensor:
    """Mean absolute error between a style code and its re-encoded estimate."""
    if target_style.shape != reencoded_style.shape:
        raise DimensionMismatch(f"{tuple(target_style.shape)} vs {tuple(reencoded_style.shape)}")
    return (target_style - reencoded_style).abs().mean()


def cycle_loss(source: torch.Tensor, reconstructed: torch.Tensor) -> torch.Tensor:
    """Mean absolute error between the source and its two-hop reconstruction."""
    if source.shape != reconstructed.shape:
        raise ShapeMismatch(f"{tuple(source.shape)} vs {tuple(reconstructed.shape)}")
    return (source - reconstructed).abs().mean()


def guide_loss(source: torch.Tensor, invariant_out: torch.Tensor, styled_out: torch.Tensor,
               lambda_gamma: float = 0.5, lambda_beta: float = 0.5) -> torch.Tensor:
    """lambda_gamma * RMS(source - invariant) + lambda_beta * RMS(invariant - styled)."""
    if source.shape != invariant_out.shape or source.shape != styled_out.shape:
        raise ShapeMismatch("guide loss inputs must share one shape")
    return lambda_gamma * _rms(source - invariant_out) + lambda_beta * _rms(invariant_out - styled_out)


def makeup_loss(generated: torch.Tensor, reference: torch.Tensor,
                gen_masks, ref_masks, style_encoder, weights: LossWeights, *,
                fixed_targets: dict | None = None,
                return_flags: bool = False, return_targets: bool = False):
    """Weighted sum of the per-region histogram losses over a batch.

    Per region the trunk runs once on the whole masked batch; matching then
    happens per sample. A (region, sample, layer) triple is flagged when its
    support downsamples to nothing on either side; such layers contribute
    zero. `fixed_targets` (as produced by return_targets) freezes the matched
    values, which otherwise follow the generated batch through rank
    assignment.
    """
    if generated.shape != reference.shape:
        raise ShapeMismatch(f"{tuple(generated.shape)} vs {tuple(reference.shape)}")
    batch = generated.shape[0]
    region_weights = {
        "lips": weights.lambda_lips, "eyes": weights.lambda_eyes, "face": weights.lambda_face}
    total = generated.new_zeros(())
    flags = []
    targets_out = {}
    for name in MAKEUP_REGIONS:
        gm = gen_masks.region(name).to(generated.dtype)
        rm = ref_masks.region(name).to(reference.dtype)
        gen_feats = style_encoder.trunk_features(generated * gm[:, None])
        if fixed_targets is None:
            with torch.no_grad():
                ref_feats = style_encoder.trunk_features(reference * rm[:, None])
        region_total = generated.new_zeros(())
        region_targets = []
        for i in range(batch):
            gfi = [f[i] for f in gen_feats]
            if fixed_targets is None:
                rfi = [f[i] for f in ref_feats]
                item_targets = matched_feature_targets(gfi, rfi, gm[i], rm[i])
            else:
                item_targets = fixed_targets[name][i]
            region_targets.append(item_targets)
            for layer, (gf, t) in enumerate(zip(gfi, item_targets)):
                if t.values is None:
                    flags.append((name, i, layer))
                    continue
                region_total = region_total + _rms(gf[:, t.gen_index] - t.values)
        targets_out[name] = region_targets
        total = total + region_weights[name] * (region_total / batch)
    result = [total]
    if return_flags:
        result.append(flags)
    if return_targets:
        result.append(targets_out)
    return result[0] if len(result) == 1 else tuple(result)


GENERATOR_PARTS = ("adv", "diversity", "style_rec", "cycle", "makeup", "guide")


def total_generator_loss(parts, weights: LossWeights) -> torch.Tensor:
    """lambda-weighted sum of the six generator-side terms; updates G, SE, MN."""
    lambdas = {
        "adv": weights.lambda_adv, "diversity": weights.lambda_sd,
        "style_rec": weights.lambda_sr, "cycle": weights.lambda_cyc,
        "makeup": weights.lambda_makeup, "guide": weights.lambda_guide}
    total = None
    for k in GENERATOR_PARTS:
        v = parts[k]
        if not torch.is_tensor(v):
            v = torch.as_tensor(float(v), dtype=torch.float64)
        total = lambdas[k] * v if total is None else total + lambdas[k] * v
    if not math.isfinite(_as_float(total)):
        raise NonFiniteLoss(f"generator total is {_as_float(total)}; parts: "
                            + ", ".join(f"{k}={_as_float(parts[k]):.4g}" for k in GENERATOR_PARTS))
    return total


def total_discriminator_loss(parts, weights: LossWeights) -> torch.Tensor:
    """Weighted discriminator objective; updates only D."""
    value = parts["adv"] if torch.is_tensor(parts["adv"]) else torch.as_tensor(parts["adv"], dtype=torch.float64)
    total = weights.lambda_adv * value
    if not math.isfinite(_as_float(total)):
        raise NonFiniteLoss(f"discriminator total is {_as_float(total)}")
    return total


def _as_float(v) -> float:
    return float(v.detach() if torch.is_tensor(v) else v)


REPORT_FIELDS = ("step", "adv_d", "adv_g", "diversity", "style_rec",
                 "cycle", "makeup", "guide", "total_g", "total_d")


@dataclass
class LossReport:
    """Per-step loss values, serialized one tab-separated line per step."""

    step: int
    adv_d: float
    adv_g: float
    diversity: float
    style_rec: float
    cycle: float
    makeup: float
    guide: float
    total_g: float
    total_d: float

    HEADER = "# " + "\t".join(REPORT_FIELDS)

    def to_line(self) -> str:
        vals = [str(self.step)] + [
            format(getattr(self, f), ".10e") for f in REPORT_FIELDS[1:]]
        return "\t".join(vals)

    @classmethod
    def from_line(cls, line: str) -> "LossReport":
        parts = line.strip().split("\t")
        if len(parts) != len(REPORT_FIELDS):
            raise ValueError(f"expected {len(REPORT_FIELDS)} fields, got {len(parts)}")
        return cls(step=int(parts[0]), **{
            f: float(v) for f, v in zip(REPORT_FIELDS[1:], parts[1:])})

    def finite(self) -> bool:
        return all(math.isfinite(getattr(self, f)) for f in REPORT_FIELDS[1:])
