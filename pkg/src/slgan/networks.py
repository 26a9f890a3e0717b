"""The four parameterized networks and the adaptive normalization mechanism.

Generator = shared content encoder + style-guided decoder + style-invariant
decoder. The style encoder and discriminator share one trunk topology with
per-domain linear heads; the mapping network turns 16-d latents into style
codes. All normalizations use (x - mean) / (std + 1e-5) with statistics over
spatial dimensions only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import LATENT_DIM, TrainConfig
from .errors import (
    ChannelMismatch,
    DimensionMismatch,
    ShapeMismatch,
    StyleDimMismatch,
)

EPS = 1e-5
NUM_DOMAINS = 2
NON_MAKEUP, MAKEUP = 0, 1


def domain_onehot(index, batch: int | None = None) -> torch.Tensor:
    """One-hot condition vector(s) for a domain index or index tensor."""
    if isinstance(index, torch.Tensor):
        return F.one_hot(index.long(), NUM_DOMAINS).float()
    out = F.one_hot(torch.tensor(int(index)), NUM_DOMAINS).float()
    if batch is not None:
        out = out.expand(batch, NUM_DOMAINS).clone()
    return out


def _domain_indices(domain, batch: int, device) -> torch.Tensor:
    """Accepts an int, a (B,) index tensor, or (B, 2) one-hot rows."""
    if isinstance(domain, torch.Tensor):
        if domain.dim() == 2:
            return domain.argmax(dim=1).long().to(device)
        return domain.long().to(device).expand(batch) if domain.dim() == 0 else domain.long().to(device)
    return torch.full((batch,), int(domain), dtype=torch.long, device=device)


def adain(features: torch.Tensor, gamma: torch.Tensor, beta: torch.Tensor) -> torch.Tensor:
    """gamma * (x - mean) / (std + eps) + beta, statistics per (sample, channel).

    `features` is (C, H, W) or (B, C, H, W); gamma/beta are per-channel
    vectors, optionally batched as (B, C).
    """
    squeeze = features.dim() == 3
    x = features[None] if squeeze else features
    if x.dim() != 4:
        raise ShapeMismatch(f"expected (B, C, H, W) features, got {tuple(features.shape)}")
    if x.shape[-1] * x.shape[-2] < 2:
        raise ShapeMismatch("instance statistics need at least two spatial positions")
    c = x.shape[1]
    gamma = torch.as_tensor(gamma, dtype=x.dtype, device=x.device)
    beta = torch.as_tensor(beta, dtype=x.dtype, device=x.device)
    if gamma.shape[-1] != c or beta.shape[-1] != c:
        raise ChannelMismatch(f"gamma/beta length {gamma.shape[-1]}/{beta.shape[-1]} vs {c} channels")
    gamma = gamma.reshape(-1, c, 1, 1)
    beta = beta.reshape(-1, c, 1, 1)
    mean = x.mean(dim=(2, 3), keepdim=True)
    std = x.var(dim=(2, 3), keepdim=True, unbiased=False).sqrt()
    out = gamma * (x - mean) / (std + EPS) + beta
    return out[0] if squeeze else out


class InstanceNorm(nn.Module):
    """Instance normalization with a learnable per-channel affine."""

    def __init__(self, channels: int):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))

    def forward(self, x):
        return adain(x, self.weight, self.bias)


class AdaptiveNorm(nn.Module):
    """AdaIN whose per-channel scale/shift come from a style code.

    The affine head predicts (g, beta) and the scale is 1 + g, so freshly
    zeroed heads start at identity scaling.
    """

    def __init__(self, channels: int, style_dim: int):
        super().__init__()
        self.channels = channels
        self.style_dim = style_dim
        self.affine = nn.Linear(style_dim, 2 * channels)

    def forward(self, x, style):
        if style.shape[-1] != self.style_dim:
            raise StyleDimMismatch(f"style dim {style.shape[-1]}, affine head expects {self.style_dim}")
        params = self.affine(style)
        g, beta = params.chunk(2, dim=-1)
        return adain(x, 1.0 + g, beta)


class ResBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.norm1 = InstanceNorm(channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.norm2 = InstanceNorm(channels)

    def forward(self, x):
        h = F.leaky_relu(self.norm1(self.conv1(x)), 0.2)
        h = self.norm2(self.conv2(h))
        return x + h


class StyledResBlock(nn.Module):
    def __init__(self, channels: int, style_dim: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.norm1 = AdaptiveNorm(channels, style_dim)
        self.conv2 = nn.Conv2d(channels, channels, 3, 1, 1)
        self.norm2 = AdaptiveNorm(channels, style_dim)

    def forward(self, x, style):
        h = F.leaky_relu(self.norm1(self.conv1(x), style), 0.2)
        h = self.norm2(self.conv2(h), style)
        return x + h


@dataclass
class ContentFeatures:
    """Shared-encoder output: per-stage maps plus the bottleneck tensor.

    stages[0] is full resolution, each later stage halves it; stages[0:2]
    double as the decoder skip tensors.
    """

    stages: list = field(default_factory=list)
    bottleneck: torch.Tensor | None = None

    def all_maps(self):
        return [*self.stages, self.bottleneck]


class ContentEncoder(nn.Module):
    """Stride-2 downsampling stack with a residual bottleneck.

    A single-channel heatmap, resized to each stage's spatial size, is
    broadcast-added to that stage's output.
    """

    def __init__(self, cfg: TrainConfig):
        super().__init__()
        c0, c1, c2 = _generator_channels(cfg)
        self.stem = nn.Conv2d(3, c0, 3, 1, 1)
        self.norm0 = InstanceNorm(c0)
        self.down1 = nn.Conv2d(c0, c1, 4, 2, 1)
        self.norm1 = InstanceNorm(c1)
        self.down2 = nn.Conv2d(c1, c2, 4, 2, 1)
        self.norm2 = InstanceNorm(c2)
        self.bottleneck = nn.ModuleList(ResBlock(c2) for _ in range(cfg.enc_res_blocks))

    def forward(self, image: torch.Tensor, heatmap: torch.Tensor | None = None) -> ContentFeatures:
        if image.dim() != 4 or image.shape[1] != 3:
            raise ShapeMismatch(f"expected (B, 3, H, W) image, got {tuple(image.shape)}")
        if heatmap is not None and heatmap.shape[-2:] != image.shape[-2:]:
            raise ShapeMismatch("heatmap resolution must equal image resolution")
        stages = []
        h = F.leaky_relu(self.norm0(self.stem(image)), 0.2)
        h = _add_heatmap(h, heatmap)
        stages.append(h)
        h = F.leaky_relu(self.norm1(self.down1(h)), 0.2)
        h = _add_heatmap(h, heatmap)
        stages.append(h)
        h = F.leaky_relu(self.norm2(self.down2(h)), 0.2)
        h = _add_heatmap(h, heatmap)
        stages.append(h)
        for block in self.bottleneck:
            h = block(h)
        return ContentFeatures(stages=stages, bottleneck=h)


def _add_heatmap(features: torch.Tensor, heatmap: torch.Tensor | None) -> torch.Tensor:
    if heatmap is None:
        return features
    resized = F.interpolate(heatmap, size=features.shape[-2:], mode="bilinear", align_corners=False)
    return features + resized  # broadcast over channels


class StyledDecoder(nn.Module):
    """Mirror of the encoder with AdaIN after every convolution except to_rgb."""

    def __init__(self, cfg: TrainConfig):
        super().__init__()
        c0, c1, c2 = _generator_channels(cfg)
        sd = cfg.style_dim
        self.blocks = nn.ModuleList(StyledResBlock(c2, sd) for _ in range(cfg.dec_res_blocks))
        self.up1 = nn.Conv2d(c2, c1, 3, 1, 1)
        self.norm1 = AdaptiveNorm(c1, sd)
        self.up2 = nn.Conv2d(c1, c0, 3, 1, 1)
        self.norm2 = AdaptiveNorm(c0, sd)
        self.to_rgb = nn.Conv2d(c0, 3, 3, 1, 1)

    def forward(self, content: ContentFeatures, style: torch.Tensor) -> torch.Tensor:
        h = content.bottleneck
        for block in self.blocks:
            h = block(h, style)
        h = F.interpolate(h, scale_factor=2, mode="nearest")
        h = F.leaky_relu(self.norm1(self.up1(h), style), 0.2)
        h = h + content.stages[1]
        h = F.interpolate(h, scale_factor=2, mode="nearest")
        h = F.leaky_relu(self.norm2(self.up2(h), style), 0.2)
        h = h + content.stages[0]
        return torch.tanh(self.to_rgb(h))


class InvariantDecoder(nn.Module):
    """Same topology as the styled decoder with plain instance normalization.

    Takes no style input; its output is a function of content alone.
    """

    def __init__(self, cfg: TrainConfig):
        super().__init__()
        c0, c1, c2 = _generator_channels(cfg)
        self.blocks = nn.ModuleList(ResBlock(c2) for _ in range(cfg.dec_res_blocks))
        self.up1 = nn.Conv2d(c2, c1, 3, 1, 1)
        self.norm1 = InstanceNorm(c1)
        self.up2 = nn.Conv2d(c1, c0, 3, 1, 1)
        self.norm2 = InstanceNorm(c0)
        self.to_rgb = nn.Conv2d(c0, 3, 3, 1, 1)

    def forward(self, content: ContentFeatures) -> torch.Tensor:
        h = content.bottleneck
        for block in self.blocks:
            h = block(h)
        h = F.interpolate(h, scale_factor=2, mode="nearest")
        h = F.leaky_relu(self.norm1(self.up1(h)), 0.2)
        h = h + content.stages[1]
        h = F.interpolate(h, scale_factor=2, mode="nearest")
        h = F.leaky_relu(self.norm2(self.up2(h)), 0.2)
        h = h + content.stages[0]
        return torch.tanh(self.to_rgb(h))


class Generator(nn.Module):
    def __init__(self, cfg: TrainConfig):
        super().__init__()
        self.encoder = ContentEncoder(cfg)
        self.styled = StyledDecoder(cfg)
        self.invariant = InvariantDecoder(cfg)

    def encode(self, image, heatmap=None) -> ContentFeatures:
        return self.encoder(image, heatmap)

    def decode(self, content: ContentFeatures, style) -> torch.Tensor:
        return self.styled(content, style)

    def decode_invariant(self, content: ContentFeatures) -> torch.Tensor:
        return self.invariant(content)

    def forward(self, image, heatmap, style) -> torch.Tensor:
        """Style-guided generation: decode(encode(image, heatmap), style)."""
        return self.decode(self.encode(image, heatmap), style)


class _ConvTrunk(nn.Module):
    """Shared topology of the style encoder and discriminator.

    A stem convolution plus `downsamples` stride-2 convolutions, LeakyReLU
    after each, no normalization; ends in global average pooling.
    """

    def __init__(self, cfg: TrainConfig):
        super().__init__()
        chans = _trunk_channels(cfg)
        convs = [nn.Conv2d(3, chans[0], 3, 1, 1)]
        for cin, cout in zip(chans[:-1], chans[1:]):
            convs.append(nn.Conv2d(cin, cout, 4, 2, 1))
        self.convs = nn.ModuleList(convs)
        self.out_channels = chans[-1]

    def feature_maps(self, x) -> list:
        feats = []
        h = x
        for conv in self.convs:
            h = F.leaky_relu(conv(h), 0.2)
            feats.append(h)
        return feats

    def forward(self, x):
        return self.feature_maps(x)[-1].mean(dim=(2, 3))


class StyleEncoder(nn.Module):
    """Shared convolution trunk with one unshared linear head per domain."""

    def __init__(self, cfg: TrainConfig):
        super().__init__()
        self.trunk = _ConvTrunk(cfg)
        self.heads = nn.ModuleList(
            nn.Linear(self.trunk.out_channels, cfg.style_dim) for _ in range(NUM_DOMAINS))
        self.style_dim = cfg.style_dim

    def trunk_features(self, x) -> list:
        """Per-convolution feature maps, the basis of the perceptual makeup loss."""
        return self.trunk.feature_maps(x)

    def forward(self, image, domain, full_face_mask=None) -> torch.Tensor:
        """Embed a (masked) reference image into a domain-specific style code."""
        if image.dim() != 4 or image.shape[1] != 3:
            raise ShapeMismatch(f"expected (B, 3, H, W) image, got {tuple(image.shape)}")
        if full_face_mask is not None:
            if full_face_mask.shape[-2:] != image.shape[-2:]:
                raise ShapeMismatch("full-face mask resolution must equal image resolution")
            mask = full_face_mask.to(image.dtype)
            if mask.dim() == 2:
                mask = mask[None, None]
            elif mask.dim() == 3:
                mask = mask[:, None]
            image = image * mask
        pooled = self.trunk(image)
        idx = _domain_indices(domain, image.shape[0], image.device)
        codes = torch.stack([head(pooled) for head in self.heads], dim=1)  # (B, D, S)
        return codes[torch.arange(image.shape[0], device=image.device), idx]


class MappingNetwork(nn.Module):
    """Shared six-layer MLP plus an unshared one-layer head per domain."""

    def __init__(self, cfg: TrainConfig):
        super().__init__()
        layers = []
        dim_in = LATENT_DIM
        for _ in range(6):
            layers += [nn.Linear(dim_in, cfg.mn_hidden), nn.ReLU()]
            dim_in = cfg.mn_hidden
        self.shared = nn.Sequential(*layers)
        self.heads = nn.ModuleList(
            nn.Linear(cfg.mn_hidden, cfg.style_dim) for _ in range(NUM_DOMAINS))
        self.style_dim = cfg.style_dim

    def forward(self, z, domain) -> torch.Tensor:
        squeeze = z.dim() == 1
        if squeeze:
            z = z[None]
        if z.shape[-1] != LATENT_DIM:
            raise DimensionMismatch(f"latent codes are {LATENT_DIM}-dimensional, got {z.shape[-1]}")
        h = self.shared(z)
        idx = _domain_indices(domain, z.shape[0], z.device)
        codes = torch.stack([head(h) for head in self.heads], dim=1)
        out = codes[torch.arange(z.shape[0], device=z.device), idx]
        return out[0] if squeeze else out


class Discriminator(nn.Module):
    """Style-encoder trunk topology with one linear logit branch per domain."""

    def __init__(self, cfg: TrainConfig):
        super().__init__()
        self.trunk = _ConvTrunk(cfg)
        self.heads = nn.ModuleList(
            nn.Linear(self.trunk.out_channels, 1) for _ in range(NUM_DOMAINS))

    def forward(self, image, domain) -> torch.Tensor:
        """Raw logit of the domain-selected branch; no sigmoid applied."""
        if image.dim() != 4 or image.shape[1] != 3:
            raise ShapeMismatch(f"expected (B, 3, H, W) image, got {tuple(image.shape)}")
        pooled = self.trunk(image)
        idx = _domain_indices(domain, image.shape[0], image.device)
        logits = torch.stack([head(pooled) for head in self.heads], dim=1)  # (B, D, 1)
        return logits[torch.arange(image.shape[0], device=image.device), idx, 0]


def _generator_channels(cfg: TrainConfig):
    c0 = cfg.base_channels
    c1 = min(2 * c0, cfg.max_channels)
    c2 = min(4 * c0, cfg.max_channels)
    return c0, c1, c2


def _trunk_channels(cfg: TrainConfig):
    chans = [cfg.base_channels]
    for i in range(cfg.num_se_downsamples):
        chans.append(min(cfg.base_channels * 2 ** (i + 1), cfg.max_channels))
    return chans


def he_init_(module: nn.Module):
    """He-normal weights (std = sqrt(2 / fan_in)) and zero biases, in place."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.Linear)):
            nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)
    return module


@dataclass
class ModelBundle:
    """All four networks, EMA shadows of the generator-side three, and the step."""

    config: TrainConfig
    generator: Generator
    style_encoder: StyleEncoder
    mapping: MappingNetwork
    discriminator: Discriminator
    generator_ema: Generator
    style_encoder_ema: StyleEncoder
    mapping_ema: MappingNetwork
    step: int = 0

    def train_modules(self) -> dict:
        return {
            "generator": self.generator,
            "style_encoder": self.style_encoder,
            "mapping": self.mapping,
            "discriminator": self.discriminator,
        }

    def ema_modules(self) -> dict:
        return {
            "generator": self.generator_ema,
            "style_encoder": self.style_encoder_ema,
            "mapping": self.mapping_ema,
        }

    def all_modules(self) -> dict:
        mods = dict(self.train_modules())
        mods.update({k + "_ema": v for k, v in self.ema_modules().items()})
        return mods


def parameter_counts(bundle: ModelBundle) -> dict:
    """Trainable parameter totals per network (EMA shadows mirror these)."""
    return {
        name: sum(p.numel() for p in module.parameters())
        for name, module in bundle.train_modules().items()
    }
