"""Training configuration and the plain-text key=value config file format."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidConfig

LATENT_DIM = 16  # latent codes are 16-dimensional by definition


@dataclass
class LossWeights:
    """Scalar weights for every training objective.

    Defaults follow the published recipe: adv 1, sd -1 (diversity is
    maximized), sr 1, lips/eyes 10, face 0.1, gamma/beta 0.5. The cycle,
    makeup and guide weights have no published value and default to 1.
    """

    lambda_adv: float = 1.0
    lambda_sd: float = -1.0
    lambda_sr: float = 1.0
    lambda_cyc: float = 1.0
    lambda_makeup: float = 1.0
    lambda_guide: float = 1.0
    lambda_lips: float = 10.0
    lambda_eyes: float = 10.0
    lambda_face: float = 0.1
    lambda_gamma: float = 0.5
    lambda_beta: float = 0.5

    def validate(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise InvalidConfig(f"loss weight {f.name} must be finite, got {v}")


@dataclass
class TrainConfig:
    # data
    resolution: int = 256
    batch_size: int = 4
    dilation_px_at_256: int = 12  # eye-shadow ring width, scaled with resolution
    heatmap_sigma: float = 2.0

    # architecture
    style_dim: int = 64
    base_channels: int = 64
    max_channels: int = 512
    enc_res_blocks: int = 4
    dec_res_blocks: int = 4
    se_downsamples: int = 0  # 0 = derive from resolution (log2(res) - 2)
    mn_hidden: int = 512

    # optimization
    total_steps: int = 500
    lr_g: float = 1e-4
    lr_se: float = 1e-4
    lr_d: float = 1e-4
    lr_mn: float = 1e-6
    adam_beta1: float = 0.0
    adam_beta2: float = 0.99
    weight_decay: float = 1e-4
    ema_decay: float = 0.999
    r1_gamma: float = 0.0  # optional R1 penalty, off by default
    # "both": every G step trains the latent- and style-guided paths;
    # "alternate": modes alternate between iterations.
    mode_schedule: str = "both"

    # bookkeeping
    seed: int = 0
    checkpoint_every: int = 100

    weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.resolution < 8 or self.resolution & (self.resolution - 1):
            raise InvalidConfig(f"resolution must be a power of two >= 8, got {self.resolution}")
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        if self.total_steps < 0:
            raise InvalidConfig("total_steps must be >= 0")
        for name in ("lr_g", "lr_se", "lr_d", "lr_mn"):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name} must be > 0")
        if not 0.0 < self.ema_decay < 1.0:
            raise InvalidConfig("ema_decay must be in (0, 1)")
        if self.style_dim < 1:
            raise InvalidConfig("style_dim must be >= 1")
        if self.mode_schedule not in ("both", "alternate"):
            raise InvalidConfig("mode_schedule must be 'both' or 'alternate'")
        self.weights.validate()

    @property
    def dilation_px(self) -> int:
        """Eye-shadow ring width in pixels at the working resolution."""
        return max(1, round(self.dilation_px_at_256 * self.resolution / 256))

    @property
    def num_se_downsamples(self) -> int:
        if self.se_downsamples > 0:
            return self.se_downsamples
        return max(2, int(math.log2(self.resolution)) - 2)

    # --- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["weights"] = dataclasses.asdict(self.weights)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        weights = LossWeights(**d.pop("weights", {}))
        return cls(weights=weights, **d)

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()

    def to_file(self, path):
        Path(path).write_text(format_config(self))

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        return parse_config(Path(path).read_text())


def _coerce(raw: str, target_type):
    if target_type is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise InvalidConfig(f"cannot parse boolean from {raw!r}")
    return target_type(raw)


def parse_config(text: str) -> TrainConfig:
    """Parse the key=value config format.

    Blank lines and lines starting with '#' are ignored. Loss-weight keys
    (lambda_*) address fields of the nested LossWeights.
    """
    cfg_fields = {f.name: f for f in dataclasses.fields(TrainConfig) if f.name != "weights"}
    weight_fields = {f.name: f for f in dataclasses.fields(LossWeights)}
    cfg_kwargs: dict = {}
    weight_kwargs: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key in weight_fields:
            weight_kwargs[key] = _coerce(raw, float)
        elif key in cfg_fields:
            cfg_kwargs[key] = _coerce(raw, type(cfg_fields[key].default))
        else:
            raise InvalidConfig(f"line {lineno}: unknown config key {key!r}")
    return TrainConfig(weights=LossWeights(**weight_kwargs), **cfg_kwargs)


def format_config(cfg: TrainConfig) -> str:
    lines = []
    for f in dataclasses.fields(TrainConfig):
        if f.name == "weights":
            continue
        lines.append(f"{f.name} = {getattr(cfg, f.name)}")
    for f in dataclasses.fields(LossWeights):
        lines.append(f"{f.name} = {getattr(cfg.weights, f.name)}")
    return "\n".join(lines) + "\n"


def desk_config(**overrides) -> TrainConfig:
    """Small configuration for CPU-scale runs and tests (64x64 images)."""
    base = dict(
        resolution=64,
        base_channels=16,
        max_channels=64,
        enc_res_blocks=2,
        dec_res_blocks=2,
        mn_hidden=64,
        total_steps=500,
        checkpoint_every=100,
        # without R1 the discriminator memorizes tiny datasets and the
        # adversarial term drowns the fitting signal
        r1_gamma=10.0,
    )
    base.update(overrides)
    return TrainConfig(**base)
