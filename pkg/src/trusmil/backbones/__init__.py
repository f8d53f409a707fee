"""ROI-scale feature extractors with a uniform encode contract.

Four variants share the interface of mapping [N, 1, 256, 256] batches to
[N, feature_dim] features: a slimmed ResNet18 baseline and three image
transformers. Desk-scale defaults keep everything runnable on a laptop
CPU; full-scale presets sit behind ``desk_scale=False``.
"""

from dataclasses import dataclass

import torch
from torch import nn

from .cct import CCT
from .pvt import PvT
from .resnet import BasicBlock, ResNet18, SlimBasicBlock
from .vit import ViT

VARIANTS = ("resnet18_slim", "vit", "cct", "pvt")


@dataclass
class BackboneConfig:
    variant: str = "resnet18_slim"
    desk_scale: bool = True
    input_size: int = 256
    # per-variant overrides; None picks the scale default
    base_width: int | None = None          # resnet18_slim
    embed_dim: int | None = None           # vit / cct
    depth: int | None = None               # vit / cct
    heads: int | None = None               # vit / cct
    patch_size: int | None = None          # vit
    tokenizer_convs: int | None = None     # cct
    stage_widths: tuple | None = None      # pvt
    stage_depths: tuple | None = None      # pvt
    sr_ratios: tuple | None = None         # pvt
    stage_heads: tuple | None = None       # pvt

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(
                f"unknown backbone variant {self.variant!r}; expected one of {VARIANTS}")

    def _pick(self, override, desk, full):
        if override is not None:
            return override
        return desk if self.desk_scale else full


def _build_resnet(config: BackboneConfig) -> nn.Module:
    base = config._pick(config.base_width, 16, 64)
    return ResNet18(base_width=base, slim=True)


def _build_vit(config: BackboneConfig) -> nn.Module:
    return ViT(
        image_size=config.input_size,
        patch_size=config._pick(config.patch_size, 32, 16),
        embed_dim=config._pick(config.embed_dim, 256, 768),
        depth=config._pick(config.depth, 6, 12),
        heads=config._pick(config.heads, 8, 12),
    )


def _build_cct(config: BackboneConfig) -> nn.Module:
    return CCT(
        image_size=config.input_size,
        embed_dim=config._pick(config.embed_dim, 256, 384),
        depth=config._pick(config.depth, 4, 14),
        heads=config._pick(config.heads, 8, 6),
        n_convs=config._pick(config.tokenizer_convs, 2, 2),
    )


def _build_pvt(config: BackboneConfig) -> nn.Module:
    return PvT(
        image_size=config.input_size,
        widths=config._pick(config.stage_widths, (32, 64, 128, 256), (64, 128, 320, 512)),
        depths=config._pick(config.stage_depths, (1, 1, 2, 1), (2, 2, 2, 2)),
        heads=config._pick(config.stage_heads, (1, 2, 4, 8), (1, 2, 5, 8)),
        sr_ratios=config._pick(config.sr_ratios, (8, 4, 2, 1), (8, 4, 2, 1)),
    )


_REGISTRY = {
    "resnet18_slim": _build_resnet,
    "vit": _build_vit,
    "cct": _build_cct,
    "pvt": _build_pvt,
}


def build_backbone(config: BackboneConfig, seed: int = 0) -> nn.Module:
    """Construct the configured encoder with deterministic seeded
    initialization. The module carries ``feature_dim`` and ``input_size``
    attributes."""
    torch.manual_seed(seed)
    encoder = _REGISTRY[config.variant](config)
    if encoder.feature_dim < 8:
        raise ValueError("feature_dim must be at least 8")
    encoder.input_size = config.input_size
    encoder.variant = config.variant
    return encoder


def encode(encoder: nn.Module, batch, mode: str = "eval") -> torch.Tensor:
    """Map a [N, 1, S, S] batch to [N, feature_dim] features.

    In eval mode the output is deterministic and independent of batch
    composition (normalization layers use running statistics).
    """
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    x = torch.as_tensor(batch, dtype=torch.float32)
    size = getattr(encoder, "input_size", 256)
    if x.ndim != 4 or x.shape[1] != 1 or x.shape[2] != size or x.shape[3] != size:
        raise ValueError(f"expected batch of shape [N, 1, {size}, {size}], got {tuple(x.shape)}")
    if mode == "eval":
        encoder.eval()
        with torch.no_grad():
            return encoder(x)
    encoder.train()
    return encoder(x)


__all__ = [
    "BackboneConfig", "build_backbone", "encode", "VARIANTS",
    "ResNet18", "SlimBasicBlock", "BasicBlock", "ViT", "CCT", "PvT",
]
