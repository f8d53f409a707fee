"""Pyramid vision transformer: four stages of patch embedding plus
spatial-reduction attention, features pooled from the last stage."""

import torch
from torch import nn

from .layers import Mlp


class SRAttention(nn.Module):
    """Self-attention whose keys/values come from a spatially reduced
    copy of the token grid (reduction ratio sr)."""

    def __init__(self, dim: int, heads: int, sr_ratio: int):
        super().__init__()
        if dim % heads != 0:
            raise ValueError("embed dim must be divisible by the head count")
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.sr_ratio = sr_ratio
        if sr_ratio > 1:
            self.sr = nn.Conv2d(dim, dim, kernel_size=sr_ratio, stride=sr_ratio)
            self.sr_norm = nn.LayerNorm(dim)

    def forward(self, x, hw):
        h, w = hw
        if self.sr_ratio > 1:
            b, n, d = x.shape
            grid = x.transpose(1, 2).reshape(b, d, h, w)
            reduced = self.sr(grid).flatten(2).transpose(1, 2)
            kv = self.sr_norm(reduced)
        else:
            kv = x
        out, _ = self.attn(x, kv, kv, need_weights=False)
        return out


class PvTBlock(nn.Module):
    def __init__(self, dim: int, heads: int, sr_ratio: int, mlp_ratio: float = 4.0):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = SRAttention(dim, heads, sr_ratio)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, int(dim * mlp_ratio))

    def forward(self, x, hw):
        x = x + self.attn(self.norm1(x), hw)
        return x + self.mlp(self.norm2(x))


class PatchEmbed(nn.Module):
    def __init__(self, in_ch: int, dim: int, stride: int):
        super().__init__()
        self.proj = nn.Conv2d(in_ch, dim, kernel_size=stride, stride=stride)
        self.norm = nn.LayerNorm(dim)

    def forward(self, x):
        x = self.proj(x)
        h, w = x.shape[-2:]
        return self.norm(x.flatten(2).transpose(1, 2)), (h, w)


class PvT(nn.Module):
    def __init__(self, image_size: int = 256,
                 widths=(32, 64, 128, 256), depths=(1, 1, 2, 1),
                 heads=(1, 2, 4, 8), sr_ratios=(8, 4, 2, 1),
                 in_channels: int = 1):
        super().__init__()
        if not len(widths) == len(depths) == len(heads) == len(sr_ratios):
            raise ValueError("stage parameter lists must have equal length")
        strides = (4, 2, 2, 2)
        self.embeds = nn.ModuleList()
        self.stages = nn.ModuleList()
        self.pos_embeds = nn.ParameterList()
        in_ch = in_channels
        size = image_size
        for width, depth, n_heads, sr, stride in zip(widths, depths, heads,
                                                     sr_ratios, strides):
            self.embeds.append(PatchEmbed(in_ch, width, stride))
            size //= stride
            pos = nn.Parameter(torch.zeros(1, size * size, width))
            nn.init.trunc_normal_(pos, std=0.02)
            self.pos_embeds.append(pos)
            self.stages.append(nn.ModuleList(
                PvTBlock(width, n_heads, sr) for _ in range(depth)))
            in_ch = width
        self.norm = nn.LayerNorm(widths[-1])
        self.feature_dim = widths[-1]

    def forward(self, x):
        for embed, pos, blocks in zip(self.embeds, self.pos_embeds, self.stages):
            x, (h, w) = embed(x)
            x = x + pos
            for block in blocks:
                x = block(x, (h, w))
            x = x.transpose(1, 2).reshape(x.shape[0], -1, h, w)
        tokens = x.flatten(2).transpose(1, 2)
        return self.norm(tokens).mean(dim=1)
