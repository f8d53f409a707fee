"""Compact convolutional transformer: a small conv tokenizer feeds a
transformer stack, pooled by attention-weighted sequence pooling."""

import torch
import torch.nn.functional as F
from torch import nn

from .layers import TransformerBlock


class ConvTokenizer(nn.Module):
    """Stacked conv/relu/maxpool stages; output tokens are the flattened
    spatial grid. Each stage downsamples by 4 (conv stride 2, pool 2)."""

    def __init__(self, in_channels: int, embed_dim: int, n_convs: int = 2):
        super().__init__()
        layers = []
        ch = in_channels
        for i in range(n_convs):
            out_ch = embed_dim if i == n_convs - 1 else max(embed_dim // 2, 16)
            layers += [
                nn.Conv2d(ch, out_ch, kernel_size=3, stride=2, padding=1, bias=False),
                nn.ReLU(inplace=True),
                nn.MaxPool2d(kernel_size=3, stride=2, padding=1),
            ]
            ch = out_ch
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x).flatten(2).transpose(1, 2)   # [B, N, D]


class CCT(nn.Module):
    def __init__(self, image_size: int = 256, embed_dim: int = 256,
                 depth: int = 4, heads: int = 8, n_convs: int = 2,
                 in_channels: int = 1):
        super().__init__()
        self.tokenizer = ConvTokenizer(in_channels, embed_dim, n_convs)
        n_tokens = (image_size // (4 ** n_convs)) ** 2
        self.pos_embed = nn.Parameter(torch.zeros(1, n_tokens, embed_dim))
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        self.blocks = nn.ModuleList(
            TransformerBlock(embed_dim, heads) for _ in range(depth))
        self.norm = nn.LayerNorm(embed_dim)
        self.seq_pool = nn.Linear(embed_dim, 1)
        self.feature_dim = embed_dim

    def forward(self, x):
        x = self.tokenizer(x) + self.pos_embed
        for block in self.blocks:
            x = block(x)
        x = self.norm(x)
        weights = F.softmax(self.seq_pool(x), dim=1)        # [B, N, 1]
        return (weights.transpose(1, 2) @ x).squeeze(1)     # [B, D]
