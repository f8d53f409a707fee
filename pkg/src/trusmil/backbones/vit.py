"""Plain vision transformer: patchify-embed, class token, pre-norm
self-attention stack; the class-token output is the feature vector."""

import torch
from torch import nn

from .layers import TransformerBlock


class ViT(nn.Module):
    def __init__(self, image_size: int = 256, patch_size: int = 32,
                 embed_dim: int = 256, depth: int = 6, heads: int = 8,
                 in_channels: int = 1):
        super().__init__()
        if image_size % patch_size != 0:
            raise ValueError("patch size must divide the image size")
        n_patches = (image_size // patch_size) ** 2
        self.patch_embed = nn.Conv2d(in_channels, embed_dim,
                                     kernel_size=patch_size, stride=patch_size)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, embed_dim))
        self.pos_embed = nn.Parameter(torch.zeros(1, n_patches + 1, embed_dim))
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        nn.init.trunc_normal_(self.cls_token, std=0.02)
        self.blocks = nn.ModuleList(
            TransformerBlock(embed_dim, heads) for _ in range(depth))
        self.norm = nn.LayerNorm(embed_dim)
        self.feature_dim = embed_dim

    def forward(self, x):
        tokens = self.patch_embed(x).flatten(2).transpose(1, 2)   # [B, N, D]
        cls = self.cls_token.expand(tokens.shape[0], -1, -1)
        x = torch.cat([cls, tokens], dim=1) + self.pos_embed
        for block in self.blocks:
            x = block(x)
        return self.norm(x[:, 0])
