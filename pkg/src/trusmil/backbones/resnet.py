"""ResNet18 feature extractor with a slimmed residual block.

The slim block keeps a single conv+BN per residual branch,
y = relu(x + BN(Conv(x))), halving the block parameters relative to the
standard two-conv design; the standard block is kept for parameter
comparisons.
"""

import torch
from torch import nn


def conv3x3(in_ch, out_ch, stride=1):
    return nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=stride, padding=1,
                     bias=False)


class SlimBasicBlock(nn.Module):
    """Residual block with exactly one conv+BN in the branch."""

    def __init__(self, in_ch: int, out_ch: int, stride: int = 1):
        super().__init__()
        self.conv = conv3x3(in_ch, out_ch, stride)
        self.bn = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        self.downsample = None
        if stride != 1 or in_ch != out_ch:
            self.downsample = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, kernel_size=1, stride=stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )

    def forward(self, x):
        identity = x if self.downsample is None else self.downsample(x)
        return self.relu(identity + self.bn(self.conv(x)))


class BasicBlock(nn.Module):
    """Standard two-conv residual block (comparison baseline)."""

    def __init__(self, in_ch: int, out_ch: int, stride: int = 1):
        super().__init__()
        self.conv1 = conv3x3(in_ch, out_ch, stride)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = conv3x3(out_ch, out_ch)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        self.downsample = None
        if stride != 1 or in_ch != out_ch:
            self.downsample = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, kernel_size=1, stride=stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )

    def forward(self, x):
        identity = x if self.downsample is None else self.downsample(x)
        h = self.relu(self.bn1(self.conv1(x)))
        return self.relu(identity + self.bn2(self.conv2(h)))


class ResNet18(nn.Module):
    """Four stages of two residual blocks over a single-channel input;
    features are the globally average-pooled final stage."""

    def __init__(self, base_width: int = 64, slim: bool = True, in_channels: int = 1):
        super().__init__()
        block = SlimBasicBlock if slim else BasicBlock
        widths = [base_width * m for m in (1, 2, 4, 8)]
        self.stem = nn.Sequential(
            nn.Conv2d(in_channels, widths[0], kernel_size=7, stride=2, padding=3,
                      bias=False),
            nn.BatchNorm2d(widths[0]),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(kernel_size=3, stride=2, padding=1),
        )
        stages = []
        in_ch = widths[0]
        for i, width in enumerate(widths):
            stride = 1 if i == 0 else 2
            stages.append(block(in_ch, width, stride))
            stages.append(block(width, width))
            in_ch = width
        self.stages = nn.Sequential(*stages)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.feature_dim = widths[-1]

    def forward(self, x):
        x = self.stem(x)
        x = self.stages(x)
        return self.pool(x).flatten(1)
