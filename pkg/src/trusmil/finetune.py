"""ROI-scale supervised training: an MLP head over backbone features,
cross-entropy against weak (core-inherited) labels, and mean aggregation
of ROI probabilities into a core prediction.

Two modes: ``probe`` freezes the encoder and trains the head on cached
features (the default, matching the linear-probing evaluation style);
``full`` finetunes the encoder jointly.
"""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .seeding import derive_seed


class ROIHead(nn.Module):
    """Two-layer MLP: feature_dim -> hidden -> 2 logits (benign/cancer)."""

    def __init__(self, feature_dim: int, hidden: int = 128):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(feature_dim, hidden),
            nn.ReLU(inplace=True),
            nn.Linear(hidden, 2),
        )

    def forward(self, x):
        return self.net(x)


@dataclass
class FinetuneSettings:
    mode: str = "probe"            # probe | full
    epochs: int = 5
    batch_size: int = 32
    learning_rate: float = 1e-3
    head_hidden: int = 128

    def __post_init__(self):
        if self.mode not in ("probe", "full"):
            raise ValueError("mode must be 'probe' or 'full'")


def finetune_step(encoder, head, batch, optimizer) -> torch.Tensor:
    """One optimization step of cross-entropy on (patches, weak_labels);
    returns the loss. Caller controls which parameters the optimizer
    updates (head only for probing, encoder+head for full finetuning)."""
    patches, labels = batch
    x = torch.as_tensor(patches, dtype=torch.float32)
    if x.ndim == 3:
        x = x.unsqueeze(1)
    y = torch.as_tensor(labels, dtype=torch.long)
    logits = head(encoder(x))
    loss = F.cross_entropy(logits, y)
    if not torch.isfinite(loss):
        raise RuntimeError("cross-entropy loss became non-finite")
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return loss.detach()


def _encode_in_batches(encoder, patches, batch_size=32) -> torch.Tensor:
    encoder.eval()
    outs = []
    with torch.no_grad():
        for i in range(0, len(patches), batch_size):
            x = torch.as_tensor(patches[i:i + batch_size], dtype=torch.float32)
            if x.ndim == 3:
                x = x.unsqueeze(1)
            outs.append(encoder(x))
    return torch.cat(outs)


def finetune(encoder, head, patches, labels, settings: FinetuneSettings,
             seed: int = 0) -> list[dict]:
    """Train the ROI classifier; returns per-epoch history of mean CE.

    ``patches`` is [M, 256, 256] (already class-balanced upstream) and
    ``labels`` the weak per-patch labels.
    """
    if len(patches) == 0:
        raise ValueError("empty finetuning dataset")
    y_all = torch.as_tensor(np.asarray(labels), dtype=torch.long)
    rng = np.random.default_rng(derive_seed(seed, "finetune-batches"))
    torch.manual_seed(derive_seed(seed, "finetune-init"))

    if settings.mode == "probe":
        feats = _encode_in_batches(encoder, patches)
        optimizer = torch.optim.Adam(head.parameters(), lr=settings.learning_rate)
        history = []
        head.train()
        for epoch in range(settings.epochs):
            order = rng.permutation(len(feats))
            losses = []
            for i in range(0, len(order), settings.batch_size):
                idx = order[i:i + settings.batch_size]
                logits = head(feats[idx])
                loss = F.cross_entropy(logits, y_all[idx])
                if not torch.isfinite(loss):
                    raise RuntimeError("cross-entropy loss became non-finite")
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                losses.append(float(loss.detach()))
            history.append({"epoch": epoch, "loss": float(np.mean(losses))})
        return history

    optimizer = torch.optim.Adam(
        list(encoder.parameters()) + list(head.parameters()),
        lr=settings.learning_rate)
    encoder.train()
    head.train()
    history = []
    for epoch in range(settings.epochs):
        order = rng.permutation(len(patches))
        losses = []
        for i in range(0, len(order), settings.batch_size):
            idx = order[i:i + settings.batch_size]
            loss = finetune_step(encoder, head, (patches[idx], y_all[idx]),
                                 optimizer)
            losses.append(float(loss))
        history.append({"epoch": epoch, "loss": float(np.mean(losses))})
    return history


def predict_roi(encoder, head, patches, batch_size: int = 32) -> np.ndarray:
    """Cancer-class softmax probability for each patch, in [0, 1]."""
    feats = _encode_in_batches(encoder, patches, batch_size)
    head.eval()
    with torch.no_grad():
        probs = F.softmax(head(feats), dim=1)[:, 1]
    return probs.numpy()


def aggregate_core(roi_probs) -> float:
    """Core-level probability: the arithmetic mean of its ROI
    probabilities."""
    roi_probs = np.asarray(roi_probs, dtype=np.float64)
    if roi_probs.size == 0:
        raise ValueError("cannot aggregate an empty probability vector")
    if roi_probs.min() < 0.0 or roi_probs.max() > 1.0:
        raise ValueError("probabilities must lie in [0, 1]")
    return float(roi_probs.mean())
