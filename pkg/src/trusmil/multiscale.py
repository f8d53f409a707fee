"""Multi-scale core classification.

Per-core backbone features (one row per ROI) are projected to 72-d
tokens and classified by a 12-layer pre-norm transformer with a class
token; a separately re-trained MLP head scores each ROI from the
unprojected features. Training combines both scales:

    total = gamma * CE(core logits, y) + (1 - gamma) * mean CE(roi logits, y)

where every ROI inherits the core label y.
"""

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .backbones.layers import TransformerBlock
from .finetune import ROIHead
from .seeding import derive_seed

PROJECTED_DIM = 72
SEQ_LEN = 55


@dataclass
class MOConfig:
    gamma: float = 0.5
    depth: int = 12
    hidden: int = PROJECTED_DIM
    heads: int = 8
    ffn: int = 4 * PROJECTED_DIM
    seq_len: int = SEQ_LEN

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.hidden % self.heads != 0:
            raise ValueError("hidden size must be divisible by the head count")
        if self.depth < 1:
            raise ValueError("depth must be at least 1")


@dataclass
class CoreSequence:
    """One core's ROI feature rows (unprojected backbone features), the
    per-row validity flags, and the core label."""

    features: np.ndarray            # [seq_len, feature_dim]
    core_label: int
    core_id: str
    validity_mask: np.ndarray = field(default=None)   # [seq_len] bool

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float32)
        if self.features.ndim != 2:
            raise ValueError("features must be [seq_len, feature_dim]")
        if self.validity_mask is None:
            self.validity_mask = np.ones(len(self.features), dtype=bool)
        self.validity_mask = np.asarray(self.validity_mask, dtype=bool)
        if self.validity_mask.shape != (len(self.features),):
            raise ValueError("validity mask length must match the sequence")
        if not self.validity_mask.any():
            raise ValueError("core sequence needs at least one valid position")
        if not np.isfinite(self.features).all():
            raise ValueError("features must be finite")


@dataclass
class MultiScaleOutput:
    core_logits: torch.Tensor       # [2]
    roi_logits: torch.Tensor        # [seq_len, 2]


@dataclass
class MOLossBreakdown:
    total: torch.Tensor
    core_term: torch.Tensor
    roi_term: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        return {"total": float(self.total), "core_term": float(self.core_term),
                "roi_term": float(self.roi_term)}


def project_features(backbone_features, projection: nn.Linear) -> torch.Tensor:
    """Row-wise affine projection of backbone features to 72-d tokens;
    this is the map realized by the core transformer's input layer under
    the default configuration."""
    x = torch.as_tensor(backbone_features, dtype=projection.weight.dtype)
    if x.shape[-1] != projection.in_features:
        raise ValueError(
            f"feature width {x.shape[-1]} does not match projector input"
            f" {projection.in_features}")
    out = projection(x)
    if out.shape[-1] != PROJECTED_DIM:
        raise ValueError(f"projection must map to {PROJECTED_DIM} dims")
    return out


class CoreTransformer(nn.Module):
    """Class-token transformer over the projected ROI sequence; learned
    positional embeddings cover the class token plus 55 positions."""

    def __init__(self, feature_dim: int, config: MOConfig):
        super().__init__()
        self.config = config
        self.projection = nn.Linear(feature_dim, config.hidden)
        self.cls_token = nn.Parameter(torch.zeros(1, 1, config.hidden))
        self.pos_embed = nn.Parameter(torch.zeros(1, config.seq_len + 1, config.hidden))
        nn.init.trunc_normal_(self.cls_token, std=0.02)
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        mlp_ratio = config.ffn / config.hidden
        self.blocks = nn.ModuleList(
            TransformerBlock(config.hidden, config.heads, mlp_ratio)
            for _ in range(config.depth))
        self.norm = nn.LayerNorm(config.hidden)
        self.head = nn.Linear(config.hidden, 2)

    def forward(self, features: torch.Tensor, validity: torch.Tensor) -> torch.Tensor:
        """features [B, seq_len, feature_dim], validity [B, seq_len] bool
        -> core logits [B, 2]. Invalid positions are excluded from
        attention in every block."""
        tokens = self.projection(features)
        cls = self.cls_token.expand(tokens.shape[0], -1, -1)
        x = torch.cat([cls, tokens], dim=1) + self.pos_embed
        cls_valid = torch.ones(validity.shape[0], 1, dtype=torch.bool,
                               device=validity.device)
        key_padding = ~torch.cat([cls_valid, validity], dim=1)
        for block in self.blocks:
            x = block(x, key_padding_mask=key_padding)
        return self.head(self.norm(x[:, 0]))


def core_forward(seq: CoreSequence, model: CoreTransformer, roi_head: ROIHead) -> MultiScaleOutput:
    """Multi-scale forward for one core: transformer core logits from the
    projected sequence plus per-ROI logits from the MLP head on the
    unprojected backbone features."""
    features = torch.as_tensor(seq.features, dtype=torch.float32).unsqueeze(0)
    validity = torch.as_tensor(seq.validity_mask, dtype=torch.bool).unsqueeze(0)
    core_logits = model(features, validity)[0]
    roi_logits = roi_head(features[0])
    return MultiScaleOutput(core_logits=core_logits, roi_logits=roi_logits)


def mo_loss(out: MultiScaleOutput, y: int, validity, gamma: float) -> MOLossBreakdown:
    """Convex combination of core-level and ROI-level cross-entropies.

    The ROI term averages CE over valid positions only; every position's
    target is the core label."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    validity = torch.as_tensor(np.asarray(validity), dtype=torch.bool)
    if validity.shape != (out.roi_logits.shape[0],):
        raise ValueError("validity mask must match the ROI sequence length")
    if not validity.any():
        raise ValueError("at least one valid position required")

    target = torch.tensor([int(y)], dtype=torch.long)
    core_term = F.cross_entropy(out.core_logits.unsqueeze(0), target)
    valid_logits = out.roi_logits[validity]
    roi_targets = torch.full((valid_logits.shape[0],), int(y), dtype=torch.long)
    roi_term = F.cross_entropy(valid_logits, roi_targets)
    total = gamma * core_term + (1.0 - gamma) * roi_term
    return MOLossBreakdown(total=total, core_term=core_term, roi_term=roi_term)


@dataclass
class MultiscaleSchedule:
    epochs: int = 40
    batch_size: int = 8
    learning_rate: float = 3e-4


def _stack(sequences: list[CoreSequence]):
    feats = torch.as_tensor(np.stack([s.features for s in sequences]),
                            dtype=torch.float32)
    valid = torch.as_tensor(np.stack([s.validity_mask for s in sequences]))
    labels = torch.as_tensor([s.core_label for s in sequences], dtype=torch.long)
    return feats, valid, labels


def multiscale_train(
    sequences: list[CoreSequence],
    config: MOConfig,
    schedule: MultiscaleSchedule,
    seed: int = 0,
) -> tuple[CoreTransformer, ROIHead, list[dict]]:
    """Train the core transformer and the re-trained ROI head on
    precomputed (frozen-backbone) feature sequences."""
    if not sequences:
        raise ValueError("no training sequences")
    feature_dim = sequences[0].features.shape[1]
    torch.manual_seed(derive_seed(seed, "multiscale-init"))
    model = CoreTransformer(feature_dim, config)
    roi_head = ROIHead(feature_dim)
    optimizer = torch.optim.Adam(
        list(model.parameters()) + list(roi_head.parameters()),
        lr=schedule.learning_rate)
    rng = np.random.default_rng(derive_seed(seed, "multiscale-batches"))

    feats, valid, labels = _stack(sequences)
    model.train()
    roi_head.train()
    history = []
    for epoch in range(schedule.epochs):
        order = rng.permutation(len(sequences))
        epoch_parts = []
        for i in range(0, len(order), schedule.batch_size):
            idx = order[i:i + schedule.batch_size]
            f, v, y = feats[idx], valid[idx], labels[idx]
            core_logits = model(f, v)
            core_term = F.cross_entropy(core_logits, y)
            roi_logits = roi_head(f)                       # [b, seq, 2]
            roi_ce = F.cross_entropy(
                roi_logits.reshape(-1, 2),
                y.repeat_interleave(f.shape[1]),
                reduction="none",
            ).reshape(f.shape[0], f.shape[1])
            roi_term = ((roi_ce * v).sum(dim=1) / v.sum(dim=1)).mean()
            total = config.gamma * core_term + (1.0 - config.gamma) * roi_term
            for name, part in (("core", core_term), ("roi", roi_term)):
                if not torch.isfinite(part):
                    raise RuntimeError(
                        f"{name} loss term became non-finite at epoch {epoch}")
            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            epoch_parts.append((float(total.detach()), float(core_term.detach()),
                                float(roi_term.detach())))
        mean = np.mean(epoch_parts, axis=0)
        history.append({"epoch": epoch, "total": float(mean[0]),
                        "core_term": float(mean[1]), "roi_term": float(mean[2])})
    return model, roi_head, history


def predict_core(seq: CoreSequence, model: CoreTransformer, roi_head: ROIHead):
    """Eval-mode cancer probabilities: (core probability, per-ROI
    probabilities over valid positions)."""
    model.eval()
    roi_head.eval()
    with torch.no_grad():
        out = core_forward(seq, model, roi_head)
        core_prob = float(F.softmax(out.core_logits, dim=0)[1])
        roi_probs = F.softmax(out.roi_logits, dim=1)[:, 1].numpy()
    return core_prob, roi_probs
