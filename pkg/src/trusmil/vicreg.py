"""Self-supervised pre-training with a variance/invariance/covariance
regularized joint-embedding loss.

The invariance term is the mean squared error between the two projected
views; the variance term hinges each embedding dimension's std toward a
target; the covariance term penalizes squared off-diagonal entries of
the (unbiased) covariance matrix. Weighted sum with (lambda, mu, nu) =
(25, 25, 1) by default.
"""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .augment import AugmentationPolicy, augment_pair
from .seeding import derive_seed


@dataclass
class VICRegWeights:
    lambda_inv: float = 25.0
    mu_var: float = 25.0
    nu_cov: float = 1.0
    variance_target: float = 1.0
    variance_eps: float = 1e-4

    def __post_init__(self):
        if min(self.lambda_inv, self.mu_var, self.nu_cov) < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.variance_target < 0 or self.variance_eps < 0:
            raise ValueError("variance target and eps must be nonnegative")


@dataclass
class LossBreakdown:
    """Total loss plus its named components, kept as tensors so the
    result stays differentiable."""

    total: torch.Tensor
    invariance: torch.Tensor
    variance: torch.Tensor
    covariance: torch.Tensor

    def as_floats(self) -> dict[str, float]:
        return {
            "total": float(self.total.detach()),
            "invariance": float(self.invariance.detach()),
            "variance": float(self.variance.detach()),
            "covariance": float(self.covariance.detach()),
        }


def _variance_term(z: torch.Tensor, weights: VICRegWeights) -> torch.Tensor:
    std = torch.sqrt(z.var(dim=0, unbiased=True) + weights.variance_eps)
    return F.relu(weights.variance_target - std).mean()


def _covariance_term(z: torch.Tensor) -> torch.Tensor:
    n, d = z.shape
    zc = z - z.mean(dim=0)
    cov = (zc.T @ zc) / (n - 1)
    off_diag = cov - torch.diag(torch.diag(cov))
    return off_diag.pow(2).sum() / d


def vicreg_loss(z1: torch.Tensor, z2: torch.Tensor, weights: VICRegWeights | None = None) -> LossBreakdown:
    """Three-term joint-embedding loss over two projected batches [N, d].

    Variance and covariance components are reported as the sum over both
    branches; the total is the weighted sum of the three components.
    """
    weights = weights or VICRegWeights()
    if z1.shape != z2.shape:
        raise ValueError("z1 and z2 must have equal shapes")
    if z1.ndim != 2:
        raise ValueError("embeddings must be 2-D [batch, dim]")
    n, d = z1.shape
    if n < 2:
        raise ValueError("variance undefined for batch size < 2")
    if d < 2:
        raise ValueError("embedding dim must be at least 2")

    invariance = F.mse_loss(z1, z2)
    variance = _variance_term(z1, weights) + _variance_term(z2, weights)
    covariance = _covariance_term(z1) + _covariance_term(z2)
    total = (weights.lambda_inv * invariance
             + weights.mu_var * variance
             + weights.nu_cov * covariance)
    return LossBreakdown(total, invariance, variance, covariance)


class Projector(nn.Module):
    """Expander MLP mapping backbone features into the loss space:
    three affine maps with batch norm and ReLU between them."""

    def __init__(self, in_dim: int, hidden_dim: int = 512, out_dim: int = 512):
        super().__init__()
        if out_dim < 2:
            raise ValueError("projector output dim must be at least 2")
        self.net = nn.Sequential(
            nn.Linear(in_dim, hidden_dim),
            nn.BatchNorm1d(hidden_dim),
            nn.ReLU(inplace=True),
            nn.Linear(hidden_dim, hidden_dim),
            nn.BatchNorm1d(hidden_dim),
            nn.ReLU(inplace=True),
            nn.Linear(hidden_dim, out_dim),
        )
        self.out_dim = out_dim

    def forward(self, x):
        return self.net(x)


@dataclass
class PretrainSchedule:
    steps: int = 100
    batch_size: int = 16
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    log_every: int = 1


def pretrain(
    encoder: nn.Module,
    projector: Projector,
    patches: np.ndarray,
    policy: AugmentationPolicy,
    weights: VICRegWeights,
    schedule: PretrainSchedule,
    seed: int = 0,
) -> list[dict[str, float]]:
    """Optimize encoder+projector on two-view batches drawn from
    ``patches`` [M, 256, 256]; returns the per-step loss history.

    The projector is discarded by callers after pre-training; only the
    encoder weights move on to finetuning. Aborts with a diagnostic when
    any loss component turns non-finite.
    """
    if len(patches) == 0:
        raise ValueError("empty pre-training dataset")
    if schedule.batch_size < 2:
        raise ValueError("batch size must be at least 2")

    torch.manual_seed(derive_seed(seed, "pretrain-init"))
    optimizer = torch.optim.Adam(
        list(encoder.parameters()) + list(projector.parameters()),
        lr=schedule.learning_rate,
        weight_decay=schedule.weight_decay,
    )
    sampler = np.random.default_rng(derive_seed(seed, "pretrain-batches"))

    encoder.train()
    projector.train()
    history = []
    for step in range(schedule.steps):
        idx = sampler.choice(len(patches), size=min(schedule.batch_size, len(patches)),
                             replace=len(patches) < schedule.batch_size)
        views1, views2 = [], []
        for i in idx:
            v1, v2 = augment_pair(patches[i], policy,
                                  derive_seed(seed, "aug", step, int(i)))
            views1.append(v1)
            views2.append(v2)
        x1 = torch.as_tensor(np.stack(views1), dtype=torch.float32).unsqueeze(1)
        x2 = torch.as_tensor(np.stack(views2), dtype=torch.float32).unsqueeze(1)

        z1 = projector(encoder(x1))
        z2 = projector(encoder(x2))
        loss = vicreg_loss(z1, z2, weights)
        for name in ("invariance", "variance", "covariance"):
            if not torch.isfinite(getattr(loss, name)):
                raise RuntimeError(
                    f"{name} component became non-finite at step {step}")

        optimizer.zero_grad()
        loss.total.backward()
        optimizer.step()
        if step % schedule.log_every == 0 or step == schedule.steps - 1:
            history.append({"step": step,
                            "learning_rate": schedule.learning_rate,
                            **loss.as_floats()})
    return history
