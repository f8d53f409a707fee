"""Weight checkpoints shared by the pre-training, finetuning and
multi-scale stages: a state dict keyed by layer name plus per-layer
shape metadata and free-form run metadata."""

from pathlib import Path

import torch
from torch import nn


def save_checkpoint(path, module: nn.Module, meta: dict | None = None) -> None:
    state = module.state_dict()
    payload = {
        "state_dict": state,
        "shapes": {name: list(t.shape) for name, t in state.items()},
        "meta": meta or {},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path, module: nn.Module | None = None) -> dict:
    payload = torch.load(Path(path), map_location="cpu", weights_only=False)
    if module is not None:
        expected = {name: list(t.shape) for name, t in module.state_dict().items()}
        if payload["shapes"] != expected:
            raise ValueError(f"checkpoint {path} does not match the module's layers")
        module.load_state_dict(payload["state_dict"])
    return payload
