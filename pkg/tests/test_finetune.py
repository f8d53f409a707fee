import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from hypothesis import given, settings
from hypothesis import strategies as st
from torch import nn

from trusmil.augment import AugmentationPolicy
from trusmil.backbones import BackboneConfig, build_backbone
from trusmil.finetune import (
    FinetuneSettings,
    ROIHead,
    aggregate_core,
    finetune,
    finetune_step,
    predict_roi,
)
from trusmil.vicreg import PretrainSchedule, Projector, VICRegWeights, pretrain


def tiny_encoder(seed=0):
    return build_backbone(BackboneConfig(variant="resnet18_slim",
                                         base_width=8, input_size=64), seed=seed)


def textured_patches(n, size=64, seed=0, two_class=False):
    """Synthetic patches; optionally two texture classes with labels."""
    from trusmil.data import TextureParams, normalize_rescale, synth_texture

    rng = np.random.default_rng(seed)
    smooth = TextureParams(2.6, 1.0, 6.0)
    rough = TextureParams(0.8, 1.0, 1.5)
    patches, labels = [], []
    for i in range(n):
        label = i % 2 if two_class else 0
        params = rough if label == 0 else smooth
        patches.append(normalize_rescale(synth_texture((size, size), params, rng)))
        labels.append(label)
    return np.stack(patches).astype(np.float32), np.array(labels)


class TestCrossEntropyContract:
    def test_uniform_logits(self):
        loss = F.cross_entropy(torch.zeros(1, 2), torch.tensor([1]))
        assert float(loss) == pytest.approx(math.log(2.0), abs=1e-6)

    def test_gradient_matches_finite_differences(self):
        rng = torch.Generator().manual_seed(0)
        for _ in range(20):
            n = int(torch.randint(2, 9, (1,), generator=rng))
            logits = torch.randn(n, 2, generator=rng, dtype=torch.float64,
                                 requires_grad=True)
            labels = torch.randint(0, 2, (n,), generator=rng)
            F.cross_entropy(logits, labels).backward()
            fd = torch.zeros_like(logits)
            base = logits.detach().clone()
            h = 1e-6
            for i in range(n):
                for j in range(2):
                    hi = base.clone(); hi[i, j] += h
                    lo = base.clone(); lo[i, j] -= h
                    fd[i, j] = (F.cross_entropy(hi, labels) -
                                F.cross_entropy(lo, labels)) / (2 * h)
            rel = (logits.grad - fd).norm() / fd.norm()
            assert rel < 1e-4


class TestFinetune:
    def test_overfits_eight_patches(self):
        patches, labels = textured_patches(8, two_class=True, seed=1)
        encoder = tiny_encoder(seed=2)
        head = ROIHead(encoder.feature_dim)
        history = finetune(encoder, head, patches, labels,
                           FinetuneSettings(mode="full", epochs=200, batch_size=8,
                                            learning_rate=1e-3), seed=3)
        assert history[-1]["loss"] < 0.01

    def test_probe_mode_trains_head_only(self):
        patches, labels = textured_patches(16, two_class=True, seed=4)
        encoder = tiny_encoder(seed=5)
        before = {k: v.clone() for k, v in encoder.state_dict().items()}
        head = ROIHead(encoder.feature_dim)
        finetune(encoder, head, patches, labels,
                 FinetuneSettings(mode="probe", epochs=2, batch_size=8), seed=6)
        after = encoder.state_dict()
        assert all(torch.equal(before[k], after[k]) for k in before)

    def test_loss_decreases_on_separable_features(self):
        # median over seeds: first-epoch mean CE above last-epoch mean CE
        class Flatten(nn.Module):
            input_size = 4

            def forward(self, x):
                return x.flatten(1)

        firsts, lasts = [], []
        for seed in range(3):
            rng = np.random.default_rng(seed)
            n = 64
            labels = np.arange(n) % 2
            feats = rng.normal(0, 0.3, size=(n, 1, 4, 4))
            feats[labels == 1, 0, 0, 0] += 3.0   # linearly separable
            head = ROIHead(16)
            hist = finetune(Flatten(), head, feats.astype(np.float32), labels,
                            FinetuneSettings(mode="probe", epochs=4, batch_size=16),
                            seed=seed)
            firsts.append(hist[0]["loss"])
            lasts.append(hist[-1]["loss"])
        assert np.median(lasts) < np.median(firsts)

    def test_empty_dataset_rejected(self):
        encoder = tiny_encoder()
        with pytest.raises(ValueError):
            finetune(encoder, ROIHead(encoder.feature_dim), np.empty((0, 64, 64)),
                     [], FinetuneSettings(), seed=0)

    def test_invalid_mode_rejected(self):
        with pytest.raises(ValueError):
            FinetuneSettings(mode="linear_probe")

    def test_finetune_step_updates_and_returns_loss(self):
        patches, labels = textured_patches(4, two_class=True, seed=7)
        encoder = tiny_encoder(seed=8)
        head = ROIHead(encoder.feature_dim)
        optimizer = torch.optim.Adam(list(encoder.parameters()) + list(head.parameters()),
                                     lr=1e-3)
        encoder.train(); head.train()
        loss = finetune_step(encoder, head, (patches, labels), optimizer)
        assert torch.isfinite(loss)


class _FixedLogitsHead(nn.Module):
    def __init__(self, logits):
        super().__init__()
        self.logits = torch.tensor(logits, dtype=torch.float32)

    def forward(self, x):
        return self.logits.expand(x.shape[0], -1)


class TestPredictRoi:
    def test_symmetric_logits_give_half(self):
        encoder = tiny_encoder()
        probs = predict_roi(encoder, _FixedLogitsHead([0.3, 0.3]),
                            np.random.rand(3, 64, 64).astype(np.float32))
        assert np.allclose(probs, 0.5, atol=1e-6)

    def test_softmax_arithmetic(self):
        encoder = tiny_encoder()
        probs = predict_roi(encoder, _FixedLogitsHead([0.0, math.log(3.0)]),
                            np.random.rand(2, 64, 64).astype(np.float32))
        assert np.allclose(probs, 0.75, atol=1e-6)

    def test_probabilities_complement_to_one(self):
        patches, _ = textured_patches(6, seed=9)
        encoder = tiny_encoder(seed=10)
        head = ROIHead(encoder.feature_dim)
        cancer = predict_roi(encoder, head, patches)
        feats_head = head.eval()
        with torch.no_grad():
            from trusmil.finetune import _encode_in_batches
            logits = feats_head(_encode_in_batches(encoder, patches))
            benign = F.softmax(logits, dim=1)[:, 0].numpy()
        assert np.allclose(cancer + benign, 1.0, atol=1e-6)
        assert (cancer >= 0).all() and (cancer <= 1).all()


class TestAggregateCore:
    def test_hand_case(self):
        assert aggregate_core([0.2, 0.4, 0.9]) == pytest.approx(0.5)

    def test_constant(self):
        assert aggregate_core([0.7] * 55) == pytest.approx(0.7)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate_core([])

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            aggregate_core([0.5, 1.2])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=55),
           st.integers(0, 2**31))
    def test_permutation_invariant_and_bounded(self, probs, seed):
        value = aggregate_core(probs)
        assert min(probs) - 1e-12 <= value <= max(probs) + 1e-12
        rng = np.random.default_rng(seed)
        shuffled = list(rng.permutation(probs))
        assert aggregate_core(shuffled) == pytest.approx(value, abs=1e-12)


class TestSSLBenefit:
    def _steps_to_threshold(self, encoder, patches, labels, val_patches,
                            val_labels, seed, threshold=0.5, max_steps=250):
        from trusmil.finetune import _encode_in_batches

        feats = _encode_in_batches(encoder, patches)
        val_feats = _encode_in_batches(encoder, val_patches)
        y = torch.as_tensor(labels, dtype=torch.long)
        val_y = torch.as_tensor(val_labels, dtype=torch.long)
        torch.manual_seed(seed)
        head = ROIHead(feats.shape[1])
        opt = torch.optim.Adam(head.parameters(), lr=1e-3)
        rng = np.random.default_rng(seed)
        for step in range(max_steps):
            with torch.no_grad():
                val_loss = float(F.cross_entropy(head(val_feats), val_y))
            if val_loss < threshold:
                return step
            idx = rng.choice(len(feats), size=min(16, len(feats)), replace=False)
            loss = F.cross_entropy(head(feats[idx]), y[idx])
            opt.zero_grad(); loss.backward(); opt.step()
        return max_steps

    def test_ssl_init_reaches_threshold_faster(self):
        patches, labels = textured_patches(72, seed=11, two_class=True)
        train_x, train_y = patches[:48], labels[:48]
        val_x, val_y = patches[48:], labels[48:]

        ssl_steps, rand_steps = [], []
        for seed in range(3):
            pretrained = tiny_encoder(seed=seed)
            projector = Projector(pretrained.feature_dim, hidden_dim=64, out_dim=32)
            pretrain(pretrained, projector, train_x, AugmentationPolicy(),
                     VICRegWeights(),
                     PretrainSchedule(steps=60, batch_size=8, learning_rate=3e-3),
                     seed=seed)
            random_init = tiny_encoder(seed=seed)
            ssl_steps.append(self._steps_to_threshold(
                pretrained, train_x, train_y, val_x, val_y, seed))
            rand_steps.append(self._steps_to_threshold(
                random_init, train_x, train_y, val_x, val_y, seed))
        assert np.median(ssl_steps) < np.median(rand_steps), (ssl_steps, rand_steps)
