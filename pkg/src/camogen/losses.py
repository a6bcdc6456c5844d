"""Adversarial, feature-matching, perceptual and camouflage objectives."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F

CAM_EPS = 1e-7

# VGG16 conv layout; "M" marks a 2x2 max-pool stage boundary
VGG16_CFG = [64, 64, "M", 128, 128, "M", 256, 256, 256, "M", 512, 512, 512, "M", 512, 512, 512, "M"]
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
DEFAULT_LAYER_SET = (0, 1, 2, 3)


class LossError(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    lambda_fm: float = 10.0
    lambda_vgg: float = 10.0
    lambda_cam: float = 1.0
    lambda_g: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) >= 0:
                raise LossError(f"{f.name} must be >= 0")


@dataclass(frozen=True)
class LossBundle:
    gan_g: float
    gan_d: float
    fm: float
    vgg: float
    cam: float
    total: float

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _check_scales(a, b):
    if len(a) != len(b):
        raise LossError(f"scale count mismatch: {len(a)} vs {len(b)}")


def gan_loss_d(real_logits, fake_logits) -> torch.Tensor:
    """Discriminator loss, averaged over scales and positions."""
    _check_scales(real_logits, fake_logits)
    terms = [
        F.softplus(-r).mean() + F.softplus(f).mean()
        for r, f in zip(real_logits, fake_logits)
    ]
    return torch.stack(terms).mean()


def gan_loss_g(fake_logits, saturating: bool = False) -> torch.Tensor:
    """Generator loss; non-saturating ``-log sigmoid(f)`` unless ``saturating``.

    The saturating variant returns ``log(1 - sigmoid(f))`` (to be minimized),
    which is negative and so not a distance.
    """
    if saturating:
        terms = [-F.softplus(f).mean() for f in fake_logits]
    else:
        terms = [F.softplus(-f).mean() for f in fake_logits]
    return torch.stack(terms).mean()


def feature_matching_loss(real_feats, fake_feats) -> torch.Tensor:
    """Per-layer mean L1 distance, summed over layers and scales."""
    _check_scales(real_feats, fake_feats)
    total = 0.0
    for rs, fs in zip(real_feats, fake_feats):
        if len(rs) != len(fs):
            raise LossError(f"layer count mismatch: {len(rs)} vs {len(fs)}")
        for r, f in zip(rs, fs):
            if r.shape != f.shape:
                raise LossError(f"feature shape mismatch {tuple(r.shape)} vs {tuple(f.shape)}")
            total = total + (r - f).abs().mean()
    return total if torch.is_tensor(total) else torch.tensor(total)


class VGGFeatures(nn.Module):
    """Frozen VGG16-style feature network.

    Module indices inside ``features`` match torchvision's ``vgg16().features``
    so a torchvision state dict (``features.*`` keys) loads directly.
    ``width_div`` shrinks every layer for desk runs.
    """

    def __init__(self, width_div: int = 1, normalize_input: bool = True):
        super().__init__()
        layers, prev = [], 3
        self.pool_indices = []
        for v in VGG16_CFG:
            if v == "M":
                layers.append(nn.MaxPool2d(2, 2))
                self.pool_indices.append(len(layers) - 1)
            else:
                c = max(v // width_div, 1)
                layers += [nn.Conv2d(prev, c, 3, padding=1), nn.ReLU(inplace=False)]
                prev = c
        self.features = nn.Sequential(*layers)
        self.width_div = width_div
        self.normalize_input = normalize_input
        self.register_buffer("mean", torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1), persistent=False)
        self.register_buffer("std", torch.tensor(IMAGENET_STD).view(1, 3, 1, 1), persistent=False)

    def forward(self, x, layer_set=DEFAULT_LAYER_SET):
        """Outputs of the requested pooling stages (0-based), in ``layer_set`` order."""
        for j in layer_set:
            if not 0 <= j < len(self.pool_indices):
                raise LossError(f"layer index {j} out of range 0..{len(self.pool_indices) - 1}")
        if self.normalize_input:
            x = ((x + 1) / 2 - self.mean.to(x.dtype)) / self.std.to(x.dtype)
        wanted = {self.pool_indices[j] for j in layer_set}
        last = max(wanted)
        taps = {}
        for i, layer in enumerate(self.features):
            x = layer(x)
            if i in wanted:
                taps[i] = x
            if i == last:
                break
        return [taps[self.pool_indices[j]] for j in layer_set]


def build_extractor(weights: str | Path | None = None, width_div: int = 1, seed: int = 0) -> VGGFeatures:
    """Pretrained extractor from a state-dict file, or a seeded random one.

    Random weights use He-normal init so activations stay O(1) through depth.
    """
    net = VGGFeatures(width_div=width_div)
    if weights is not None:
        sd = torch.load(weights, map_location="cpu", weights_only=True)
        sd = {k: v for k, v in sd.items() if k.startswith("features.")}
        net.load_state_dict(sd, strict=True)
    else:
        g = torch.Generator().manual_seed(int(seed))
        with torch.no_grad():
            for m in net.features:
                if isinstance(m, nn.Conv2d):
                    fan_in = m.in_channels * 9
                    m.weight.copy_(torch.randn(m.weight.shape, generator=g) * math.sqrt(2.0 / fan_in))
                    m.bias.zero_()
    net.eval()
    for p in net.parameters():
        p.requires_grad_(False)
    return net


def perceptual_loss(extractor: VGGFeatures, xhat, x, layer_set=DEFAULT_LAYER_SET) -> torch.Tensor:
    """Squared feature distance normalized by C*H*W, summed over ``layer_set``.

    Averaged over the batch. Reference features are computed without grad.
    """
    if xhat.shape != x.shape:
        raise LossError(f"shape mismatch {tuple(xhat.shape)} vs {tuple(x.shape)}")
    fa = extractor(xhat, layer_set)
    with torch.no_grad():
        fb = extractor(x, layer_set)
    total = 0.0
    for a, b in zip(fa, fb):
        total = total + ((a - b) ** 2).mean()
    return total


def camouflage_loss(classifier: nn.Module, xhat, return_prob: bool = False):
    """``-log max(p_cam, eps)`` averaged over the batch.

    The classifier must be frozen; gradients reach only ``xhat``.
    """
    if any(p.requires_grad for p in classifier.parameters()):
        raise LossError("classifier must be frozen (requires_grad=False)")
    p_cam = classifier(xhat)[:, 0]
    loss = -torch.log(torch.clamp(p_cam, min=CAM_EPS)).mean()
    return (loss, p_cam.detach()) if return_prob else loss


def combine(gan_g, fm, vgg, cam, w: LossWeights):
    """Weighted generator objective; works on floats and tensors alike."""
    return w.lambda_cam * cam + w.lambda_g * (gan_g + w.lambda_fm * fm) + w.lambda_vgg * vgg


def _finite(v) -> bool:
    return math.isfinite(float(v.detach() if torch.is_tensor(v) else v))


def total_generator_loss(gan_g, fm, vgg, cam, w: LossWeights = LossWeights(), gan_d=0.0):
    """Return ``(total, bundle)``; ``total`` keeps the autograd graph if inputs do."""
    parts = {"gan_g": gan_g, "fm": fm, "vgg": vgg, "cam": cam, "gan_d": gan_d}
    bad = [k for k, v in parts.items() if not _finite(v)]
    if bad:
        raise LossError(f"non-finite loss component(s): {bad}")
    total = combine(gan_g, fm, vgg, cam, w)
    bundle = LossBundle(**{k: float(v.detach() if torch.is_tensor(v) else v) for k, v in parts.items()},
                        total=float(total.detach() if torch.is_tensor(total) else total))
    return total, bundle
