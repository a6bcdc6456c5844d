"""Generator, multi-scale conditional discriminator and camouflage classifier.

The generator follows the pix2pixHD global generator layout (7x7 stem,
strided encoder, residual bottleneck, transposed-conv decoder, tanh head).
The discriminator and classifier share one per-scale convolutional trunk.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

INIT_STD = 0.02


@dataclass(frozen=True)
class GeneratorSpec:
    base_width: int = 64
    n_downsample: int = 3
    n_res_blocks: int = 9
    in_channels: int = 3
    out_channels: int = 3

    def __post_init__(self):
        for k in ("base_width", "in_channels", "out_channels"):
            if getattr(self, k) < 1:
                raise ValueError(f"GeneratorSpec.{k} must be >= 1")
        if self.n_downsample < 0 or self.n_res_blocks < 0:
            raise ValueError("GeneratorSpec counts must be non-negative")

    @classmethod
    def desk(cls, **kw):
        return cls(**{"base_width": 16, "n_res_blocks": 4, **kw})

    @property
    def factor(self) -> int:
        return 2 ** self.n_downsample


@dataclass(frozen=True)
class DiscriminatorSpec:
    n_scales: int = 3
    layers_per_scale: int = 4
    base_width: int = 64
    in_channels: int = 6
    max_width: int = 512

    def __post_init__(self):
        if self.n_scales < 1 or self.layers_per_scale < 2 or self.base_width < 1:
            raise ValueError(f"invalid DiscriminatorSpec {self}")

    @classmethod
    def desk(cls, **kw):
        return cls(**{"n_scales": 2, "base_width": 16, **kw})

    @property
    def n_features(self) -> int:
        return self.layers_per_scale + 1


@dataclass(frozen=True)
class ClassifierSpec:
    n_scales: int = 2
    layers_per_scale: int = 4
    base_width: int = 64
    in_channels: int = 3
    max_width: int = 512

    def __post_init__(self):
        if self.n_scales < 1 or self.layers_per_scale < 2 or self.base_width < 1:
            raise ValueError(f"invalid ClassifierSpec {self}")

    @classmethod
    def desk(cls, **kw):
        return cls(**{"base_width": 16, **kw})


def _init_params(module: nn.Module, seed: int) -> None:
    """Seeded init: conv weights N(0, 0.02), norm scales N(1, 0.02), biases 0."""
    g = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for name, p in module.named_parameters():
            owner = module.get_submodule(name.rsplit(".", 1)[0]) if "." in name else module
            if name.endswith("bias"):
                p.zero_()
            elif isinstance(owner, nn.InstanceNorm2d):
                p.copy_(1.0 + INIT_STD * torch.randn(p.shape, generator=g, dtype=p.dtype))
            else:
                p.copy_(INIT_STD * torch.randn(p.shape, generator=g, dtype=p.dtype))


def _norm(ch):
    return nn.InstanceNorm2d(ch, affine=True)


class ResBlock(nn.Module):
    def __init__(self, ch):
        super().__init__()
        self.body = nn.Sequential(
            nn.ReflectionPad2d(1), nn.Conv2d(ch, ch, 3), _norm(ch), nn.ReLU(True),
            nn.ReflectionPad2d(1), nn.Conv2d(ch, ch, 3), _norm(ch),
        )

    def forward(self, x):
        return x + self.body(x)


class Generator(nn.Module):
    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        w = spec.base_width
        layers = [nn.ReflectionPad2d(3), nn.Conv2d(spec.in_channels, w, 7), _norm(w), nn.ReLU(True)]
        for i in range(spec.n_downsample):
            c = w * 2 ** i
            layers += [nn.Conv2d(c, 2 * c, 3, stride=2, padding=1), _norm(2 * c), nn.ReLU(True)]
        c = w * 2 ** spec.n_downsample
        layers += [ResBlock(c) for _ in range(spec.n_res_blocks)]
        for i in range(spec.n_downsample):
            c = w * 2 ** (spec.n_downsample - i)
            layers += [nn.ConvTranspose2d(c, c // 2, 3, stride=2, padding=1, output_padding=1),
                       _norm(c // 2), nn.ReLU(True)]
        layers += [nn.ReflectionPad2d(3), nn.Conv2d(w, spec.out_channels, 7), nn.Tanh()]
        self.model = nn.Sequential(*layers)

    def forward(self, x):
        h, w = x.shape[-2:]
        f = self.spec.factor
        if h % f or w % f:
            raise ValueError(f"generator input {h}x{w} not divisible by {f}")
        return self.model(x)


def trunk_widths(base_width: int, layers: int, max_width: int = 512) -> list[int]:
    return [min(base_width * 2 ** i, max_width) for i in range(layers)]


def conv_out_size(n: int, stride: int, kernel: int = 4, pad: int = 2) -> int:
    return (n + 2 * pad - kernel) // stride + 1


class Trunk(nn.Module):
    """Per-scale stack of 4x4 conv blocks: all strided except the last.

    The first block has no normalization. Returns every block output.
    """

    def __init__(self, in_ch, base_width, layers, max_width=512):
        super().__init__()
        widths = trunk_widths(base_width, layers, max_width)
        blocks = []
        prev = in_ch
        for i, c in enumerate(widths):
            stride = 2 if i < layers - 1 else 1
            mods = [nn.Conv2d(prev, c, 4, stride=stride, padding=2)]
            if i > 0:
                mods.append(_norm(c))
            mods.append(nn.LeakyReLU(0.2, True))
            blocks.append(nn.Sequential(*mods))
            prev = c
        self.blocks = nn.ModuleList(blocks)
        self.out_channels = prev

    def forward(self, x):
        feats = []
        for b in self.blocks:
            x = b(x)
            feats.append(x)
        return feats


def pyramid(x: torch.Tensor, k: int) -> torch.Tensor:
    return x if k == 0 else F.avg_pool2d(x, 2 ** k)


class MultiScaleDiscriminator(nn.Module):
    def __init__(self, spec: DiscriminatorSpec):
        super().__init__()
        self.spec = spec
        self.trunks = nn.ModuleList(
            Trunk(spec.in_channels, spec.base_width, spec.layers_per_scale, spec.max_width)
            for _ in range(spec.n_scales)
        )
        self.heads = nn.ModuleList(
            nn.Conv2d(t.out_channels, 1, 4, stride=1, padding=2) for t in self.trunks
        )

    def forward(self, fg, candidate):
        """Return ``[(logit_map, features)]`` per scale, finest first.

        ``features`` holds the block outputs followed by the logit map.
        """
        if fg.shape != candidate.shape:
            raise ValueError(f"fg {tuple(fg.shape)} vs candidate {tuple(candidate.shape)}")
        x = torch.cat([fg, candidate], dim=1)
        if x.shape[1] != self.spec.in_channels:
            raise ValueError(f"expected {self.spec.in_channels} channels, got {x.shape[1]}")
        out = []
        for k, (trunk, head) in enumerate(zip(self.trunks, self.heads)):
            feats = trunk(pyramid(x, k))
            logits = head(feats[-1])
            out.append((logits, feats + [logits]))
        return out


class CamouflageClassifier(nn.Module):
    def __init__(self, spec: ClassifierSpec):
        super().__init__()
        self.spec = spec
        self.trunks = nn.ModuleList(
            Trunk(spec.in_channels, spec.base_width, spec.layers_per_scale, spec.max_width)
            for _ in range(spec.n_scales)
        )
        self.heads = nn.ModuleList(nn.Linear(t.out_channels, 2) for t in self.trunks)

    def logits(self, image):
        if image.ndim != 4 or image.shape[1] != self.spec.in_channels:
            raise ValueError(f"expected (B, {self.spec.in_channels}, H, W), got {tuple(image.shape)}")
        per_scale = [
            head(trunk(pyramid(image, k))[-1].mean(dim=(2, 3)))
            for k, (trunk, head) in enumerate(zip(self.trunks, self.heads))
        ]
        return torch.stack(per_scale).mean(0)

    def forward(self, image):
        """Class probabilities ``(B, 2)``; column 0 is camouflage."""
        return torch.softmax(self.logits(image), dim=1)


def build_generator(spec: GeneratorSpec, seed: int) -> Generator:
    net = Generator(spec)
    _init_params(net, seed)
    return net


def build_discriminator(spec: DiscriminatorSpec, seed: int) -> MultiScaleDiscriminator:
    net = MultiScaleDiscriminator(spec)
    _init_params(net, seed)
    return net


def build_classifier(spec: ClassifierSpec, seed: int) -> CamouflageClassifier:
    net = CamouflageClassifier(spec)
    _init_params(net, seed)
    return net


SPEC_TYPES = {
    "generator": (GeneratorSpec, Generator),
    "discriminator": (DiscriminatorSpec, MultiScaleDiscriminator),
    "classifier": (ClassifierSpec, CamouflageClassifier),
}


def spec_to_dict(spec) -> dict:
    kind = {GeneratorSpec: "generator", DiscriminatorSpec: "discriminator", ClassifierSpec: "classifier"}[type(spec)]
    return {"kind": kind, **asdict(spec)}


def network_from_spec(d: dict) -> nn.Module:
    d = dict(d)
    spec_cls, net_cls = SPEC_TYPES[d.pop("kind")]
    return net_cls(spec_cls(**d))


def count_parameters(net: nn.Module) -> int:
    return sum(p.numel() for p in net.parameters())


def freeze(net: nn.Module) -> nn.Module:
    net.eval()
    for p in net.parameters():
        p.requires_grad_(False)
    return net
