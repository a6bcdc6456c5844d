"""Procedural contrast-separable images for classifier desk experiments.

Each image is a flat noisy background with a filled disk. Camouflage images
use a disk color close to the background; normal images a distant one.
"""
from __future__ import annotations

import numpy as np
import torch

from .dataio import ClassTag, Sample


def make_disk_sample(rng: np.random.Generator, size: int, camouflage: bool, name: str) -> Sample:
    bg = rng.uniform(-0.6, 0.6, size=3)
    if camouflage:
        delta = rng.uniform(-0.08, 0.08, size=3)
    else:
        delta = rng.choice([-1.0, 1.0], size=3) * rng.uniform(0.5, 0.8, size=3)
    fg = np.clip(bg + delta, -1, 1)
    yy, xx = np.mgrid[:size, :size]
    r = rng.uniform(size * 0.15, size * 0.3)
    cy, cx = rng.uniform(r, size - r, size=2)
    mask = ((yy - cy) ** 2 + (xx - cx) ** 2 <= r * r).astype(np.float32)
    img = bg[:, None, None] * (1 - mask) + fg[:, None, None] * mask
    img = img + rng.normal(0, 0.03, size=img.shape)
    img = np.clip(img, -1, 1).astype(np.float32)
    tag = ClassTag.CAMOUFLAGE if camouflage else ClassTag.NORMAL
    return Sample(torch.from_numpy(img), torch.from_numpy(mask)[None], name, tag)


def contrast_toy_set(n_per_class: int = 64, size: int = 32, seed: int = 0) -> tuple[list[Sample], list[Sample]]:
    rng = np.random.default_rng(seed)
    camo = [make_disk_sample(rng, size, True, f"camo_{i:03d}") for i in range(n_per_class)]
    normal = [make_disk_sample(rng, size, False, f"norm_{i:03d}") for i in range(n_per_class)]
    return camo, normal


def mean_contrast(s: Sample) -> float:
    """Euclidean distance between mean foreground and mean background color."""
    m = s.mask[0].bool()
    fg = s.image[:, m].mean(dim=1)
    bg = s.image[:, ~m].mean(dim=1)
    return float((fg - bg).norm())
