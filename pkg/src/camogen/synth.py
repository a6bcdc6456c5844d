"""Generate camouflage images from a trained generator and expand datasets."""
from __future__ import annotations

import datetime as _dt
import shutil
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import yaml
from PIL import Image

from .ckpt import BLOB_FILE, Checkpoint, sha256_file
from .dataio import DatasetManifest, Sample, add_noise, preprocess
from .seeding import derive_seed

MANIFEST_FILE = "synthesis_manifest.yaml"


class SynthesisError(RuntimeError):
    pass


@dataclass
class SynthesisEntry:
    source_name: str
    replicate: int
    seed: int
    output_image_path: str
    output_mask_path: str
    checkpoint_hash: str


@dataclass
class SynthesisManifest:
    entries: list[SynthesisEntry]
    generator_config: dict
    created_at: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())
    base_seed: int = 0
    per_sample: int = 1

    def save(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(asdict(self), sort_keys=False))

    @classmethod
    def load(cls, path) -> "SynthesisManifest":
        d = yaml.safe_load(Path(path).read_text())
        d["entries"] = [SynthesisEntry(**e) for e in d["entries"]]
        return cls(**d)


def entry_seed(base_seed: int, source_name: str, replicate: int) -> int:
    return derive_seed(base_seed, source_name, replicate)


@torch.no_grad()
def synthesize_sample(gen: torch.nn.Module, s: Sample, seed: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Generated background under the untouched source foreground.

    Returns ``(image, mask)``; the mask is the input mask object itself.
    """
    f = gen.spec.factor
    h, w = s.size
    if h % f or w % f:
        raise SynthesisError(f"{s.name}: size {h}x{w} not divisible by {f}")
    gen.eval()
    x_in = add_noise(s, seed).data
    raw = gen(x_in[None])[0]
    image = torch.where(s.mask.bool(), s.image, raw)
    return image, s.mask


def to_uint8(image: torch.Tensor) -> np.ndarray:
    """[-1, 1] CHW -> uint8 HWC, round half up."""
    v = (image.detach().cpu().double().clamp(-1, 1).numpy() + 1) / 2 * 255
    return np.floor(v + 0.5).clip(0, 255).astype(np.uint8).transpose(1, 2, 0)


def save_png(image: torch.Tensor, path) -> None:
    Image.fromarray(to_uint8(image)).save(path, format="PNG")


def save_mask(mask: torch.Tensor, path) -> None:
    arr = (mask[0].cpu().numpy() > 0.5).astype(np.uint8) * 255
    Image.fromarray(arr).save(path, format="PNG")


def expand_dataset(gen: torch.nn.Module, data: DatasetManifest, per_sample: int, base_seed: int,
                   out, image_size: int | None = None, checkpoint_hash: str = "") -> SynthesisManifest:
    """Write ``per_sample`` synthesized pairs per source under ``out/Image`` and ``out/GT``.

    ``out`` must be absent or empty. Any failure removes everything written.
    """
    if per_sample < 1:
        raise SynthesisError("per_sample must be >= 1")
    out = Path(out)
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        raise SynthesisError(f"output directory {out} exists and is not empty")
    image_size = image_size or 512
    created = not out.exists()
    img_dir, gt_dir = out / "Image", out / "GT"
    entries = []
    try:
        img_dir.mkdir(parents=True, exist_ok=True)
        gt_dir.mkdir(parents=True, exist_ok=True)
        for image_path, mask_path in data.pairs:
            s = preprocess(image_path, mask_path, image_size, data.class_tag, gen.spec.factor)
            for k in range(per_sample):
                seed = entry_seed(base_seed, s.name, k)
                image, mask = synthesize_sample(gen, s, seed)
                name = f"{s.name}_syn{k}.png"
                save_png(image, img_dir / name)
                save_mask(mask, gt_dir / name)
                entries.append(SynthesisEntry(s.name, k, seed, str(img_dir / name),
                                              str(gt_dir / name), checkpoint_hash))
        entries.sort(key=lambda e: (e.source_name, e.replicate))
        manifest = SynthesisManifest(entries, {"kind": "generator", **asdict(gen.spec)},
                                     base_seed=base_seed, per_sample=per_sample)
        manifest.save(out / MANIFEST_FILE)
    except BaseException:
        if created:
            shutil.rmtree(out, ignore_errors=True)
        else:
            for child in out.iterdir():
                shutil.rmtree(child) if child.is_dir() else child.unlink()
        raise
    return manifest


def expand_from_checkpoint(ckpt_path, data: DatasetManifest, per_sample: int, base_seed: int, out,
                           image_size: int | None = None) -> SynthesisManifest:
    ckpt = Checkpoint.load(ckpt_path)
    gen = ckpt.network("generator")
    size = image_size or int(ckpt.config.get("image_size", 512))
    return expand_dataset(gen, data, per_sample, base_seed, out, size, sha256_file(Path(ckpt_path) / BLOB_FILE))
