"""Dataset loading, preprocessing and the foreground/noise composite.

Tensors follow the torch channel-first convention: images are ``(3, H, W)``
in [-1, 1] and masks are ``(1, H, W)`` with values exactly 0 or 1.
"""
from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import yaml
from PIL import Image, UnidentifiedImageError

IMAGE_EXTS = (".jpg", ".jpeg", ".png")
# generator downsampling factor for the default spec (2 ** 3)
DOWNSAMPLE_FACTOR = 8


class ClassTag(str, enum.Enum):
    CAMOUFLAGE = "camouflage"
    NORMAL = "normal"


class Split(str, enum.Enum):
    TRAIN = "train"
    TEST = "test"


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Sample:
    image: torch.Tensor
    mask: torch.Tensor
    name: str
    class_tag: ClassTag = ClassTag.CAMOUFLAGE

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise DatasetError(f"image must be (3, H, W), got {tuple(self.image.shape)}")
        if self.mask.ndim != 3 or self.mask.shape[0] != 1:
            raise DatasetError(f"mask must be (1, H, W), got {tuple(self.mask.shape)}")
        if self.image.shape[1:] != self.mask.shape[1:]:
            raise DatasetError(
                f"{self.name}: image {tuple(self.image.shape[1:])} and mask "
                f"{tuple(self.mask.shape[1:])} differ in size"
            )

    @property
    def size(self) -> tuple[int, int]:
        return tuple(self.image.shape[1:])

    @property
    def foreground_fraction(self) -> float:
        return float(self.mask.mean())


@dataclass(frozen=True)
class CompositeInput:
    data: torch.Tensor
    seed: int
    source_name: str


@dataclass
class DatasetManifest:
    root: Path
    pairs: list[tuple[Path, Path | None]]
    split: Split = Split.TRAIN
    class_tag: ClassTag = field(default=ClassTag.CAMOUFLAGE)

    def __len__(self):
        return len(self.pairs)

    def names(self) -> list[str]:
        return [p[0].stem for p in self.pairs]

    def to_dict(self) -> dict:
        return {
            "root": str(self.root),
            "split": self.split.value,
            "class_tag": self.class_tag.value,
            "pairs": [[str(i), None if m is None else str(m)] for i, m in self.pairs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        pairs = [(Path(i), None if m is None else Path(m)) for i, m in d["pairs"]]
        if not pairs:
            raise DatasetError("manifest has no pairs")
        return cls(Path(d["root"]), pairs, Split(d["split"]), ClassTag(d.get("class_tag", "camouflage")))

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path: str | os.PathLike) -> "DatasetManifest":
        return cls.from_dict(yaml.safe_load(Path(path).read_text()))


def _list_images(d: Path, exts=IMAGE_EXTS) -> dict[str, Path]:
    found: dict[str, Path] = {}
    for p in sorted(d.iterdir()):
        if p.is_file() and p.suffix.lower() in exts:
            if p.stem in found:
                raise DatasetError(f"duplicate basename {p.stem!r} in {d}")
            found[p.stem] = p
    return found


def load_dataset(root, split: Split | str = Split.TRAIN, class_tag: ClassTag | str = ClassTag.CAMOUFLAGE) -> DatasetManifest:
    """Pair ``root/Image/*`` with ``root/GT/*.png`` by basename.

    Raises DatasetError on a missing directory, an image without a mask (or
    the reverse), or an empty dataset.
    """
    root = Path(root)
    img_dir, gt_dir = root / "Image", root / "GT"
    for d in (img_dir, gt_dir):
        if not d.is_dir():
            raise DatasetError(f"missing directory: {d}")
    images = _list_images(img_dir)
    masks = _list_images(gt_dir, exts=(".png",))
    unpaired = sorted(set(images) ^ set(masks))
    if unpaired:
        raise DatasetError(f"unpaired files in {root}: {unpaired[:5]}")
    if not images:
        raise DatasetError(f"no image/mask pairs under {root}")
    pairs = [(images[k], masks[k]) for k in sorted(images)]
    return DatasetManifest(root, pairs, Split(split), ClassTag(class_tag))


def load_image_folder(root, class_tag: ClassTag | str = ClassTag.NORMAL) -> DatasetManifest:
    """Mask-free manifest, used for classifier training data.

    Accepts either ``root/Image/`` or images directly under ``root``.
    """
    root = Path(root)
    d = root / "Image" if (root / "Image").is_dir() else root
    if not d.is_dir():
        raise DatasetError(f"missing directory: {d}")
    images = _list_images(d)
    if not images:
        raise DatasetError(f"no images under {d}")
    return DatasetManifest(root, [(images[k], None) for k in sorted(images)], Split.TRAIN, ClassTag(class_tag))


def _open(path, mode):
    try:
        with Image.open(path) as im:
            im.load()
            return im.convert(mode)
    except (UnidentifiedImageError, OSError) as e:
        raise DatasetError(f"cannot decode {path}: {e}") from e


def image_to_tensor(im: Image.Image) -> torch.Tensor:
    arr = np.asarray(im, dtype=np.float32) / 255.0
    return torch.from_numpy(arr * 2.0 - 1.0).permute(2, 0, 1).contiguous()


def mask_to_tensor(im: Image.Image) -> torch.Tensor:
    arr = np.asarray(im, dtype=np.float32) / 255.0
    return torch.from_numpy((arr >= 0.5).astype(np.float32))[None]


def preprocess(image_file, mask_file=None, target_size: int = 512,
               class_tag: ClassTag | str = ClassTag.CAMOUFLAGE,
               factor: int = DOWNSAMPLE_FACTOR) -> Sample:
    """Decode, resize to ``target_size`` square and normalize one pair.

    The image is resized bilinearly and mapped to [-1, 1]; the mask is
    resized nearest-neighbor and thresholded at 0.5. Without a mask file the
    sample gets an all-zero mask.
    """
    if target_size <= 0 or target_size % factor:
        raise DatasetError(f"target_size {target_size} is not a positive multiple of {factor}")
    size = (target_size, target_size)
    im = _open(image_file, "RGB")
    if im.size != size:
        im = im.resize(size, Image.BILINEAR)
    image = image_to_tensor(im)
    if mask_file is None:
        mask = torch.zeros(1, target_size, target_size)
    else:
        m = _open(mask_file, "L")
        if m.size != size:
            m = m.resize(size, Image.NEAREST)
        mask = mask_to_tensor(m)
    return Sample(image, mask, Path(image_file).stem, ClassTag(class_tag))


def load_samples(manifest: DatasetManifest, target_size: int, factor: int = DOWNSAMPLE_FACTOR) -> list[Sample]:
    return [preprocess(i, m, target_size, manifest.class_tag, factor) for i, m in manifest.pairs]


def split_foreground(s: Sample) -> tuple[torch.Tensor, torch.Tensor]:
    fg = s.image * s.mask
    bg = s.image * (1 - s.mask)
    return fg, bg


def draw_noise(shape, seed: int, dtype=torch.float32) -> torch.Tensor:
    g = torch.Generator().manual_seed(int(seed))
    return torch.randn(shape, generator=g, dtype=dtype)


def composite(image: torch.Tensor, mask: torch.Tensor, noise: torch.Tensor) -> torch.Tensor:
    # torch.where keeps foreground pixels bit-exact (no 0*z rounding)
    return torch.where(mask.bool(), image, noise)


def add_noise(s: Sample, seed: int) -> CompositeInput:
    """Replace the background of ``s`` with a seeded standard-normal draw."""
    z = draw_noise(s.image.shape, seed, s.image.dtype)
    return CompositeInput(composite(s.image, s.mask, z), int(seed), s.name)


def batch_composite(images: torch.Tensor, masks: torch.Tensor, seeds) -> torch.Tensor:
    """Batched noise composite; sample ``i`` uses ``seeds[i]``."""
    z = torch.stack([draw_noise(images.shape[1:], s, images.dtype) for s in seeds])
    return composite(images, masks, z)
