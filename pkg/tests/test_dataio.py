import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st
from PIL import Image

from camogen.dataio import (DatasetError, DatasetManifest, Sample, add_noise, draw_noise, load_dataset,
                            load_image_folder, preprocess, split_foreground)
from conftest import disk_samples, write_pair_dir


def make_sample(h=8, w=8, seed=0, p=0.5):
    g = torch.Generator().manual_seed(seed)
    img = torch.rand(3, h, w, generator=g) * 2 - 1
    mask = (torch.rand(1, h, w, generator=g) < p).float()
    return Sample(img, mask, f"x{seed}")


def test_load_dataset_three_pairs_sorted(tmp_path):
    root = write_pair_dir(tmp_path / "d", disk_samples(3, 16, prefix="b"))
    m = load_dataset(root)
    assert len(m) == 3
    assert m.names() == ["b0", "b1", "b2"]
    for img, mask in m.pairs:
        assert img.stem == mask.stem


def test_load_dataset_mixed_extensions(tmp_path):
    root = write_pair_dir(tmp_path / "d", disk_samples(2, 16), exts=[".jpg", ".png"])
    assert [p[0].suffix for p in load_dataset(root).pairs] == [".jpg", ".png"]


def test_unpaired_image_rejected(pair_dir):
    Image.new("RGB", (16, 16)).save(pair_dir / "Image" / "orphan.png")
    with pytest.raises(DatasetError, match="unpaired"):
        load_dataset(pair_dir)


def test_missing_directory(tmp_path):
    (tmp_path / "Image").mkdir()
    with pytest.raises(DatasetError, match="missing"):
        load_dataset(tmp_path)


def test_empty_dataset(tmp_path):
    (tmp_path / "Image").mkdir()
    (tmp_path / "GT").mkdir()
    with pytest.raises(DatasetError, match="no image"):
        load_dataset(tmp_path)


def test_manifest_roundtrip(pair_dir, tmp_path):
    m = load_dataset(pair_dir, "test")
    m.save(tmp_path / "m.yaml")
    m2 = DatasetManifest.load(tmp_path / "m.yaml")
    assert m2.pairs == m.pairs and m2.split == m.split


def test_image_folder_without_masks(tmp_path):
    for i in range(2):
        Image.new("RGB", (8, 8)).save(tmp_path / f"n{i}.jpg")
    m = load_image_folder(tmp_path)
    assert len(m) == 2 and all(mask is None for _, mask in m.pairs)


def test_preprocess_resizes_to_target(tmp_path):
    Image.new("RGB", (1024, 768), (255, 0, 128)).save(tmp_path / "a.jpg")
    Image.new("L", (1024, 768), 255).save(tmp_path / "a.png")
    s = preprocess(tmp_path / "a.jpg", tmp_path / "a.png", 512)
    assert s.image.shape == (3, 512, 512) and s.mask.shape == (1, 512, 512)
    assert s.image.min() >= -1 and s.image.max() <= 1


def test_preprocess_same_size_keeps_values(tmp_path):
    arr = np.random.default_rng(0).integers(0, 256, (64, 64, 3), dtype=np.uint8)
    Image.fromarray(arr).save(tmp_path / "a.png")
    Image.fromarray(np.zeros((64, 64), np.uint8)).save(tmp_path / "m.png")
    s = preprocess(tmp_path / "a.png", tmp_path / "m.png", 64)
    expected = torch.from_numpy(arr.astype(np.float32) / 255 * 2 - 1).permute(2, 0, 1)
    assert torch.equal(s.image, expected)


def test_checkerboard_mask_stays_binary(tmp_path):
    cb = ((np.indices((37, 53)).sum(0) % 2) * 255).astype(np.uint8)
    Image.fromarray(cb).save(tmp_path / "m.png")
    Image.new("RGB", (53, 37)).save(tmp_path / "i.png")
    s = preprocess(tmp_path / "i.png", tmp_path / "m.png", 32)
    assert set(torch.unique(s.mask).tolist()) <= {0.0, 1.0}


def test_preprocess_rejects_bad_size(tmp_path):
    Image.new("RGB", (8, 8)).save(tmp_path / "i.png")
    with pytest.raises(DatasetError, match="multiple"):
        preprocess(tmp_path / "i.png", None, 30)


def test_preprocess_corrupt_file(tmp_path):
    (tmp_path / "i.png").write_bytes(b"not an image")
    with pytest.raises(DatasetError, match="decode"):
        preprocess(tmp_path / "i.png", None, 32)


def test_sample_shape_mismatch():
    with pytest.raises(DatasetError):
        Sample(torch.zeros(3, 4, 4), torch.zeros(1, 4, 5), "bad")


def test_split_foreground_identity_cases():
    s = make_sample()
    ones = Sample(s.image, torch.ones_like(s.mask), "o")
    fg, bg = split_foreground(ones)
    assert torch.equal(fg, s.image) and not bg.any()
    zeros = Sample(s.image, torch.zeros_like(s.mask), "z")
    fg, bg = split_foreground(zeros)
    assert not fg.any() and torch.equal(bg, s.image)


def test_split_foreground_2x2():
    img = torch.tensor([[1.0, -1.0], [0.5, 0.0]]).expand(3, 2, 2).clone()
    mask = torch.tensor([[[1.0, 0.0], [0.0, 1.0]]])
    fg, bg = split_foreground(Sample(img, mask, "t"))
    # oracle: elementwise products written out
    assert torch.equal(fg, torch.tensor([[1.0, 0.0], [0.0, 0.0]]).expand(3, 2, 2))
    assert torch.equal(bg, torch.tensor([[0.0, -1.0], [0.5, 0.0]]).expand(3, 2, 2))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), h=st.integers(1, 12), w=st.integers(1, 12))
def test_split_reconstructs(seed, h, w):
    s = make_sample(h, w, seed)
    fg, bg = split_foreground(s)
    assert torch.equal(fg + bg, s.image)


def test_add_noise_all_foreground_is_identity():
    s = make_sample()
    s = Sample(s.image, torch.ones_like(s.mask), "o")
    assert torch.equal(add_noise(s, 3).data, s.image)


def test_add_noise_all_background_is_noise():
    s = make_sample()
    s = Sample(s.image, torch.zeros_like(s.mask), "z")
    assert torch.equal(add_noise(s, 7).data, draw_noise(s.image.shape, 7))


def test_add_noise_2x2_hand_computed():
    img = torch.tensor([[[0.2, -0.4], [0.6, 1.0]]] * 3)
    mask = torch.tensor([[[1.0, 0.0], [0.0, 1.0]]])
    s = Sample(img, mask, "t")
    z = draw_noise((3, 2, 2), 11)
    out = add_noise(s, 11).data
    for c in range(3):
        assert out[c, 0, 0] == img[c, 0, 0] and out[c, 1, 1] == img[c, 1, 1]
        assert out[c, 0, 1] == z[c, 0, 1] and out[c, 1, 0] == z[c, 1, 0]


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 31), sample_seed=st.integers(0, 1000))
def test_foreground_preserved_and_deterministic(seed, sample_seed):
    s = make_sample(16, 16, sample_seed)
    a, b = add_noise(s, seed), add_noise(s, seed)
    assert torch.equal(a.data * s.mask, s.image * s.mask)
    assert torch.equal(a.data, b.data)
    assert a.seed == seed and a.source_name == s.name


def test_noise_statistics():
    s = make_sample(128, 128, 0, p=0.2)
    z = add_noise(s, 5).data[s.mask.expand(3, -1, -1) == 0]
    assert z.numel() >= 10_000
    assert abs(float(z.mean())) <= 0.05
    assert 0.9 <= float(z.var()) <= 1.1
