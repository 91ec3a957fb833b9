import numpy as np
import pytest
import torch

from lcgnet import data_io
from lcgnet.encoder import CONV_SHAPES, VggEncoder


def random_archive_tensors(seed: int = 0) -> dict[str, torch.Tensor]:
    """Canonical-shape random VGG kernels (tests never rely on pretrained data)."""
    gen = torch.Generator().manual_seed(seed)
    tensors = {}
    for name, (out_c, in_c) in CONV_SHAPES.items():
        fan_in = in_c * 9
        tensors[f"{name}.weight"] = torch.randn((out_c, in_c, 3, 3), generator=gen) * (2.0 / fan_in) ** 0.5
        tensors[f"{name}.bias"] = torch.randn((out_c,), generator=gen) * 0.01
    return tensors


@pytest.fixture(scope="session")
def encoder_archive(tmp_path_factory):
    path = tmp_path_factory.mktemp("weights") / "vgg_random.pt"
    payload = dict(random_archive_tensors(seed=7))
    payload["__meta__"] = {"preprocess": "imagenet"}
    torch.save(payload, path)
    return path


@pytest.fixture(scope="session")
def enc(encoder_archive):
    from lcgnet.encoder import load_encoder

    return VggEncoder(load_encoder(encoder_archive))


def blob_mask(size: int, rng: np.random.Generator) -> np.ndarray:
    """A random filled rectangle blob; always non-empty."""
    mask = np.zeros((size, size), dtype=np.uint8)
    h = int(rng.integers(size // 4, size // 2))
    w = int(rng.integers(size // 4, size // 2))
    top = int(rng.integers(0, size - h))
    left = int(rng.integers(0, size - w))
    mask[top : top + h, left : left + w] = 1
    return mask


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    """8 foreground/mask/background PNG triples of mixed sizes."""
    root = tmp_path_factory.mktemp("toyset")
    fg_dir = root / "foregrounds"
    mask_dir = root / "masks"
    bg_dir = root / "backgrounds"
    for d in (fg_dir, mask_dir, bg_dir):
        d.mkdir()
    rng = np.random.default_rng(42)
    for i in range(8):
        size = int(rng.integers(48, 96))
        fg = rng.random((size, size, 3)).astype(np.float32)
        data_io.save_image(fg, fg_dir / f"obj_{i}.png")
        data_io.save_mask(blob_mask(size, rng), mask_dir / f"obj_{i}.png")
        bsize = int(rng.integers(64, 128))
        bg = rng.random((bsize, bsize, 3)).astype(np.float32)
        data_io.save_image(bg, bg_dir / f"land_{i}.png")
    return {"foregrounds": fg_dir, "masks": mask_dir, "backgrounds": bg_dir}
