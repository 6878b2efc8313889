import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st
from PIL import Image

from gentext.errors import DecodeError, ShapeError
from gentext.imaging import load_image, save_image


def _write_png(path, h, w, value=128, mode="RGB"):
    arr = np.full((h, w, 3), value, dtype=np.uint8)
    if mode == "RGBA":
        arr = np.concatenate([arr, np.zeros((h, w, 1), np.uint8)], axis=2)
    Image.fromarray(arr, mode=mode).save(path)


def test_load_256(tmp_path):
    p = tmp_path / "a.png"
    _write_png(p, 256, 256)
    t = load_image(p)
    assert t.shape == (1, 3, 256, 256)
    assert t.min() >= -1 and t.max() <= 1


def test_load_resize(tmp_path):
    p = tmp_path / "a.png"
    _write_png(p, 250, 250)
    t = load_image(p, target_hw=(64, 64))
    assert t.shape == (1, 3, 64, 64)


def test_load_indivisible_raises(tmp_path):
    p = tmp_path / "a.png"
    _write_png(p, 250, 250)
    with pytest.raises(ShapeError):
        load_image(p)


def test_load_bad_file(tmp_path):
    p = tmp_path / "bad.png"
    p.write_bytes(b"not a png at all")
    with pytest.raises(DecodeError):
        load_image(p)


def test_alpha_composited_onto_white(tmp_path):
    p = tmp_path / "a.png"
    _write_png(p, 64, 64, value=0, mode="RGBA")  # fully transparent black
    t = load_image(p)
    assert torch.allclose(t, torch.ones_like(t))


def test_save_black_white(tmp_path):
    black = -torch.ones(1, 3, 64, 64)
    white = torch.ones(1, 3, 64, 64)
    for img, expect in ((black, 0), (white, 255)):
        p = tmp_path / "x.png"
        save_image(img, p)
        arr = np.asarray(Image.open(p))
        assert (arr == expect).all()


def test_save_requires_single_batch(tmp_path):
    with pytest.raises(ShapeError):
        save_image(torch.zeros(2, 3, 64, 64), tmp_path / "x.png")


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_roundtrip_quantization_bound(tmp_path_factory, seed):
    tmp = tmp_path_factory.mktemp("rt")
    g = torch.Generator().manual_seed(seed)
    x = torch.rand(1, 3, 32, 32, generator=g) * 2.4 - 1.2  # exercise clamping
    p = tmp / "x.png"
    save_image(x, p)
    back = load_image(p)
    assert (back - x.clamp(-1, 1)).abs().max() <= 1 / 255 + 1e-7


def test_load_save_load_idempotent(tmp_path):
    g = torch.Generator().manual_seed(3)
    x = torch.rand(1, 3, 32, 32, generator=g) * 2 - 1
    p1, p2 = tmp_path / "1.png", tmp_path / "2.png"
    save_image(x, p1)
    a = load_image(p1)
    save_image(a, p2)
    b = load_image(p2)
    assert torch.equal(a, b)
