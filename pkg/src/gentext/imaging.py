"""Canonical image representation and lossless PNG I/O.

Images are torch tensors of shape (B, 3, H, W) with float values in
[-1, 1]; H and W must each be divisible by 16 (four halving stages in
the encoder).
"""

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, ShapeError

DIVISOR = 16


def check_image(x: torch.Tensor) -> torch.Tensor:
    """Validate the (B, 3, H, W), [-1, 1], divisible-by-16 contract."""
    if x.dim() != 4 or x.shape[1] != 3:
        raise ShapeError(f"expected (B, 3, H, W), got {tuple(x.shape)}")
    if x.shape[2] % DIVISOR or x.shape[3] % DIVISOR:
        raise ShapeError(
            f"H and W must be divisible by {DIVISOR}, got {tuple(x.shape[2:])}"
        )
    return x


def from_uint8(arr: np.ndarray) -> torch.Tensor:
    """(H, W, 3) uint8 -> (1, 3, H, W) float in [-1, 1]."""
    t = torch.from_numpy(arr.astype(np.float32) / 255.0)
    return t.permute(2, 0, 1).unsqueeze(0) * 2.0 - 1.0


def to_uint8(img: torch.Tensor) -> np.ndarray:
    """(1, 3, H, W) in [-1, 1] -> (H, W, 3) uint8, clamped then rounded."""
    x = img[0].clamp(-1.0, 1.0)
    x = (x + 1.0) * 0.5 * 255.0
    return x.round().to(torch.uint8).permute(1, 2, 0).numpy()


def load_image(path, target_hw=None) -> torch.Tensor:
    """Load a PNG/8-bit image into the canonical tensor form.

    Alpha, if present, is composited onto white. If target_hw is given
    the image is bilinearly resized (antialiased) to it; the final dims
    must be divisible by 16.
    """
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("RGBA", "LA", "PA"):
                bg = Image.new("RGBA", im.size, (255, 255, 255, 255))
                im = Image.alpha_composite(bg, im.convert("RGBA")).convert("RGB")
            else:
                im = im.convert("RGB")
    except FileNotFoundError:
        raise
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise DecodeError(f"{path}: {e}") from e
    if target_hw is not None:
        h, w = target_hw
        im = im.resize((w, h), Image.BILINEAR)
    arr = np.asarray(im)
    t = from_uint8(arr)
    return check_image(t)


def save_image(img: torch.Tensor, path) -> None:
    """Write a single (1, 3, H, W) tensor as an 8-bit RGB PNG.

    Round trip load(save(x)) differs from clamp(x) by at most 1/255 per
    channel (quantization step is 2/255 on the [-1, 1] range).
    """
    if img.dim() != 4 or img.shape[0] != 1:
        raise ShapeError(f"save_image expects batch size 1, got {tuple(img.shape)}")
    Image.fromarray(to_uint8(img.detach().cpu()), mode="RGB").save(path, format="PNG")
