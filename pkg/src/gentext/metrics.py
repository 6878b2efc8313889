"""Evaluation measures: PSNR, SSIM, perceptual loss, Gram-matrix style
loss, and a report generator over the paired eval split.

Metrics operate on the canonical [-1, 1] tensors and convert to [0, 1]
internally. The perceptual feature extractor is a fixed VGG-style conv
stack whose weights are generated deterministically from a pinned seed
and verified by cryptographic hash; values are therefore comparable
only within this repo.
"""

import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from . import pipeline
from .errors import EmptyEvalError, ExtractorMissing, ShapeError

# Published full-scale reference constants (non-binding; carried in
# report headers for orientation only).
REFERENCE_SCORES = {"psnr": 19.415, "ssim": 0.781,
                    "perceptual": 1.1407, "style": 0.0014}

LUMA_WEIGHTS = torch.tensor([0.299, 0.587, 0.114])

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def _to01(x):
    return x.clamp(-1.0, 1.0) * 0.5 + 0.5


def _check_pair(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def psnr(a: torch.Tensor, b: torch.Tensor) -> float:
    """10*log10(1/MSE) on the [0, 1] range, capped at 100 dB."""
    _check_pair(a, b)
    mse = float(F.mse_loss(_to01(a), _to01(b)))
    if mse < 1e-10:
        return PSNR_CAP_DB
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_window(size, sigma):
    coords = torch.arange(size, dtype=torch.float64) - (size - 1) / 2.0
    g = torch.exp(-coords ** 2 / (2 * sigma ** 2))
    g = g / g.sum()
    return (g[:, None] @ g[None, :])


def ssim(a: torch.Tensor, b: torch.Tensor) -> float:
    """Mean local SSIM of the luminance channels; 11x11 Gaussian window
    (sigma 1.5), valid-mode windows only."""
    _check_pair(a, b)
    if a.shape[2] < SSIM_WINDOW or a.shape[3] < SSIM_WINDOW:
        raise ShapeError(f"images must be at least {SSIM_WINDOW} px")
    w = LUMA_WEIGHTS.to(torch.float64).view(1, 3, 1, 1)
    x = (_to01(a).to(torch.float64) * w).sum(dim=1, keepdim=True)
    y = (_to01(b).to(torch.float64) * w).sum(dim=1, keepdim=True)
    kern = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)[None, None]
    mu_x = F.conv2d(x, kern)
    mu_y = F.conv2d(y, kern)
    xx = F.conv2d(x * x, kern) - mu_x ** 2
    yy = F.conv2d(y * y, kern) - mu_y ** 2
    xy = F.conv2d(x * y, kern) - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * xy + SSIM_C2)
    den = (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (xx + yy + SSIM_C2)
    return float((num / den).mean())


# ---------------------------------------------------------------------------
# perceptual feature extractor

EXTRACTOR_SEED = 0x6E7464  # fixed forever; weights are a pure function of it
# sha256 over the generated state dict; refuse to evaluate on mismatch
EXTRACTOR_SHA256 = "d6c74d8fb8c83f8a6db98f6f5b9342fb182963f180d65c1823c49fe86bc17add"


class FeatureExtractor(nn.Module):
    """VGG-16-style conv stack with taps after each block (strides
    1, 2, 4, 8), frozen."""

    BLOCKS = ((3, 16, 2), (16, 32, 2), (32, 64, 3), (64, 128, 3))

    def __init__(self):
        super().__init__()
        blocks = []
        for cin, cout, n in self.BLOCKS:
            layers = []
            c = cin
            for _ in range(n):
                layers += [nn.Conv2d(c, cout, 3, padding=1), nn.ReLU()]
                c = cout
            blocks.append(nn.Sequential(*layers))
        self.blocks = nn.ModuleList(blocks)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x):
        taps = []
        h = _to01(x)
        for i, b in enumerate(self.blocks):
            h = b(h)
            taps.append(h)
            if i < len(self.blocks) - 1:
                h = F.avg_pool2d(h, 2)
        return taps


def _state_hash(state):
    h = hashlib.sha256()
    for k in sorted(state):
        h.update(k.encode())
        h.update(state[k].detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def build_extractor(cache_dir=None) -> FeatureExtractor:
    """Materialize the pinned extractor, caching its weights on disk.

    Raises ExtractorMissing if a cached file fails hash verification.
    """
    cache_dir = Path(cache_dir or os.environ.get("GENTEXT_CACHE")
                     or Path.home() / ".cache" / "gentext")
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / "extractor.pt"
    net = FeatureExtractor()
    if path.exists():
        state = torch.load(path, map_location="cpu", weights_only=True)
        if _state_hash(state) != EXTRACTOR_SHA256:
            raise ExtractorMissing(f"hash mismatch for {path}")
        net.load_state_dict(state)
        return net.eval()
    with torch.random.fork_rng():
        torch.manual_seed(EXTRACTOR_SEED)
        for m in net.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.orthogonal_(m.weight, gain=1.4)
                nn.init.zeros_(m.bias)
    state = net.state_dict()
    if EXTRACTOR_SHA256 and _state_hash(state) != EXTRACTOR_SHA256:
        raise ExtractorMissing("generated extractor does not match the "
                               "pinned hash; torch RNG semantics changed?")
    torch.save(state, path)
    return net.eval()


def perceptual(a, b, extractor) -> float:
    """Sum over tapped layers of mean squared feature differences."""
    _check_pair(a, b)
    if extractor is None:
        raise ExtractorMissing("no feature extractor provided")
    with torch.no_grad():
        fa, fb = extractor(a), extractor(b)
    return float(sum(F.mse_loss(x, y) for x, y in zip(fa, fb)))


def _gram(f):
    b, c, h, w = f.shape
    flat = f.flatten(2)
    return flat @ flat.transpose(1, 2) / (c * h * w)


def style_loss(a, b, extractor) -> float:
    """Sum over tapped layers of squared Frobenius distance between
    normalized channel Gram matrices."""
    _check_pair(a, b)
    if extractor is None:
        raise ExtractorMissing("no feature extractor provided")
    with torch.no_grad():
        fa, fb = extractor(a), extractor(b)
    total = 0.0
    for x, y in zip(fa, fb):
        total += float((_gram(x) - _gram(y)).pow(2).sum(dim=(1, 2)).mean())
    return total


# ---------------------------------------------------------------------------
# report generation

@dataclass
class MetricReport:
    per_image: list
    aggregate: dict
    meta: dict
    reference: dict = field(default_factory=lambda: dict(REFERENCE_SCORES))

    def to_json(self) -> str:
        return json.dumps({"meta": self.meta, "reference": self.reference,
                           "aggregate": self.aggregate,
                           "per_image": self.per_image}, indent=2)

    def write(self, path, csv_path=None):
        Path(path).write_text(self.to_json())
        if csv_path:
            with open(csv_path, "w", newline="") as f:
                wr = csv.DictWriter(f, fieldnames=["id", "psnr", "ssim",
                                                   "perceptual", "style"])
                wr.writeheader()
                wr.writerows(self.per_image)


def iou_binarized(a, b) -> float:
    """IoU of the mid-gray-binarized luminance foregrounds."""
    w = LUMA_WEIGHTS.view(1, 3, 1, 1)
    fa = (_to01(a) * w).sum(dim=1) < 0.5
    fb = (_to01(b) * w).sum(dim=1) < 0.5
    inter = (fa & fb).sum()
    union = (fa | fb).sum()
    return float(inter) / max(float(union), 1.0)


def evaluate(bundle, manifest, mode="stylize", extractor=None,
             checkpoint_hash=None) -> MetricReport:
    """Run the requested pipeline op over every eval pair and score it
    against ground truth.

    Modes: "stylize" (texture style comes from a different held-out
    glyph of the same style), "destylize", and "identity" (copy the
    input; the no-model baseline row).
    """
    pairs = manifest.eval_pairs
    if not pairs:
        raise EmptyEvalError(str(manifest.root))
    extractor = extractor or build_extractor()
    by_style = {}
    for i, (f, t, sid, gid) in enumerate(pairs):
        by_style.setdefault(sid, []).append(i)
    rows = []
    extra = {}
    for i, (font_p, tex_p, sid, gid) in enumerate(pairs):
        font = manifest.load_tensor(font_p)
        tex_gt = manifest.load_tensor(tex_p)
        if mode == "stylize":
            group = by_style[sid]
            ref_i = group[(group.index(i) + 1) % len(group)]
            tex_ref = manifest.load_tensor(pairs[ref_i][1])
            pred, gt = pipeline.stylize(bundle, font, tex_ref), tex_gt
        elif mode == "destylize":
            pred, gt = pipeline.destylize(bundle, tex_gt), font
            extra.setdefault("iou", []).append(iou_binarized(pred, gt))
        elif mode == "identity":
            pred, gt = font, tex_gt
        else:
            raise ValueError(f"unknown eval mode {mode!r}")
        rows.append({"id": f"{sid}/{gid}",
                     "psnr": psnr(pred, gt), "ssim": ssim(pred, gt),
                     "perceptual": perceptual(pred, gt, extractor),
                     "style": style_loss(pred, gt, extractor)})
    agg = {k: sum(r[k] for r in rows) / len(rows)
           for k in ("psnr", "ssim", "perceptual", "style")}
    if "iou" in extra:
        agg["iou"] = sum(extra["iou"]) / len(extra["iou"])
    meta = {"mode": mode, "n_images": len(rows),
            "checkpoint_hash": checkpoint_hash or
            (bundle.param_hash() if bundle is not None else None),
            "corpus_hash": hashlib.sha256(
                json.dumps(manifest.meta, sort_keys=True).encode()).hexdigest()[:16]}
    return MetricReport(per_image=rows, aggregate=agg, meta=meta)
