"""Learnable networks: encoder, the two style generators, domain and
patch co-occurrence discriminators, and NCE projection heads.

Conventions fixed across the package: leaky-rectifier slope 0.2,
reflect padding, no batch statistics anywhere in E/G (eval mode is
exactly deterministic), residual blocks scaled by 1/sqrt(2).
"""

import hashlib
import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ShapeError, VersionError
from .imaging import DIVISOR

LRELU_SLOPE = 0.2
CKPT_VERSION = 1

# encoder layers tapped for NCE features: stride-4 and stride-8 maps
DEFAULT_NCE_LAYERS = (2, 3)


def lrelu(x):
    return F.leaky_relu(x, LRELU_SLOPE)


def _conv(cin, cout, k=3):
    return nn.Conv2d(cin, cout, k, padding=k // 2,
                     padding_mode="reflect" if k > 1 else "zeros")


class DownResBlock(nn.Module):
    """Residual block with 2x average-pool downsampling."""

    def __init__(self, cin, cout):
        super().__init__()
        self.conv1 = _conv(cin, cout)
        self.conv2 = _conv(cout, cout)
        self.skip = nn.Conv2d(cin, cout, 1, bias=False)

    def forward(self, x):
        h = lrelu(self.conv1(x))
        h = F.avg_pool2d(lrelu(self.conv2(h)), 2)
        s = F.avg_pool2d(self.skip(x), 2)
        return (h + s) / math.sqrt(2)


@dataclass
class Dims:
    """Architecture dimensions; scaled for desk runs, all configurable."""
    c_sp: int = 8
    d_gl: int = 512
    base: int = 16
    max_ch: int = 128
    nce_k: int = 256
    nce_layers: tuple = DEFAULT_NCE_LAYERS

    def as_dict(self):
        return {"c_sp": self.c_sp, "d_gl": self.d_gl, "base": self.base,
                "max_ch": self.max_ch, "nce_k": self.nce_k,
                "nce_layers": list(self.nce_layers)}


@dataclass
class LatentPair:
    """Spatial structure code plus global style code."""
    z_sp: torch.Tensor  # (B, C_sp, H/16, W/16)
    z_gl: torch.Tensor  # (B, D_gl)


class Encoder(nn.Module):
    """Four downsampling residual blocks, two conv layers, then the
    spatial (1x1 conv) and global (pool + affine) branches."""

    def __init__(self, dims: Dims):
        super().__init__()
        self.dims = dims
        chans = [dims.base]
        for _ in range(4):
            chans.append(min(chans[-1] * 2, dims.max_ch))
        self.conv_in = _conv(3, chans[0])
        self.blocks = nn.ModuleList(
            DownResBlock(chans[i], chans[i + 1]) for i in range(4))
        c = chans[-1]
        self.conv1 = _conv(c, c)
        self.conv2 = _conv(c, c)
        self.sp_head = nn.Conv2d(c, dims.c_sp, 1)
        self.gl_head = nn.Linear(c, dims.d_gl)
        # feature channels per tap layer id (0 = stride-1, i = stride-2^i)
        self.tap_channels = {i: chans[i] for i in range(5)}

    def forward(self, x, return_feats=False):
        if x.shape[2] % DIVISOR or x.shape[3] % DIVISOR:
            raise ShapeError(f"encoder input dims must be divisible by "
                             f"{DIVISOR}, got {tuple(x.shape[2:])}")
        feats = []
        h = lrelu(self.conv_in(x))
        feats.append(h)
        for b in self.blocks:
            h = b(h)
            feats.append(h)
        h = lrelu(self.conv1(h))
        h = lrelu(self.conv2(h))
        z_sp = self.sp_head(h)
        z_gl = self.gl_head(h.mean(dim=(2, 3)))
        if return_feats:
            return z_sp, z_gl, feats
        return z_sp, z_gl


class ModResBlock(nn.Module):
    """Residual block whose features are modulated per-channel by the
    global code (optionally spatially varying along width)."""

    def __init__(self, cin, cout, d_gl, up=False):
        super().__init__()
        self.up = up
        self.affine1 = nn.Linear(d_gl, 2 * cin)
        self.affine2 = nn.Linear(d_gl, 2 * cout)
        self.conv1 = _conv(cin, cout)
        self.conv2 = _conv(cout, cout)
        self.skip = nn.Conv2d(cin, cout, 1, bias=False)

    @staticmethod
    def _mod(x, style_map, affine):
        p = torch.einsum("bdhw,cd->bchw", style_map, affine.weight)
        p = p + affine.bias.view(1, -1, 1, 1)
        if p.shape[2:] != x.shape[2:]:
            p = F.interpolate(p, size=x.shape[2:], mode="bilinear",
                              align_corners=True)
        scale, shift = p.chunk(2, dim=1)
        return F.instance_norm(x) * (1 + scale) + shift

    def forward(self, x, style_map):
        if self.up:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
        h = self.conv1(lrelu(self._mod(x, style_map, self.affine1)))
        h = self.conv2(lrelu(self._mod(h, style_map, self.affine2)))
        return (h + self.skip(x)) / math.sqrt(2)


class Generator(nn.Module):
    """Two resolution-keeping + four upsampling modulated residual
    blocks; fully convolutional, tanh output."""

    def __init__(self, dims: Dims):
        super().__init__()
        self.dims = dims
        m = dims.max_ch
        widths = [m, m, m, max(m // 2, dims.base),
                  max(m // 4, dims.base), dims.base]
        self.conv_in = _conv(dims.c_sp, widths[0])
        blocks = [ModResBlock(widths[0], widths[1], dims.d_gl, up=False),
                  ModResBlock(widths[1], widths[1], dims.d_gl, up=False)]
        cur = widths[1]
        for nxt in widths[2:]:
            blocks.append(ModResBlock(cur, nxt, dims.d_gl, up=True))
            cur = nxt
        self.blocks = nn.ModuleList(blocks)
        self.to_rgb = _conv(cur, 3)

    def forward(self, z_sp, z_gl):
        if z_sp.shape[0] != z_gl.shape[0]:
            raise ShapeError(f"batch mismatch: z_sp {z_sp.shape[0]} vs "
                             f"z_gl {z_gl.shape[0]}")
        style_map = as_style_map(z_gl, z_sp.shape[-1])
        h = self.conv_in(z_sp)
        for b in self.blocks:
            h = b(h, style_map)
        return torch.tanh(self.to_rgb(lrelu(h)))


def as_style_map(z_gl, w_lat):
    """Normalize a global code to a (B, D, 1, W_lat) modulation map.

    Vectors are broadcast to identical columns; already-spatial maps
    pass through, so spatial blending shares this single code path.
    """
    if z_gl.dim() == 2:
        return z_gl[:, :, None, None].expand(-1, -1, 1, w_lat).contiguous()
    if z_gl.dim() == 4:
        return z_gl.contiguous()
    raise ShapeError(f"global code must be rank 2 or 4, got rank {z_gl.dim()}")


class Discriminator(nn.Module):
    """Residual downsampling stack to a scalar realness logit."""

    def __init__(self, dims: Dims):
        super().__init__()
        chans = [dims.base]
        for _ in range(4):
            chans.append(min(chans[-1] * 2, dims.max_ch))
        self.conv_in = _conv(3, chans[0])
        self.blocks = nn.ModuleList(
            DownResBlock(chans[i], chans[i + 1]) for i in range(4))
        self.conv_out = _conv(chans[-1], chans[-1])
        self.fc = nn.Linear(chans[-1], 1)

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != 3:
            raise ShapeError(f"expected (B, 3, H, W), got {tuple(x.shape)}")
        h = lrelu(self.conv_in(x))
        for b in self.blocks:
            h = b(h)
        h = lrelu(self.conv_out(h))
        return self.fc(h.mean(dim=(2, 3))).squeeze(1)


PATCH_RES = 16  # all crops are resampled to this side before featurizing


class PatchDiscriminator(nn.Module):
    """Co-occurrence classifier: does a candidate patch share texture
    statistics with (the average of) reference patches?"""

    def __init__(self, dims: Dims):
        super().__init__()
        c = dims.max_ch
        self.features = nn.Sequential(
            nn.Conv2d(3, c // 4, 3, stride=2, padding=1),
            nn.LeakyReLU(LRELU_SLOPE),
            nn.Conv2d(c // 4, c // 2, 3, stride=2, padding=1),
            nn.LeakyReLU(LRELU_SLOPE),
            nn.Conv2d(c // 2, c, 3, stride=2, padding=1),
            nn.LeakyReLU(LRELU_SLOPE),
        )
        feat_dim = c * (PATCH_RES // 8) ** 2
        self.proj = nn.Linear(feat_dim, c)
        self.classifier = nn.Sequential(
            nn.Linear(2 * c, c),
            nn.LeakyReLU(LRELU_SLOPE),
            nn.Linear(c, 1),
        )

    def featurize(self, patches):
        h = self.features(patches)
        return self.proj(h.flatten(1))

    def forward(self, cand_feats, ref_mean):
        # cand_feats (B, n, C); ref_mean (B, C)
        ref = ref_mean[:, None, :].expand_as(cand_feats)
        logits = self.classifier(torch.cat([cand_feats, ref], dim=2))
        return logits.squeeze(2).flatten()


def crop_patches(img, n_patches, rng):
    """n random square crops, side uniform in [H/8, H/4], resampled to
    PATCH_RES. Returns (B, n, 3, PATCH_RES, PATCH_RES)."""
    b, _, h, w = img.shape
    lo, hi = h // 8, h // 4
    if lo < 4:
        raise ShapeError(f"image too small for patches: H/8 = {lo} < 4 px")
    out = []
    for _ in range(n_patches):
        side = int(torch.randint(lo, hi + 1, (1,), generator=rng).item())
        y = int(torch.randint(0, h - side + 1, (1,), generator=rng).item())
        x = int(torch.randint(0, w - side + 1, (1,), generator=rng).item())
        crop = img[:, :, y:y + side, x:x + side]
        out.append(F.interpolate(crop, size=(PATCH_RES, PATCH_RES),
                                 mode="bilinear", align_corners=False))
    return torch.stack(out, dim=1)


def discriminate_patches(d_patch, candidate, reference, n_patches, rng):
    """Score candidate patches for co-occurrence with reference patches.

    Returns one logit per candidate patch, flattened over the batch.
    """
    if candidate.shape[0] != reference.shape[0]:
        raise ShapeError("candidate/reference batch sizes differ")
    cand = crop_patches(candidate, n_patches, rng)
    ref = crop_patches(reference, n_patches, rng)
    b, n = cand.shape[:2]
    cand_feats = d_patch.featurize(cand.flatten(0, 1)).view(b, n, -1)
    ref_mean = d_patch.featurize(ref.flatten(0, 1)).view(b, n, -1).mean(dim=1)
    return d_patch(cand_feats, ref_mean)


class NCEHead(nn.Module):
    """2-layer projection to the K-dim embedded space, one per tapped
    encoder layer (heads are not shared across layers)."""

    def __init__(self, cin, k):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(cin, k), nn.ReLU(), nn.Linear(k, k))

    def forward(self, x):
        return F.normalize(self.net(x), dim=-1)


def build_nce_heads(encoder: Encoder, dims: Dims) -> nn.ModuleDict:
    return nn.ModuleDict({
        str(lid): NCEHead(encoder.tap_channels[lid], dims.nce_k)
        for lid in dims.nce_layers
    })


def nce_features(encoder, nce_heads, x, layer_ids, pixel_idxs):
    """Project selected feature-map pixels into unit-norm K-dim vectors.

    pixel_idxs: one 1-D index array per layer, flat over that layer's
    H*W grid. Returns one (B*n_pix, K) tensor per layer.
    """
    _, _, feats = encoder(x, return_feats=True)
    out = []
    for lid, idxs in zip(layer_ids, pixel_idxs):
        f = feats[lid]
        b, c, h, w = f.shape
        idxs = torch.as_tensor(idxs, dtype=torch.long, device=f.device)
        if idxs.numel() and (idxs.min() < 0 or idxs.max() >= h * w):
            raise IndexError(f"pixel index out of range for layer {lid} "
                             f"({h}x{w} grid)")
        flat = f.flatten(2).permute(0, 2, 1)  # (B, HW, C)
        sel = flat[:, idxs, :].reshape(b * idxs.numel(), c)
        out.append(nce_heads[str(lid)](sel))
    return out


def ones_code(b: int, d_gl: int) -> torch.Tensor:
    """The constant all-ones global code designating plain-font texture."""
    return torch.ones(b, d_gl)


def encode(encoder, x) -> LatentPair:
    z_sp, z_gl = encoder(x)
    return LatentPair(z_sp=z_sp, z_gl=z_gl)


# ---------------------------------------------------------------------------
# bundle + checkpointing

@dataclass
class ModelBundle:
    """All networks plus the training step counter. G_T/G_F (and
    D_F/D_T) share structure, never weights."""
    e: Encoder
    g_t: Generator
    g_f: Generator
    d_f: Discriminator
    d_t: Discriminator
    d_patch: PatchDiscriminator
    nce_heads: nn.ModuleDict
    dims: Dims
    step: int = 0

    _NAMES = ("e", "g_t", "g_f", "d_f", "d_t", "d_patch", "nce_heads")

    def modules(self):
        return {n: getattr(self, n) for n in self._NAMES}

    def generator_parameters(self):
        for n in ("e", "g_t", "g_f", "nce_heads"):
            yield from getattr(self, n).parameters()

    def discriminator_parameters(self):
        for n in ("d_f", "d_t", "d_patch"):
            yield from getattr(self, n).parameters()

    def train(self):
        for m in self.modules().values():
            m.train()
        return self

    def eval(self):
        for m in self.modules().values():
            m.eval()
        return self

    def param_hash(self) -> str:
        h = hashlib.sha256()
        for name, mod in sorted(self.modules().items()):
            for k, v in sorted(mod.state_dict().items()):
                h.update(f"{name}.{k}".encode())
                h.update(v.detach().cpu().contiguous().numpy().tobytes())
        return h.hexdigest()


def build_bundle(dims: Dims = None, seed: int = 0) -> ModelBundle:
    dims = dims or Dims()
    g = torch.Generator().manual_seed(seed)
    with torch.random.fork_rng():
        torch.manual_seed(int(torch.randint(0, 2**31, (1,), generator=g).item()))
        e = Encoder(dims)
        bundle = ModelBundle(
            e=e, g_t=Generator(dims), g_f=Generator(dims),
            d_f=Discriminator(dims), d_t=Discriminator(dims),
            d_patch=PatchDiscriminator(dims),
            nce_heads=build_nce_heads(e, dims), dims=dims,
        )
    return bundle.eval()


def config_hash(dims: Dims) -> str:
    return hashlib.sha256(repr(sorted(dims.as_dict().items())).encode()).hexdigest()[:16]


def save_bundle(bundle: ModelBundle, path, resolution=None) -> None:
    payload = {
        "version": CKPT_VERSION,
        "meta": {
            "step": bundle.step,
            "config_hash": config_hash(bundle.dims),
            "resolution": list(resolution) if resolution else None,
            "dims": bundle.dims.as_dict(),
        },
        "state": {n: m.state_dict() for n, m in bundle.modules().items()},
    }
    torch.save(payload, path)


def load_bundle(path) -> ModelBundle:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("version") != CKPT_VERSION:
        raise VersionError(f"checkpoint version {payload.get('version')!r}, "
                           f"expected {CKPT_VERSION}")
    d = payload["meta"]["dims"]
    dims = Dims(c_sp=d["c_sp"], d_gl=d["d_gl"], base=d["base"],
                max_ch=d["max_ch"], nce_k=d["nce_k"],
                nce_layers=tuple(d["nce_layers"]))
    bundle = build_bundle(dims)
    for n, m in bundle.modules().items():
        m.load_state_dict(payload["state"][n])
    bundle.step = payload["meta"]["step"]
    return bundle.eval()
