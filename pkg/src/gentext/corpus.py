"""Synthetic desk-scale corpus: generation, loaders, and samplers.

Four unpaired image domains are produced:

  content/            canonical-font glyph masks, black on white
  font/<fid>/         per-font glyph images (deformed strokes)
  texture/<sid>/      fully rendered artistic glyphs
  eval/<sid>/         held-out PAIRED (font, texture) images, eval only

The trainer sees only independent draws from the first three domains
(texture images double as the font-reference domain); pairing exists
only in eval/.
"""

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image, ImageDraw
from scipy import ndimage

from .errors import ConfigError, EmptyDomainError, LayoutError
from .imaging import from_uint8

MANIFEST_VERSION = 1

LUMA = np.array([0.299, 0.587, 0.114])


def _rng_for(seed: int, *keys: str) -> np.random.Generator:
    """Deterministic per-item rng: stable across runs and platforms."""
    tags = [zlib.crc32(k.encode()) for k in keys]
    return np.random.default_rng(np.random.SeedSequence([seed, *tags]))


# ---------------------------------------------------------------------------
# glyph rendering

def _draw_glyph_mask(hw, rng) -> np.ndarray:
    """Random multi-stroke glyph as a binary (H, W) mask.

    Retries until the foreground fraction is legible (1%..60%).
    """
    h, w = hw
    for _ in range(30):
        im = Image.new("L", (w, h), 0)
        d = ImageDraw.Draw(im)
        n_strokes = int(rng.integers(3, 7))
        width = max(2, h // 12)
        margin = h // 8
        # lattice points keep strokes inside the frame
        pts = lambda: (
            int(rng.integers(margin, w - margin)),
            int(rng.integers(margin, h - margin)),
        )
        anchor = pts()
        for _ in range(n_strokes):
            kind = rng.integers(0, 3)
            p2 = pts()
            if kind == 0:
                d.line([anchor, p2], fill=255, width=width)
            elif kind == 1:
                # axis-aligned bar through a random point
                x, y = p2
                if rng.integers(0, 2):
                    d.line([(margin, y), (w - margin, y)], fill=255, width=width)
                else:
                    d.line([(x, margin), (x, h - margin)], fill=255, width=width)
            else:
                x, y = p2
                r = int(rng.integers(h // 8, h // 4))
                d.arc([x - r, y - r, x + r, y + r],
                      start=int(rng.integers(0, 360)),
                      end=int(rng.integers(0, 360)),
                      fill=255, width=width)
            if rng.integers(0, 2):
                anchor = p2
        mask = np.asarray(im) > 127
        frac = mask.mean()
        if 0.01 <= frac <= 0.60:
            return mask
    raise ConfigError(f"could not draw a legible glyph at {hw}")


@dataclass
class GlyphSpec:
    glyph_id: str
    mask: np.ndarray  # (H, W) bool
    font_id: str


@dataclass
class FontParams:
    """Cheap proxies for font differences: weight, shear, rounding."""
    font_id: str
    weight: int = 0      # >0 dilate, <0 erode iterations
    shear: float = 0.0   # horizontal shear factor
    rounding: float = 0.0  # gaussian sigma before re-threshold

    @classmethod
    def sample(cls, font_id: str, rng) -> "FontParams":
        return cls(
            font_id=font_id,
            weight=int(rng.integers(-1, 3)),
            shear=float(rng.uniform(-0.3, 0.3)),
            rounding=float(rng.uniform(0.0, 1.2)),
        )


def apply_font(mask: np.ndarray, fp: FontParams) -> np.ndarray:
    """Deform a canonical glyph mask into the given font."""
    out = mask.astype(float)
    if fp.shear:
        h, w = out.shape
        mat = np.array([[1.0, fp.shear], [0.0, 1.0]])
        offset = np.array([-fp.shear * w / 2.0, 0.0])
        out = ndimage.affine_transform(out, mat, offset=offset, order=1, cval=0.0)
    out = out > 0.5
    if fp.weight > 0:
        out = ndimage.binary_dilation(out, iterations=fp.weight)
    elif fp.weight < 0:
        out = ndimage.binary_erosion(out, iterations=-fp.weight)
    if fp.rounding > 0.05:
        out = ndimage.gaussian_filter(out.astype(float), fp.rounding) > 0.5
    return out


# ---------------------------------------------------------------------------
# texture rendering

FILL_KINDS = ("stripes", "checker", "gradient", "noise", "solid")


def _dark_color(rng) -> np.ndarray:
    """RGB in [0,1] with luminance <= ~0.38 (binarizes as foreground)."""
    c = rng.uniform(0.0, 1.0, size=3)
    lum = float(LUMA @ c)
    target = rng.uniform(0.05, 0.38)
    if lum > 1e-6:
        c = np.clip(c * (target / lum), 0.0, 1.0)
    return c


def _light_color(rng) -> np.ndarray:
    """RGB in [0,1] with luminance >= ~0.8 (binarizes as background)."""
    c = rng.uniform(0.6, 1.0, size=3)
    lum = float(LUMA @ c)
    target = rng.uniform(0.8, 0.97)
    if lum < target:
        # blend toward white until the luminance target is met
        t = (target - lum) / max(1.0 - lum, 1e-6)
        c = c + t * (1.0 - c)
    return np.clip(c, 0.0, 1.0)


@dataclass
class TextureRecipe:
    """Deterministic procedural texture: same (style_id, glyph) -> same image."""
    style_id: str
    fill_kind: str
    fill_params: dict
    outline_color: np.ndarray | None
    outline_width: int
    shadow_offset: tuple | None
    shadow_color: np.ndarray | None
    background: np.ndarray

    @classmethod
    def sample(cls, style_id: str, rng) -> "TextureRecipe":
        kind = FILL_KINDS[int(rng.integers(0, len(FILL_KINDS)))]
        c1, c2 = _dark_color(rng), _dark_color(rng)
        params = {"c1": c1, "c2": c2}
        if kind == "stripes":
            params["period"] = int(rng.integers(3, 9))
            params["vertical"] = bool(rng.integers(0, 2))
        elif kind == "checker":
            params["size"] = int(rng.integers(3, 9))
        elif kind == "gradient":
            params["vertical"] = bool(rng.integers(0, 2))
        elif kind == "noise":
            params["scale"] = int(rng.integers(4, 10))
            params["seed"] = int(rng.integers(0, 2**31))
        use_outline = bool(rng.integers(0, 2))
        use_shadow = bool(rng.integers(0, 2))
        shadow = None
        shadow_color = None
        if use_shadow:
            shadow = (int(rng.integers(1, 3)), int(rng.integers(1, 3)))
            # mid-light so the shadow never binarizes as glyph foreground
            g = rng.uniform(0.58, 0.72)
            shadow_color = np.array([g, g, g]) * rng.uniform(0.9, 1.0, size=3)
        return cls(
            style_id=style_id,
            fill_kind=kind,
            fill_params=params,
            outline_color=_dark_color(rng) if use_outline else None,
            outline_width=1 if use_outline else 0,
            shadow_offset=shadow,
            shadow_color=shadow_color,
            background=_light_color(rng),
        )


def _fill_pattern(recipe: TextureRecipe, hw) -> np.ndarray:
    h, w = hw
    p = recipe.fill_params
    c1, c2 = p["c1"], p["c2"]
    yy, xx = np.mgrid[0:h, 0:w]
    kind = recipe.fill_kind
    if kind == "stripes":
        coord = yy if p["vertical"] else xx
        t = (coord // p["period"]) % 2
    elif kind == "checker":
        t = ((yy // p["size"]) + (xx // p["size"])) % 2
    elif kind == "gradient":
        coord = yy if p["vertical"] else xx
        t = coord / max(h - 1, w - 1, 1)
    elif kind == "noise":
        g = np.random.default_rng(p["seed"])
        s = p["scale"]
        coarse = g.uniform(0, 1, size=(h // s + 2, w // s + 2))
        t = ndimage.zoom(coarse, s, order=1)[:h, :w]
    else:  # solid
        t = np.zeros((h, w))
    t = np.asarray(t, dtype=float)[..., None]
    return c1 * (1 - t) + c2 * t


def render_textured(mask: np.ndarray, recipe: TextureRecipe) -> np.ndarray:
    """Compose shadow, outline, and fill over the background.

    Returns (H, W, 3) float in [0, 1]. The binarized (mid-gray) result
    overlaps the input mask with IoU >= 0.5 by construction: fills and
    outlines are dark, background and shadow are light.
    """
    h, w = mask.shape
    img = np.broadcast_to(recipe.background, (h, w, 3)).copy()
    if recipe.shadow_offset is not None:
        dy, dx = recipe.shadow_offset
        sh = np.zeros_like(mask)
        sh[dy:, dx:] = mask[: h - dy, : w - dx]
        sh &= ~mask
        img[sh] = recipe.shadow_color
    if recipe.outline_width > 0:
        ring = ndimage.binary_dilation(mask, iterations=recipe.outline_width) & ~mask
        img[ring] = recipe.outline_color
    img[mask] = _fill_pattern(recipe, (h, w))[mask]
    return img


def _save_rgb(img01: np.ndarray, path: Path) -> None:
    arr = np.clip(np.round(img01 * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def _save_mask(mask: np.ndarray, path: Path) -> None:
    # black glyph on white background
    arr = np.where(mask[..., None], 0.0, 1.0)
    _save_rgb(np.repeat(arr, 3, axis=2), path)


# ---------------------------------------------------------------------------
# manifest + batches

@dataclass
class CorpusManifest:
    root: Path
    hw: tuple
    n_styles: int
    styles: list
    domains: dict            # name -> list of Paths (font/fontref/texture/content)
    eval_pairs: list = field(default_factory=list)  # (font_png, tex_png, sid, gid)
    meta: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    def load_tensor(self, path) -> torch.Tensor:
        """Cached canonical-tensor load of one corpus image."""
        key = str(path)
        if key not in self._cache:
            with Image.open(path) as im:
                arr = np.asarray(im.convert("RGB"))
            self._cache[key] = from_uint8(arr)
        return self._cache[key]

    @classmethod
    def load(cls, root) -> "CorpusManifest":
        root = Path(root)
        mf = root / "manifest.json"
        if not mf.exists():
            raise LayoutError(str(mf))
        meta = json.loads(mf.read_text())
        domains = {
            "content": sorted((root / "content").glob("*.png")),
            "font": sorted((root / "font").glob("*/*.png")),
            "texture": sorted((root / "texture").glob("*/*.png")),
        }
        domains["fontref"] = domains["texture"]
        styles = sorted(p.name for p in (root / "texture").iterdir() if p.is_dir())
        pairs = []
        evroot = root / "eval"
        if evroot.exists():
            for sdir in sorted(evroot.iterdir()):
                for f in sorted(sdir.glob("*.font.png")):
                    gid = f.name[: -len(".font.png")]
                    t = sdir / f"{gid}.tex.png"
                    if t.exists():
                        pairs.append((f, t, sdir.name, gid))
        return cls(root=root, hw=tuple(meta["hw"]), n_styles=meta["n_styles"],
                   styles=styles, domains=domains, eval_pairs=pairs, meta=meta)


@dataclass
class DomainBatch:
    """Independent draws from the four domains; carries no pairing ids."""
    X_F: torch.Tensor
    X_F_R: torch.Tensor
    X_T: torch.Tensor
    X_C: torch.Tensor


def generate_corpus(out_dir, n_glyphs, n_fonts, n_styles, hw, seed) -> CorpusManifest:
    """Write the full synthetic corpus tree; deterministic given seed."""
    if n_glyphs < 4 or n_fonts < 2 or n_styles < 2:
        raise ConfigError("need n_glyphs >= 4, n_fonts >= 2, n_styles >= 2")
    h, w = hw
    if h % 16 or w % 16:
        raise ConfigError(f"hw must be divisible by 16, got {hw}")

    root = Path(out_dir)
    (root / "content").mkdir(parents=True, exist_ok=True)

    gids = [f"g{i:03d}" for i in range(n_glyphs)]
    fids = [f"f{i:03d}" for i in range(n_fonts)]
    sids = [f"s{i:03d}" for i in range(n_styles)]
    n_eval = max(2, n_glyphs // 4)
    eids = [f"e{i:03d}" for i in range(n_eval)]

    masks = {g: _draw_glyph_mask(hw, _rng_for(seed, "glyph", g)) for g in gids + eids}
    fonts = {f: FontParams.sample(f, _rng_for(seed, "font", f)) for f in fids}
    recipes = {s: TextureRecipe.sample(s, _rng_for(seed, "style", s)) for s in sids}

    for g in gids:
        _save_mask(masks[g], root / "content" / f"{g}.png")
    for f in fids:
        d = root / "font" / f
        d.mkdir(parents=True, exist_ok=True)
        for g in gids:
            _save_mask(apply_font(masks[g], fonts[f]), d / f"{g}.png")
    for s in sids:
        d = root / "texture" / s
        d.mkdir(parents=True, exist_ok=True)
        for g in gids:
            # texture glyphs use a per-(style, glyph) font for diversity
            rr = _rng_for(seed, "texfont", s, g)
            fp = fonts[fids[int(rr.integers(0, n_fonts))]]
            _save_rgb(render_textured(apply_font(masks[g], fp), recipes[s]),
                      d / f"{g}.png")
    # paired eval split: held-out glyphs, canonical font + textured render
    for s in sids:
        d = root / "eval" / s
        d.mkdir(parents=True, exist_ok=True)
        for e in eids:
            _save_mask(masks[e], d / f"{e}.font.png")
            _save_rgb(render_textured(masks[e], recipes[s]), d / f"{e}.tex.png")

    meta = {"version": MANIFEST_VERSION, "hw": [h, w], "n_glyphs": n_glyphs,
            "n_fonts": n_fonts, "n_styles": n_styles, "seed": seed}
    (root / "manifest.json").write_text(json.dumps(meta, sort_keys=True))
    return CorpusManifest.load(root)


def sample_batch(manifest: CorpusManifest, bs: int, rng) -> DomainBatch:
    """Four independent uniform draws per slot; reproducible under rng."""
    slots = {}
    for name, key in (("X_F", "font"), ("X_F_R", "fontref"),
                      ("X_T", "texture"), ("X_C", "content")):
        paths = manifest.domains[key]
        if not paths:
            raise EmptyDomainError(key)
        idx = rng.integers(0, len(paths), size=bs)
        slots[name] = torch.cat([manifest.load_tensor(paths[i]) for i in idx], dim=0)
    return DomainBatch(**slots)


def load_te141k(root) -> CorpusManifest:
    """Read a TE141K-layout tree.

    Expected layout: <root>/<style>/<id>.png stylized images plus
    <root>/glyph/<id>.png font images. Pairing by <id> is retained only
    in the eval pair list.
    """
    root = Path(root)
    if not root.exists():
        raise LayoutError(str(root))
    glyph_dir = root / "glyph"
    if not glyph_dir.is_dir():
        raise LayoutError(str(glyph_dir))
    style_dirs = sorted(p for p in root.iterdir() if p.is_dir() and p.name != "glyph")
    if not style_dirs:
        raise LayoutError(str(root / "<style>"))
    glyphs = sorted(glyph_dir.glob("*.png"))
    if not glyphs:
        raise LayoutError(str(glyph_dir / "*.png"))
    textures = []
    pairs = []
    for sdir in style_dirs:
        imgs = sorted(sdir.glob("*.png"))
        if not imgs:
            raise LayoutError(str(sdir / "*.png"))
        textures.extend(imgs)
        for img in imgs:
            g = glyph_dir / img.name
            if g.exists():
                pairs.append((g, img, sdir.name, img.stem))
    with Image.open(glyphs[0]) as im:
        w, h = im.size
    domains = {"content": glyphs, "font": glyphs,
               "texture": textures, "fontref": textures}
    return CorpusManifest(root=root, hw=(h, w), n_styles=len(style_dirs),
                          styles=[p.name for p in style_dirs], domains=domains,
                          eval_pairs=pairs,
                          meta={"version": MANIFEST_VERSION, "n_styles": len(style_dirs)})
