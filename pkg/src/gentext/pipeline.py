"""Inference-time composition over a trained (immutable) bundle:
stylize, destylize, font transfer, the chained end-to-end generation,
texture interpolation, and spatial-gradient blending."""

from dataclasses import dataclass

import torch

from .errors import MissingInputError, ModelNotReady, RangeError, ShapeError
from .nets import ModelBundle, ones_code

MODES = ("stylize", "destylize", "font_transfer", "end_to_end",
         "interpolate", "blend")


@dataclass
class GenerationRequest:
    mode: str
    content: torch.Tensor | None = None
    font_ref: torch.Tensor | None = None
    texture_ref: torch.Tensor | None = None
    texture_ref_b: torch.Tensor | None = None
    alpha: float = 0.0


def _require(bundle):
    if bundle is None or not isinstance(bundle, ModelBundle):
        raise ModelNotReady("no model bundle loaded")
    return bundle


def stylize(bundle, font_img, texture_ref):
    """Render font_img in the texture style of texture_ref."""
    _require(bundle)
    with torch.inference_mode():
        z_sp, _ = bundle.e(font_img)
        _, z_gl = bundle.e(texture_ref)
        return bundle.g_t(z_sp, z_gl)


def destylize(bundle, font_ref):
    """Remove texture, keep structure: decode toward the all-ones
    plain-font code."""
    _require(bundle)
    with torch.inference_mode():
        z_sp, _ = bundle.e(font_ref)
        return bundle.g_t(z_sp, ones_code(font_ref.shape[0], bundle.dims.d_gl))


def font_transfer(bundle, content, font_img):
    """Re-draw the content glyph in font_img's font style."""
    _require(bundle)
    with torch.inference_mode():
        z_sp, _ = bundle.e(content)
        _, z_gl = bundle.e(font_img)
        return bundle.g_f(z_sp, z_gl)


def end_to_end(bundle, req: GenerationRequest):
    """Destylize -> font transfer -> stylize chain; all intermediates
    are returned for inspection."""
    for slot in ("font_ref", "content", "texture_ref"):
        if getattr(req, slot) is None:
            raise MissingInputError(slot)
    o_des = destylize(bundle, req.font_ref)
    o_font = font_transfer(bundle, req.content, o_des)
    o_sty = stylize(bundle, o_font, req.texture_ref)
    return {"o_des": o_des, "o_font": o_font, "o_sty": o_sty}


def interpolate_texture(bundle, font_img, tex_a, tex_b, alphas):
    """Decode along the linear path between the two global codes.

    Endpoints are exact: alpha 0/1 reuse the untouched endpoint codes,
    so those outputs are bitwise equal to plain stylization.
    """
    _require(bundle)
    for a in alphas:
        if not 0.0 <= a <= 1.0:
            raise RangeError(f"alpha {a} outside [0, 1]")
    with torch.inference_mode():
        z_sp, _ = bundle.e(font_img)
        _, z_a = bundle.e(tex_a)
        _, z_b = bundle.e(tex_b)
        out = []
        for a in alphas:
            if a == 0.0:
                z = z_a
            elif a == 1.0:
                z = z_b
            else:
                z = z_a + a * (z_b - z_a)
            out.append(bundle.g_t(z_sp, z))
        return out


def blend_spatial(bundle, instance_img, tex_left, tex_right):
    """Spatially graded styling: per-latent-column ramp between the two
    global codes, decoded once.

    With tex_left == tex_right the ramp collapses (z + w*(z-z) == z
    exactly), giving bitwise equality with plain stylization.
    """
    _require(bundle)
    if instance_img.shape[3] % 16:
        raise ShapeError("instance width must be divisible by 16")
    with torch.inference_mode():
        z_sp, _ = bundle.e(instance_img)
        _, z_l = bundle.e(tex_left)
        _, z_r = bundle.e(tex_right)
        w_lat = z_sp.shape[-1]
        ramp = torch.linspace(0.0, 1.0, w_lat)  # w(x) = x / (W_lat - 1)
        style_map = (z_l[:, :, None, None]
                     + ramp[None, None, None, :] * (z_r - z_l)[:, :, None, None])
        return bundle.g_t(z_sp, style_map.contiguous())


def run_request(bundle, req: GenerationRequest):
    """Dispatch a GenerationRequest to the matching operation."""
    if req.mode == "stylize":
        _need(req, "font_ref", "texture_ref")
        return {"o_sty": stylize(bundle, req.font_ref, req.texture_ref)}
    if req.mode == "destylize":
        _need(req, "font_ref")
        return {"o_des": destylize(bundle, req.font_ref)}
    if req.mode == "font_transfer":
        _need(req, "content", "font_ref")
        return {"o_font": font_transfer(bundle, req.content, req.font_ref)}
    if req.mode == "end_to_end":
        return end_to_end(bundle, req)
    if req.mode == "interpolate":
        _need(req, "font_ref", "texture_ref", "texture_ref_b")
        imgs = interpolate_texture(bundle, req.font_ref, req.texture_ref,
                                   req.texture_ref_b, [req.alpha])
        return {"o_sty": imgs[0]}
    if req.mode == "blend":
        _need(req, "font_ref", "texture_ref", "texture_ref_b")
        return {"o_sty": blend_spatial(bundle, req.font_ref, req.texture_ref,
                                       req.texture_ref_b)}
    raise RangeError(f"unknown mode {req.mode!r}")


def _need(req, *slots):
    for slot in slots:
        if getattr(req, slot) is None:
            raise MissingInputError(slot)
