"""Objective terms: L1 reconstruction, non-saturating adversarial
losses with lazy R1, patchwise contrastive (NCE) structure loss, patch
co-occurrence loss, and their composition into the per-stage totals.

Every adversarial symbol in the stage objectives is realized as the
non-saturating softplus pair; the loss menus are asymmetric across
stages: stylization uses NCE + patch, destylization uses NCE only, font
transfer uses neither.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import ConfigError, ShapeError, StageError
from .nets import DEFAULT_NCE_LAYERS, discriminate_patches, nce_features, ones_code

STAGES = ("Sty", "Des", "Font")


@dataclass
class NCEConfig:
    tau: float = 0.07
    n_neg: int = 255
    n_query: int = 256
    layer_ids: tuple = DEFAULT_NCE_LAYERS

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError("tau must be > 0")
        if self.n_neg < 1:
            raise ConfigError("n_neg must be >= 1")


@dataclass
class LossWeights:
    w_l1: float = 1.0
    w_adv: float = 1.0
    w_nce: float = 1.0
    w_patch: float = 1.0
    r1_gamma: float = 10.0
    r1_interval: int = 16

    def __post_init__(self):
        for name in ("w_l1", "w_adv", "w_nce", "w_patch", "r1_gamma"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.r1_interval < 1:
            raise ConfigError("r1_interval must be >= 1")


def l1(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference over all elements."""
    if a.shape != b.shape:
        raise ShapeError(f"l1 shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    return (a - b).abs().mean()


def adv_g(logits_fake: torch.Tensor) -> torch.Tensor:
    """Non-saturating generator loss: mean softplus(-logit)."""
    return F.softplus(-logits_fake).mean()


def adv_d(logits_real: torch.Tensor, logits_fake: torch.Tensor) -> torch.Tensor:
    """Non-saturating discriminator loss."""
    return F.softplus(-logits_real).mean() + F.softplus(logits_fake).mean()


def r1_penalty(d_fn, x_real: torch.Tensor, gamma: float) -> torch.Tensor:
    """(gamma/2) * E[ ||grad_x D(x)||^2 ] on real samples.

    d_fn maps an image batch to per-sample logits; callers apply this
    lazily (every r1_interval d-steps, scaled by the interval).
    """
    x = x_real.detach().requires_grad_(True)
    out = d_fn(x)
    grad = torch.autograd.grad(out.sum(), x, create_graph=True)[0]
    return grad.pow(2).sum(dim=(1, 2, 3)).mean() * (gamma / 2.0)


def nce_loss(feats_q, feats_k, cfg: NCEConfig) -> torch.Tensor:
    """Contrastive structure loss over aligned pixel features.

    feats_q/feats_k: lists of (n_pix, K) unit-norm features on the same
    pixel grid; queries come from the output image, keys from the
    structure source. The positive for query i is key i; the N
    negatives are N other-position keys of the same image (cyclic
    offsets, so the loss is invariant to how the set is ordered).
    """
    if len(feats_q) != len(feats_k):
        raise ConfigError("feats_q and feats_k must align layer-wise")
    per_layer = []
    for fq, fk in zip(feats_q, feats_k):
        n = fq.shape[0]
        if cfg.n_neg > n - 1:
            raise ConfigError(f"n_neg={cfg.n_neg} exceeds available "
                              f"negatives ({n - 1})")
        fk = fk.detach()
        sim = fq @ fk.t() / cfg.tau  # (n, n)
        pos = sim.diagonal()
        rows = torch.arange(n, device=sim.device)
        offs = torch.arange(1, cfg.n_neg + 1, device=sim.device)
        neg = sim[rows[:, None], (rows[:, None] + offs[None, :]) % n]
        logits = torch.cat([pos[:, None], neg], dim=1)
        per_layer.append((torch.logsumexp(logits, dim=1) - pos).mean())
    return torch.stack(per_layer).mean()


def patch_loss_g(d_patch, out, ref, rng, n_patches=8) -> torch.Tensor:
    """Generator side: output patches should co-occur with reference
    patches."""
    return adv_g(discriminate_patches(d_patch, out, ref, n_patches, rng))


def patch_loss_d(d_patch, out, ref, rng, n_patches=8) -> torch.Tensor:
    """Discriminator side: real = (ref vs ref) patch pairs, fake =
    (output vs ref)."""
    real = discriminate_patches(d_patch, ref, ref, n_patches, rng)
    fake = discriminate_patches(d_patch, out.detach(), ref, n_patches, rng)
    return adv_d(real, fake)


def _sample_pixel_idxs(encoder, x, cfg: NCEConfig, rng):
    """Random query pixels per tapped layer, clamped to the grid size."""
    idxs = []
    h, w = x.shape[2], x.shape[3]
    for lid in cfg.layer_ids:
        gh, gw = h >> lid, w >> lid
        n = min(cfg.n_query, gh * gw)
        perm = torch.randperm(gh * gw, generator=rng)[:n]
        idxs.append(perm)
    return idxs


def _stage_nce(bundle, out_img, src_img, cfg: NCEConfig, rng) -> torch.Tensor:
    idxs = _sample_pixel_idxs(bundle.e, src_img, cfg, rng)
    fq = nce_features(bundle.e, bundle.nce_heads, out_img, cfg.layer_ids, idxs)
    fk = nce_features(bundle.e, bundle.nce_heads, src_img, cfg.layer_ids, idxs)
    # negatives are bounded by the smallest sampled grid
    n_avail = min(f.shape[0] for f in fq)
    eff = NCEConfig(tau=cfg.tau, n_neg=min(cfg.n_neg, n_avail - 1),
                    n_query=cfg.n_query, layer_ids=cfg.layer_ids)
    return nce_loss(fq, fk, eff)


def _set_requires_grad(modules, flag):
    for m in modules:
        for p in m.parameters():
            p.requires_grad_(flag)


def stage_losses(stage, bundle, batch, weights: LossWeights, cfg: NCEConfig,
                 rng=None, n_patches=8):
    """Build one stage's outputs and both optimizer-side totals.

    Returns {"g_total", "d_total", "components", "outputs", "r1_pairs"}.
    Zero-weight terms are skipped entirely (the ablation arms).
    r1_pairs lists (discriminator, real batch) for the caller's lazy R1
    schedule.
    """
    if stage not in STAGES:
        raise StageError(f"unknown stage {stage!r}; expected one of {STAGES}")
    rng = rng or torch.Generator().manual_seed(0)
    e, g_t, g_f = bundle.e, bundle.g_t, bundle.g_f
    d_f, d_t, d_patch = bundle.d_f, bundle.d_t, bundle.d_patch
    B = batch.X_F.shape[0]
    ones = ones_code(B, bundle.dims.d_gl)
    comps = {}
    outputs = {}
    discs = (d_f, d_t, d_patch)

    if stage == "Sty":
        zsp_f, _ = e(batch.X_F)
        zsp_t, zgl_t = e(batch.X_T)
        x_f_rec = g_t(zsp_f, ones)
        x_t_rec = g_t(zsp_t, zgl_t)
        o_sty = g_t(zsp_f, zgl_t)
        outputs.update(x_f_rec=x_f_rec, x_t_rec=x_t_rec, o_sty=o_sty)

        d_total = (adv_d(d_f(batch.X_F), d_f(x_f_rec.detach()))
                   + adv_d(d_t(batch.X_T),
                           torch.cat([d_t(x_t_rec.detach()),
                                      d_t(o_sty.detach())])))
        if weights.w_patch > 0:
            d_total = d_total + patch_loss_d(d_patch, o_sty, batch.X_T, rng,
                                             n_patches)
        r1_pairs = [(d_f, batch.X_F), (d_t, batch.X_T)]

        _set_requires_grad(discs, False)
        comps["l1_f"] = l1(x_f_rec, batch.X_F)
        comps["l1_t"] = l1(x_t_rec, batch.X_T)
        comps["adv_f"] = adv_g(d_f(x_f_rec))
        comps["adv_t"] = adv_g(d_t(x_t_rec))
        comps["adv_out"] = adv_g(d_t(o_sty))
        if weights.w_nce > 0:
            comps["nce"] = _stage_nce(bundle, o_sty, batch.X_F, cfg, rng)
        if weights.w_patch > 0:
            comps["patch"] = patch_loss_g(d_patch, o_sty, batch.X_T, rng,
                                          n_patches)
        _set_requires_grad(discs, True)

    elif stage == "Des":
        zsp_f, _ = e(batch.X_F)
        zsp_fr, zgl_fr = e(batch.X_F_R)
        x_f_rec = g_t(zsp_f, ones)
        x_fr_rec = g_t(zsp_fr, zgl_fr)
        o_des = g_t(zsp_fr, ones)
        outputs.update(x_f_rec=x_f_rec, x_fr_rec=x_fr_rec, o_des=o_des)

        d_total = (adv_d(d_f(batch.X_F),
                         torch.cat([d_f(x_f_rec.detach()),
                                    d_f(o_des.detach())]))
                   + adv_d(d_t(batch.X_F_R), d_t(x_fr_rec.detach())))
        r1_pairs = [(d_f, batch.X_F), (d_t, batch.X_F_R)]

        _set_requires_grad(discs, False)
        comps["l1_f"] = l1(x_f_rec, batch.X_F)
        comps["l1_t"] = l1(x_fr_rec, batch.X_F_R)
        comps["adv_f"] = adv_g(d_f(x_f_rec))
        comps["adv_t"] = adv_g(d_t(x_fr_rec))
        comps["adv_out"] = adv_g(d_f(o_des))
        if weights.w_nce > 0:
            comps["nce"] = _stage_nce(bundle, o_des, batch.X_F_R, cfg, rng)
        _set_requires_grad(discs, True)

    else:  # Font
        zsp_f, zgl_f = e(batch.X_F)
        zsp_c, zgl_c = e(batch.X_C)
        x_f_rec = g_f(zsp_f, zgl_f)
        x_c_rec = g_f(zsp_c, zgl_c)
        o_font = g_f(zsp_c, zgl_f)
        outputs.update(x_f_rec=x_f_rec, x_c_rec=x_c_rec, o_font=o_font)

        fakes = torch.cat([d_f(x_f_rec.detach()), d_f(x_c_rec.detach()),
                           d_f(o_font.detach())])
        reals = d_f(torch.cat([batch.X_F, batch.X_C]))
        d_total = adv_d(reals, fakes)
        r1_pairs = [(d_f, torch.cat([batch.X_F, batch.X_C]))]

        _set_requires_grad(discs, False)
        comps["l1_f"] = l1(x_f_rec, batch.X_F)
        comps["l1_c"] = l1(x_c_rec, batch.X_C)
        comps["adv_f"] = adv_g(d_f(x_f_rec))
        comps["adv_c"] = adv_g(d_f(x_c_rec))
        comps["adv_out"] = adv_g(d_f(o_font))
        _set_requires_grad(discs, True)

    g_total = torch.zeros(())
    for name, v in comps.items():
        if name.startswith("l1"):
            g_total = g_total + weights.w_l1 * v
        elif name.startswith("adv"):
            g_total = g_total + weights.w_adv * v
        elif name == "nce":
            g_total = g_total + weights.w_nce * v
        elif name == "patch":
            g_total = g_total + weights.w_patch * v

    return {"g_total": g_total, "d_total": d_total, "components": comps,
            "outputs": outputs, "r1_pairs": r1_pairs}
