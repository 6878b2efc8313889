"""Optimization loops for the three stages and the joint objective:
alternating generator/discriminator Adam steps, lazy R1 scheduling,
checkpointing, and line-delimited loss logging."""

import json
import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import torch

from .corpus import CorpusManifest, sample_batch
from .errors import ConfigError, NanLossError, ResumeMismatchError, StageError
from .losses import LossWeights, NCEConfig, r1_penalty, stage_losses
from .nets import Dims, ModelBundle, build_bundle, load_bundle, save_bundle

JOINT = "Joint"
ALL_STAGES = ("Sty", "Des", "Font", JOINT)


@dataclass
class TrainConfig:
    stage: str = "Sty"
    lr: float = 0.002
    beta1: float = 0.0
    beta2: float = 0.99
    bs: int = 8
    steps: int = 10_000
    weights: LossWeights = field(default_factory=LossWeights)
    nce: NCEConfig = field(default_factory=NCEConfig)
    seed: int = 0
    resolution: tuple = (64, 64)
    checkpoint_every: int = 1000
    resume: str | None = None
    out_dir: str | None = None
    log_path: str | None = None
    n_patches: int = 8
    dims: Dims = field(default_factory=Dims)

    def __post_init__(self):
        if self.stage not in ALL_STAGES:
            raise StageError(f"unknown stage {self.stage!r}")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if not (0 <= self.beta1 < 1 and self.beta1 < self.beta2 < 1):
            raise ConfigError("need 0 <= beta1 < beta2 < 1")
        if self.bs < 1:
            raise ConfigError("bs must be >= 1")

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        """UTF-8 JSON config mirroring these fields (see README)."""
        raw = json.loads(Path(path).read_text())
        if "weights" in raw:
            raw["weights"] = LossWeights(**raw["weights"])
        if "nce" in raw:
            nce = dict(raw["nce"])
            if "layer_ids" in nce:
                nce["layer_ids"] = tuple(nce["layer_ids"])
            raw["nce"] = NCEConfig(**nce)
        if "dims" in raw:
            d = dict(raw["dims"])
            if "nce_layers" in d:
                d["nce_layers"] = tuple(d["nce_layers"])
            raw["dims"] = Dims(**d)
        if "resolution" in raw:
            raw["resolution"] = tuple(raw["resolution"])
        return cls(**raw)


def _stage_list(stage):
    return ["Sty", "Des", "Font"] if stage == JOINT else [stage]


def train(cfg: TrainConfig, manifest: CorpusManifest, bundle: ModelBundle = None):
    """Run the configured stage; returns (bundle, log records).

    One generator-side then one discriminator-side Adam step per
    iteration. Joint sums all three stages' losses each step, so the
    shared encoder is updated exactly once per step. Aborts on NaN with
    a reference to the last good checkpoint.
    """
    torch.manual_seed(cfg.seed)
    rng_np = np.random.default_rng(cfg.seed)
    rng_t = torch.Generator().manual_seed(cfg.seed + 1)

    if bundle is None:
        if cfg.resume:
            bundle = load_bundle(cfg.resume)
            if bundle.dims.as_dict() != cfg.dims.as_dict():
                raise ResumeMismatchError(
                    f"checkpoint dims {bundle.dims.as_dict()} != config "
                    f"dims {cfg.dims.as_dict()}")
        else:
            bundle = build_bundle(cfg.dims, seed=cfg.seed)
    bundle.train()

    betas = (cfg.beta1, cfg.beta2)
    g_opt = torch.optim.Adam(list(bundle.generator_parameters()), lr=cfg.lr,
                             betas=betas)
    d_opt = torch.optim.Adam(list(bundle.discriminator_parameters()), lr=cfg.lr,
                             betas=betas)

    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    log_file = open(cfg.log_path, "a") if cfg.log_path else None
    log = []
    last_ckpt = None
    stages = _stage_list(cfg.stage)
    d_steps = 0

    try:
        for i in range(cfg.steps):
            t0 = time.monotonic()
            batch = sample_batch(manifest, cfg.bs, rng_np)
            g_total = torch.zeros(())
            d_total = torch.zeros(())
            record = {"step": bundle.step, "stage": cfg.stage}
            r1_pairs = []
            for stage in stages:
                out = stage_losses(stage, bundle, batch, cfg.weights, cfg.nce,
                                   rng=rng_t, n_patches=cfg.n_patches)
                g_total = g_total + out["g_total"]
                d_total = d_total + out["d_total"]
                r1_pairs += out["r1_pairs"]
                prefix = f"{stage.lower()}_" if cfg.stage == JOINT else ""
                for k, v in out["components"].items():
                    record[prefix + k] = float(v.detach())

            d_steps += 1
            if cfg.weights.r1_gamma > 0 and d_steps % cfg.weights.r1_interval == 0:
                # lazy R1, scaled by the interval to keep effective strength
                pen = torch.zeros(())
                for d, real in r1_pairs:
                    pen = pen + r1_penalty(d, real, cfg.weights.r1_gamma)
                pen = pen * cfg.weights.r1_interval
                d_total = d_total + pen
                record["r1"] = float(pen.detach())
            else:
                record["r1"] = 0.0

            if not (math.isfinite(float(g_total.detach()))
                    and math.isfinite(float(d_total.detach()))):
                raise NanLossError(
                    f"non-finite loss at step {bundle.step}",
                    last_checkpoint=str(last_ckpt) if last_ckpt else None)

            g_opt.zero_grad(set_to_none=True)
            g_total.backward()
            g_opt.step()
            d_opt.zero_grad(set_to_none=True)
            d_total.backward()
            d_opt.step()

            bundle.step += 1
            record["g_total"] = float(g_total.detach())
            record["d_total"] = float(d_total.detach())
            record["wallclock"] = time.monotonic() - t0
            log.append(record)
            if log_file:
                log_file.write(json.dumps(record) + "\n")
                log_file.flush()

            if out_dir and cfg.checkpoint_every > 0 and (i + 1) % cfg.checkpoint_every == 0:
                last_ckpt = out_dir / f"ckpt_{bundle.step:07d}.pt"
                save_bundle(bundle, last_ckpt, resolution=cfg.resolution)
    finally:
        if log_file:
            log_file.close()
        bundle.eval()

    if out_dir:
        save_bundle(bundle, out_dir / "ckpt_final.pt", resolution=cfg.resolution)
    return bundle, log


def checkpoint_roundtrip(bundle: ModelBundle, path) -> ModelBundle:
    """Save then load; the result is parameter-identical (bitwise)."""
    save_bundle(bundle, path)
    loaded = load_bundle(path)
    return loaded
