import json

import pytest
import torch

import gentext as gt
from gentext.errors import ConfigError, ResumeMismatchError, StageError
from gentext.losses import LossWeights
from gentext.training import TrainConfig, checkpoint_roundtrip, train

from conftest import TINY_DIMS, TINY_NCE


def _cfg(**kw):
    base = dict(stage="Sty", bs=2, steps=2, dims=TINY_DIMS, nce=TINY_NCE,
                seed=0, checkpoint_every=0)
    base.update(kw)
    return TrainConfig(**base)


def test_config_invariants():
    with pytest.raises(ConfigError):
        _cfg(lr=0.0)
    with pytest.raises(ConfigError):
        _cfg(beta1=0.99, beta2=0.5)
    with pytest.raises(ConfigError):
        _cfg(bs=0)
    with pytest.raises(StageError):
        _cfg(stage="warmup")


def test_config_from_file(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({
        "stage": "Joint", "bs": 4, "steps": 10, "lr": 0.001,
        "weights": {"w_nce": 0.5}, "nce": {"n_query": 32, "n_neg": 16},
        "dims": {"d_gl": 64, "base": 8, "max_ch": 64, "nce_k": 64},
        "resolution": [64, 64]}))
    cfg = TrainConfig.from_file(p)
    assert cfg.stage == "Joint" and cfg.lr == 0.001
    assert cfg.weights.w_nce == 0.5 and cfg.nce.n_query == 32
    assert cfg.dims.d_gl == 64


def test_zero_steps_returns_bundle_unchanged(corpus):
    bundle = gt.build_bundle(TINY_DIMS, seed=4)
    before = bundle.param_hash()
    out, log = train(_cfg(steps=0), corpus, bundle)
    assert out is bundle
    assert out.param_hash() == before
    assert log == []


def test_two_step_determinism(corpus):
    h = []
    for _ in range(2):
        bundle, _ = train(_cfg(steps=2), corpus)
        h.append(bundle.param_hash())
    assert h[0] == h[1]


def test_training_changes_both_sides_and_logs(corpus):
    bundle, log = train(_cfg(steps=2), corpus)
    assert bundle.step == 2
    assert len(log) == 2
    for rec in log:
        for key in ("l1_f", "l1_t", "adv_f", "adv_t", "adv_out", "nce",
                    "patch", "r1", "g_total", "d_total", "wallclock"):
            assert key in rec, key
            assert rec[key] == rec[key]  # no NaN


def test_generator_step_leaves_discriminators_alone(corpus, rng_t):
    import numpy as np
    from gentext.corpus import sample_batch
    from gentext.losses import stage_losses
    bundle = gt.build_bundle(TINY_DIMS, seed=5).train()
    batch = sample_batch(corpus, 2, np.random.default_rng(0))
    g_opt = torch.optim.Adam(list(bundle.generator_parameters()), lr=0.01)
    d_before = [p.detach().clone() for p in bundle.discriminator_parameters()]
    g_before = [p.detach().clone() for p in bundle.generator_parameters()]
    out = stage_losses("Sty", bundle, batch, LossWeights(), TINY_NCE, rng=rng_t)
    g_opt.zero_grad()
    out["g_total"].backward()
    g_opt.step()
    assert all(torch.equal(a, b) for a, b in
               zip(d_before, bundle.discriminator_parameters()))
    assert any(not torch.equal(a, b) for a, b in
               zip(g_before, bundle.generator_parameters()))
    # and the mirror image for a d-step
    d_opt = torch.optim.Adam(list(bundle.discriminator_parameters()), lr=0.01)
    g_mid = [p.detach().clone() for p in bundle.generator_parameters()]
    out = stage_losses("Sty", bundle, batch, LossWeights(), TINY_NCE, rng=rng_t)
    d_opt.zero_grad()
    out["d_total"].backward()
    d_opt.step()
    assert all(torch.equal(a, b) for a, b in
               zip(g_mid, bundle.generator_parameters()))


def test_joint_stage_runs_and_prefixes_components(corpus):
    bundle, log = train(_cfg(stage="Joint", steps=1), corpus)
    rec = log[0]
    assert "sty_nce" in rec and "des_nce" in rec
    assert "font_nce" not in rec and "font_patch" not in rec and \
        "des_patch" not in rec


def test_checkpoint_roundtrip(tmp_path):
    bundle = gt.build_bundle(TINY_DIMS, seed=6)
    bundle.step = 42
    loaded = checkpoint_roundtrip(bundle, tmp_path / "ck.pt")
    assert loaded.param_hash() == bundle.param_hash()
    assert loaded.step == 42


def test_resume_mismatch(tmp_path, corpus):
    bundle = gt.build_bundle(TINY_DIMS, seed=0)
    p = tmp_path / "ck.pt"
    gt.save_bundle(bundle, p)
    other = gt.Dims(c_sp=8, d_gl=32, base=8, max_ch=32, nce_k=32)
    with pytest.raises(ResumeMismatchError):
        train(_cfg(steps=1, resume=str(p), dims=other), corpus)


def test_resume_continues(tmp_path, corpus):
    cfg = _cfg(steps=1, out_dir=str(tmp_path / "run"), checkpoint_every=1)
    bundle, _ = train(cfg, corpus)
    ck = tmp_path / "run" / "ckpt_0000001.pt"
    assert ck.exists()
    cfg2 = _cfg(steps=1, resume=str(ck))
    bundle2, _ = train(cfg2, corpus)
    assert bundle2.step == 2


def test_log_file_is_jsonl(tmp_path, corpus):
    lp = tmp_path / "log.jsonl"
    train(_cfg(steps=2, log_path=str(lp)), corpus)
    lines = lp.read_text().strip().splitlines()
    assert len(lines) == 2
    for line in lines:
        rec = json.loads(line)
        assert "step" in rec and "wallclock" in rec
