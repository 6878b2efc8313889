import json

import pytest
import torch

import gentext as gt
from gentext.cli import main
from gentext.imaging import load_image, save_image

from conftest import TINY_DIMS


@pytest.fixture(scope="module")
def ckpt(tmp_path_factory):
    d = tmp_path_factory.mktemp("ckpt")
    path = d / "model.pt"
    gt.save_bundle(gt.build_bundle(TINY_DIMS, seed=0), path)
    return str(path)


@pytest.fixture(scope="module")
def pngs(tmp_path_factory):
    d = tmp_path_factory.mktemp("pngs")
    out = {}
    for i, name in enumerate(["content", "font", "tex_a", "tex_b"]):
        g = torch.Generator().manual_seed(i)
        img = torch.rand(1, 3, 64, 64, generator=g) * 2 - 1
        p = d / f"{name}.png"
        save_image(img, p)
        out[name] = str(p)
    return out


def test_synth_writes_corpus_tree(tmp_path):
    out = tmp_path / "corpus"
    rc = main(["synth", "--out", str(out), "--glyphs", "4", "--fonts", "2",
               "--styles", "2", "--hw", "64", "--seed", "7"])
    assert rc == 0
    assert (out / "manifest.json").exists()
    meta = json.loads((out / "manifest.json").read_text())
    assert meta["n_styles"] == 2
    assert (out / "content").is_dir()
    assert (out / "eval").is_dir()


def test_generate_missing_flag_names_it(capsys):
    rc = main(["generate", "--checkpoint", "x.pt", "--content", "a.png",
               "--font-ref", "b.png", "--out-dir", "o"])
    assert rc == 2
    assert "--texture-ref" in capsys.readouterr().err


def test_unknown_flag_rejected(capsys):
    rc = main(["synth", "--out", "d", "--bogus", "1"])
    assert rc == 2
    assert "--bogus" in capsys.readouterr().err


def test_generate_writes_three_panels(ckpt, pngs, tmp_path):
    out = tmp_path / "gen"
    rc = main(["generate", "--checkpoint", ckpt,
               "--content", pngs["content"], "--font-ref", pngs["font"],
               "--texture-ref", pngs["tex_a"], "--out-dir", str(out)])
    assert rc == 0
    assert sorted(p.name for p in out.iterdir()) == \
        ["o_des.png", "o_font.png", "o_sty.png"]


def test_interpolate_strip_with_endpoint_identity(ckpt, pngs, tmp_path):
    out = tmp_path / "strip"
    rc = main(["interpolate", "--checkpoint", ckpt, "--font", pngs["font"],
               "--tex-a", pngs["tex_a"], "--tex-b", pngs["tex_b"],
               "--steps", "5", "--out-dir", str(out)])
    assert rc == 0
    files = sorted(out.iterdir())
    assert [p.name for p in files] == [
        "alpha=0.000.png", "alpha=0.250.png", "alpha=0.500.png",
        "alpha=0.750.png", "alpha=1.000.png"]
    # alpha=0 strip frame equals plain stylization with tex_a, byte level
    bundle = gt.load_bundle(ckpt)
    ref = gt.stylize(bundle, load_image(pngs["font"]),
                     load_image(pngs["tex_a"]))
    ref_path = tmp_path / "ref.png"
    save_image(ref, ref_path)
    assert ref_path.read_bytes() == (out / "alpha=0.000.png").read_bytes()


def test_blend_command(ckpt, pngs, tmp_path):
    out = tmp_path / "blend.png"
    rc = main(["blend", "--checkpoint", ckpt, "--instance", pngs["font"],
               "--tex-left", pngs["tex_a"], "--tex-right", pngs["tex_b"],
               "--out", str(out)])
    assert rc == 0
    assert load_image(out).shape == (1, 3, 64, 64)


def test_missing_checkpoint_is_runtime_error(pngs, tmp_path):
    rc = main(["blend", "--checkpoint", "nope.pt", "--instance",
               pngs["font"], "--tex-left", pngs["tex_a"],
               "--tex-right", pngs["tex_b"],
               "--out", str(tmp_path / "o.png")])
    assert rc == 1


def test_eval_writes_report(ckpt, tmp_path):
    corpus = tmp_path / "c"
    assert main(["synth", "--out", str(corpus), "--glyphs", "4",
                 "--fonts", "2", "--styles", "2", "--hw", "64",
                 "--seed", "7"]) == 0
    report = tmp_path / "report.json"
    rc = main(["eval", "--checkpoint", ckpt, "--corpus", str(corpus),
               "--mode", "identity", "--report", str(report)])
    assert rc == 0
    data = json.loads(report.read_text())
    assert "psnr" in data["aggregate"]
