"""Command-line entry point: corpus synthesis, training, evaluation,
and all generation modes.

Exit codes: 0 success, 2 usage error, 1 runtime error.
"""

import argparse
import sys
from pathlib import Path

import numpy as np
import torch

from . import metrics, pipeline
from .corpus import CorpusManifest, generate_corpus, load_te141k
from .errors import GenTextError
from .imaging import load_image, save_image
from .nets import load_bundle
from .training import TrainConfig, train


def _add_common(p, checkpoint=True):
    p.add_argument("--seed", type=int, default=0)
    if checkpoint:
        p.add_argument("--checkpoint", required=True)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gentext",
                                 description="Unsupervised artistic text generation")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--glyphs", type=int, default=16)
    p.add_argument("--fonts", type=int, default=4)
    p.add_argument("--styles", type=int, default=8)
    p.add_argument("--hw", type=int, default=64, help="square side in px")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train one stage or the joint model")
    p.add_argument("--config", required=True, help="JSON TrainConfig file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--resume", default=None)
    p.add_argument("--seed", type=int, default=None,
                   help="overrides the config file's seed")

    p = sub.add_parser("eval", help="score a checkpoint on the eval split")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", default="stylize",
                   choices=["stylize", "destylize", "identity"])
    p.add_argument("--report", required=True)
    p.add_argument("--csv", default=None)

    p = sub.add_parser("generate", help="end-to-end generation")
    _add_common(p)
    p.add_argument("--content", required=True)
    p.add_argument("--font-ref", required=True)
    p.add_argument("--texture-ref", required=True)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("interpolate", help="texture interpolation strip")
    _add_common(p)
    p.add_argument("--font", required=True)
    p.add_argument("--tex-a", required=True)
    p.add_argument("--tex-b", required=True)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("blend", help="spatial-gradient style blend")
    _add_common(p)
    p.add_argument("--instance", required=True)
    p.add_argument("--tex-left", required=True)
    p.add_argument("--tex-right", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("serve", help="HTTP inference service")
    _add_common(p)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    return ap


def _load_manifest(root):
    root = Path(root)
    if (root / "manifest.json").exists():
        return CorpusManifest.load(root)
    return load_te141k(root)


def _run(args) -> int:
    cmd = args.command
    if cmd == "synth":
        generate_corpus(args.out, args.glyphs, args.fonts, args.styles,
                        (args.hw, args.hw), args.seed)
        return 0
    if cmd == "train":
        cfg = TrainConfig.from_file(args.config)
        cfg.out_dir = args.out
        if args.resume:
            cfg.resume = args.resume
        if args.seed is not None:
            cfg.seed = args.seed
        if not cfg.log_path:
            cfg.log_path = str(Path(args.out) / "train_log.jsonl")
        Path(args.out).mkdir(parents=True, exist_ok=True)
        train(cfg, _load_manifest(args.corpus))
        return 0
    if cmd == "eval":
        bundle = load_bundle(args.checkpoint)
        report = metrics.evaluate(bundle, _load_manifest(args.corpus),
                                  mode=args.mode)
        report.write(args.report, csv_path=args.csv)
        return 0

    torch.manual_seed(args.seed)
    bundle = load_bundle(args.checkpoint)
    if cmd == "generate":
        out = pipeline.end_to_end(bundle, pipeline.GenerationRequest(
            mode="end_to_end",
            content=load_image(args.content),
            font_ref=load_image(args.font_ref),
            texture_ref=load_image(args.texture_ref)))
        d = Path(args.out_dir)
        d.mkdir(parents=True, exist_ok=True)
        for name, img in out.items():
            save_image(img, d / f"{name}.png")
        return 0
    if cmd == "interpolate":
        alphas = list(np.linspace(0.0, 1.0, args.steps))
        imgs = pipeline.interpolate_texture(
            bundle, load_image(args.font), load_image(args.tex_a),
            load_image(args.tex_b), alphas)
        d = Path(args.out_dir)
        d.mkdir(parents=True, exist_ok=True)
        for a, img in zip(alphas, imgs):
            save_image(img, d / f"alpha={a:.3f}.png")
        return 0
    if cmd == "blend":
        img = pipeline.blend_spatial(bundle, load_image(args.instance),
                                     load_image(args.tex_left),
                                     load_image(args.tex_right))
        save_image(img, args.out)
        return 0
    if cmd == "serve":
        from .service import serve
        serve(args.checkpoint, port=args.port, host=args.host)
        return 0
    raise AssertionError(cmd)


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _run(args)
    except GenTextError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
