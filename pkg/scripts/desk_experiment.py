"""Desk-scale train/evaluate run on synthetic scenes.

Trains on patches from several synthetic cubes, validates on a held-out
share, then scores the best checkpoint and bicubic on unseen test cubes.

    python3 scripts/desk_experiment.py --out runs/desk
"""

import argparse
import json
from pathlib import Path

import torch

from efgn.core import ModelConfig, TrainConfig
from efgn.data import make_pairs
from efgn.network import EFGN, count_params, load_checkpoint
from efgn.render import render_error_map, render_pseudo_rgb, render_spectral_curve
from efgn.synthetic import textured_cube
from efgn.trainer import evaluate, train


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--bands", type=int, default=16)
    ap.add_argument("--size", type=int, default=96)
    ap.add_argument("--train-scenes", type=int, default=3)
    ap.add_argument("--test-scenes", type=int, default=2)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--batch-size", type=int, default=8)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--n-feats", type=int, default=16)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    torch.set_num_threads(1)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = ModelConfig(n_feats=args.n_feats, strip_kernel=7, ssrgm_blocks=1, ssrgm3d_blocks=2, feats_3d=8)
    scenes = [textured_cube(args.bands, args.size, args.size, seed=args.seed + i) for i in range(args.train_scenes)]
    tests = [textured_cube(args.bands, args.size, args.size, seed=1000 + args.seed + i) for i in range(args.test_scenes)]
    train_set, val_set = make_pairs(scenes, 32, 16, cfg.scale, 0.1, seed=args.seed)
    print(f"{len(train_set)} train / {len(val_set)} val patches")

    model = EFGN(cfg, args.bands, seed=args.seed)
    print(f"{count_params(model):,d} parameters")
    tcfg = TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr0=args.lr,
        lr_decay_epochs=max(1, 3 * args.epochs // 7),
        seed=args.seed,
    )
    tlog = train(model, train_set, val_set, tcfg, out)
    summary = {"best_epoch": tlog.best_epoch, "epochs": tlog.epochs, "scores": {}}
    for tag in ("best", "last"):
        results = evaluate(load_checkpoint(out / f"{tag}.ckpt"), tests, cfg.scale)
        summary["scores"][tag] = [{"model": r.report.headline(), "bicubic": r.bicubic.headline()} for r in results]
        if tag == "best":
            rgb = (args.bands // 2, 3 * args.bands // 4, args.bands // 4)
            for i, r in enumerate(results):
                render_pseudo_rgb(r.sr, rgb, out / f"sr_rgb_{i}.png")
                render_error_map(r.sr, r.hr, out / f"error_map_{i}.png")
            render_spectral_curve([r.sr for r in results], [r.hr for r in results], out / "spectral_curve.csv", out / "spectral_curve.png")
        for i, row in enumerate(summary["scores"][tag]):
            m, b = row["model"], row["bicubic"]
            print(f"{tag} test {i}: PSNR {m['psnr_db']:.2f} (bicubic {b['psnr_db']:.2f})  SAM {m['sam_deg']:.3f} (bicubic {b['sam_deg']:.3f})")
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")


if __name__ == "__main__":
    main()
