"""``efgn`` command line: prepare, train, eval, render.

Config files are plain ``key = value`` lines; ``#`` starts a comment.
Values are parsed as JSON where possible (``64``, ``1e-4``, ``true``,
``[1, 2, 3]``) and otherwise kept as strings. Keys are any
:class:`ModelConfig` / :class:`TrainConfig` field or a data option
(``patch``, ``stride``, ``scale``, ``holdout``). Command-line flags win
over the file. ``EFGN_OUTPUT_DIR`` overrides ``--out``.

Exit codes: 0 on success, 2 on bad input, paths or configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from .core import ModelConfig, TrainConfig
from .data import PatchSet, load_cube, make_pairs
from .network import EFGN, count_params, load_checkpoint
from .render import CHIKUSEI_RGB, render_error_map, render_pseudo_rgb, render_spectral_curve
from .trainer import evaluate, train

log = logging.getLogger("efgn")

OUTPUT_ENV = "EFGN_OUTPUT_DIR"


class UsageError(Exception):
    pass


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            out[key] = json.loads(value)
        except json.JSONDecodeError:
            out[key] = value
    return out


def read_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    return parse_config_text(p.read_text())


def config_hash(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode("utf-8")).hexdigest()


def _merge(cfg: dict, args, keys) -> dict:
    out = dict(cfg)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def _pick(cls, d: dict) -> dict:
    return {k: v for k, v in d.items() if k in cls.__dataclass_fields__}


def _out_dir(args) -> Path:
    out = Path(os.environ.get(OUTPUT_ENV) or args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_cubes(paths):
    cubes = []
    for p in paths:
        if not Path(p).is_file():
            raise UsageError(f"input file not found: {p}")
        try:
            cubes.append(load_cube(p))
        except ValueError as exc:
            raise UsageError(f"{p}: {exc}") from exc
    return cubes


def cmd_prepare(args) -> int:
    cfg = _merge(read_config(args.config), args, ["patch", "stride", "scale", "holdout", "seed"])
    data_cfg = {
        "patch": int(cfg.get("patch", 64)),
        "stride": int(cfg.get("stride", 32)),
        "scale": int(cfg.get("scale", 4)),
        "holdout": float(cfg.get("holdout", 0.1)),
        "seed": int(cfg.get("seed", 0)),
    }
    cubes = _load_cubes(args.inputs)
    try:
        train_set, val_set = make_pairs(
            cubes, data_cfg["patch"], data_cfg["stride"], data_cfg["scale"], data_cfg["holdout"], data_cfg["seed"]
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = _out_dir(args)
    train_set.save(out / "train.npz")
    val_set.save(out / "val.npz")
    manifest = {
        "config": data_cfg,
        "config_hash": config_hash(data_cfg),
        "inputs": [Path(p).name for p in args.inputs],
        "bands": cubes[0].bands,
        "n_train": len(train_set),
        "n_val": len(val_set),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"train patches: {len(train_set)}  val patches: {len(val_set)}")
    return 0


def _model_config(cfg: dict) -> ModelConfig:
    try:
        return ModelConfig(**_pick(ModelConfig, cfg))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid model config: {exc}") from exc


def cmd_train(args) -> int:
    cfg = read_config(args.config)
    cfg = _merge(cfg, args, ["epochs", "batch_size", "seed", "scale"])
    if args.lr is not None:
        cfg["lr0"] = args.lr
    data = Path(args.data)
    if not (data / "train.npz").is_file():
        raise UsageError(f"no train.npz in {data}")
    train_set = PatchSet.load(data / "train.npz")
    val_set = PatchSet.load(data / "val.npz") if (data / "val.npz").is_file() else None
    cfg.setdefault("scale", train_set.scale)
    if int(cfg["scale"]) != train_set.scale:
        raise UsageError(f"data prepared for scale {train_set.scale}, config asks for {cfg['scale']}")
    mcfg = _model_config(cfg)
    try:
        tcfg = TrainConfig(**_pick(TrainConfig, cfg))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid train config: {exc}") from exc
    bands = train_set.hr_patches[0].bands
    model = EFGN(mcfg, bands, seed=tcfg.seed)
    out = _out_dir(args)
    log.info("model: %d parameters", count_params(model))
    tlog = train(model, train_set, val_set, tcfg, out)
    print(f"trained {len(tlog.steps)} steps; best epoch {tlog.best_epoch}; checkpoints in {out}")
    return 0


def cmd_eval(args) -> int:
    cubes = _load_cubes(args.inputs)
    if args.checkpoint:
        if not Path(args.checkpoint).is_file():
            raise UsageError(f"checkpoint not found: {args.checkpoint}")
        model = load_checkpoint(args.checkpoint)
    else:
        cfg = _merge(read_config(args.config), args, ["scale", "seed"])
        model = EFGN(_model_config(cfg), cubes[0].bands, seed=int(cfg.get("seed", 0)))
    s = model.cfg.scale
    try:
        results = evaluate(model, cubes, s)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = _out_dir(args)
    bands = tuple(args.rgb) if args.rgb else _default_rgb(cubes[0].bands)
    payload = []
    for i, r in enumerate(results):
        payload.append({"input": Path(args.inputs[i]).name, "model": r.report.to_dict(), "bicubic": r.bicubic.to_dict()})
        render_pseudo_rgb(r.sr, bands, out / f"sr_rgb_{i}.png")
        render_error_map(r.sr, r.hr, out / f"error_map_{i}.png")
    render_spectral_curve([r.sr for r in results], [r.hr for r in results], out / "spectral_curve.csv", out / "spectral_curve.png")
    (out / "metrics.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    for row in payload:
        m, b = row["model"], row["bicubic"]
        print(f"{row['input']}: PSNR {m['psnr_db']:.4f} (bicubic {b['psnr_db']:.4f})  SAM {m['sam_deg']:.4f}")
    return 0


def _default_rgb(c: int) -> tuple:
    if c > max(CHIKUSEI_RGB):
        return CHIKUSEI_RGB
    return (int(0.55 * (c - 1)), int(0.78 * (c - 1)), int(0.28 * (c - 1)))


def cmd_render(args) -> int:
    out = Path(os.environ[OUTPUT_ENV]) / Path(args.out).name if os.environ.get(OUTPUT_ENV) else Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        if args.kind == "rgb":
            (cube,) = _load_cubes([args.input])
            render_pseudo_rgb(cube, tuple(args.bands), out)
        elif args.kind == "error":
            sr, hr = _load_cubes([args.sr, args.hr])
            render_error_map(sr, hr, out)
        else:
            srs, hrs = _load_cubes(args.sr), _load_cubes(args.hr)
            render_spectral_curve(srs, hrs, out.with_suffix(".csv"), out.with_suffix(".png"))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="efgn", description="Hyperspectral super-resolution: prepare data, train, evaluate, render figures")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    pp = sub.add_parser("prepare", help="cut HR/LR patch pairs from cube files")
    pp.add_argument("inputs", nargs="+")
    pp.add_argument("--out", default="prepared")
    pp.add_argument("--config")
    pp.add_argument("--patch", type=int)
    pp.add_argument("--stride", type=int)
    pp.add_argument("--scale", type=int)
    pp.add_argument("--holdout", type=float)
    pp.add_argument("--seed", type=int)
    pp.set_defaults(func=cmd_prepare)

    pt = sub.add_parser("train", help="train on prepared patches")
    pt.add_argument("--data", required=True)
    pt.add_argument("--out", default="run")
    pt.add_argument("--config")
    pt.add_argument("--epochs", type=int)
    pt.add_argument("--batch-size", dest="batch_size", type=int)
    pt.add_argument("--lr", type=float)
    pt.add_argument("--seed", type=int)
    pt.add_argument("--scale", type=int)
    pt.set_defaults(func=cmd_train)

    pe = sub.add_parser("eval", help="score a model against HR test cubes")
    pe.add_argument("inputs", nargs="+")
    pe.add_argument("--checkpoint")
    pe.add_argument("--config")
    pe.add_argument("--scale", type=int)
    pe.add_argument("--seed", type=int)
    pe.add_argument("--rgb", type=int, nargs=3)
    pe.add_argument("--out", default="eval")
    pe.set_defaults(func=cmd_eval)

    pr = sub.add_parser("render", help="emit a single figure")
    kinds = pr.add_subparsers(dest="kind", required=True)
    rgb = kinds.add_parser("rgb")
    rgb.add_argument("input")
    rgb.add_argument("--bands", type=int, nargs=3, default=list(CHIKUSEI_RGB))
    rgb.add_argument("--out", required=True)
    err = kinds.add_parser("error")
    err.add_argument("--sr", required=True)
    err.add_argument("--hr", required=True)
    err.add_argument("--out", required=True)
    cur = kinds.add_parser("curve")
    cur.add_argument("--sr", nargs="+", required=True)
    cur.add_argument("--hr", nargs="+", required=True)
    cur.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"efgn: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
