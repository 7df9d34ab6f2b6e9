"""Adam training loop with step decay, validation and checkpointing."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .core import HSICube, TrainConfig
from .data import PatchSet, bicubic_resize, degrade
from .losses import total_loss
from .metrics import MetricReport, evaluate_pair, psnr, sam
from .network import EFGN, save_checkpoint, super_resolve

log = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"non-finite loss {value} at epoch {epoch}, batch {batch}")
        self.epoch, self.batch, self.value = epoch, batch, value


def lr_at(epoch: int, tcfg: TrainConfig) -> float:
    return tcfg.lr0 * tcfg.lr_decay_factor ** (epoch // tcfg.lr_decay_epochs)


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    best_epoch: int = -1

    @property
    def step_losses(self) -> list:
        return [s["total"] for s in self.steps]

    def to_csv(self, path) -> None:
        cols = ["epoch", "lr", "l1", "l_spe", "l_gra", "l_sstv", "total", "val_psnr", "val_sam"]
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, cols, lineterminator="\n")
            writer.writeheader()
            for row in self.epochs:
                writer.writerow({k: row.get(k, "") for k in cols})


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i : i + batch_size]


def validate(model: EFGN, val_set: PatchSet) -> tuple:
    psnrs, sams = [], []
    for hr, lr in zip(val_set.hr_patches, val_set.lr_patches):
        sr = super_resolve(model, lr)
        psnrs.append(psnr(sr, hr))
        sams.append(sam(sr, hr))
    return float(np.mean(psnrs)), float(np.mean(sams))


def train(model: EFGN, train_set: PatchSet, val_set: PatchSet, tcfg: TrainConfig, out_dir=None) -> TrainLog:
    """Minimise the weighted four-term loss with Adam.

    Writes ``last.ckpt`` every epoch and ``best.ckpt`` whenever the
    validation PSNR improves (training loss is used when there is no
    validation data) into ``out_dir`` if given.
    """
    if len(train_set) == 0:
        raise ValueError("empty training set")
    param = next(model.parameters())
    hr_all = torch.as_tensor(train_set.hr_array(), dtype=param.dtype)
    lr_all = torch.as_tensor(train_set.lr_array(), dtype=param.dtype)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(tcfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=tcfg.lr0, betas=ADAM_BETAS, eps=ADAM_EPS)
    tlog = TrainLog()
    best = -math.inf
    step = 0

    for epoch in range(tcfg.epochs):
        lr_now = lr_at(epoch, tcfg)
        for group in opt.param_groups:
            group["lr"] = lr_now
        model.train()
        sums = {}
        n_batches = 0
        for b, idx in enumerate(_batches(len(train_set), tcfg.batch_size, rng)):
            idx = torch.as_tensor(idx)
            sr = model(lr_all[idx])
            report = total_loss(sr, hr_all[idx], tcfg.loss_weights)
            value = float(report.total.detach())
            if not math.isfinite(value):
                raise TrainingDiverged(epoch, b, value)
            opt.zero_grad(set_to_none=False)
            report.total.backward()
            grads = [p.grad for p in model.parameters() if p.grad is not None]
            gnorm = float(torch.linalg.vector_norm(torch.stack([g.norm() for g in grads]))) if grads else 0.0
            if gnorm > 0:
                if tcfg.grad_clip is not None:
                    torch.nn.utils.clip_grad_norm_(model.parameters(), tcfg.grad_clip)
                opt.step()
            values = report.as_dict()
            tlog.steps.append({"step": step, "epoch": epoch, **values})
            for k, v in values.items():
                sums[k] = sums.get(k, 0.0) + v
            n_batches += 1
            step += 1
            if tcfg.max_steps is not None and step >= tcfg.max_steps:
                break

        row = {"epoch": epoch, "lr": lr_now, **{k: v / n_batches for k, v in sums.items()}}
        model.eval()
        if val_set is not None and len(val_set):
            row["val_psnr"], row["val_sam"] = validate(model, val_set)
            score = row["val_psnr"]
        else:
            score = -row["total"]
        tlog.epochs.append(row)
        log.info("epoch %d lr %.2e loss %.6f", epoch, lr_now, row["total"])
        if score > best:
            best = score
            tlog.best_epoch = epoch
            if out is not None:
                save_checkpoint(model, out / "best.ckpt")
        if out is not None:
            save_checkpoint(model, out / "last.ckpt")
        if tcfg.max_steps is not None and step >= tcfg.max_steps:
            break

    if out is not None:
        tlog.to_csv(out / "train_log.csv")
    return tlog


@dataclass
class EvalResult:
    report: MetricReport
    bicubic: MetricReport
    sr: HSICube
    hr: HSICube


def evaluate(model: EFGN, test_cubes, s: int) -> list:
    """Degrade each HR cube by ``s``, super-resolve, and score model and bicubic."""
    if s != model.cfg.scale:
        raise ValueError(f"model was built for scale {model.cfg.scale}, not {s}")
    model.eval()
    results = []
    for hr in test_cubes:
        lr = degrade(hr, s)
        sr = super_resolve(model, lr)
        bic = bicubic_resize(lr, hr.height, hr.width)
        results.append(EvalResult(evaluate_pair(sr, hr, s), evaluate_pair(bic, hr, s), sr, hr))
    return results
