"""Full EFGN forward pass, burden accounting and checkpoint files."""

from __future__ import annotations

import copy
import json
import struct
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .blocks import Upsampler
from .core import HSICube, ModelConfig, make_partition, validate_shapes
from .data import resize_matrix
from .spdfm import SPDFM
from .ssrgm import SSRGM, SSRGM3d


def identity_conv_(conv: nn.Conv2d) -> nn.Conv2d:
    """Centre tap 1 on the diagonal, everything else 0."""
    if conv.in_channels != conv.out_channels or conv.groups != 1:
        raise ValueError("identity init needs a square, ungrouped conv")
    with torch.no_grad():
        conv.weight.zero_()
        centre = tuple(k // 2 for k in conv.kernel_size)
        for c in range(conv.out_channels):
            conv.weight[(c, c) + centre] = 1.0
        if conv.bias is not None:
            conv.bias.zero_()
    return conv


class BicubicUpsample(nn.Module):
    """Per-band Catmull-Rom resize; the same operator as :func:`efgn.data.bicubic_resize`."""

    def __init__(self, scale: int):
        super().__init__()
        self.scale = scale

    def forward(self, x):
        h, w = x.shape[-2:]
        mh = torch.tensor(resize_matrix(h, h * self.scale), dtype=x.dtype, device=x.device)
        mw = torch.tensor(resize_matrix(w, w * self.scale), dtype=x.dtype, device=x.device)
        return torch.einsum("ih,bchw,jw->bcij", mh, x, mw)


class BandMerge(nn.Module):
    """Scatter concatenated group channels back to ``C`` bands, averaging overlaps."""

    def __init__(self, partition):
        super().__init__()
        self.bands = partition.C
        self.index = [b for g in partition.groups for b in g]
        self.weight = [float(partition.merge_weight[b]) for b in self.index]

    def forward(self, x):
        idx = torch.tensor(self.index, device=x.device)
        w = torch.tensor(self.weight, dtype=x.dtype, device=x.device).view(1, -1, 1, 1)
        out = x.new_zeros(x.shape[0], self.bands, *x.shape[2:])
        return out.index_add(1, idx, x * w)


class Branch(nn.Module):
    """One band-group branch: SPDFM -> SSRGM -> x(s/2) upsample -> 1x1 to P bands."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.spdfm = SPDFM(cfg)
        self.ssrgm = SSRGM(cfg)
        self.up = Upsampler(cfg.n_feats, cfg.scale // 2)
        self.reduce = nn.Conv2d(cfg.n_feats, cfg.bands_per_group, 1)


class EFGN(nn.Module):
    def __init__(self, cfg: ModelConfig, bands: int, seed: int = 0):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.bands = bands
        self.seed = seed
        self.partition = make_partition(bands, cfg.bands_per_group)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            n_branches = 1 if cfg.share_branch_weights else self.partition.G
            self.branches = nn.ModuleList([Branch(cfg) for _ in range(n_branches)])
            self.merge = BandMerge(self.partition)
            self.refine = SSRGM3d(cfg)
            self.up = Upsampler(bands, 2)
            self.bicubic = BicubicUpsample(cfg.scale)
            self.skip = nn.Conv2d(bands, bands, 3, padding=1)
            self.tail = nn.Conv2d(bands, bands, 3, padding=1)
        if cfg.identity_tail:
            identity_conv_(self.skip)
            identity_conv_(self.tail)

    def branch(self, g: int) -> Branch:
        return self.branches[0 if len(self.branches) == 1 else g]

    def extract(self, lr):
        """Run the feedback chain; returns per-group (updated input, feature, upsampled)."""
        out = []
        prev_bands = prev_feat = None
        for g, rng in enumerate(self.partition.groups):
            branch = self.branch(g)
            bands = lr[:, rng.start : rng.stop]
            updated = branch.spdfm(bands, prev_bands, prev_feat)
            feat = branch.ssrgm(updated)
            out.append((updated, feat, branch.reduce(branch.up(feat))))
            prev_bands, prev_feat = bands, feat
        return out

    def forward(self, lr):
        if lr.dim() != 4 or lr.shape[1] != self.bands:
            raise ValueError(f"expected input [B, {self.bands}, H, W], got {tuple(lr.shape)}")
        groups = self.extract(lr)
        f_c = self.merge(torch.cat([g[2] for g in groups], dim=1))
        f_r = self.refine(f_c)
        f_ur = self.up(f_r)
        f_fin = f_ur + self.skip(self.bicubic(lr))
        return self.tail(f_fin)


def super_resolve(model: EFGN, lr: HSICube) -> HSICube:
    """Single-cube inference; returns ``[C, sH, sW]``."""
    report = validate_shapes(model.cfg, lr)
    param = next(model.parameters())
    x = torch.tensor(np.asarray(lr.data), dtype=param.dtype).unsqueeze(0)
    with torch.no_grad():
        y = model(x)[0].double().numpy()
    assert y.shape == report.output
    return HSICube(y, lr.wavelength_nm, lr.value_range)


def count_params(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def _trace_module(module: nn.Module, shape, hook_fn) -> None:
    """Run a shape-only (meta device) forward with ``hook_fn`` on every leaf module."""
    probe = copy.deepcopy(module).to("meta")
    handles = [m.register_forward_hook(hook_fn) for m in probe.modules() if not list(m.children())]
    try:
        with torch.no_grad():
            probe(torch.zeros(*shape, device="meta"))
    finally:
        for h in handles:
            h.remove()


def _trace(model: EFGN, H: int, W: int, s: int, hook_fn):
    if s != model.cfg.scale:
        raise ValueError(f"model was built for scale {model.cfg.scale}, not {s}")
    _trace_module(model, (1, model.bands, H, W), hook_fn)


def _conv_flop_hook():
    total = [0]

    def hook(m, inputs, output):
        if isinstance(m, (nn.Conv2d, nn.Conv3d)):
            k = int(np.prod(m.kernel_size))
            total[0] += 2 * output.numel() * (m.in_channels // m.groups) * k

    return total, hook


def conv_flops(module: nn.Module, input_shape) -> int:
    """``2 x`` multiply-adds of every convolution in ``module`` for one input of ``input_shape``."""
    total, hook = _conv_flop_hook()
    _trace_module(module, input_shape, hook)
    return total[0]


def estimate_flops(model: EFGN, H: int, W: int, s: int) -> int:
    """``2 x`` multiply-adds of every convolution for one ``[C, H, W]`` input."""
    total, hook = _conv_flop_hook()
    _trace(model, H, W, s, hook)
    return total[0]


def estimate_activation_bytes(model: EFGN, H: int, W: int, s: int) -> int:
    """Sum of f32 sizes of the input and every leaf-module output along the forward path."""
    total = 4 * model.bands * H * W

    def hook(m, inputs, output):
        nonlocal total
        total += 4 * output.numel()

    _trace(model, H, W, s, hook)
    return total


# Checkpoint: 8-byte magic, u32 LE header length, UTF-8 JSON header
# {"config", "bands", "seed", "tensors": [{"name", "shape", "dtype"}]},
# then each tensor's little-endian payload in header order.

MAGIC = b"EFGNCKP1"
_CKPT_DTYPES = {"f32": ("<f4", torch.float32), "f64": ("<f8", torch.float64)}


def checkpoint_bytes(model: EFGN, dtype: str = "f32") -> bytes:
    np_dtype, _ = _CKPT_DTYPES[dtype]
    state = model.state_dict()
    header = {
        "config": model.cfg.to_dict(),
        "bands": model.bands,
        "seed": model.seed,
        "tensors": [{"name": k, "shape": list(v.shape), "dtype": dtype} for k, v in state.items()],
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    chunks = [MAGIC, struct.pack("<I", len(head)), head]
    for v in state.values():
        chunks.append(np.ascontiguousarray(v.detach().cpu().numpy(), dtype=np_dtype).tobytes())
    return b"".join(chunks)


def save_checkpoint(model: EFGN, path, dtype: str = "f32") -> None:
    Path(path).write_bytes(checkpoint_bytes(model, dtype))


def load_checkpoint(path) -> EFGN:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError("not an EFGN checkpoint")
    (n,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12 : 12 + n].decode("utf-8"))
    model = EFGN(ModelConfig.from_dict(header["config"]), header["bands"], header.get("seed", 0))
    offset = 12 + n
    state = {}
    dtypes = set()
    for t in header["tensors"]:
        np_dtype, torch_dtype = _CKPT_DTYPES[t["dtype"]]
        dtypes.add(torch_dtype)
        count = int(np.prod(t["shape"], dtype=np.int64))
        size = count * np.dtype(np_dtype).itemsize
        if offset + size > len(raw):
            raise ValueError(f"checkpoint truncated at tensor {t['name']}")
        arr = np.frombuffer(raw, dtype=np_dtype, count=count, offset=offset).reshape(t["shape"])
        state[t["name"]] = torch.from_numpy(arr.astype(arr.dtype.newbyteorder("=")))
        offset += size
    if offset != len(raw):
        raise ValueError("trailing bytes after checkpoint payload")
    if dtypes == {torch.float64}:
        model = model.double()
    model.load_state_dict(state)
    return model
