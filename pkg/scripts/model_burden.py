"""Parameter, FLOP and activation budget of EFGN across input sizes.

    python3 scripts/model_burden.py --bands 128 --scale 4 --sizes 16 32 64
"""

import argparse

from efgn.core import ModelConfig
from efgn.network import EFGN, count_params, estimate_activation_bytes, estimate_flops


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--bands", type=int, default=128)
    ap.add_argument("--scale", type=int, default=4)
    ap.add_argument("--sizes", type=int, nargs="+", default=[16, 32, 64])
    ap.add_argument("--separate", action="store_true", help="also report per-group (unshared) branch weights")
    args = ap.parse_args()

    variants = [True, False] if args.separate else [True]
    print(f"{'branches':>9} {'params':>10} {'LR size':>8} {'GFLOPs':>9} {'act GB':>8}")
    for shared in variants:
        cfg = ModelConfig(scale=args.scale, share_branch_weights=shared)
        model = EFGN(cfg, args.bands)
        n = count_params(model)
        for size in args.sizes:
            flops = estimate_flops(model, size, size, args.scale)
            act = estimate_activation_bytes(model, size, size, args.scale)
            label = "shared" if shared else "separate"
            print(f"{label:>9} {n:>10,d} {size:>8d} {flops / 1e9:>9.2f} {act / 1e9:>8.3f}")


if __name__ == "__main__":
    main()
