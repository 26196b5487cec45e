"""Print trainable-parameter and FLOP counts across feedback budgets.

The fullscale rows reproduce the reference complexity table; the desk rows
show the configuration the training experiments actually run.
"""

import argparse

from evcsi.model import (FULLSCALE_DIMS, FULLSCALE_REFERENCE, ModelConfig,
                         count_flops, count_params)

DESK_DIMS = dict(n_tx=8, n_subband=12, n_e=64, n_b=2, n_head=4, k_h=2,
                 bits_per_symbol=2)


def table(dims, budgets, reference=None):
    print(f"{'M':>5} {'enc params':>12} {'dec params':>12} "
          f"{'enc flops':>12} {'dec flops':>12}  ref enc/dec")
    for m in budgets:
        cfg = ModelConfig(bits_total=m, **dims)
        p = count_params(cfg)
        f = count_flops(cfg)
        ref = ""
        if reference and m in reference:
            enc, dec = reference[m][:2]
            ref = f"{enc:.4e} / {dec:.4e}"
        print(f"{m:>5} {p['encoder']:>12,} {p['decoder']:>12,} "
              f"{f['encoder']:>12,} {f['decoder']:>12,}  {ref}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--budgets", type=int, nargs="+", default=[32, 48, 120])
    args = ap.parse_args()

    print("fullscale configuration "
          f"(n_e={FULLSCALE_DIMS['n_e']}, n_b={FULLSCALE_DIMS['n_b']}, "
          f"n_tx={FULLSCALE_DIMS['n_tx']})")
    table(FULLSCALE_DIMS, args.budgets, FULLSCALE_REFERENCE)
    print()
    print(f"desk configuration (n_e={DESK_DIMS['n_e']}, n_b={DESK_DIMS['n_b']}, "
          f"n_tx={DESK_DIMS['n_tx']})")
    table(DESK_DIMS, args.budgets)


if __name__ == "__main__":
    main()
