"""Shrink a trained model's feedback budget by bottleneck surgery.

Trains at a wide bit budget, replaces only the two bottleneck-adjacent
layers to reach the narrow budget, fine-tunes briefly, and compares against
training the narrow model from scratch for the same total epochs.
"""

import argparse

from evcsi.channelgen import ChannelParams, build_dataset
from evcsi.model import ModelConfig, resize_bottleneck
from evcsi.training import TrainConfig, evaluate, train_run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=1024)
    ap.add_argument("--wide-bits", type=int, default=64)
    ap.add_argument("--narrow-bits", type=int, default=32)
    ap.add_argument("--wide-epochs", type=int, default=80)
    ap.add_argument("--tune-epochs", type=int, default=40)
    ap.add_argument("--seed", type=int, default=1234)
    args = ap.parse_args()

    params = ChannelParams(n_tx=8, n_rx=2, n_subband=12, delay_spread=0.0)
    dataset = build_dataset(params, args.samples, master_seed=77)
    val = dataset.val_samples()
    dims = dict(n_tx=8, n_subband=12, n_e=64, n_b=2, n_head=4, k_h=2,
                bits_per_symbol=2)

    wide_cfg = ModelConfig(bits_total=args.wide_bits, **dims)
    tcfg = TrainConfig(epochs=args.wide_epochs, seed=args.seed, batch_size=32,
                       lr_max=2e-3, warmup_epochs=10)
    wide, _ = train_run(dataset, tcfg, wide_cfg)
    print(f"wide  ({args.wide_bits} bits, {args.wide_epochs} ep): "
          f"val SGCS {evaluate(wide, val).sgcs:.4f}")

    narrow = resize_bottleneck(wide, bits_total=args.narrow_bits, seed=args.seed + 1)
    print(f"after surgery ({args.narrow_bits} bits, no tuning): "
          f"val SGCS {evaluate(narrow, val).sgcs:.4f}")

    tune = TrainConfig(epochs=args.tune_epochs, seed=args.seed + 2, batch_size=32,
                       lr_max=5e-4, warmup_epochs=5)
    tuned, _ = train_run(dataset, tune, narrow.cfg, weights=narrow)
    print(f"fine-tuned ({args.tune_epochs} ep): val SGCS {evaluate(tuned, val).sgcs:.4f}")

    scratch_cfg = ModelConfig(bits_total=args.narrow_bits, **dims)
    scratch_tcfg = TrainConfig(epochs=args.wide_epochs + args.tune_epochs,
                               seed=args.seed, batch_size=32, lr_max=2e-3,
                               warmup_epochs=10)
    scratch, _ = train_run(dataset, scratch_tcfg, scratch_cfg)
    print(f"from scratch ({args.narrow_bits} bits, "
          f"{scratch_tcfg.epochs} ep): val SGCS {evaluate(scratch, val).sgcs:.4f}")


if __name__ == "__main__":
    main()
