"""Train the desk-scale model on flat and selective channels.

Reports validation SGCS for the trained model, the untrained init, and the
DFT-grid baseline at comparable feedback overhead.  With the defaults this
takes a few minutes per profile on one core.
"""

import argparse
import time

import numpy as np

from evcsi.channelgen import ChannelParams, CsiSample, build_dataset
from evcsi.codebook import CodebookConfig, evaluate_codebook, feedback_bits
from evcsi.model import ModelConfig, init_model
from evcsi.training import TrainConfig, evaluate, train_run

PROFILES = {"flat": 0.0, "selective": 300e-9}


def run_profile(name, delay_spread, args):
    params = ChannelParams(n_tx=8, n_rx=2, n_subband=12, delay_spread=delay_spread)
    dataset = build_dataset(params, args.samples, master_seed=args.data_seed)
    mcfg = ModelConfig(n_tx=8, n_subband=12, n_e=64, n_b=2, n_head=4, k_h=2,
                       bits_total=32, bits_per_symbol=2)
    tcfg = TrainConfig(epochs=args.epochs, seed=args.seed, batch_size=32,
                       lr_max=2e-3, warmup_epochs=10)
    val = dataset.val_samples()

    untrained = evaluate(init_model(mcfg, seed=tcfg.seed), val).sgcs
    t0 = time.time()
    weights, logs = train_run(dataset, tcfg, mcfg)
    secs = time.time() - t0
    trained = evaluate(weights, val).sgcs

    cb = CodebookConfig(n_tx=8, oversample=args.oversample)
    baseline = evaluate_codebook(val, cb).sgcs
    bits = feedback_bits(cb, mcfg.n_subband)

    print(f"\n{name}: {args.samples} samples, {args.epochs} epochs, {secs:.0f}s")
    print(f"  trained val SGCS   {trained:.4f}  ({mcfg.bits_total} bits)")
    print(f"  untrained init     {untrained:.4f}")
    print(f"  dft-grid baseline  {baseline:.4f}  ({bits} bits)")
    best = max(logs, key=lambda lg: lg.val_sgcs)
    print(f"  best epoch {best.epoch}: {best.val_sgcs:.4f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--profile", choices=[*PROFILES, "both"], default="both")
    ap.add_argument("--samples", type=int, default=2048)
    ap.add_argument("--epochs", type=int, default=300)
    ap.add_argument("--seed", type=int, default=1234)
    ap.add_argument("--data-seed", type=int, default=77)
    ap.add_argument("--oversample", type=int, default=4)
    args = ap.parse_args()

    names = list(PROFILES) if args.profile == "both" else [args.profile]
    for name in names:
        run_profile(name, PROFILES[name], args)


if __name__ == "__main__":
    main()
