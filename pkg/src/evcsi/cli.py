"""Command-line interface: gen, train, eval, baseline, ensemble, count."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import codebook, ensemble, metrics, model, runconfig, training
from .channelgen import ChannelParams, build_dataset, load_dataset, save_dataset
from .errors import (
    ConfigurationError,
    DimensionMismatchError,
    EvcsiError,
    ProtocolError,
)

EXIT_IO = 2
EXIT_CONFIG = 3
EXIT_DIMS = 4

PROFILES = {
    "flat": dict(delay_spread=0.0),
    "selective": dict(delay_spread=300e-9),
}


def _add_channel_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--profile", choices=sorted(PROFILES), default="flat",
                   help="delay-spread preset (flat: 0, selective: 300 ns)")
    p.add_argument("--n-tx", type=int, default=8, help="transmit antennas")
    p.add_argument("--n-rx", type=int, default=2, help="receive antennas")
    p.add_argument("--n-subband", type=int, default=12, help="feedback subbands")
    p.add_argument("--n-cluster", type=int, default=3, help="scattering clusters")
    p.add_argument("--n-subpath", type=int, default=8, help="subpaths per cluster")
    p.add_argument("--delay-spread", type=float, default=None,
                   help="RMS delay spread in seconds (overrides the profile)")
    p.add_argument("--carrier-hz", type=float, default=3.5e9, help="carrier frequency")
    p.add_argument("--subcarrier-hz", type=float, default=15e3, help="subcarrier spacing")
    p.add_argument("--n-rb", type=int, default=48, help="resource blocks across the band")


def _channel_params(args: argparse.Namespace) -> ChannelParams:
    delay = PROFILES[args.profile]["delay_spread"]
    if args.delay_spread is not None:
        delay = args.delay_spread
    return ChannelParams(
        n_tx=args.n_tx, n_rx=args.n_rx, n_subband=args.n_subband,
        n_cluster=args.n_cluster, n_subpath=args.n_subpath, delay_spread=delay,
        carrier_hz=args.carrier_hz, subcarrier_hz=args.subcarrier_hz, n_rb=args.n_rb)


def _print_report(report: metrics.EvalReport, label: str | None = None,
                  bits: int | None = None) -> None:
    if label is not None:
        suffix = f" ({bits} bits)" if bits is not None else ""
        print(f"# {label}{suffix}")
    print(metrics.EVAL_CSV_HEADER)
    print(report.to_csv_row())


def _write_report(report: metrics.EvalReport, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(metrics.EVAL_CSV_HEADER + "\n")
        fh.write(report.to_csv_row() + "\n")


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen(args: argparse.Namespace) -> int:
    params = _channel_params(args)
    dataset = build_dataset(params, args.samples, args.seed)
    save_dataset(dataset, args.out)
    runconfig.write_manifest(args.out, "gen", seeds={"master_seed": args.seed})
    print(f"wrote {args.samples} samples to {args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    model_cfg, train_cfg = runconfig.load_run_config(args.config)
    dataset = load_dataset(args.data, train_fraction=train_cfg.train_fraction,
                           split_seed=train_cfg.seed)
    if (dataset.n_tx, dataset.n_subband) != (model_cfg.n_tx, model_cfg.n_subband):
        raise DimensionMismatchError(
            f"dataset is ({dataset.n_tx} tx, {dataset.n_subband} subbands), config wants "
            f"({model_cfg.n_tx}, {model_cfg.n_subband})")
    if train_cfg.stages:
        weights, logs = training.staged_train(dataset, train_cfg, model_cfg)
    else:
        weights, logs = training.train_run(dataset, train_cfg, model_cfg)
    model.save_weights(weights, args.out)
    log_path = args.log if args.log else args.out + ".log.csv"
    training.save_metric_log(logs, log_path)
    runconfig.write_manifest(args.out, "train", seeds={"seed": train_cfg.seed},
                             config_path=args.config,
                             extra_artifacts={"metric_log": log_path})
    final = logs[-1]
    print(f"trained {final.epoch} epochs; final val_sgcs {final.val_sgcs:.6f}; wrote {args.out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    weights = model.load_weights(args.weights)
    dataset = load_dataset(args.data)
    if (dataset.n_tx, dataset.n_subband) != (weights.cfg.n_tx, weights.cfg.n_subband):
        raise DimensionMismatchError(
            f"dataset is ({dataset.n_tx} tx, {dataset.n_subband} subbands), weights want "
            f"({weights.cfg.n_tx}, {weights.cfg.n_subband})")
    samples = dataset.val_samples() if args.split == "val" else \
        dataset.train_samples() if args.split == "train" else dataset.samples
    report = training.evaluate(weights, samples)
    _print_report(report)
    if args.out:
        _write_report(report, args.out)
        runconfig.write_manifest(args.out, "eval", seeds={})
    return 0


def cmd_baseline(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.data)
    cfg = codebook.CodebookConfig(n_tx=dataset.n_tx, oversample=args.oversample)
    report = codebook.evaluate_codebook(dataset.samples, cfg)
    bits = codebook.feedback_bits(cfg, dataset.n_subband)
    _print_report(report, label="dft-grid", bits=bits)
    if args.out:
        _write_report(report, args.out)
        runconfig.write_manifest(args.out, "baseline", seeds={})
    return 0


def cmd_ensemble(args: argparse.Namespace) -> int:
    ens = ensemble.load_manifest(args.manifest)
    dataset = load_dataset(args.data)
    cfg0 = ens.members[0].cfg
    if (dataset.n_tx, dataset.n_subband) != (cfg0.n_tx, cfg0.n_subband):
        raise DimensionMismatchError("dataset dimensions do not match ensemble members")
    report, member_reports = ensemble.evaluate_ensemble(ens, dataset.samples)
    for i, mr in enumerate(member_reports):
        _print_report(mr, label=f"member {i}", bits=ens.payload_bits)
    _print_report(report, label="ensemble", bits=ens.bits_total)
    if args.out:
        _write_report(report, args.out)
        runconfig.write_manifest(args.out, "ensemble", seeds={})
    return 0


def cmd_count(args: argparse.Namespace) -> int:
    model_cfg, _ = runconfig.load_run_config(args.config)
    params = model.count_params(model_cfg)
    flops = model.count_flops(model_cfg)
    reference = model.FULLSCALE_REFERENCE.get(model_cfg.bits_total) \
        if model.is_fullscale(model_cfg) else None
    print("component,params,flops,reference_params,within_2pct")
    for i, part in enumerate(("encoder", "decoder")):
        if reference is not None:
            ref = reference[i]
            flag = "PASS" if abs(params[part] - ref) / ref <= 0.02 else "FAIL"
            print(f"{part},{params[part]},{flops[part]},{ref:.4e},{flag}")
        else:
            print(f"{part},{params[part]},{flops[part]},,")
    print(f"total,{params['total']},{flops['total']},,")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evcsi",
        description="Subband eigenvector CSI feedback: data generation, "
                    "autoencoder training, and baselines.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate an eigenvector dataset")
    _add_channel_args(p)
    p.add_argument("--samples", type=int, required=True, help="number of samples")
    p.add_argument("--seed", type=int, required=True, help="master seed")
    p.add_argument("--out", required=True, help="output dataset path")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train an autoencoder on a dataset")
    p.add_argument("--data", required=True, help="input dataset path")
    p.add_argument("--config", required=True, help="run config file")
    p.add_argument("--out", required=True, help="output weight archive path")
    p.add_argument("--log", default=None, help="metric log path (default: <out>.log.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a weight archive on a dataset")
    p.add_argument("--data", required=True, help="input dataset path")
    p.add_argument("--weights", required=True, help="weight archive path")
    p.add_argument("--split", choices=("all", "train", "val"), default="all",
                   help="which samples to score")
    p.add_argument("--out", default=None, help="optional CSV report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline", help="score the DFT grid-of-beams baseline")
    p.add_argument("--data", required=True, help="input dataset path")
    p.add_argument("--oversample", type=int, default=1, help="DFT oversampling factor")
    p.add_argument("--out", default=None, help="optional CSV report path")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("ensemble", help="evaluate a best-of-V ensemble")
    p.add_argument("--manifest", required=True, help="ensemble manifest path")
    p.add_argument("--data", required=True, help="input dataset path")
    p.add_argument("--out", default=None, help="optional CSV report path")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("count", help="report parameter and FLOP counts for a config")
    p.add_argument("--config", required=True, help="run config file")
    p.set_defaults(func=cmd_count)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DimensionMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIMS
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except EvcsiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
