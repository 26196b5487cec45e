"""Best-of-V model ensembles sharing one feedback budget.

Every member compresses to the same payload width; the emitted stream is a
big-endian member index of ceil(log2 V) bits followed by the winning member's
payload, so the total is always exactly bits_total.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import metrics, model
from .channelgen import CsiSample
from .errors import ConfigurationError, ProtocolError
from .quantizer import Bitstream


@dataclass
class EnsembleConfig:
    members: list[model.ModelWeights]
    bits_total: int

    def __post_init__(self):
        if not self.members:
            raise ConfigurationError("ensemble needs at least one member")
        v = len(self.members)
        index_bits = _index_bits(v)
        payload = self.bits_total - index_bits
        if payload < 1:
            raise ConfigurationError("bits_total leaves no room for a payload")
        for i, member in enumerate(self.members):
            cfg = member.cfg
            if cfg.bits_total != payload:
                raise ConfigurationError(
                    f"member {i} emits {cfg.bits_total} bits, ensemble payload is {payload}")
            if payload % cfg.bits_per_symbol != 0:
                raise ConfigurationError(
                    f"payload {payload} not divisible by member {i}'s bits_per_symbol")

    @property
    def index_bits(self) -> int:
        return _index_bits(len(self.members))

    @property
    def payload_bits(self) -> int:
        return self.bits_total - self.index_bits


def _index_bits(v: int) -> int:
    return math.ceil(math.log2(v)) if v > 1 else 0


def _index_stream(j: int, width: int) -> np.ndarray:
    if width == 0:
        return np.zeros(0, dtype=np.uint8)
    return np.array([(j >> k) & 1 for k in range(width - 1, -1, -1)], dtype=np.uint8)


def ensemble_encode(sample: CsiSample, ens: EnsembleConfig) -> Bitstream:
    """Pick the member whose round trip scores best on this sample (ties: lowest)."""
    scores = np.empty(len(ens.members))
    payloads = []
    for i, member in enumerate(ens.members):
        stream = model.encode(sample, member)
        recon = model.decode(stream, member)
        scores[i] = metrics.sgcs(sample.columns[None], recon.columns[None])
        payloads.append(stream)
    j = int(np.argmax(scores))
    bits = np.concatenate([_index_stream(j, ens.index_bits), payloads[j].bits])
    return Bitstream(bits=bits)


def ensemble_decode(stream: Bitstream, ens: EnsembleConfig) -> CsiSample:
    if len(stream) != ens.bits_total:
        raise ProtocolError(f"stream length {len(stream)} != bits_total {ens.bits_total}")
    width = ens.index_bits
    j = 0
    for bit in stream.bits[:width]:
        j = (j << 1) | int(bit)
    if j >= len(ens.members):
        raise ProtocolError(f"member index {j} out of range for {len(ens.members)} members")
    return model.decode(Bitstream(bits=stream.bits[width:]), ens.members[j])


def evaluate_ensemble(ens: EnsembleConfig, samples: np.ndarray
                      ) -> tuple[metrics.EvalReport, list[metrics.EvalReport]]:
    """Full bitstream round trip per sample; also reports each member alone."""
    n = samples.shape[0]
    recon = np.empty_like(samples)
    for i in range(n):
        sample = CsiSample(columns=samples[i])
        recon[i] = ensemble_decode(ensemble_encode(sample, ens), ens).columns
    member_recon = [model.reconstruct_batch(m, samples) for m in ens.members]
    member_reports = [metrics.eval_report(samples, r) for r in member_recon]

    # selection optimality: the ensemble can never lose to a member on a sample
    ens_scores = metrics.per_sample_sgcs(samples, recon)
    best_member = np.max([metrics.per_sample_sgcs(samples, r) for r in member_recon], axis=0)
    if np.any(ens_scores < best_member - 1e-9):
        raise AssertionError("ensemble selection fell below a member; selection is broken")
    return metrics.eval_report(samples, recon), member_reports


# ---------------------------------------------------------------------------
# plain-text manifest: bits_total plus one member weight path per line

def save_manifest(paths: list[str], bits_total: int, manifest_path: str) -> None:
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write(f"bits_total = {bits_total}\n")
        for p in paths:
            fh.write(f"member = {p}\n")


def load_manifest(manifest_path: str) -> EnsembleConfig:
    bits_total = None
    members = []
    base = os.path.dirname(os.path.abspath(manifest_path))
    with open(manifest_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key == "bits_total":
                bits_total = int(value)
            elif key == "member":
                path = value if os.path.isabs(value) else os.path.join(base, value)
                members.append(model.load_weights(path))
            else:
                raise ProtocolError(f"unknown manifest key {key!r}")
    if bits_total is None:
        raise ProtocolError("manifest missing bits_total")
    return EnsembleConfig(members=members, bits_total=bits_total)
