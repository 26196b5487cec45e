"""Oversampled DFT grid-of-beams baseline for per-subband precoder selection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import metrics
from .channelgen import CsiSample
from .errors import ConfigurationError, DimensionMismatchError


@dataclass(frozen=True)
class CodebookConfig:
    n_tx: int
    oversample: int = 1

    def __post_init__(self):
        if self.n_tx < 1 or self.oversample < 1:
            raise ConfigurationError("n_tx and oversample must be positive")

    @property
    def n_beams(self) -> int:
        return self.oversample * self.n_tx

    @property
    def bits_per_subband(self) -> int:
        return math.ceil(math.log2(self.n_beams)) if self.n_beams > 1 else 0


def build_dft_codebook(cfg: CodebookConfig) -> np.ndarray:
    """Unit-norm beams as columns: entry n of beam m is exp(2j pi n m / (O n_tx)) / sqrt(n_tx)."""
    n = np.arange(cfg.n_tx)[:, None]
    m = np.arange(cfg.n_beams)[None, :]
    return np.exp(2j * np.pi * n * m / cfg.n_beams) / np.sqrt(cfg.n_tx)


def codebook_encode(sample: CsiSample, cfg: CodebookConfig) -> np.ndarray:
    """Best beam index per subband by |w_k^H b_m| (ties: lowest index)."""
    if sample.n_tx != cfg.n_tx:
        raise DimensionMismatchError(f"sample has {sample.n_tx} antennas, codebook {cfg.n_tx}")
    beams = build_dft_codebook(cfg)
    corr = np.abs(sample.columns.conj().T @ beams)  # (n_subband, n_beams)
    return np.argmax(corr, axis=1)


def codebook_decode(indices: np.ndarray, cfg: CodebookConfig) -> CsiSample:
    beams = build_dft_codebook(cfg)
    idx = np.asarray(indices, dtype=np.int64)
    if np.any(idx < 0) or np.any(idx >= cfg.n_beams):
        raise DimensionMismatchError("beam index out of range")
    return CsiSample(columns=beams[:, idx])


def feedback_bits(cfg: CodebookConfig, n_subband: int) -> int:
    return n_subband * cfg.bits_per_subband


def evaluate_codebook(samples: np.ndarray, cfg: CodebookConfig) -> metrics.EvalReport:
    recon = np.empty_like(samples)
    for i in range(samples.shape[0]):
        sample = CsiSample(columns=samples[i])
        recon[i] = codebook_decode(codebook_encode(sample, cfg), cfg).columns
    return metrics.eval_report(samples, recon)
