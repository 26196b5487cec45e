"""Reconstruction quality metrics for subband eigenvector feedback."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channelgen import CsiSample, Dataset
from .errors import ContractError, DegenerateInputError

EVAL_CSV_HEADER = "sgcs,mse,nmse_db,n_samples"


def _stack(samples) -> np.ndarray:
    """Accept a Dataset, an (n, n_tx, n_sb) array, or a sequence of CsiSamples."""
    if isinstance(samples, Dataset):
        return samples.samples
    if isinstance(samples, np.ndarray):
        if samples.ndim == 2:
            return samples[None]
        return samples
    if isinstance(samples, CsiSample):
        return samples.columns[None]
    return np.stack([s.columns if isinstance(s, CsiSample) else np.asarray(s) for s in samples])


def sgcs(truth, pred) -> float:
    """Mean squared generalized cosine similarity over samples and subbands.

    rho = mean_i mean_k |w_ik^H w'_ik|^2 / (||w_ik|| ||w'_ik||)^2, in [0, 1].
    """
    t = _stack(truth)
    p = _stack(pred)
    if t.shape != p.shape:
        raise ContractError(f"shape mismatch: truth {t.shape} vs pred {p.shape}")
    total = 0.0
    for i in range(t.shape[0]):
        nt = np.linalg.norm(t[i], axis=0)
        np_ = np.linalg.norm(p[i], axis=0)
        if np.any(nt == 0.0) or np.any(np_ == 0.0):
            k = int(np.argmin(np.minimum(nt, np_)))
            raise DegenerateInputError(f"zero-norm column at sample {i}, subband {k}")
        inner = np.abs(np.sum(t[i].conj() * p[i], axis=0))
        total += float(np.mean((inner / (nt * np_)) ** 2))
    return total / t.shape[0]


def per_sample_sgcs(truth, pred) -> np.ndarray:
    """Subband-averaged squared cosine similarity for each sample."""
    t = _stack(truth)
    p = _stack(pred)
    if t.shape != p.shape:
        raise ContractError(f"shape mismatch: truth {t.shape} vs pred {p.shape}")
    nt = np.linalg.norm(t, axis=1)
    np_ = np.linalg.norm(p, axis=1)
    if np.any(nt == 0.0) or np.any(np_ == 0.0):
        raise DegenerateInputError("zero-norm column")
    inner = np.abs(np.sum(t.conj() * p, axis=1))
    return np.mean((inner / (nt * np_)) ** 2, axis=1)


def mse(v: np.ndarray, v2: np.ndarray) -> float:
    v = np.asarray(v, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)
    if v.shape != v2.shape:
        raise ContractError("mse operands must share a shape")
    return float(np.mean((v - v2) ** 2))


def nmse(v: np.ndarray, v2: np.ndarray) -> float:
    """Sum of squared errors normalized by the energy of the reference v."""
    v = np.asarray(v, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)
    if v.shape != v2.shape:
        raise ContractError("nmse operands must share a shape")
    energy = float(np.sum(v ** 2))
    if energy == 0.0:
        raise DegenerateInputError("nmse reference has zero energy")
    return float(np.sum((v - v2) ** 2)) / energy


def nmse_db(v: np.ndarray, v2: np.ndarray) -> float:
    value = nmse(v, v2)
    if value == 0.0:
        return float("-inf")
    return 10.0 * math.log10(value)


@dataclass(frozen=True)
class EvalReport:
    """Aggregate reconstruction metrics for one evaluation run."""

    sgcs: float
    mse: float
    nmse_db: float
    n_samples: int

    def to_csv_row(self) -> str:
        return f"{self.sgcs:.10g},{self.mse:.10g},{self.nmse_db:.10g},{self.n_samples}"


def eval_report(truth, pred) -> EvalReport:
    """Build a report from complex sample stacks; errors use stacked real parts."""
    t = _stack(truth)
    p = _stack(pred)
    score = sgcs(t, p)
    tr = np.concatenate([t.real.reshape(-1), t.imag.reshape(-1)])
    pr = np.concatenate([p.real.reshape(-1), p.imag.reshape(-1)])
    return EvalReport(sgcs=score, mse=mse(tr, pr), nmse_db=nmse_db(tr, pr),
                      n_samples=t.shape[0])
