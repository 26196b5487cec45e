"""Synthetic clustered-multipath frequency channels and subband eigenvector extraction.

Each sample is drawn from its own RNG substream keyed by (master_seed,
sample_index), so regenerating one sample never depends on generation order.
Per-subband dominant eigenvectors are found by power iteration on the Gram
matrix and stored with unit norm and a canonical phase (largest-modulus entry
real and nonnegative).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    ContractError,
    ConvergenceError,
    DegenerateInputError,
    NumericError,
    ProtocolError,
)

# intra-cluster full angular width; cluster centers are uniform over the sector
ANGLE_SPREAD_RAD = np.deg2rad(10.0)

EVCS_MAGIC = b"EVCS"
EVCS_VERSION = 1


@dataclass(frozen=True)
class ChannelParams:
    """Geometry and statistics of the synthetic clustered channel."""

    n_tx: int = 8
    n_rx: int = 2
    n_subband: int = 12
    n_cluster: int = 3
    n_subpath: int = 8
    delay_spread: float = 0.0
    carrier_hz: float = 3.5e9
    subcarrier_hz: float = 15e3
    n_rb: int = 48

    def __post_init__(self):
        for name in ("n_tx", "n_rx", "n_subband", "n_cluster", "n_subpath", "n_rb"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {v!r}")
        if self.delay_spread < 0:
            raise ConfigurationError("delay_spread must be nonnegative")
        if self.carrier_hz <= 0 or self.subcarrier_hz <= 0:
            raise ConfigurationError("carrier_hz and subcarrier_hz must be positive")


@dataclass(frozen=True)
class FreqChannel:
    """Per-subband channel matrices, shape (n_subband, n_rx, n_tx)."""

    blocks: np.ndarray

    def __post_init__(self):
        if self.blocks.ndim != 3:
            raise ContractError("FreqChannel blocks must be 3-D")
        if not np.all(np.isfinite(self.blocks.view(np.float64))):
            raise NumericError("non-finite channel entries")


@dataclass(frozen=True)
class CsiSample:
    """Per-subband dominant eigenvectors, columns of shape (n_tx, n_subband)."""

    columns: np.ndarray

    @property
    def n_tx(self) -> int:
        return self.columns.shape[0]

    @property
    def n_subband(self) -> int:
        return self.columns.shape[1]

    def validate(self, tol: float = 1e-9) -> None:
        norms = np.linalg.norm(self.columns, axis=0)
        if np.any(np.abs(norms - 1.0) > tol):
            raise ContractError("CsiSample columns must be unit norm")


def subband_center_freqs(params: ChannelParams) -> np.ndarray:
    """Subband center offsets from the carrier, symmetric around zero."""
    width = (params.n_rb / params.n_subband) * 12.0 * params.subcarrier_hz
    k = np.arange(params.n_subband, dtype=np.float64)
    return (k - (params.n_subband - 1) / 2.0) * width


def sample_rng(master_seed: int, sample_index: int) -> np.random.Generator:
    """Independent, order-free substream for one sample."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(sample_index,))
    return np.random.default_rng(ss)


def steering_vector(n_ant: int, angle: np.ndarray) -> np.ndarray:
    """Half-wavelength ULA response, one column per angle, unit-modulus entries."""
    n = np.arange(n_ant, dtype=np.float64)[:, None]
    return np.exp(1j * np.pi * n * np.sin(np.atleast_1d(angle))[None, :])


def synth_freq_channel(params: ChannelParams, master_seed: int,
                       sample_index: int) -> FreqChannel:
    """Draw one clustered-multipath channel across all subbands.

    H_k = sum_d sum_l g_{d,l} a_rx(phi) a_tx(psi)^H exp(-2j pi f_k tau_d),
    with per-subpath powers normalized so E||H_k||_F^2 = n_rx * n_tx.
    """
    if sample_index < 0:
        raise ConfigurationError("sample_index must be nonnegative")
    rng = sample_rng(master_seed, sample_index)
    nc, nl = params.n_cluster, params.n_subpath

    # draw order is part of the determinism contract; do not reorder
    if params.delay_spread > 0:
        delays = rng.exponential(scale=2.0 * params.delay_spread, size=nc)
        cluster_power = np.exp(-delays / (2.0 * params.delay_spread))
    else:
        delays = np.zeros(nc)
        cluster_power = np.ones(nc)
    centers_tx = rng.uniform(-np.pi / 2, np.pi / 2, size=nc)
    centers_rx = rng.uniform(-np.pi / 2, np.pi / 2, size=nc)
    off_tx = rng.uniform(-ANGLE_SPREAD_RAD / 2, ANGLE_SPREAD_RAD / 2, size=(nc, nl))
    off_rx = rng.uniform(-ANGLE_SPREAD_RAD / 2, ANGLE_SPREAD_RAD / 2, size=(nc, nl))
    gain_re = rng.standard_normal((nc, nl))
    gain_im = rng.standard_normal((nc, nl))

    power = cluster_power / cluster_power.sum()  # per cluster, sums to 1
    amp = np.sqrt(power[:, None] / nl)
    gains = amp * (gain_re + 1j * gain_im) / np.sqrt(2.0)

    # aggregate each cluster once; subband dependence enters via the delay phase
    per_cluster = np.empty((nc, params.n_rx, params.n_tx), dtype=np.complex128)
    for d in range(nc):
        a_rx = steering_vector(params.n_rx, centers_rx[d] + off_rx[d])
        a_tx = steering_vector(params.n_tx, centers_tx[d] + off_tx[d])
        per_cluster[d] = (a_rx * gains[d][None, :]) @ a_tx.conj().T

    freqs = subband_center_freqs(params)
    phase = np.exp(-2j * np.pi * freqs[:, None] * delays[None, :])  # (n_subband, nc)
    blocks = np.einsum("kd,drt->krt", phase, per_cluster)
    return FreqChannel(blocks=blocks)


def canonical_phase(vec: np.ndarray) -> np.ndarray:
    """Rotate so the largest-modulus entry is real nonnegative (ties: lowest index)."""
    j = int(np.argmax(np.abs(vec)))
    pivot = vec[j]
    mag = abs(pivot)
    if mag == 0.0:
        raise DegenerateInputError("cannot canonicalize the zero vector")
    return vec * (pivot.conj() / mag)


def dominant_eigenvector(h: np.ndarray, max_iter: int = 20000,
                         tol: float = 1e-10) -> tuple[np.ndarray, float]:
    """Dominant unit eigenvector and eigenvalue of H^H H by power iteration.

    Convergence is declared when the Rayleigh quotient stabilizes and the
    residual ||G w - lambda w|| falls below 1e-8 * lambda.  The iteration
    cap is sized for relative spectral gaps down to about 1e-3; tighter
    near-degeneracies raise ConvergenceError rather than return a mixture.
    """
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim != 2:
        raise ContractError("dominant_eigenvector expects a 2-D matrix")
    if not np.all(np.isfinite(h.view(np.float64))):
        raise NumericError("non-finite entries in channel matrix")
    if not np.any(h):
        raise DegenerateInputError("all-zero matrix has no dominant eigenvector")

    gram = h.conj().T @ h
    n = gram.shape[0]
    w = np.ones(n, dtype=np.complex128) / np.sqrt(n)
    # tie-break: an all-ones start can sit orthogonal to the dominant subspace
    y = gram @ w
    if np.linalg.norm(y) <= 1e-12 * np.trace(gram).real:
        w[0] += 1e-6
        w = w / np.linalg.norm(w)

    lam_prev = -np.inf
    lam = 0.0
    for _ in range(max_iter):
        y = gram @ w
        norm_y = np.linalg.norm(y)
        if norm_y == 0.0:
            w[0] += 1e-6
            w = w / np.linalg.norm(w)
            continue
        lam = float(np.real(np.vdot(w, y)))
        w_next = y / norm_y
        if abs(lam - lam_prev) <= tol * max(1.0, abs(lam)):
            resid = np.linalg.norm(gram @ w_next - lam * w_next)
            if resid <= 1e-9 * max(lam, np.finfo(np.float64).tiny):
                w = w_next
                break
        lam_prev = lam
        w = w_next
    else:
        resid = float(np.linalg.norm(gram @ w - lam * w))
        if lam <= 0 or resid > 1e-8 * lam:
            raise ConvergenceError(
                f"power iteration did not converge in {max_iter} iterations", residual=resid)

    w = canonical_phase(w / np.linalg.norm(w))
    lam = float(np.real(np.vdot(w, gram @ w)))
    resid = float(np.linalg.norm(gram @ w - lam * w))
    if resid > 1e-8 * lam:
        raise ConvergenceError("power iteration residual above tolerance", residual=resid)
    return w, lam


def extract_csi(channel: FreqChannel) -> CsiSample:
    """Per-subband dominant eigenvectors of H_k^H H_k, as sample columns."""
    n_sb, _, n_tx = channel.blocks.shape
    cols = np.empty((n_tx, n_sb), dtype=np.complex128)
    for k in range(n_sb):
        try:
            cols[:, k], _ = dominant_eigenvector(channel.blocks[k])
        except (ConvergenceError, DegenerateInputError) as exc:
            raise type(exc)(f"subband {k}: {exc}") from exc
    return CsiSample(columns=cols)


@dataclass
class Dataset:
    """Stack of CSI samples plus a deterministic train/val split rule."""

    samples: np.ndarray  # (n_samples, n_tx, n_subband) complex128
    split_seed: int = 0
    train_fraction: float = 0.8

    def __post_init__(self):
        if self.samples.ndim != 3:
            raise ContractError("Dataset samples must be (n, n_tx, n_subband)")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigurationError("train_fraction must lie strictly in (0, 1)")

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def n_tx(self) -> int:
        return self.samples.shape[1]

    @property
    def n_subband(self) -> int:
        return self.samples.shape[2]

    def sample(self, i: int) -> CsiSample:
        return CsiSample(columns=self.samples[i])

    def _split(self) -> tuple[np.ndarray, np.ndarray]:
        n = len(self)
        perm = np.random.default_rng(self.split_seed).permutation(n)
        n_train = round(n * self.train_fraction)
        return perm[:n_train], perm[n_train:]

    def train_indices(self) -> np.ndarray:
        return self._split()[0]

    def val_indices(self) -> np.ndarray:
        return self._split()[1]

    def train_samples(self) -> np.ndarray:
        return self.samples[self.train_indices()]

    def val_samples(self) -> np.ndarray:
        return self.samples[self.val_indices()]


def build_dataset(params: ChannelParams, n_samples: int, master_seed: int,
                  train_fraction: float = 0.8, split_seed: int | None = None) -> Dataset:
    """Generate n_samples eigenvector samples from independent substreams."""
    if n_samples < 1:
        raise ConfigurationError("n_samples must be at least 1")
    stack = np.empty((n_samples, params.n_tx, params.n_subband), dtype=np.complex128)
    for i in range(n_samples):
        stack[i] = extract_csi(synth_freq_channel(params, master_seed, i)).columns
    if split_seed is None:
        split_seed = master_seed
    return Dataset(samples=stack, split_seed=split_seed, train_fraction=train_fraction)


# ---------------------------------------------------------------------------
# dataset file format: magic EVCS, LE u32 version/n_samples/n_tx/n_subband,
# then per sample, per subband column, n_tx (real f32, imag f32) pairs.

def save_dataset(dataset: Dataset, path: str) -> None:
    n, n_tx, n_sb = dataset.samples.shape
    # (n, n_tx, n_sb) -> per sample, columns in subband order
    cols = np.transpose(dataset.samples, (0, 2, 1))  # (n, n_sb, n_tx)
    inter = np.empty((n, n_sb, n_tx, 2), dtype="<f4")
    inter[..., 0] = cols.real
    inter[..., 1] = cols.imag
    with open(path, "wb") as fh:
        fh.write(EVCS_MAGIC)
        fh.write(struct.pack("<IIII", EVCS_VERSION, n, n_tx, n_sb))
        fh.write(inter.tobytes())


def load_dataset(path: str, train_fraction: float = 0.8,
                 split_seed: int = 0) -> Dataset:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != EVCS_MAGIC:
            raise ProtocolError(f"bad dataset magic {magic!r}")
        header = fh.read(16)
        if len(header) != 16:
            raise ProtocolError("truncated dataset header")
        version, n, n_tx, n_sb = struct.unpack("<IIII", header)
        if version != EVCS_VERSION:
            raise ProtocolError(f"unsupported dataset version {version}")
        payload = fh.read(n * n_sb * n_tx * 8)
        if len(payload) != n * n_sb * n_tx * 8:
            raise ProtocolError("truncated dataset payload")
    inter = np.frombuffer(payload, dtype="<f4").reshape(n, n_sb, n_tx, 2)
    cols = inter[..., 0].astype(np.float64) + 1j * inter[..., 1].astype(np.float64)
    stack = np.transpose(cols, (0, 2, 1)).copy()  # (n, n_tx, n_sb)
    # float32 storage drifts the norm by ~1e-7; restore the unit-norm contract
    norms = np.linalg.norm(stack, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ProtocolError("zero-norm column in dataset file")
    stack /= norms
    return Dataset(samples=stack, split_seed=split_seed, train_fraction=train_fraction)
