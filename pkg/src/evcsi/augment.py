"""Training-time augmentations over subband eigenvector samples.

The four geometric transforms (subband flip, cyclic shift, random shuffle,
per-subband phase rotation) are drawn mutually exclusively per sample; noise
injection is applied on top whenever its scale is positive.  Geometric
transforms train self-reconstruction; noise defaults to a denoising target.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channelgen import CsiSample
from .errors import ConfigurationError, ContractError


@dataclass(frozen=True)
class AugmentConfig:
    noise_alpha: float = 0.0
    noise_sigma: float = 1.0
    p_flip: float = 0.0
    p_cyclic: float = 0.0
    p_shuffle: float = 0.0
    p_rotate: float = 0.0
    rotate_per_subband: bool = True
    noise_target_clean: bool = True

    @property
    def is_identity(self) -> bool:
        """True when no transform can fire, so batches need no per-sample work."""
        return (self.noise_alpha == 0.0 and self.p_flip == 0.0 and self.p_cyclic == 0.0
                and self.p_shuffle == 0.0 and self.p_rotate == 0.0)

    def __post_init__(self):
        if self.noise_alpha < 0 or self.noise_sigma < 0:
            raise ConfigurationError("noise_alpha and noise_sigma must be nonnegative")
        probs = (self.p_flip, self.p_cyclic, self.p_shuffle, self.p_rotate)
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ConfigurationError("augmentation probabilities must lie in [0, 1]")
        if sum(probs) > 1.0 + 1e-12:
            raise ConfigurationError("augmentation probabilities must sum to at most 1")


def noise_inject(sample: CsiSample, alpha: float, sigma: float,
                 rng: np.random.Generator) -> CsiSample:
    """Add alpha-scaled complex Gaussian noise, N(0, sigma^2) per real part."""
    shape = sample.columns.shape
    noise = rng.normal(0.0, sigma, size=shape) + 1j * rng.normal(0.0, sigma, size=shape)
    return CsiSample(columns=sample.columns + alpha * noise)


def flip_subband(sample: CsiSample) -> CsiSample:
    """Reverse the subband order."""
    return CsiSample(columns=sample.columns[:, ::-1].copy())


def flip_antenna(sample: CsiSample) -> CsiSample:
    """Reverse the antenna order within every subband."""
    return CsiSample(columns=sample.columns[::-1, :].copy())


def cyclic_shift(sample: CsiSample, p: int) -> CsiSample:
    """Move input column k to output column (k + p) mod n_subband."""
    n_sb = sample.n_subband
    if not 0 <= p < n_sb:
        raise ContractError(f"shift {p} outside [0, {n_sb})")
    return CsiSample(columns=np.roll(sample.columns, p, axis=1))


def random_shuffle(sample: CsiSample, rng: np.random.Generator
                   ) -> tuple[CsiSample, np.ndarray]:
    """Uniformly permute subband columns; the drawn permutation is returned."""
    perm = rng.permutation(sample.n_subband)
    return CsiSample(columns=sample.columns[:, perm]), perm


def rotate(sample: CsiSample, thetas: np.ndarray | float | None = None,
           rng: np.random.Generator | None = None) -> CsiSample:
    """Rotate each subband column by exp(j*theta_k); norms are unchanged.

    With thetas None, angles are drawn uniformly from [0, 2*pi) using rng.
    """
    n_sb = sample.n_subband
    if thetas is None:
        if rng is None:
            raise ContractError("rotate needs either thetas or an rng")
        thetas = rng.uniform(0.0, 2.0 * np.pi, size=n_sb)
    thetas = np.broadcast_to(np.atleast_1d(np.asarray(thetas, dtype=np.float64)), (n_sb,))
    return CsiSample(columns=sample.columns * np.exp(1j * thetas)[None, :])


def apply_augmentation(sample: CsiSample, cfg: AugmentConfig,
                       rng: np.random.Generator) -> tuple[CsiSample, CsiSample]:
    """Draw one augmentation; returns (network input, training target)."""
    u = rng.uniform()
    edge_flip = cfg.p_flip
    edge_cyc = edge_flip + cfg.p_cyclic
    edge_shuf = edge_cyc + cfg.p_shuffle
    edge_rot = edge_shuf + cfg.p_rotate
    if u < edge_flip:
        augmented = flip_subband(sample)
    elif u < edge_cyc:
        augmented = cyclic_shift(sample, int(rng.integers(1, sample.n_subband)))
    elif u < edge_shuf:
        augmented, _ = random_shuffle(sample, rng)
    elif u < edge_rot:
        if cfg.rotate_per_subband:
            augmented = rotate(sample, rng=rng)
        else:
            augmented = rotate(sample, thetas=float(rng.uniform(0.0, 2.0 * np.pi)))
    else:
        augmented = sample

    if cfg.noise_alpha > 0.0:
        noisy = noise_inject(augmented, cfg.noise_alpha, cfg.noise_sigma, rng)
        target = augmented if cfg.noise_target_clean else noisy
        return noisy, target
    return augmented, augmented
