"""Grid-of-beams baseline: construction, selection, and overhead accounting."""

import numpy as np
import pytest

from evcsi.channelgen import CsiSample
from evcsi.codebook import (
    CodebookConfig,
    build_dft_codebook,
    codebook_decode,
    codebook_encode,
    evaluate_codebook,
    feedback_bits,
)
from evcsi.errors import ConfigurationError, DimensionMismatchError


def test_config_validation():
    with pytest.raises(ConfigurationError):
        CodebookConfig(n_tx=0)
    with pytest.raises(ConfigurationError):
        CodebookConfig(n_tx=4, oversample=0)
    cfg = CodebookConfig(n_tx=8, oversample=4)
    assert cfg.n_beams == 32
    assert cfg.bits_per_subband == 5


def test_beams_are_unit_norm_and_orthogonal():
    cfg = CodebookConfig(n_tx=8, oversample=1)
    beams = build_dft_codebook(cfg)
    assert beams.shape == (8, 8)
    assert np.allclose(np.linalg.norm(beams, axis=0), 1.0)
    gram = beams.conj().T @ beams
    assert np.allclose(gram, np.eye(8), atol=1e-12)


def test_oversampled_grid_contains_plain_grid():
    plain = build_dft_codebook(CodebookConfig(n_tx=4, oversample=1))
    dense = build_dft_codebook(CodebookConfig(n_tx=4, oversample=4))
    assert np.allclose(dense[:, ::4], plain, atol=1e-12)


def test_exact_beam_recovered():
    cfg = CodebookConfig(n_tx=8, oversample=2)
    beams = build_dft_codebook(cfg)
    sample = CsiSample(columns=beams[:, [3, 7, 0]])
    idx = codebook_encode(sample, cfg)
    assert idx.tolist() == [3, 7, 0]
    recon = codebook_decode(idx, cfg)
    assert np.allclose(recon.columns, sample.columns)


def test_encode_checks_antennas(rng):
    cfg = CodebookConfig(n_tx=8)
    x = rng.standard_normal((4, 3)) + 1j * rng.standard_normal((4, 3))
    with pytest.raises(DimensionMismatchError):
        codebook_encode(CsiSample(columns=x / np.linalg.norm(x, axis=0)), cfg)
    with pytest.raises(DimensionMismatchError):
        codebook_decode(np.array([99]), cfg)


def test_feedback_bits_formula():
    assert feedback_bits(CodebookConfig(n_tx=8, oversample=4), n_subband=12) == 60
    assert feedback_bits(CodebookConfig(n_tx=4, oversample=1), n_subband=6) == 12
    assert feedback_bits(CodebookConfig(n_tx=1, oversample=1), n_subband=5) == 0


def test_oversampling_never_hurts(rng):
    x = rng.standard_normal((16, 8, 6)) + 1j * rng.standard_normal((16, 8, 6))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    coarse = evaluate_codebook(x, CodebookConfig(n_tx=8, oversample=1))
    fine = evaluate_codebook(x, CodebookConfig(n_tx=8, oversample=8))
    assert 0.0 <= coarse.sgcs <= fine.sgcs <= 1.0
    assert fine.n_samples == 16


def test_steered_channel_scores_high(flat_dataset):
    # eigenvectors of physical channels lie near the beam grid, so a dense
    # grid should recover them far better than chance
    cfg = CodebookConfig(n_tx=8, oversample=8)
    report = evaluate_codebook(flat_dataset.samples[:16], cfg)
    assert report.sgcs > 0.5
