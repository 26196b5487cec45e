"""Transformer autoencoder over subband eigenvectors with a quantized bottleneck.

The encoder embeds each subband's stacked real/imag vector, runs post-norm
attention blocks, projects each subband back to antenna width, flattens, and
maps to bits_total/bits_per_symbol logistic-squashed symbols.  The decoder
mirrors it: a dense expansion back to antenna-by-subband width, re-embedding,
blocks, a per-subband output head, and unit normalization per subband.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, replace

import numpy as np

from . import ndiff
from .channelgen import CsiSample, canonical_phase
from .errors import (
    ConfigurationError,
    ContractError,
    DimensionMismatchError,
    ProtocolError,
)
from .quantizer import (
    Bitstream,
    dequantize_uniform,
    pack_bits,
    quantize_uniform,
    ste_quantize,
    unpack_bits,
)

EVCW_MAGIC = b"EVCW"
EVCW_VERSION = 1

# reference complexity figures for the full-scale 32-antenna, 12-subband
# configuration (n_e=512, n_b=10, n_head=16, k_h=2, 2 bits/symbol):
# bits_total -> (encoder params, decoder params, encoder flops, decoder flops)
FULLSCALE_REFERENCE = {
    32: (2.1107e7, 2.1108e7, 4.2099e7, 4.2099e7),
    48: (2.1113e7, 2.1114e7, 4.2111e7, 4.2111e7),
    120: (2.1141e7, 2.1142e7, 4.2166e7, 4.2166e7),
}
FULLSCALE_DIMS = dict(n_tx=32, n_subband=12, n_e=512, n_b=10, n_head=16,
                      k_h=2, bits_per_symbol=2)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and bottleneck dimensions."""

    n_tx: int
    n_subband: int
    n_e: int
    n_b: int
    n_head: int
    k_h: int
    bits_total: int
    bits_per_symbol: int = 2

    def __post_init__(self):
        for name in ("n_tx", "n_subband", "n_e", "n_b", "n_head", "k_h",
                     "bits_total", "bits_per_symbol"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigurationError(f"{name} must be a positive integer, got {v!r}")
        if not 1 <= self.bits_per_symbol <= 8:
            raise ConfigurationError("bits_per_symbol must lie in [1, 8]")
        if self.bits_total % self.bits_per_symbol != 0:
            raise ConfigurationError(
                f"bits_total {self.bits_total} not divisible by bits_per_symbol {self.bits_per_symbol}")
        if self.n_e % self.n_head != 0:
            raise ConfigurationError(f"n_e {self.n_e} not divisible by n_head {self.n_head}")

    @property
    def n_symbols(self) -> int:
        return self.bits_total // self.bits_per_symbol

    @property
    def token_width(self) -> int:
        return 2 * self.n_tx

    @property
    def flat_width(self) -> int:
        return self.token_width * self.n_subband


# parameter names whose shape depends on bits_total; staged training
# re-initializes exactly these
BOTTLENECK_PARAMS = ("enc.head.w", "enc.head.b", "dec.input.w", "dec.input.b")


def _block_shapes(prefix: str, cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    e, h = cfg.n_e, cfg.k_h * cfg.n_e
    shapes = {}
    for proj in ("q", "k", "v", "o"):
        shapes[f"{prefix}.attn.w{proj}"] = (e, e)
        shapes[f"{prefix}.attn.b{proj}"] = (e,)
    shapes[f"{prefix}.ln1.g"] = (e,)
    shapes[f"{prefix}.ln1.b"] = (e,)
    shapes[f"{prefix}.ffn.w1"] = (e, h)
    shapes[f"{prefix}.ffn.b1"] = (h,)
    shapes[f"{prefix}.ffn.w2"] = (h, e)
    shapes[f"{prefix}.ffn.b2"] = (e,)
    shapes[f"{prefix}.ln2.g"] = (e,)
    shapes[f"{prefix}.ln2.b"] = (e,)
    return shapes


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Ordered name-to-shape registry; the single source of structural truth."""
    tw, e, fw, s = cfg.token_width, cfg.n_e, cfg.flat_width, cfg.n_symbols
    shapes: dict[str, tuple[int, ...]] = {}
    shapes["enc.embed.w"] = (tw, e)
    shapes["enc.embed.b"] = (e,)
    shapes["enc.pos"] = (cfg.n_subband, e)
    for i in range(cfg.n_b):
        shapes.update(_block_shapes(f"enc.blk{i}", cfg))
    shapes["enc.unembed.w"] = (e, tw)
    shapes["enc.unembed.b"] = (tw,)
    shapes["enc.head.w"] = (fw, s)
    shapes["enc.head.b"] = (s,)
    shapes["dec.input.w"] = (s, fw)
    shapes["dec.input.b"] = (fw,)
    shapes["dec.embed.w"] = (tw, e)
    shapes["dec.embed.b"] = (e,)
    shapes["dec.pos"] = (cfg.n_subband, e)
    for i in range(cfg.n_b):
        shapes.update(_block_shapes(f"dec.blk{i}", cfg))
    shapes["dec.head.w"] = (e, tw)
    shapes["dec.head.b"] = (tw,)
    return shapes


@dataclass
class ModelWeights:
    """Named parameter tensors plus the config that shaped them."""

    cfg: ModelConfig
    params: dict[str, ndiff.Tensor]

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for name, p in self.params.items():
            out[name] = p.grad if p.grad is not None else np.zeros_like(p.values)
        return out


def _param_rng(seed: int, name: str) -> np.random.Generator:
    # one substream per parameter name, so unrelated layers never share draws
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


def init_model(cfg: ModelConfig, seed: int) -> ModelWeights:
    """Xavier-uniform weights, zero biases, N(0, 0.02^2) positional vectors."""
    params: dict[str, ndiff.Tensor] = {}
    for name, shape in param_shapes(cfg).items():
        rng = _param_rng(seed, name)
        if name.endswith(".g"):
            values = np.ones(shape)
        elif name.endswith(".pos"):
            values = rng.normal(0.0, 0.02, size=shape)
        elif len(shape) == 1:
            values = np.zeros(shape)
        else:
            fan_in, fan_out = shape[0], shape[1]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            values = rng.uniform(-limit, limit, size=shape)
        params[name] = ndiff.Tensor(values, name=name)
    return ModelWeights(cfg=cfg, params=params)


# ---------------------------------------------------------------------------
# forward graphs

def basic_block(x: ndiff.Tensor, weights: ModelWeights, prefix: str) -> ndiff.Tensor:
    """Post-norm block: y = LN(x + MHA(x)); out = LN(y + FFN(y))."""
    p = weights.params
    cfg = weights.cfg
    attn = ndiff.multi_head_attention(
        x,
        p[f"{prefix}.attn.wq"], p[f"{prefix}.attn.bq"],
        p[f"{prefix}.attn.wk"], p[f"{prefix}.attn.bk"],
        p[f"{prefix}.attn.wv"], p[f"{prefix}.attn.bv"],
        p[f"{prefix}.attn.wo"], p[f"{prefix}.attn.bo"],
        cfg.n_head)
    y = ndiff.layer_norm(ndiff.add(x, attn), p[f"{prefix}.ln1.g"], p[f"{prefix}.ln1.b"])
    hidden = ndiff.gelu(ndiff.dense(y, p[f"{prefix}.ffn.w1"], p[f"{prefix}.ffn.b1"]))
    ffn = ndiff.dense(hidden, p[f"{prefix}.ffn.w2"], p[f"{prefix}.ffn.b2"])
    return ndiff.layer_norm(ndiff.add(y, ffn), p[f"{prefix}.ln2.g"], p[f"{prefix}.ln2.b"])


def encoder_latent(weights: ModelWeights, x: ndiff.Tensor) -> ndiff.Tensor:
    """(batch, n_subband, 2*n_tx) -> (batch, n_symbols) logistic-squashed symbols."""
    cfg = weights.cfg
    p = weights.params
    if x.shape[-2:] != (cfg.n_subband, cfg.token_width):
        raise DimensionMismatchError(
            f"encoder input {x.shape} does not match config "
            f"(n_subband={cfg.n_subband}, token width={cfg.token_width})")
    h = ndiff.dense(x, p["enc.embed.w"], p["enc.embed.b"])
    h = ndiff.add(h, p["enc.pos"])
    for i in range(cfg.n_b):
        h = basic_block(h, weights, f"enc.blk{i}")
    u = ndiff.dense(h, p["enc.unembed.w"], p["enc.unembed.b"])
    flat = ndiff.reshape(u, x.shape[:-2] + (cfg.flat_width,))
    logits = ndiff.dense(flat, p["enc.head.w"], p["enc.head.b"])
    return ndiff.sigmoid(logits)


def decoder_output(weights: ModelWeights, symbols: ndiff.Tensor) -> ndiff.Tensor:
    """(batch, n_symbols) -> (batch, n_subband, 2*n_tx), unit norm per subband."""
    cfg = weights.cfg
    p = weights.params
    if symbols.shape[-1] != cfg.n_symbols:
        raise DimensionMismatchError(
            f"decoder input width {symbols.shape[-1]} != n_symbols {cfg.n_symbols}")
    h = ndiff.gelu(ndiff.dense(symbols, p["dec.input.w"], p["dec.input.b"]))
    h = ndiff.reshape(h, symbols.shape[:-1] + (cfg.n_subband, cfg.token_width))
    h = ndiff.dense(h, p["dec.embed.w"], p["dec.embed.b"])
    h = ndiff.add(h, p["dec.pos"])
    for i in range(cfg.n_b):
        h = basic_block(h, weights, f"dec.blk{i}")
    out = ndiff.dense(h, p["dec.head.w"], p["dec.head.b"])
    norm = ndiff.sqrt(ndiff.add_scalar(ndiff.tensor_sum(ndiff.square(out), axis=-1, keepdims=True), 1e-24))
    return ndiff.div(out, norm)


def autoencode(weights: ModelWeights, x: ndiff.Tensor, quantize: bool = True
               ) -> tuple[ndiff.Tensor, ndiff.Tensor, ndiff.Tensor]:
    """Full forward pass; returns (reconstruction, pre-quant, post-quant symbols)."""
    v = encoder_latent(weights, x)
    vq = ste_quantize(v, weights.cfg.bits_per_symbol) if quantize else v
    return decoder_output(weights, vq), v, vq


# ---------------------------------------------------------------------------
# sample packing between complex columns and real token sequences

def sample_to_real(columns: np.ndarray) -> np.ndarray:
    """(n_tx, n_subband) complex -> (n_subband, 2*n_tx) stacked real/imag."""
    return np.concatenate([columns.real.T, columns.imag.T], axis=1)


def real_to_columns(tokens: np.ndarray) -> np.ndarray:
    """Inverse of sample_to_real, without normalization."""
    n_tx = tokens.shape[-1] // 2
    return (tokens[..., :n_tx] + 1j * tokens[..., n_tx:]).swapaxes(-1, -2)


def stack_to_real(samples: np.ndarray) -> np.ndarray:
    """(n, n_tx, n_sb) complex -> (n, n_sb, 2*n_tx) float64 batch."""
    return np.concatenate([samples.real.swapaxes(1, 2), samples.imag.swapaxes(1, 2)], axis=2)


# ---------------------------------------------------------------------------
# inference

def encode(sample: CsiSample, weights: ModelWeights) -> Bitstream:
    """Compress one sample to exactly cfg.bits_total bits."""
    cfg = weights.cfg
    if sample.columns.shape != (cfg.n_tx, cfg.n_subband):
        raise DimensionMismatchError(
            f"sample shape {sample.columns.shape} != ({cfg.n_tx}, {cfg.n_subband})")
    x = ndiff.Tensor(sample_to_real(sample.columns)[None])
    v = encoder_latent(weights, x).values[0]
    stream = pack_bits(quantize_uniform(v, cfg.bits_per_symbol), cfg.bits_per_symbol)
    assert len(stream) == cfg.bits_total
    return stream


def decode(stream: Bitstream, weights: ModelWeights) -> CsiSample:
    """Reconstruct unit-norm, phase-canonical subband eigenvectors from bits."""
    cfg = weights.cfg
    if len(stream) != cfg.bits_total:
        raise DimensionMismatchError(
            f"bitstream length {len(stream)} != bits_total {cfg.bits_total}")
    symbols = dequantize_uniform(unpack_bits(stream, cfg.bits_per_symbol), cfg.bits_per_symbol)
    out = decoder_output(weights, ndiff.Tensor(symbols[None])).values[0]
    cols = real_to_columns(out)
    cols = cols / np.linalg.norm(cols, axis=0, keepdims=True)
    for k in range(cols.shape[1]):
        cols[:, k] = canonical_phase(cols[:, k])
    return CsiSample(columns=cols)


def reconstruct_batch(weights: ModelWeights, samples: np.ndarray,
                      quantize: bool = True) -> np.ndarray:
    """Batched quantized round trip; returns a complex stack matching `samples`."""
    cfg = weights.cfg
    if samples.shape[1:] != (cfg.n_tx, cfg.n_subband):
        raise DimensionMismatchError(
            f"sample stack {samples.shape[1:]} != ({cfg.n_tx}, {cfg.n_subband})")
    x = ndiff.Tensor(stack_to_real(samples))
    out, _, _ = autoencode(weights, x, quantize=quantize)
    cols = real_to_columns(out.values)
    cols = cols / np.linalg.norm(cols, axis=1, keepdims=True)
    # canonical phase per column, vectorized over the stack
    piv = np.take_along_axis(cols, np.argmax(np.abs(cols), axis=1)[:, None, :], axis=1)
    return cols * (piv.conj() / np.abs(piv))


# ---------------------------------------------------------------------------
# complexity accounting

def count_params(cfg: ModelConfig) -> dict[str, int]:
    """Trainable scalar counts per component, from the shape registry."""
    enc = dec = 0
    for name, shape in param_shapes(cfg).items():
        n = int(np.prod(shape))
        if name.startswith("enc."):
            enc += n
        else:
            dec += n
    return {"encoder": enc, "decoder": dec, "total": enc + dec}


def count_flops(cfg: ModelConfig) -> dict[str, int]:
    """Forward FLOPs per sample: 2 per multiply-accumulate, each dense weight
    matrix counted once; bias adds, norms, and attention products excluded."""
    enc = dec = 0
    for name, shape in param_shapes(cfg).items():
        if len(shape) != 2 or name.endswith(".pos"):
            continue
        macs = shape[0] * shape[1]
        if name.startswith("enc."):
            enc += 2 * macs
        else:
            dec += 2 * macs
    return {"encoder": enc, "decoder": dec, "total": enc + dec}


def is_fullscale(cfg: ModelConfig) -> bool:
    return all(getattr(cfg, k) == v for k, v in FULLSCALE_DIMS.items()) \
        and cfg.bits_total in FULLSCALE_REFERENCE


# ---------------------------------------------------------------------------
# staged-training surgery

def resize_bottleneck(weights: ModelWeights, bits_total: int, seed: int) -> ModelWeights:
    """Re-initialize only the bottleneck-adjacent layers at a new bit width.

    Every parameter outside BOTTLENECK_PARAMS is carried over bit-exactly.
    """
    new_cfg = replace(weights.cfg, bits_total=bits_total)
    fresh = init_model(new_cfg, seed)
    for name, p in weights.params.items():
        if name not in BOTTLENECK_PARAMS:
            fresh.params[name] = ndiff.Tensor(p.values.copy(), name=name)
    return fresh


# ---------------------------------------------------------------------------
# weight archive: magic EVCW, LE u32 version, u32 tensor count; per tensor a
# u16 name length, UTF-8 name, u8 rank, u32 dims, f64 values.  The model
# config rides in a plain-text key-value sidecar next to the archive.

def _sidecar_path(path: str) -> str:
    return path + ".cfg"


def save_weights(weights: ModelWeights, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(EVCW_MAGIC)
        fh.write(struct.pack("<II", EVCW_VERSION, len(weights.params)))
        for name, p in weights.params.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            arr = np.ascontiguousarray(p.values, dtype="<f8")
            fh.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.tobytes())
    cfg = weights.cfg
    lines = [f"{k} = {getattr(cfg, k)}" for k in (
        "n_tx", "n_subband", "n_e", "n_b", "n_head", "k_h", "bits_total", "bits_per_symbol")]
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_weights(path: str) -> ModelWeights:
    cfg_fields = {}
    try:
        with open(_sidecar_path(path), "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key, _, value = line.partition("=")
                cfg_fields[key.strip()] = int(value.strip())
    except FileNotFoundError as exc:
        raise ProtocolError(f"missing config sidecar for {path}") from exc
    try:
        cfg = ModelConfig(**cfg_fields)
    except TypeError as exc:
        raise ProtocolError(f"bad config sidecar keys: {sorted(cfg_fields)}") from exc

    params: dict[str, ndiff.Tensor] = {}
    with open(path, "rb") as fh:
        if fh.read(4) != EVCW_MAGIC:
            raise ProtocolError("bad weight archive magic")
        version, count = struct.unpack("<II", fh.read(8))
        if version != EVCW_VERSION:
            raise ProtocolError(f"unsupported weight archive version {version}")
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<B", fh.read(1))
            shape = tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(rank))
            n_values = int(np.prod(shape)) if shape else 1
            raw = fh.read(8 * n_values)
            if len(raw) != 8 * n_values:
                raise ProtocolError("truncated weight archive payload")
            params[name] = ndiff.Tensor(
                np.frombuffer(raw, dtype="<f8").reshape(shape).copy(), name=name)

    expected = param_shapes(cfg)
    if set(params) != set(expected):
        raise ProtocolError("weight archive names do not match the config")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ProtocolError(f"tensor {name} has shape {params[name].shape}, expected {shape}")
    return ModelWeights(cfg=cfg, params=params)
