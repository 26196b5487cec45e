"""Uniform scalar quantization, straight-through gradients, and bit packing.

Values in [0, 1] map to 2^B uniform bins; dequantization returns bin centers,
so the round-trip error never exceeds 2^-(B+1).  The graph node passes
gradients through unchanged (straight-through estimator).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import ndiff
from .errors import ConfigurationError, ContractError, ProtocolError

EVCB_MAGIC = b"EVCB"
EVCB_VERSION = 1


@dataclass
class QuantDiagnostics:
    """Counts inputs that fell outside [0, 1] by more than the slack."""

    out_of_range: int = 0

    def reset(self) -> None:
        self.out_of_range = 0


# shared collector; callers that care pass their own
diagnostics = QuantDiagnostics()


def _check_bits(bits: int) -> None:
    if not isinstance(bits, int) or not 1 <= bits <= 8:
        raise ConfigurationError(f"bits per symbol must be an integer in [1, 8], got {bits!r}")


def quantize_uniform(values: np.ndarray, bits: int,
                     diag: QuantDiagnostics | None = None) -> np.ndarray:
    """Map [0, 1] values to integer bin indices; inputs are clamped first."""
    _check_bits(bits)
    v = np.asarray(values, dtype=np.float64)
    clipped = np.clip(v, 0.0, 1.0)
    over = np.abs(v - clipped) > 1e-6
    if np.any(over):
        (diag if diag is not None else diagnostics).out_of_range += int(over.sum())
    levels = 1 << bits
    idx = np.floor(clipped * levels).astype(np.int64)
    return np.minimum(idx, levels - 1)


def dequantize_uniform(indices: np.ndarray, bits: int) -> np.ndarray:
    """Return the bin-center value for each index."""
    _check_bits(bits)
    idx = np.asarray(indices)
    levels = 1 << bits
    if np.any(idx < 0) or np.any(idx >= levels):
        raise ContractError(f"indices out of range for {bits}-bit quantizer")
    return (idx.astype(np.float64) + 0.5) / levels


def ste_gradient(upstream: np.ndarray) -> np.ndarray:
    """Straight-through backward rule: pass the gradient unchanged."""
    return upstream


def ste_quantize(t: ndiff.Tensor, bits: int,
                 diag: QuantDiagnostics | None = None) -> ndiff.Tensor:
    """Quantize-dequantize graph node with identity backward."""
    deq = dequantize_uniform(quantize_uniform(t.values, bits, diag), bits)

    def vjp(g):
        return (ste_gradient(g),)

    return ndiff.Tensor(deq, (t,), vjp, "ste_quantize")


@dataclass(frozen=True)
class Bitstream:
    """A flat bit vector; entries are 0/1 uint8."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits, dtype=np.uint8)
        if b.ndim != 1 or np.any(b > 1):
            raise ContractError("Bitstream requires a 1-D 0/1 vector")
        object.__setattr__(self, "bits", b)

    def __len__(self) -> int:
        return self.bits.size

    def to_bytes(self) -> bytes:
        """MSB-first packing, zero padding in the final byte."""
        return np.packbits(self.bits).tobytes()

    @staticmethod
    def from_bytes(data: bytes, n_bits: int) -> "Bitstream":
        raw = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        if raw.size < n_bits:
            raise ProtocolError("byte buffer shorter than requested bit count")
        return Bitstream(bits=raw[:n_bits])


def pack_bits(indices: np.ndarray, bits: int) -> Bitstream:
    """Concatenate B-bit big-endian fields, one per index."""
    _check_bits(bits)
    idx = np.asarray(indices, dtype=np.int64)
    if np.any(idx < 0) or np.any(idx >= (1 << bits)):
        raise ContractError("index does not fit the declared bit width")
    shifts = np.arange(bits - 1, -1, -1)
    fields = (idx[:, None] >> shifts[None, :]) & 1
    return Bitstream(bits=fields.reshape(-1).astype(np.uint8))


def unpack_bits(stream: Bitstream, bits: int) -> np.ndarray:
    """Inverse of pack_bits; the stream length must divide evenly."""
    _check_bits(bits)
    if len(stream) % bits != 0:
        raise ContractError(f"bitstream length {len(stream)} not divisible by {bits}")
    fields = stream.bits.reshape(-1, bits).astype(np.int64)
    weights = 1 << np.arange(bits - 1, -1, -1)
    return fields @ weights


def save_bitstreams(streams: list[Bitstream], path: str) -> None:
    """Write fixed-width payloads: magic EVCB, LE u32 version/n/width, raw bytes."""
    if not streams:
        raise ContractError("cannot save an empty bitstream list")
    width = len(streams[0])
    if any(len(s) != width for s in streams):
        raise ContractError("all bitstreams in one file must share a width")
    with open(path, "wb") as fh:
        fh.write(EVCB_MAGIC)
        fh.write(struct.pack("<III", EVCB_VERSION, len(streams), width))
        for s in streams:
            fh.write(s.to_bytes())


def load_bitstreams(path: str) -> list[Bitstream]:
    with open(path, "rb") as fh:
        if fh.read(4) != EVCB_MAGIC:
            raise ProtocolError("bad bitstream file magic")
        header = fh.read(12)
        if len(header) != 12:
            raise ProtocolError("truncated bitstream header")
        version, n, width = struct.unpack("<III", header)
        if version != EVCB_VERSION:
            raise ProtocolError(f"unsupported bitstream version {version}")
        per = (width + 7) // 8
        out = []
        for _ in range(n):
            chunk = fh.read(per)
            if len(chunk) != per:
                raise ProtocolError("truncated bitstream payload")
            out.append(Bitstream.from_bytes(chunk, width))
    return out
