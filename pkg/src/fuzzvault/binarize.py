"""Random-projection sign binarization of feature vectors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ProjectionMatrix:
    """Seeded Gaussian projection; the same seed always yields the same matrix."""

    entries: np.ndarray = field(repr=False)  # (d_in, n_out)
    seed: int

    @property
    def d_in(self) -> int:
        return self.entries.shape[0]

    @property
    def n_out(self) -> int:
        return self.entries.shape[1]


def gen_projection(seed: int, d_in: int, n_out: int) -> ProjectionMatrix:
    if d_in < 1 or n_out < 1:
        raise ValueError("projection dimensions must be positive")
    rng = np.random.default_rng(seed)
    entries = rng.standard_normal((d_in, n_out))
    return ProjectionMatrix(entries=entries, seed=seed)


def binarize(v: np.ndarray, proj: ProjectionMatrix) -> np.ndarray:
    """bit_j = 1 iff the j-th projection of v is >= 0 (sign(0) counts as +)."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (proj.d_in,):
        raise ValueError(f"vector dimension {v.shape} does not match projection d_in={proj.d_in}")
    return (v @ proj.entries >= 0.0).astype(np.uint8)


def binarize_batch(vs: np.ndarray, proj: ProjectionMatrix) -> np.ndarray:
    vs = np.asarray(vs, dtype=np.float64)
    if vs.ndim != 2 or vs.shape[1] != proj.d_in:
        raise ValueError(f"batch shape {vs.shape} does not match projection d_in={proj.d_in}")
    return (vs @ proj.entries >= 0.0).astype(np.uint8)


def hamming(a: np.ndarray, b: np.ndarray) -> int:
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    if a.shape != b.shape:
        raise ValueError("templates must have equal length")
    return int(np.count_nonzero(a != b))


def template_to_hex(bits: np.ndarray) -> str:
    """Hex text form; bit 0 of the template is the LSB of the first byte."""
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little").tobytes().hex()


def template_from_hex(text: str, n_bits: int) -> np.ndarray:
    data = bytes.fromhex(text)
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    if len(bits) < n_bits or len(bits) - n_bits >= 8:
        raise ValueError(f"hex string does not hold exactly {n_bits} bits")
    if bits[n_bits:].any():
        raise ValueError("nonzero padding bits")
    return bits[:n_bits].copy()
