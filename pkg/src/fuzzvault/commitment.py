"""Fuzzy commitment of binary templates, with two interchangeable backends.

The codeword-offset backend stores z = b xor c for a random BCH codeword c
plus a hash tag binding c; a probe b' within Hamming distance t of b decodes
b' xor z back to c and reproduces b exactly.  The PinSketch backend stores
the odd power-sum syndromes of b's support set plus a hash tag binding b
itself; recovery decodes the symmetric difference of the two supports.
Both accept iff the probe is within Hamming distance t of the enrolled
template (up to a negligible hash-collision probability), and both yield
the enrolled template bit-exactly on acceptance.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import ecc

DOMAIN_TAG = b"fuzzvault-v1:"


def pack_bits(bits: np.ndarray) -> bytes:
    """Bit string -> bytes, bit i of the string = bit (i mod 8) of byte i//8."""
    return np.packbits(np.asarray(bits, dtype=np.uint8), bitorder="little").tobytes()


def unpack_bits(data: bytes, n: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little")
    if len(bits) < n or (len(bits) - n) >= 8:
        raise ValueError(f"byte string does not hold exactly {n} bits")
    if bits[n:].any():
        raise ValueError("nonzero padding bits")
    return bits[:n].copy()


def hash_bits(bits: np.ndarray) -> bytes:
    """32-byte SHA-256 tag of a bit string under the scheme's domain prefix."""
    return hashlib.sha256(DOMAIN_TAG + pack_bits(bits)).digest()


@dataclass(frozen=True)
class ProtectedRecord:
    """The stored protected template: helper string plus binding hash tag."""

    code_id: str
    helper: bytes
    tag: bytes

    def to_json_dict(self) -> dict:
        return {"code_id": self.code_id, "z": self.helper.hex(), "tag": self.tag.hex()}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ProtectedRecord":
        return cls(code_id=obj["code_id"], helper=bytes.fromhex(obj["z"]),
                   tag=bytes.fromhex(obj["tag"]))


@dataclass(frozen=True)
class RecoveryResult:
    accepted: bool
    template: np.ndarray | None = None  # enrolled template, exact, when accepted
    codeword: np.ndarray | None = None  # decoded codeword (codeword-offset backend)


class BchBackend:
    """Codeword-offset fuzzy commitment over a BCH code of length 2^m - 1."""

    kind = "bch"

    def __init__(self, m: int, t: int):
        self.code = ecc.bch_new(m, t)
        self.n_bits = self.code.n
        self.t = t
        self.code_id = f"bch:m={m},t={t}"

    def commit(self, template: np.ndarray, rng: np.random.Generator) -> ProtectedRecord:
        template = np.asarray(template, dtype=np.uint8)
        if template.shape != (self.n_bits,):
            raise ValueError(f"template must have {self.n_bits} bits")
        codeword = ecc.random_codeword(self.code, rng)
        z = template ^ codeword
        return ProtectedRecord(self.code_id, pack_bits(z), hash_bits(codeword))

    def recover_batch(self, record: ProtectedRecord, probes: np.ndarray):
        probes = np.asarray(probes, dtype=np.uint8)
        z = unpack_bits(record.helper, self.n_bits)
        ok, decoded = ecc.decode_batch(self.code, probes ^ z)
        accepted = np.zeros(probes.shape[0], dtype=bool)
        recovered = np.zeros_like(probes)
        for i in np.flatnonzero(ok):
            if hash_bits(decoded[i]) == record.tag:
                accepted[i] = True
                recovered[i] = decoded[i] ^ z
        return accepted, recovered, decoded

    def recover(self, record: ProtectedRecord, probe: np.ndarray) -> RecoveryResult:
        probe = np.asarray(probe, dtype=np.uint8)
        if probe.shape != (self.n_bits,):
            raise ValueError(f"probe must have {self.n_bits} bits")
        accepted, recovered, decoded = self.recover_batch(record, probe[None, :])
        if not accepted[0]:
            return RecoveryResult(accepted=False)
        return RecoveryResult(accepted=True, template=recovered[0], codeword=decoded[0])


class PinSketchBackend:
    """Syndrome sketch of the template's support set, hash tag binds the template."""

    kind = "pinsketch"

    def __init__(self, t: int, n_bits: int = 128, m: int = 8):
        self.sketcher = ecc.PinSketch(m, t)
        if n_bits > self.sketcher.field.n:
            raise ValueError(f"n_bits={n_bits} exceeds universe size {self.sketcher.field.n}")
        self.n_bits = n_bits
        self.t = t
        self.m = m
        self.code_id = f"pinsketch:m={m},t={t},n={n_bits}"
        self._syn_bytes = (m + 7) // 8

    def _pack_sketch(self, sketch: ecc.SetSketch) -> bytes:
        out = bytearray()
        for s in sketch.syndromes:
            out += int(s).to_bytes(self._syn_bytes, "little")
        return bytes(out)

    def _unpack_sketch(self, helper: bytes) -> ecc.SetSketch:
        if len(helper) != self.t * self._syn_bytes:
            raise ValueError("helper length does not match t syndromes")
        syn = tuple(
            int.from_bytes(helper[i * self._syn_bytes:(i + 1) * self._syn_bytes], "little")
            for i in range(self.t)
        )
        return ecc.SetSketch(self.m, self.t, syn)

    def commit(self, template: np.ndarray, rng: np.random.Generator = None) -> ProtectedRecord:
        template = np.asarray(template, dtype=np.uint8)
        if template.shape != (self.n_bits,):
            raise ValueError(f"template must have {self.n_bits} bits")
        sketch = self.sketcher.sketch_bits(template)
        return ProtectedRecord(self.code_id, self._pack_sketch(sketch), hash_bits(template))

    def recover_batch(self, record: ProtectedRecord, probes: np.ndarray):
        probes = np.asarray(probes, dtype=np.uint8)
        sketch_a = self._unpack_sketch(record.helper)
        syn_b = self.sketcher.sketch_bits_batch(probes)
        ok, idx, cnt = self.sketcher.recover_batch(sketch_a, syn_b)
        accepted = np.zeros(probes.shape[0], dtype=bool)
        recovered = np.zeros_like(probes)
        for i in np.flatnonzero(ok):
            positions = idx[i, : cnt[i]]
            if positions.size and positions.max() > self.n_bits:
                continue  # difference leaves the template's bit range: garbage
            candidate = probes[i].copy()
            candidate[positions - 1] ^= 1
            if hash_bits(candidate) == record.tag:
                accepted[i] = True
                recovered[i] = candidate
        return accepted, recovered, None

    def recover(self, record: ProtectedRecord, probe: np.ndarray) -> RecoveryResult:
        probe = np.asarray(probe, dtype=np.uint8)
        if probe.shape != (self.n_bits,):
            raise ValueError(f"probe must have {self.n_bits} bits")
        accepted, recovered, _ = self.recover_batch(record, probe[None, :])
        if not accepted[0]:
            return RecoveryResult(accepted=False)
        return RecoveryResult(accepted=True, template=recovered[0])


@lru_cache(maxsize=16)
def _cached_backend(code_id: str):
    kind, _, params = code_id.partition(":")
    kv = dict(item.split("=") for item in params.split(","))
    if kind == "bch":
        return BchBackend(m=int(kv["m"]), t=int(kv["t"]))
    if kind == "pinsketch":
        return PinSketchBackend(t=int(kv["t"]), n_bits=int(kv["n"]), m=int(kv["m"]))
    raise ValueError(f"unknown backend kind {kind!r}")


def backend_for(code_id: str):
    """Reconstruct the commitment backend a record was made under."""
    return _cached_backend(code_id)


def make_backend(kind: str, t: int, n_bits: int):
    if kind == "bch":
        m = n_bits.bit_length()
        if (1 << m) - 1 != n_bits:
            raise ValueError(f"bch backend needs n_bits = 2^m - 1, got {n_bits}")
        return BchBackend(m=m, t=t)
    if kind == "pinsketch":
        return PinSketchBackend(t=t, n_bits=n_bits)
    raise ValueError(f"unknown backend kind {kind!r}")
