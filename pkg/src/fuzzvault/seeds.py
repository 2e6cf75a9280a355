"""Labelled sub-seed derivation so one master seed drives every stage."""

import hashlib


def derive_seed(master_seed: int, *labels) -> int:
    """Derive a 64-bit sub-seed from a master seed and a label path.

    Stable across platforms and runs: the same (master_seed, labels) always
    yields the same value, and distinct label paths are independent for all
    practical purposes (SHA-256 truncation).
    """
    material = "|".join([str(master_seed), *[str(x) for x in labels]])
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")
