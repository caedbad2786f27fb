"""Stage-level seed derivation and small hashing helpers."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*parts) -> int:
    """Deterministic 63-bit seed from any sequence of printable parts.

    Used as ``derive_seed(global_seed, stage, query_id)`` so that every stage
    owns an independent stream without coupling to the others.
    """
    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little") >> 1


def rng_for(*parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))


def short_hash(text: str | bytes, n: int = 16) -> str:
    if isinstance(text, str):
        text = text.encode("utf-8")
    return hashlib.sha256(text).hexdigest()[:n]
