"""Deterministic text embeddings for the script cache.

Signed feature hashing: each token is hashed into one of DIM buckets with a
+1/-1 sign, counts accumulate, and the vector is L2-normalized.  The token
hash is keyed blake2b, which is stable across processes and platforms (unlike
Python's built-in hash), so the same summary always embeds identically.

Vectors are quantized to float32 mid-way (so a learned f32 encoder could drop
in without changing any score) and renormalized in float64.  The on-disk form
is base64 of the final little-endian float64 array, which round-trips
bit-exactly.
"""

from __future__ import annotations

import base64
import hashlib
import re
from typing import Optional

import numpy as np

DIM = 256

_HASH_KEY = b"housekeeper-embed-v1"
_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list:
    """Lowercased alphanumeric runs; everything else separates tokens."""
    return _TOKEN_RE.findall(text.lower())


def _bucket_and_sign(token: str) -> tuple:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=_HASH_KEY).digest()
    h = int.from_bytes(digest, "little")
    return (h >> 1) % DIM, 1.0 if h & 1 else -1.0


def embed(text: str) -> np.ndarray:
    """Unit-norm float64 vector of DIM components; all-zero for empty text."""
    raw = np.zeros(DIM, dtype=np.float64)
    for token in tokenize(text):
        bucket, sign = _bucket_and_sign(token)
        raw[bucket] += sign
    norm = float(np.linalg.norm(raw))
    if norm == 0.0:
        return raw
    unit32 = (raw / norm).astype(np.float32)
    unit = unit32.astype(np.float64)
    return unit / float(np.linalg.norm(unit))


def similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; zero vectors are similar to nothing."""
    if a.shape != (DIM,) or b.shape != (DIM,):
        raise ValueError(f"expected two vectors of dim {DIM}, got {a.shape} and {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    if np.array_equal(a, b):
        return 1.0
    # clamp: rounding can push |score| one ulp past 1
    return max(-1.0, min(1.0, float(np.dot(a, b) / (norm_a * norm_b))))


def encode_vector(vec: np.ndarray) -> str:
    """Base64 of the vector as little-endian float64, the cache file format."""
    if vec.shape != (DIM,):
        raise ValueError(f"expected a vector of dim {DIM}, got {vec.shape}")
    return base64.b64encode(vec.astype("<f8").tobytes()).decode("ascii")


def decode_vector(text: str) -> np.ndarray:
    try:
        blob = base64.b64decode(text.encode("ascii"), validate=True)
    except Exception as exc:
        raise ValueError(f"bad embedding encoding: {exc}") from exc
    if len(blob) != DIM * 8:
        raise ValueError(f"embedding blob must be {DIM * 8} bytes, got {len(blob)}")
    return np.frombuffer(blob, dtype="<f8").astype(np.float64)
