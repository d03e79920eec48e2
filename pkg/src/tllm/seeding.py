"""Deterministic, splittable random streams derived from one run seed."""
from __future__ import annotations

import hashlib

import numpy as np


def _label_key(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "little")


def spawn_rng(seed: int, *labels: str) -> np.random.Generator:
    """Independent counter-based generator for (seed, *labels).

    SeedSequence mixes the entropy, so distinct label paths yield distinct
    streams; identical paths are bit-reproducible across platforms.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_label_key(l) for l in labels]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
