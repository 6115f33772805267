"""Deterministic random-stream derivation.

Every replicate of every experiment gets its own child stream keyed by
(master seed, experiment tag, replicate index).  Streams are independent of
worker count and scheduling order, which is what makes harness outputs
byte-identical across --workers settings.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_words(tag: str) -> tuple[int, ...]:
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))


def substream(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Child generator for one replicate; stable across platforms and runs."""
    ss = np.random.SeedSequence(entropy=(int(seed), *_tag_words(tag), int(index)))
    return np.random.default_rng(ss)


def stream_entropy(seed: int, tag: str, index: int = 0) -> tuple[int, ...]:
    """The raw entropy tuple; handy for deriving nested tags."""
    return (int(seed), *_tag_words(tag), int(index))
