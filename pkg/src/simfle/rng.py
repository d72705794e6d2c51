"""Deterministic, named RNG streams.

Every stochastic component draws from its own stream so that e.g. changing
the augmentation pipeline never perturbs group selection. Streams are derived
from (seed, stream_id) via SHA-256, so identical pairs are bit-identical
across runs, platforms, and process boundaries.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import torch

STREAM_IDS = ("data", "augment", "model-init", "group-select")


def _derive(seed: int, stream_id: str, *extra: int) -> int:
    h = hashlib.sha256()
    h.update(str(int(seed)).encode("utf-8"))
    h.update(b"/")
    h.update(stream_id.encode("utf-8"))
    for e in extra:
        h.update(b"/")
        h.update(str(int(e)).encode("utf-8"))
    return int.from_bytes(h.digest()[:8], "little")


@dataclass(frozen=True)
class RNGStream:
    """A named, seed-derived random stream."""

    seed: int
    stream_id: str

    def __post_init__(self):
        if self.stream_id not in STREAM_IDS:
            raise ValueError(
                f"unknown stream_id {self.stream_id!r}; expected one of {STREAM_IDS}"
            )

    def generator(self, *extra: int) -> np.random.Generator:
        """Fresh numpy generator; `extra` indices (step, worker) fork substreams."""
        return np.random.Generator(
            np.random.PCG64(_derive(self.seed, self.stream_id, *extra))
        )

    def torch_generator(self, *extra: int) -> torch.Generator:
        g = torch.Generator()
        g.manual_seed(_derive(self.seed, self.stream_id, *extra) % (2**63))
        return g


def streams(seed: int) -> dict[str, RNGStream]:
    """All four named streams for one run seed."""
    return {sid: RNGStream(seed, sid) for sid in STREAM_IDS}
