"""Reproducible per-path Gaussian streams.

Every simulated path owns a counter-based Philox stream keyed by
(master_seed, stream id), so path i is reproducible from those two integers
alone and the draw order never depends on scheduling or worker count.
Domain offsets keep path streams, segment-sampler streams and experiment
streams from colliding when they share a master seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# stream-id domain offsets; ids passed by callers must stay below 2**47
DOMAIN_PATH = 0
DOMAIN_SAMPLER = 1 << 48
DOMAIN_EXPERIMENT = 2 << 48

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStreamSpec:
    """Key of one Gaussian stream: (master_seed, stream_id)."""

    master_seed: int
    stream_id: int

    def __post_init__(self):
        if not (0 <= self.master_seed <= _MASK64):
            raise ValueError("master_seed must fit in 64 bits")
        if not (0 <= self.stream_id <= _MASK64):
            raise ValueError("stream_id must fit in 64 bits")


def generator(stream: RngStreamSpec, domain: int = DOMAIN_PATH) -> np.random.Generator:
    key = np.array(
        [stream.master_seed, (stream.stream_id + domain) & _MASK64], dtype=np.uint64
    )
    return np.random.Generator(np.random.Philox(key=key))


def gaussian_block(stream: RngStreamSpec, n_steps: int, m: int) -> np.ndarray:
    """The first n_steps * m standard normals of the stream, shaped (n_steps, m)."""
    return generator(stream).standard_normal((n_steps, m))


def path_noise(
    master_seed: int, path_ids, n_steps: int, m: int
) -> np.ndarray:
    """Noise block (n_paths, n_steps, m) for the given path stream ids."""
    path_ids = list(path_ids)
    out = np.empty((len(path_ids), n_steps, m))
    for row, pid in enumerate(path_ids):
        out[row] = gaussian_block(RngStreamSpec(master_seed, pid), n_steps, m)
    return out
