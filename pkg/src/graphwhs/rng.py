"""Reproducible counter-based noise streams.

Brownian increments are pure functions of ``(master_seed, stream_id, word
index)``: each stream owns a Philox-4x64 generator keyed by the pair, raw
64-bit words are mapped to normals through the inverse CDF, and word index
equals normal index (no rejection sampling).  Consequences relied on
elsewhere:

* a single path and a row of a batch produce bit-identical noise,
* an increment over a coarse step is the sum of the increments of the fine
  steps it covers (``substeps`` base draws per step), which is what
  common-noise refinement studies need,
* worker scheduling cannot change any result because nothing is shared.

Bridge draws (used when a step is halved at the simplex boundary) come from
a separate key so they never collide with base draws.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

Array = np.ndarray

_BRIDGE_BIT = np.uint64(1) << np.uint64(63)
# Bridge slots reserved per nominal step (one normal vector each).  Binary
# step refinement of depth d consumes at most 2^d - 1 slots, so 1024 slots
# cover rejection depths up to 10.
_BRIDGE_SLOTS = 1024


def _raw_to_normals(raw: Array) -> Array:
    # Top 53 bits -> uniform strictly inside (0,1), then inverse CDF.
    u = (raw >> np.uint64(11)) * 2.0**-53 + 2.0**-54
    return ndtri(u)


def _philox(master_seed: int, stream_id: int, bridge: bool = False) -> np.random.Philox:
    key = np.array(
        [
            np.uint64(master_seed & 0xFFFFFFFFFFFFFFFF),
            np.uint64(stream_id) | (_BRIDGE_BIT if bridge else np.uint64(0)),
        ],
        dtype=np.uint64,
    )
    return np.random.Philox(key=key)


class RngStream:
    """One reproducible noise stream, identified by (master_seed, stream_id)."""

    def __init__(self, master_seed: int, stream_id: int = 0):
        if not 0 <= stream_id < 2**63:
            raise ValueError("stream_id must fit in 63 bits")
        self.master_seed = int(master_seed)
        self.stream_id = int(stream_id)
        self._base: Array = np.empty(0)
        self._bridge: Array = np.empty(0)

    def __repr__(self):
        return f"RngStream(master_seed={self.master_seed}, stream_id={self.stream_id})"

    def _prefix(self, count: int, bridge: bool) -> Array:
        cache = self._bridge if bridge else self._base
        if count > cache.size:
            # Regenerate from word 0; words are a pure function of the key,
            # so extending the prefix never changes earlier entries.
            gen = _philox(self.master_seed, self.stream_id, bridge=bridge)
            grown = max(count, 2 * cache.size, 256)
            cache = _raw_to_normals(gen.random_raw(grown))
            if bridge:
                self._bridge = cache
            else:
                self._base = cache
        return cache[:count]

    def base_normals(self, count: int) -> Array:
        """First ``count`` standard normals of the stream (flat, read-only order)."""
        return self._prefix(count, bridge=False).copy()

    def brownian_increments(self, n_steps: int, n_dim: int, dt: float, substeps: int = 1) -> Array:
        """Increments of an ``n_dim``-dimensional Brownian path on ``n_steps`` steps.

        Each step sums ``substeps`` base draws of variance ``dt/substeps``, so
        a run at (n_steps, substeps=m) and one at (m*n_steps, substeps=1) see
        the same Brownian path.
        """
        if n_steps < 0 or substeps < 1:
            raise ValueError("need n_steps >= 0 and substeps >= 1")
        z = self._prefix(n_steps * substeps * n_dim, bridge=False)
        z = z.reshape(n_steps, substeps, n_dim)
        # Scale before summing: the coarse increment is then the plain float
        # sum of the fine increments it covers.
        return (np.sqrt(dt / substeps) * z).sum(axis=1)

    def bridge_normal(self, step_index: int, slot: int, n_dim: int) -> Array:
        """Standard-normal vector for the ``slot``-th split inside step ``step_index``."""
        if slot >= _BRIDGE_SLOTS:
            raise ValueError("bridge slot budget exceeded")
        start = (step_index * _BRIDGE_SLOTS + slot) * n_dim
        return self._prefix(start + n_dim, bridge=True)[start:start + n_dim].copy()


def batch_increments(
    master_seed: int,
    n_paths: int,
    n_steps: int,
    n_dim: int,
    dt: float,
    substeps: int = 1,
    first_stream: int = 0,
) -> Array:
    """Increments for streams first_stream..first_stream+n_paths-1.

    Shape (n_paths, n_steps, n_dim).  Row p is bit-identical to
    ``RngStream(master_seed, first_stream + p).brownian_increments(...)``;
    the batched version just amortizes the inverse-CDF call.
    """
    words = n_steps * substeps * n_dim
    raw = np.empty((n_paths, words), dtype=np.uint64)
    for p in range(n_paths):
        raw[p] = _philox(master_seed, first_stream + p).random_raw(words)
    z = _raw_to_normals(raw).reshape(n_paths, n_steps, substeps, n_dim)
    return (np.sqrt(dt / substeps) * z).sum(axis=2)
