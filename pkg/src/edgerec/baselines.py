"""Reactive cache-replacement baselines: LRU, LFU and LRFU.

Metadata is kept only for resident files, the usual in-cache bookkeeping:
an evicted file starts from scratch when it comes back.
"""
from __future__ import annotations

from typing import Dict, List

import numpy as np

LRU = "lru"
LFU = "lfu"
LRFU = "lrfu"
POLICIES = (LRU, LFU, LRFU)


class CachePolicyState:
    """A capacity-``c`` cache evicting by ``policy`` on every miss.

    LRFU scores each resident file by its combined recency and frequency,
    ``CRF(t) = sum over past accesses of (1/2) ** (lrfu_lambda * (t - t_access))``,
    kept incrementally. ``lrfu_lambda -> 0`` behaves like LFU and large values
    like LRU. Ties in every policy go to the least recently accessed file.
    """

    def __init__(self, policy: str, capacity: int, lrfu_lambda: float = 0.5):
        if policy not in POLICIES:
            raise ValueError(f"policy must be one of {POLICIES}, got {policy!r}")
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if lrfu_lambda < 0:
            raise ValueError("lrfu_lambda must be nonnegative")
        self.policy = policy
        self.capacity = capacity
        self.lrfu_lambda = lrfu_lambda
        self.last_access: Dict[int, int] = {}  # global access sequence number
        self.last_slot: Dict[int, int] = {}
        self.count: Dict[int, int] = {}
        self.crf: Dict[int, float] = {}
        self._seq = 0
        self.hits = 0
        self.misses = 0

    @property
    def resident(self) -> List[int]:
        return sorted(self.last_access)

    def __contains__(self, f) -> bool:
        return f in self.last_access

    def __len__(self) -> int:
        return len(self.last_access)

    def _decay(self, dt: int) -> float:
        return 0.5 ** (self.lrfu_lambda * dt)

    def _victim(self, slot: int) -> int:
        if self.policy == LRU:
            return min(self.last_access, key=self.last_access.__getitem__)
        if self.policy == LFU:
            return min(self.last_access, key=lambda f: (self.count[f], self.last_access[f]))
        return min(
            self.last_access,
            key=lambda f: (self.crf[f] * self._decay(slot - self.last_slot[f]), self.last_access[f]),
        )

    def access(self, f: int, slot: int) -> bool:
        """Serve one request; True on a hit. A miss inserts ``f``, evicting if full."""
        f = int(f)
        self._seq += 1
        if f in self.last_access:
            self.hits += 1
            self.count[f] += 1
            self.crf[f] = 1.0 + self._decay(slot - self.last_slot[f]) * self.crf[f]
            hit = True
        else:
            self.misses += 1
            if len(self.last_access) >= self.capacity:
                victim = self._victim(slot)
                for table in (self.last_access, self.last_slot, self.count, self.crf):
                    del table[victim]
            self.count[f] = 1
            self.crf[f] = 1.0
            hit = False
        self.last_access[f] = self._seq
        self.last_slot[f] = slot
        return hit

    def cache_vector(self, F: int) -> np.ndarray:
        u = np.zeros(F)
        if self.last_access:
            u[list(self.last_access)] = 1.0
        return u


def access(state: CachePolicyState, file: int, slot: int) -> str:
    return "hit" if state.access(file, slot) else "miss"
