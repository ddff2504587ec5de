"""Fusion of per-station PTM estimates at the macro base station."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import TOL, Ptm
from .errors import DimensionMismatch, InvalidWeight

STATIC = "static"
TIME_DECAY = "time_decay"


@dataclass(frozen=True, eq=False)
class FusionWeights:
    """M x M matrix; row k holds the weights used to build station k's fused estimate."""

    lam: np.ndarray

    def __post_init__(self):
        L = np.array(self.lam, dtype=np.float64, copy=True)
        if L.ndim != 2 or L.shape[0] != L.shape[1] or L.shape[0] < 1:
            raise InvalidWeight(f"weights must be a square matrix, got shape {L.shape}")
        if L.min() < -TOL or L.max() > 1 + TOL:
            raise InvalidWeight("weights must lie in [0, 1]")
        if np.any(np.abs(L.sum(axis=1) - 1.0) > TOL):
            raise InvalidWeight("each weight row must sum to 1")
        L.setflags(write=False)
        object.__setattr__(self, "lam", L)

    @property
    def M(self) -> int:
        return self.lam.shape[0]

    def row(self, k: int) -> np.ndarray:
        return self.lam[k]


def fuse(estimates: Sequence[Ptm], weights) -> Ptm:
    """Entrywise convex combination sum_m weights[m] * estimates[m]."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or len(estimates) != w.size:
        raise DimensionMismatch(f"{len(estimates)} estimates but {w.size} weights")
    F = estimates[0].F
    if any(P.F != F for P in estimates):
        raise DimensionMismatch("all estimates must share the catalog size")
    if w.min() < -TOL or abs(w.sum() - 1.0) > TOL:
        raise InvalidWeight("fusion weights must be nonnegative and sum to 1")
    if w.size == 1:
        return estimates[0]
    Q = w[0] * estimates[0].entries
    for wm, P in zip(w[1:], estimates[1:]):
        Q = Q + wm * P.entries
    # a convex combination of column-stochastic matrices stays column-stochastic;
    # only rounding is removed here
    return Ptm.trusted(Q / Q.sum(axis=0))


def schedule_weights(M: int, T: int, mode: str = TIME_DECAY, lam: Optional[float] = None) -> FusionWeights:
    """Build the M x M weight matrix.

    ``time_decay``: every neighbor gets 1 / ((M - 1) sqrt(T)) and the station
    keeps the rest; with M = 2 that is an own weight of 1 - 1/sqrt(T).
    ``static``: own weight ``lam``, neighbors share 1 - lam equally.

    Raises:
        InvalidWeight: if the own weight would fall outside [0, 1].
    """
    if M < 1 or T < 1:
        raise ValueError("M and T must be >= 1")
    if M == 1:
        return FusionWeights(np.ones((1, 1)))
    if mode == TIME_DECAY:
        neighbor = 1.0 / ((M - 1) * np.sqrt(T))
        own = 1.0 - (M - 1) * neighbor
    elif mode == STATIC:
        if lam is None:
            raise InvalidWeight("static mode needs an own weight lambda")
        own = float(lam)
        neighbor = (1.0 - own) / (M - 1)
    else:
        raise ValueError(f"unknown fusion mode {mode!r}")
    if own < -TOL or own > 1 + TOL or neighbor < -TOL:
        raise InvalidWeight(f"own weight {own} is outside [0, 1]; raise T or clamp lambda")
    L = np.full((M, M), neighbor)
    np.fill_diagonal(L, own)
    return FusionWeights(np.clip(L, 0.0, 1.0))
