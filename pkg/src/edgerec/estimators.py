"""Online PTM estimation from accumulated demand counts.

Two estimators share a :class:`~edgerec.core.DemandMatrix`:

* ``PointEstimator`` returns the empirical conditional frequencies.
* ``BayesEstimator`` draws each column from its Dirichlet posterior, which is
  what drives exploration in the Bayesian policy.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import DemandMatrix, Ptm
from .errors import InvalidAlpha

EXPLORE_THEN_COMMIT = "explore_then_commit"
GENIE_AIDED = "genie_aided"
POINT_MODES = (EXPLORE_THEN_COMMIT, GENIE_AIDED)


def dirichlet_draw(alphas, rng: np.random.Generator) -> np.ndarray:
    """One draw from Dirichlet(alphas) by normalizing independent Gamma(alpha_j, 1) variates."""
    a = np.asarray(alphas, dtype=np.float64)
    if a.ndim != 1 or a.size == 0:
        raise InvalidAlpha("alphas must be a non-empty vector")
    if not np.all(a > 0) or not np.all(np.isfinite(a)):
        raise InvalidAlpha(f"every Dirichlet parameter must be positive and finite, got {a}")
    g = rng.gamma(a, 1.0)
    total = g.sum()
    if total == 0.0:
        # every gamma underflowed (all alphas tiny): the limit is a vertex
        g = np.zeros_like(a)
        g[np.argmax(a)] = 1.0
        total = 1.0
    return g / total


def _dirichlet_columns(params: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    G = rng.gamma(params, 1.0)
    totals = G.sum(axis=0)
    dead = totals == 0.0
    if np.any(dead):
        for j in np.flatnonzero(dead):
            G[np.argmax(params[:, j]), j] = 1.0
        totals = G.sum(axis=0)
    return G / totals


def sigma_bar_sq(dm: DemandMatrix) -> float:
    """Posterior-concentration statistic: sum over columns of 1 / (column count + 1)^2."""
    totals = dm.alpha.sum(axis=0).astype(np.float64)
    return float(np.sum(1.0 / (totals + 1.0) ** 2))


@dataclass
class PointEstimator:
    """Empirical conditional request frequencies.

    Columns without any attributed request fall back to the uniform
    distribution so the optimizer always receives a full PTM.
    """

    dm: DemandMatrix
    mode: str = GENIE_AIDED

    def __post_init__(self):
        if self.mode not in POINT_MODES:
            raise ValueError(f"mode must be one of {POINT_MODES}, got {self.mode!r}")

    def estimate(self) -> Ptm:
        return point_estimate(self)


def point_estimate(est: PointEstimator) -> Ptm:
    dm = est.dm
    F = dm.F
    totals = dm.alpha.sum(axis=0)
    P = np.full((F, F), 1.0 / F)
    seen = totals > 0
    if np.any(seen):
        P[:, seen] = dm.alpha[:, seen] / totals[seen]
    return Ptm.trusted(P)


@dataclass
class BayesEstimator:
    dm: DemandMatrix
    prior_pseudocount: float = 1.0
    _params: np.ndarray = field(init=False, repr=False, default=None)

    def __post_init__(self):
        if self.prior_pseudocount < 0:
            raise ValueError("prior_pseudocount must be nonnegative")

    def sample(self, rng: np.random.Generator) -> Ptm:
        return bayes_sample(self, rng)


def bayes_sample(est: BayesEstimator, rng: np.random.Generator) -> Ptm:
    """Draw column j of the PTM from Dirichlet(alpha[:, j] + s) independently for every j."""
    params = est.dm.alpha + float(est.prior_pseudocount)
    if np.any(params <= 0):
        # s = 0 and an unobserved entry: keep it inside the support with a tiny mass
        params = np.where(params > 0, params, np.finfo(float).tiny)
    P = _dirichlet_columns(params.astype(np.float64), rng)
    return Ptm.trusted(np.clip(P, 0.0, 1.0))
