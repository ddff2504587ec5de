"""Domain types, the strategy constraint set, demand generation and hit accounting.

A PTM (probability transition matrix) is stored column-major in meaning:
``entries[i, j]`` is the probability that a user requests file ``i`` given
that file ``j`` was recommended, so every column is a distribution.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import InvalidPtm, InvalidStrategy, NoRecommendation

TOL = 1e-9


def _frozen(a, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Catalog:
    file_count: int

    def __post_init__(self):
        if int(self.file_count) != self.file_count or self.file_count < 1:
            raise ValueError(f"file_count must be a positive integer, got {self.file_count}")


@dataclass(frozen=True, eq=False)
class Ptm:
    """Column-stochastic F x F matrix; column j = request distribution given j recommended."""

    entries: np.ndarray

    def __post_init__(self):
        P = np.array(self.entries, dtype=np.float64, copy=True)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
            raise InvalidPtm(f"PTM must be a non-empty square matrix, got shape {P.shape}")
        if not np.all(np.isfinite(P)):
            raise InvalidPtm("PTM contains non-finite entries")
        if P.min() < 0.0 or P.max() > 1.0:
            raise InvalidPtm("PTM entries must lie in [0, 1]")
        sums = P.sum(axis=0)
        bad = np.flatnonzero(np.abs(sums - 1.0) > TOL)
        if bad.size:
            raise InvalidPtm(f"column {int(bad[0])} sums to {sums[bad[0]]!r}, expected 1")
        P.setflags(write=False)
        object.__setattr__(self, "entries", P)

    @property
    def F(self) -> int:
        return self.entries.shape[0]

    @cached_property
    def column_cdf(self) -> np.ndarray:
        cdf = np.cumsum(self.entries, axis=0)
        cdf[-1, :] = 1.0
        return cdf

    def __eq__(self, other):
        return isinstance(other, Ptm) and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())

    @classmethod
    def trusted(cls, entries: np.ndarray) -> "Ptm":
        """Wrap a matrix already known to be column-stochastic, skipping validation."""
        obj = object.__new__(cls)
        P = np.array(entries, dtype=np.float64)
        P.setflags(write=False)
        object.__setattr__(obj, "entries", P)
        return obj

    @classmethod
    def normalized(cls, matrix) -> "Ptm":
        """Build a PTM from a nonnegative matrix by rescaling each column to sum to one."""
        M = np.asarray(matrix, dtype=np.float64)
        if M.ndim != 2 or np.any(M < 0):
            raise InvalidPtm("normalized() needs a nonnegative 2-D matrix")
        sums = M.sum(axis=0)
        if np.any(sums <= 0):
            raise InvalidPtm("every column needs positive mass to be normalized")
        return cls(np.clip(M / sums, 0.0, 1.0))

    @classmethod
    def uniform(cls, F: int) -> "Ptm":
        return cls(np.full((F, F), 1.0 / F))

    @classmethod
    def identity(cls, F: int) -> "Ptm":
        return cls(np.eye(F))

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "Ptm":
        """Load an F x F CSV whose row i / column j holds p_ij."""
        rows = []
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or all(not c.strip() for c in row):
                    continue
                try:
                    rows.append([float(c) for c in row])
                except ValueError as exc:
                    raise InvalidPtm(f"{path}:{lineno}: {exc}") from None
        if not rows or any(len(r) != len(rows) for r in rows):
            raise InvalidPtm(f"{path}: expected a square matrix of numbers")
        return cls(np.array(rows))

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for row in self.entries:
                w.writerow([repr(float(x)) for x in row])


@dataclass(frozen=True)
class ConstraintSet:
    """Cache budget c and recommendation budget r over a catalog of F files."""

    F: int
    c: int
    r: int

    def __post_init__(self):
        Catalog(self.F)
        if not 1 <= self.c <= self.F:
            raise ValueError(f"cache_budget must satisfy 1 <= c <= F ({self.F}), got {self.c}")
        if not 1 <= self.r <= self.F:
            raise ValueError(f"rec_budget must satisfy 1 <= r <= F ({self.F}), got {self.r}")

    @property
    def p(self) -> float:
        return self.c / self.F

    @property
    def q(self) -> float:
        return self.r / self.F

    def contains(self, strategy: "Strategy") -> bool:
        return (
            strategy.u.shape == (self.F,)
            and float(strategy.u.sum()) <= self.c + TOL
            and float(strategy.v.sum()) <= self.r + TOL
        )


@dataclass(frozen=True, eq=False)
class Strategy:
    """A caching vector u and a recommendation vector v, both in [0, 1]^F."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = _frozen(self.u)
        v = _frozen(self.v)
        if u.ndim != 1 or u.shape != v.shape:
            raise InvalidStrategy(f"u and v must be equal-length vectors, got {u.shape} and {v.shape}")
        for name, x in (("u", u), ("v", v)):
            if x.size and (x.min() < -TOL or x.max() > 1 + TOL):
                raise InvalidStrategy(f"{name} has entries outside [0, 1]")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def integral(self) -> bool:
        return bool(np.all((self.u == 0) | (self.u == 1)) and np.all((self.v == 0) | (self.v == 1)))

    @classmethod
    def from_sets(cls, F: int, cached, recommended) -> "Strategy":
        u = np.zeros(F)
        v = np.zeros(F)
        u[list(cached)] = 1.0
        v[list(recommended)] = 1.0
        return cls(u, v)

    def cached_files(self) -> np.ndarray:
        return np.flatnonzero(self.u == 1)

    def recommended_files(self) -> np.ndarray:
        return np.flatnonzero(self.v == 1)

    def __eq__(self, other):
        return (
            isinstance(other, Strategy)
            and np.array_equal(self.u, other.u)
            and np.array_equal(self.v, other.v)
        )

    def __hash__(self):
        return hash((self.u.tobytes(), self.v.tobytes()))


def random_strategy(constraints: ConstraintSet, rng: np.random.Generator) -> Strategy:
    """Uniformly random integral strategy caching exactly c and recommending exactly r files.

    Each file is cached with marginal probability p = c/F and recommended with
    q = r/F, and the budgets hold with certainty.
    """
    F = constraints.F
    cached = rng.choice(F, size=constraints.c, replace=False)
    recommended = rng.choice(F, size=constraints.r, replace=False)
    return Strategy.from_sets(F, cached, recommended)


@dataclass(frozen=True, eq=False)
class DemandVector:
    """Request tallies of one slot, plus the per-user (request, picked recommendation) pairs."""

    counts: np.ndarray
    slot: int
    n_users: int
    requests: np.ndarray = field(repr=False)
    picks: np.ndarray = field(repr=False)

    def attribution(self, F: int) -> np.ndarray:
        """F x F matrix of how many users requested i after picking recommended file j."""
        A = np.zeros((F, F), dtype=np.int64)
        np.add.at(A, (self.requests, self.picks), 1)
        return A


def generate_demands(
    ptm: Ptm, strategy: Strategy, n_users: int, rng: np.random.Generator, slot: int = 0
) -> DemandVector:
    """Draw one slot of requests.

    Each user independently picks one file uniformly among the recommended
    ones, then requests a file from that PTM column.

    Raises:
        NoRecommendation: if ``strategy.v`` recommends nothing.
    """
    v = strategy.v
    if np.any((v != 0) & (v != 1)):
        raise InvalidStrategy("demand generation needs an integral recommendation vector")
    rec = np.flatnonzero(v == 1)
    if rec.size == 0:
        raise NoRecommendation("at least one file must be recommended in every slot")
    if n_users < 0:
        raise ValueError("n_users must be nonnegative")
    F = ptm.F
    # always 2 * n_users uniforms, whatever the strategy, so streams stay aligned across policies
    pick_draws = rng.random(n_users)
    draws = rng.random(n_users)
    picks = rec[np.minimum((pick_draws * rec.size).astype(np.int64), rec.size - 1)]
    cdf = ptm.column_cdf
    requests = np.empty(n_users, dtype=np.int64)
    for j in np.unique(picks):
        mask = picks == j
        requests[mask] = np.searchsorted(cdf[:, j], draws[mask], side="right")
    np.minimum(requests, F - 1, out=requests)
    counts = np.bincount(requests, minlength=F).astype(np.int64)
    return DemandVector(counts=counts, slot=slot, n_users=n_users, requests=requests, picks=picks)


def expected_hit(ptm: Ptm, strategy: Strategy) -> float:
    """Average cache hit u^T P v."""
    return float(strategy.u @ ptm.entries @ strategy.v)


def realized_hit(demand: DemandVector, strategy: Strategy) -> float:
    """Fraction of this slot's requests served from the cache (nan if nobody asked)."""
    if demand.n_users == 0:
        return float("nan")
    return float(demand.counts @ strategy.u) / demand.n_users


class DemandMatrix:
    """Accumulated attribution counts alpha[i, j] and per-column recommendation slots.

    Single writer; ``update`` mutates in place and returns ``self``.
    """

    def __init__(self, F: int, n_users: int = 0):
        Catalog(F)
        self.F = F
        self.n_users = n_users
        self.alpha = np.zeros((F, F), dtype=np.int64)
        self.col_slots = np.zeros(F, dtype=np.int64)

    def copy(self) -> "DemandMatrix":
        dm = DemandMatrix(self.F, self.n_users)
        dm.alpha = self.alpha.copy()
        dm.col_slots = self.col_slots.copy()
        return dm

    @property
    def column_totals(self) -> np.ndarray:
        return self.alpha.sum(axis=0)

    def update(self, demand: DemandVector, v_prev: np.ndarray) -> "DemandMatrix":
        return update_demand_matrix(self, demand, v_prev)

    def __repr__(self):
        return f"DemandMatrix(F={self.F}, users={self.n_users}, total={int(self.alpha.sum())})"


def update_demand_matrix(dm: DemandMatrix, demand: DemandVector, v_prev) -> DemandMatrix:
    """Add one slot's attributed demands; v_prev is the recommendation active in that slot."""
    v_prev = np.asarray(v_prev, dtype=np.float64)
    if np.any((v_prev != 0) & (v_prev != 1)):
        raise InvalidStrategy("v_prev must be integral")
    if not np.any(v_prev == 1):
        raise NoRecommendation("v_prev recommends nothing")
    np.add.at(dm.alpha, (demand.requests, demand.picks), 1)
    dm.col_slots += (v_prev == 1).astype(np.int64)
    return dm


# PTM families used by scenarios and tests.


def random_ptm(F: int, rng: np.random.Generator, concentration: float = 1.0) -> Ptm:
    """Columns drawn i.i.d. from a symmetric Dirichlet."""
    G = rng.gamma(concentration, 1.0, size=(F, F))
    G[:, G.sum(axis=0) == 0] = 1.0
    return Ptm.normalized(G)


def zipf_popularity(F: int, exponent: float) -> np.ndarray:
    w = 1.0 / np.arange(1, F + 1) ** exponent
    return w / w.sum()


def recommendation_ptm(
    F: int,
    rng: Optional[np.random.Generator] = None,
    zipf_exponent: float = 0.8,
    influence: float = 0.5,
) -> Ptm:
    """Zipf base popularity nudged toward the recommended file.

    Column j is ``(1 - influence) * z + influence * e_j`` where ``z`` is a Zipf
    profile over a random ranking of the catalog (identity ranking if no rng).
    """
    if not 0.0 <= influence <= 1.0:
        raise ValueError("influence must be in [0, 1]")
    z = zipf_popularity(F, zipf_exponent)
    if rng is not None:
        z = z[rng.permutation(F)]
    M = (1.0 - influence) * z[:, None] + influence * np.eye(F)
    return Ptm.normalized(M)


def perturb_ptm(ptm: Ptm, rng: np.random.Generator, amount: float) -> Ptm:
    """Mix a PTM with an independent random PTM: (1 - amount) P + amount R."""
    if not 0.0 <= amount <= 1.0:
        raise ValueError("amount must be in [0, 1]")
    if amount == 0.0:
        return ptm
    R = random_ptm(ptm.F, rng).entries
    return Ptm.normalized((1.0 - amount) * ptm.entries + amount * R)
