"""Maximize the bilinear cache hit u^T P v over the budgeted strategy set.

Fixing one side turns the problem into a linear program over a box with a
single budget row, whose optimum is the indicator of the top-budget positive
weights. ``solve`` alternates those exact half-steps, escapes stalls with
single-file exchanges, and restarts from several starting sets;
``exhaustive_solve`` enumerates every integral pair and is the reference the
solver is checked against.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb
from typing import Optional, Tuple

import numpy as np

from .core import ConstraintSet, Ptm, Strategy, expected_hit
from .errors import TooLarge

EXHAUSTIVE_LIMIT = 10**6


@dataclass(frozen=True)
class OptimizerConfig:
    restarts: int = 8
    max_alternations: int = 100
    tie_break: str = "lowest_index"
    # largest number of candidate exchanges scored in one swap step; 0 disables swaps
    exchange_limit: int = 4096

    def __post_init__(self):
        if self.exchange_limit < 0:
            raise ValueError("exchange_limit must be >= 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_alternations < 1:
            raise ValueError("max_alternations must be >= 1")
        if self.tie_break != "lowest_index":
            raise ValueError("only lowest_index tie-breaking is supported")


def top_positive(w: np.ndarray, budget: int) -> np.ndarray:
    """0/1 vector selecting the ``budget`` largest strictly positive entries of w.

    Ties go to the lowest index (stable sort on -w).
    """
    order = (-w).argsort(kind="stable")[:budget]
    x = np.zeros(w.shape[0])
    x[order[w[order] > 0]] = 1.0
    return x


def best_response_cache(ptm: Ptm, v, c: int) -> np.ndarray:
    return top_positive(ptm.entries @ np.asarray(v, dtype=np.float64), c)


def best_response_recommend(ptm: Ptm, u, r: int) -> np.ndarray:
    return top_positive(np.asarray(u, dtype=np.float64) @ ptm.entries, r)


def _top_sums(W: np.ndarray, budget: int) -> np.ndarray:
    """Per-column sum of the ``budget`` largest positive entries of W."""
    W = np.maximum(W, 0.0)
    if budget < W.shape[0]:
        W = -np.partition(-W, budget - 1, axis=0)[:budget]
    return W.sum(axis=0)


def _swap_step(P: np.ndarray, v: np.ndarray, c: int, r: int, value: float,
               limit: Optional[int] = None):
    """Best single exchange (or addition, under slack) in the recommendation set.

    Each candidate is scored with its exact cache best response. Returns the
    improved v, or None when no exchange strictly improves or there are more
    than ``limit`` candidates.
    """
    rec = (v == 1).nonzero()[0]
    non = (v == 0).nonzero()[0]
    n_cand = non.size * (rec.size + (rec.size < r))
    if non.size == 0 or (limit is not None and n_cand > limit):
        return None
    w = P @ v
    P_non = P[:, non]
    # candidate (out, in) pairs laid out out-major: index = i_out * |non| + i_in
    cand = (w[:, None, None] - P[:, rec][:, :, None] + P_non[:, None, :]).reshape(P.shape[0], -1)
    n_swaps = cand.shape[1]
    if rec.size < r:
        cand = np.hstack([cand, w[:, None] + P_non])
    scores = _top_sums(cand, c)
    best = int(scores.argmax())
    if scores[best] <= value * (1 + 1e-12) + 1e-15:
        return None
    v = v.copy()
    if best < n_swaps:
        out, inn = divmod(best, non.size)
        v[rec[out]] = 0.0
        v[non[inn]] = 1.0
    else:
        v[non[best - n_swaps]] = 1.0
    return v


def _alternate(P: np.ndarray, v: np.ndarray, c: int, r: int, max_alternations: int,
               trace=None, exchanges: bool = True, limit: Optional[int] = None):
    """Alternate exact best responses; on a stall, try single exchanges on either side.

    Stops when neither an alternation nor (if enabled) an exchange strictly improves.
    """
    u = top_positive(P @ v, c)
    value = float(u @ P @ v)
    if trace is not None:
        trace.append(value)
    for _ in range(max_alternations):
        v_new = top_positive(u @ P, r)
        u_new = top_positive(P @ v_new, c)
        new_value = float(u_new @ P @ v_new)
        if new_value <= value:
            if not exchanges:
                break
            v_swap = _swap_step(P, v, c, r, value, limit)
            if v_swap is not None:
                v_new = v_swap
                u_new = top_positive(P @ v_new, c)
            else:
                u_swap = _swap_step(P.T, u, r, c, value, limit)
                if u_swap is None:
                    break
                u_new = u_swap
                v_new = top_positive(u_new @ P, r)
            new_value = float(u_new @ P @ v_new)
            if new_value <= value:
                break
        if trace is not None:
            trace.append(new_value)
        u, v, value = u_new, v_new, new_value
    return u, v, value


def alternate(ptm: Ptm, v0, constraints: ConstraintSet, max_alternations: int = 100, trace=None):
    """Single ascent from recommendation vector v0; returns (u, v, value).

    If ``trace`` is a list, every accepted value is appended to it.
    """
    return _alternate(ptm.entries, np.asarray(v0, dtype=np.float64), constraints.c,
                      constraints.r, max_alternations, trace)


def _starts(P: np.ndarray, c: int, r: int, restarts: int, rng: np.random.Generator):
    F = P.shape[0]
    # first start: the r columns that would each fill the cache best on their own
    order = np.argsort(-_top_sums(P, c), kind="stable")[:r]
    yield np.sort(order)
    if comb(F, r) <= restarts:
        for start in combinations(range(F), r):
            yield np.array(start)
        return
    for _ in range(restarts - 1):
        yield np.sort(np.argpartition(rng.random(F), r - 1)[:r]) if r < F else np.arange(F)


def solve_array(P: np.ndarray, c: int, r: int, cfg: Optional[OptimizerConfig] = None,
                rng: Optional[np.random.Generator] = None, polish: int = 2):
    """``solve`` on any nonnegative matrix; returns (u, v, value).

    Every start runs plain alternation; the ``polish`` best distinct end
    points are then refined with single-file exchanges.
    """
    cfg = cfg or OptimizerConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    F = P.shape[0]
    ends = {}
    for start in _starts(P, c, r, cfg.restarts, rng):
        key = tuple(start.tolist())
        if key in ends:
            continue
        v0 = np.zeros(F)
        v0[start] = 1.0
        ends[key] = _alternate(P, v0, c, r, cfg.max_alternations, exchanges=False)
    distinct = {}
    for u, v, value in ends.values():
        distinct.setdefault((u.tobytes(), v.tobytes()), (u, v, value))
    ranked = sorted(distinct.values(), key=lambda e: -e[2])[:polish]
    best = None
    for _, v, _ in ranked:
        u, v, value = _alternate(P, v, c, r, cfg.max_alternations, limit=cfg.exchange_limit)
        if best is None or value > best[2] or (value == best[2] and _lex_less(u, v, best[0], best[1])):
            best = (u, v, value)
    return best


def solve(
    ptm: Ptm,
    constraints: ConstraintSet,
    cfg: Optional[OptimizerConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[Strategy, float]:
    """Local ascent from ``cfg.restarts`` recommendation sets (one greedy, the rest random).

    Returns the best integral strategy found and its value u^T P v. Restarts
    are merged by value, then by lexicographically smallest (u, v).
    """
    u, v, _ = solve_array(ptm.entries, constraints.c, constraints.r, cfg, rng)
    strategy = Strategy(u, v)
    return strategy, expected_hit(ptm, strategy)


def _lex_less(u1, v1, u2, v2) -> bool:
    # "smaller" = earlier in the enumeration order of sorted index tuples
    a = (tuple(np.flatnonzero(u1)), tuple(np.flatnonzero(v1)))
    b = (tuple(np.flatnonzero(u2)), tuple(np.flatnonzero(v2)))
    return a < b


def exhaustive_size(constraints: ConstraintSet) -> int:
    return comb(constraints.F, constraints.c) * comb(constraints.F, constraints.r)


def exhaustive_solve(ptm: Ptm, constraints: ConstraintSet, chunk: int = 2048) -> Tuple[Strategy, float]:
    """Enumerate every (cache set, recommendation set) pair at full budget.

    With nonnegative PTM entries a full-budget pair always attains the
    maximum, so smaller sets need not be listed. Ties resolve to the first
    pair in lexicographic order of (cache set, recommendation set).

    Raises:
        TooLarge: if C(F, c) * C(F, r) exceeds 10**6.
    """
    size = exhaustive_size(constraints)
    if size > EXHAUSTIVE_LIMIT:
        raise TooLarge(f"C(F,c)*C(F,r) = {size} exceeds {EXHAUSTIVE_LIMIT}")
    F, c, r = constraints.F, constraints.c, constraints.r
    P = ptm.entries
    cache_sets = np.array(list(combinations(range(F), c)), dtype=np.int64)
    rec_sets = np.array(list(combinations(range(F), r)), dtype=np.int64)
    # column sums of P restricted to each recommendation set: F x |rec_sets|
    W = P[:, rec_sets].sum(axis=2)
    best_val = -np.inf
    best_idx = (0, 0)
    for start in range(0, len(cache_sets), chunk):
        block = cache_sets[start:start + chunk]
        values = W[block].sum(axis=1)
        flat = int(np.argmax(values))
        val = float(values.flat[flat])
        if val > best_val:
            best_val = val
            best_idx = (start + flat // values.shape[1], flat % values.shape[1])
    strategy = Strategy.from_sets(F, cache_sets[best_idx[0]], rec_sets[best_idx[1]])
    return strategy, expected_hit(ptm, strategy)


def optimal_value(ptm: Ptm, constraints: ConstraintSet, restarts: int = 64,
                  rng: Optional[np.random.Generator] = None) -> Tuple[Strategy, float, bool]:
    """Benchmark optimum: exact when enumeration fits the guard, else a wide-restart solve.

    The boolean is True when the value is exact.
    """
    if exhaustive_size(constraints) <= EXHAUSTIVE_LIMIT:
        s, val = exhaustive_solve(ptm, constraints)
        return s, val, True
    s, val = solve(ptm, constraints, OptimizerConfig(restarts=restarts), rng)
    return s, val, False
