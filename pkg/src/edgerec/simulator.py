"""Slotted simulation of M learning stations plus the metrics they report.

Each slot every station serves its users with the strategy chosen at the end
of the previous slot, records hits, delay, throughput and regret, folds the
observed demands into its counts, and (for learning policies) re-plans. With
several stations the macro base station fuses the per-station estimates
before each station re-solves.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .baselines import CachePolicyState
from .config import SCHEMA_VERSION, RunConfig
from .core import (
    ConstraintSet,
    DemandMatrix,
    Ptm,
    Strategy,
    expected_hit,
    generate_demands,
    perturb_ptm,
    random_ptm,
    random_strategy,
    recommendation_ptm,
    update_demand_matrix,
)
from .estimators import (
    EXPLORE_THEN_COMMIT,
    GENIE_AIDED,
    BayesEstimator,
    PointEstimator,
    bayes_sample,
    point_estimate,
    sigma_bar_sq,
)
from .federation import fuse, schedule_weights
from .optimizer import OptimizerConfig, best_response_cache, optimal_value, solve
from .scenario import ScenarioTopology, build_scenario

log = logging.getLogger(__name__)

BASELINE_POLICIES = ("lru", "lfu", "lrfu")
ESTIMATING_POLICIES = ("bayes", "point_genie", "point_etc", "bayes_norec")
CSV_COLUMNS = ("slot", "station", "expected_hit", "realized_hit", "cum_regret",
               "delay", "throughput", "sigma_bar_sq")


def build_ptms(cfg: RunConfig, rng: np.random.Generator) -> List[Ptm]:
    """True PTM of every station, from the ``ptm`` config section."""
    p = cfg.ptm
    if p.kind == "uniform":
        base = Ptm.uniform(cfg.F)
    elif p.kind == "identity":
        base = Ptm.identity(cfg.F)
    elif p.kind == "dirichlet":
        base = random_ptm(cfg.F, rng, p.concentration)
    elif p.kind == "recommendation":
        base = recommendation_ptm(cfg.F, rng, p.zipf_exponent, p.influence)
    else:
        base = Ptm.from_csv(p.path)
        if base.F != cfg.F:
            raise ValueError(f"PTM file has F = {base.F}, config says F = {cfg.F}")
    return [perturb_ptm(base, rng, p.heterogeneity) for _ in range(cfg.M)]


@dataclass
class RunMetrics:
    """Per-slot, per-station traces (arrays of shape T x M) and the run's benchmark."""

    config: RunConfig
    expected_hit: np.ndarray
    realized_hit: np.ndarray
    cum_regret: np.ndarray
    delay: np.ndarray
    throughput: np.ndarray
    sigma_bar_sq: np.ndarray
    optimal_value: np.ndarray
    benchmark_exact: bool
    users_per_station: np.ndarray
    extra: Dict[str, object] = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.expected_hit.shape[0]

    @property
    def M(self) -> int:
        return self.expected_hit.shape[1]

    def regret_increments(self) -> np.ndarray:
        return np.diff(self.cum_regret, axis=0, prepend=0.0)

    def final_quarter_hit(self) -> float:
        start = (3 * self.T) // 4
        return float(self.expected_hit[start:].mean())

    def summary(self) -> Dict[str, object]:
        with np.errstate(invalid="ignore"):
            return {
                "schema_version": SCHEMA_VERSION,
                "seed": self.config.seed,
                "policy": self.config.policy,
                "config": self.config.to_dict(),
                "benchmark_exact": self.benchmark_exact,
                "optimal_value": [float(x) for x in self.optimal_value],
                "users_per_station": [int(x) for x in self.users_per_station],
                "mean_expected_hit": float(self.expected_hit.mean()),
                "final_quarter_expected_hit": self.final_quarter_hit(),
                "mean_realized_hit": _nanmean(self.realized_hit),
                "final_cum_regret": [float(x) for x in self.cum_regret[-1]],
                "mean_delay": _nanmean(self.delay),
                "mean_throughput": _nanmean(self.throughput),
                "final_sigma_bar_sq": [float(x) for x in self.sigma_bar_sq[-1]],
                **self.extra,
            }

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for t in range(self.T):
            for k in range(self.M):
                w.writerow([t, k, _fmt(self.expected_hit[t, k]), _fmt(self.realized_hit[t, k]),
                            _fmt(self.cum_regret[t, k]), _fmt(self.delay[t, k]),
                            _fmt(self.throughput[t, k]), _fmt(self.sigma_bar_sq[t, k])])
        return buf.getvalue()

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())


def _fmt(x: float) -> str:
    return repr(float(x))


def _nanmean(a: np.ndarray) -> float:
    a = np.asarray(a, dtype=float)
    ok = ~np.isnan(a)
    return float(a[ok].mean()) if ok.any() else float("nan")


class _Station:
    def __init__(self, k: int, cfg: RunConfig, ptm: Ptm, users: np.ndarray,
                 sinr: np.ndarray, seed_seq: np.random.SeedSequence):
        demand_ss, strategy_ss, estimator_ss, optimizer_ss = seed_seq.spawn(4)
        self.k = k
        self.ptm = ptm
        self.users = users
        self.sinr = sinr  # SINR of each attached user to this station
        self.demand_rng = np.random.default_rng(demand_ss)
        self.strategy_rng = np.random.default_rng(strategy_ss)
        self.estimator_rng = np.random.default_rng(estimator_ss)
        self.optimizer_rng = np.random.default_rng(optimizer_ss)
        self.dm = DemandMatrix(cfg.F, len(users))
        self.cache: Optional[CachePolicyState] = None
        if cfg.policy in BASELINE_POLICIES:
            self.cache = CachePolicyState(cfg.policy, cfg.c, cfg.baseline.lrfu_lambda)
        self.strategy: Optional[Strategy] = None
        self.committed = False


def _random_recommendation(F: int, r: int, rng: np.random.Generator) -> np.ndarray:
    v = np.zeros(F)
    v[rng.choice(F, size=r, replace=False)] = 1.0
    return v


def run(cfg: RunConfig, ptms: Optional[Sequence[Ptm]] = None,
        topology: Optional[ScenarioTopology] = None) -> RunMetrics:
    """Simulate ``cfg.T`` slots and return the metric traces.

    ``ptms`` and ``topology`` override what the config would generate.
    """
    root = np.random.SeedSequence(cfg.seed)
    topo_ss, ptm_ss, bench_ss, stations_ss = root.spawn(4)
    station_seeds = stations_ss.spawn(cfg.M)
    if topology is None:
        topology = build_scenario(cfg, np.random.default_rng(topo_ss))
    if ptms is None:
        ptms = build_ptms(cfg, np.random.default_rng(ptm_ss))
    if len(ptms) != cfg.M or any(P.F != cfg.F for P in ptms):
        raise ValueError("need one F x F PTM per station")
    cons = ConstraintSet(cfg.F, cfg.c, cfg.r)
    opt_cfg = OptimizerConfig(cfg.optimizer.restarts, cfg.optimizer.max_alternations,
                              exchange_limit=cfg.optimizer.exchange_limit)
    policy = cfg.policy
    s = cfg.scenario
    log_fn = np.log2 if s.log_base == "2" else np.log

    bench_rng = np.random.default_rng(bench_ss)
    benchmarks = [optimal_value(P, cons, cfg.optimizer.benchmark_restarts, bench_rng) for P in ptms]
    opt_values = np.array([b[1] for b in benchmarks])
    exact = all(b[2] for b in benchmarks)

    stations = []
    for k in range(cfg.M):
        users = topology.users_of(k)
        st = _Station(k, cfg, ptms[k], users, topology.sinr[k, users], station_seeds[k])
        st.strategy = random_strategy(cons, st.strategy_rng)
        stations.append(st)
    weights = schedule_weights(cfg.M, cfg.T, cfg.fusion.mode, cfg.fusion.lam) if cfg.M > 1 else None

    T, M = cfg.T, cfg.M
    exp_hit = np.zeros((T, M))
    real_hit = np.full((T, M), np.nan)
    regret = np.zeros((T, M))
    delay = np.full((T, M), np.nan)
    thr = np.full((T, M), np.nan)
    sig = np.zeros((T, M))
    alpha = s.miss_penalty_alpha
    explore = cfg.estimator.explore_slots
    running = np.zeros(M)

    for t in range(T):
        for st in stations:
            k = st.k
            v = st.strategy.v
            demand = generate_demands(st.ptm, st.strategy, len(st.users), st.demand_rng, slot=t)
            if st.cache is not None:
                u = st.cache.cache_vector(cfg.F)
                hits = np.array([st.cache.access(f, t) for f in demand.requests], dtype=bool)
            else:
                u = st.strategy.u
                hits = u[demand.requests] == 1
            served = Strategy(u, v)
            exp_hit[t, k] = expected_hit(st.ptm, served)
            running[k] += opt_values[k] - exp_hit[t, k]
            regret[t, k] = running[k]
            if demand.n_users:
                real_hit[t, k] = hits.mean()
                rate = log_fn(1.0 + st.sinr)
                penalty = np.where(hits, 1.0, alpha + 1.0)
                delay[t, k] = float(np.mean(penalty / rate))
                thr[t, k] = float(np.mean(s.rate_threshold_bits * rate / penalty))
            update_demand_matrix(st.dm, demand, v)
            sig[t, k] = sigma_bar_sq(st.dm)

        _plan(stations, cfg, cons, opt_cfg, weights, benchmarks, t, explore)

    return RunMetrics(
        config=cfg, expected_hit=exp_hit, realized_hit=real_hit, cum_regret=regret,
        delay=delay, throughput=thr, sigma_bar_sq=sig, optimal_value=opt_values,
        benchmark_exact=exact, users_per_station=np.array([len(st.users) for st in stations]),
    )


def _estimates(stations, cfg: RunConfig) -> List[Ptm]:
    if cfg.policy in ("bayes", "bayes_norec"):
        return [bayes_sample(BayesEstimator(st.dm, cfg.estimator.prior_pseudocount), st.estimator_rng)
                for st in stations]
    mode = EXPLORE_THEN_COMMIT if cfg.policy == "point_etc" else GENIE_AIDED
    return [point_estimate(PointEstimator(st.dm, mode)) for st in stations]


def _fused(estimates: List[Ptm], weights, k: int) -> Ptm:
    if weights is None:
        return estimates[k]
    return fuse(estimates, weights.row(k))


def _plan(stations, cfg: RunConfig, cons: ConstraintSet, opt_cfg: OptimizerConfig,
          weights, benchmarks, t: int, explore: int) -> None:
    """Choose every station's strategy for slot t + 1."""
    policy = cfg.policy
    F = cfg.F
    if policy == "random":
        for st in stations:
            st.strategy = random_strategy(cons, st.strategy_rng)
        return
    if policy == "oracle":
        for st, bench in zip(stations, benchmarks):
            st.strategy = bench[0]
        return
    if policy in BASELINE_POLICIES:
        for st in stations:
            st.strategy = Strategy(np.zeros(F), _random_recommendation(F, cfg.r, st.strategy_rng))
        return
    if policy == "point_etc":
        if t + 1 < explore:
            for st in stations:
                st.strategy = random_strategy(cons, st.strategy_rng)
            return
        if all(st.committed for st in stations):
            return
    estimates = _estimates(stations, cfg)
    for st in stations:
        Q = _fused(estimates, weights, st.k)
        if policy == "bayes_norec":
            # random recommendation fixed first, cache is the best response to it
            v = _random_recommendation(F, cfg.r, st.strategy_rng)
            st.strategy = Strategy(best_response_cache(Q, v, cfg.c), v)
            continue
        st.strategy, _ = solve(Q, cons, opt_cfg, st.optimizer_rng)
        if policy == "point_etc":
            st.committed = True


def fit_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log y against log x (nan if any y <= 0)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0) or np.any(x <= 0) or len(x) < 2:
        return float("nan")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _seed_regrets(args) -> List[float]:
    cfg, T_values, seed = args
    if cfg.M == 1 or cfg.fusion.mode == "static":
        m = run(cfg.with_(seed=int(seed), T=T_values[-1]))
        out = [float(m.cum_regret[T - 1].mean()) for T in T_values]
    else:
        out = [float(run(cfg.with_(seed=int(seed), T=T)).cum_regret[-1].mean()) for T in T_values]
    log.debug("scaling %s seed %s done", cfg.policy, seed)
    return out


def regret_scaling_experiment(cfg: RunConfig, T_values: Sequence[int], seeds: Sequence[int],
                              policy: Optional[str] = None, map_fn=map) -> Dict[str, object]:
    """Mean cumulative regret at each horizon and its fitted log-log exponent.

    Nothing in a run depends on the horizon unless time-decay fusion is on,
    so one run of length max(T) per seed is read at every prefix; otherwise
    each horizon is run separately. ``map_fn`` (e.g. an executor's ``map``)
    spreads the seeds over workers; results are ordered by seed either way.
    """
    T_values = sorted(int(t) for t in T_values)
    if policy is not None:
        cfg = cfg.with_(policy=policy)
    per_seed = np.array(list(map_fn(_seed_regrets, [(cfg, T_values, s) for s in seeds])))
    mean = per_seed.mean(axis=0)
    return {
        "policy": cfg.policy,
        "T": T_values,
        "seeds": [int(s) for s in seeds],
        "mean_regret": [float(x) for x in mean],
        "per_seed_regret": per_seed.tolist(),
        "fitted_exponent": fit_slope(T_values, mean),
    }
