"""Network topologies (fixed links or SINR-thresholded links) and per-request delay/throughput.

SINR model: received power ``tx_power * h * d ** -path_loss_exponent`` with
Rayleigh power fading ``h ~ Exp(1)``; interference is the sum of the other
stations' received powers. Fading is drawn once per topology.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .errors import InvalidSinr, ScenarioInfeasible

MAX_RESAMPLES = 100


@dataclass(frozen=True, eq=False)
class ScenarioTopology:
    n_stations: int
    n_users: int
    mode: str
    link: np.ndarray        # M x n_users, 0/1
    sinr: np.ndarray        # M x n_users, linear scale
    serving: np.ndarray     # station index serving each user
    area_radius: float
    sinr_threshold_db: float
    miss_penalty_alpha: float = 10.0

    def users_of(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.serving == k)

    @property
    def link_density(self) -> float:
        return float(self.link.mean())


def _disc_points(n: int, radius: float, rng: np.random.Generator) -> np.ndarray:
    rad = radius * np.sqrt(rng.random(n))
    ang = rng.uniform(0.0, 2.0 * np.pi, n)
    return np.column_stack((rad * np.cos(ang), rad * np.sin(ang)))


def _sinr_for_users(stations: np.ndarray, n: int, cfg, rng: np.random.Generator) -> np.ndarray:
    s = cfg.scenario
    users = _disc_points(n, s.area_radius, rng)
    d = np.linalg.norm(stations[:, None, :] - users[None, :, :], axis=2)
    d = np.maximum(d, s.min_distance)
    h = rng.exponential(1.0, size=d.shape)
    rx = s.tx_power * h * d ** (-s.path_loss_exponent)
    interference = rx.sum(axis=0, keepdims=True) - rx
    return rx / (s.noise_power + interference)


def _connected(sinr: np.ndarray, threshold_db: float) -> np.ndarray:
    if threshold_db == -math.inf:
        return np.ones_like(sinr, dtype=np.int8)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(sinr)
    return (db >= threshold_db).astype(np.int8)


def build_scenario(cfg: RunConfig, rng: np.random.Generator) -> ScenarioTopology:
    """Place users and stations and decide who can talk to whom.

    A user left without any link is redrawn (its links, or its position and
    fading in SINR mode) up to 100 times before giving up.

    Raises:
        ScenarioInfeasible: some user never gets a link.
    """
    s = cfg.scenario
    M, N = cfg.M, cfg.N
    if s.mode == "fixed_link":
        link = (rng.random((M, N)) < s.link_probability).astype(np.int8)
        for _ in range(MAX_RESAMPLES):
            lonely = np.flatnonzero(link.sum(axis=0) == 0)
            if lonely.size == 0:
                break
            link[:, lonely] = (rng.random((M, lonely.size)) < s.link_probability).astype(np.int8)
        else:
            if np.any(link.sum(axis=0) == 0):
                raise ScenarioInfeasible("a user stayed disconnected after 100 resamples")
        sinr = np.full((M, N), float(s.fixed_link_sinr))
        serving = np.array([rng.choice(np.flatnonzero(link[:, u])) for u in range(N)], dtype=np.int64)
    else:
        stations = _disc_points(M, s.area_radius, rng)
        sinr = _sinr_for_users(stations, N, cfg, rng)
        link = _connected(sinr, s.sinr_threshold_db)
        for _ in range(MAX_RESAMPLES):
            lonely = np.flatnonzero(link.sum(axis=0) == 0)
            if lonely.size == 0:
                break
            sinr[:, lonely] = _sinr_for_users(stations, lonely.size, cfg, rng)
            link[:, lonely] = _connected(sinr[:, lonely], s.sinr_threshold_db)
        else:
            if np.any(link.sum(axis=0) == 0):
                raise ScenarioInfeasible("a user stayed below the SINR threshold after 100 resamples")
        masked = np.where(link == 1, sinr, -np.inf)
        serving = np.argmax(masked, axis=0).astype(np.int64)
    return ScenarioTopology(
        n_stations=M, n_users=N, mode=s.mode, link=link, sinr=sinr, serving=serving,
        area_radius=s.area_radius, sinr_threshold_db=s.sinr_threshold_db,
        miss_penalty_alpha=s.miss_penalty_alpha,
    )


def _log(x, base: str):
    return np.log2(x) if base == "2" else np.log(x)


def slot_delay(sinr: float, hit: bool, alpha: float = 10.0, log_base: str = "2") -> float:
    """Download delay 1/log(1 + SINR); a miss adds an alpha-times backhaul fetch."""
    if not sinr > 0:
        raise InvalidSinr(f"SINR must be positive, got {sinr}")
    rate = float(_log(1.0 + sinr, log_base))
    if rate <= 0:
        raise InvalidSinr(f"log(1 + SINR) = {rate} is not positive")
    tau = 1.0 / rate
    return tau if hit else (alpha + 1.0) * tau


def slot_throughput(rate_threshold: float, sinr: float, log_base: str = "2") -> float:
    """R log(1 + SINR) bits per second."""
    if not sinr > 0:
        raise InvalidSinr(f"SINR must be positive, got {sinr}")
    return float(rate_threshold * _log(1.0 + sinr, log_base))
