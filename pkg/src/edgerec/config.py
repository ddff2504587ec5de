"""Run and experiment configuration: dataclasses, TOML parsing and validation.

Configuration files are TOML. Top-level keys describe one run; optional
tables refine it. Every key and default:

=================  =========================  ====================================
key                default                    meaning
=================  =========================  ====================================
F                  (required)                 catalog size
c                  (required)                 cache budget, 1 <= c <= F
r                  (required)                 recommendation budget, 1 <= r <= F
N                  (required)                 number of users
M                  1                          number of small base stations
T                  (required)                 number of slots
policy             "bayes"                    see ``POLICIES``
seed               0                          master seed
ptm.kind           "recommendation"           uniform | identity | dirichlet |
                                              recommendation | csv
ptm.path           ""                         CSV file for kind = "csv"
ptm.concentration  1.0                        Dirichlet concentration
ptm.zipf_exponent  0.8                        base popularity skew
ptm.influence      0.5                        mass moved to the recommended file
ptm.heterogeneity  0.0                        per-station mixing with a random PTM
estimator.prior_pseudocount  1.0              Dirichlet pseudocount added to counts
estimator.explore_slots      100              exploration horizon of point_etc
fusion.mode        "time_decay"               static | time_decay
fusion.lambda      1.0                        own weight in static mode
optimizer.restarts           8
optimizer.max_alternations   100
optimizer.benchmark_restarts 64               used when enumeration is too large
optimizer.exchange_limit     4096             max candidate swaps per local-search
                                              step; 0 = plain alternation
scenario.mode      "fixed_link"               fixed_link | sinr
scenario.link_probability    0.5
scenario.area_radius         500.0            metres
scenario.sinr_threshold_db   12.0
scenario.path_loss_exponent  3.5
scenario.tx_power            1.0              watts
scenario.noise_power         1e-13            watts
scenario.min_distance        1.0              metres
scenario.fixed_link_sinr     1.0              linear SINR used in fixed_link mode
scenario.miss_penalty_alpha  10.0
scenario.rate_threshold_bits 12.0
scenario.log_base            "2"              "2" or "e"
baseline.lrfu_lambda         0.5
sweep.T / sweep.lambda / sweep.c / sweep.policy   []   sweep axes
sweep.seeds        []                         replicate seeds (default: [seed])
sweep.max_runs     10000
output.dir         "results"
output.workers     1
=================  =========================  ====================================
"""
from __future__ import annotations

import hashlib
import itertools
import json
import math
import re
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ParseError, ValidationError

POLICIES = ("bayes", "point_genie", "point_etc", "bayes_norec", "lru", "lfu", "lrfu", "oracle", "random")
PTM_KINDS = ("uniform", "identity", "dirichlet", "recommendation", "csv")
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class PtmConfig:
    kind: str = "recommendation"
    path: str = ""
    concentration: float = 1.0
    zipf_exponent: float = 0.8
    influence: float = 0.5
    heterogeneity: float = 0.0


@dataclass(frozen=True)
class EstimatorConfig:
    prior_pseudocount: float = 1.0
    explore_slots: int = 100


@dataclass(frozen=True)
class FusionConfig:
    mode: str = "time_decay"
    lam: float = 1.0


@dataclass(frozen=True)
class OptimizerSection:
    restarts: int = 8
    max_alternations: int = 100
    benchmark_restarts: int = 64
    exchange_limit: int = 4096


@dataclass(frozen=True)
class ScenarioConfig:
    mode: str = "fixed_link"
    link_probability: float = 0.5
    area_radius: float = 500.0
    sinr_threshold_db: float = 12.0
    path_loss_exponent: float = 3.5
    tx_power: float = 1.0
    noise_power: float = 1e-13
    min_distance: float = 1.0
    fixed_link_sinr: float = 1.0
    miss_penalty_alpha: float = 10.0
    rate_threshold_bits: float = 12.0
    log_base: str = "2"


@dataclass(frozen=True)
class BaselineConfig:
    lrfu_lambda: float = 0.5


@dataclass(frozen=True)
class RunConfig:
    F: int
    c: int
    r: int
    N: int
    T: int
    M: int = 1
    policy: str = "bayes"
    seed: int = 0
    ptm: PtmConfig = field(default_factory=PtmConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)

    def __post_init__(self):
        validate_run(self)

    def with_(self, **changes) -> "RunConfig":
        """Copy with fields replaced; nested ones as ``section__name`` (e.g. ``fusion__lam``)."""
        top = {}
        nested: Dict[str, Dict[str, Any]] = {}
        for key, val in changes.items():
            if "__" in key:
                sec, sub = key.split("__", 1)
                nested.setdefault(sec, {})[sub] = val
            else:
                top[key] = val
        for sec, subs in nested.items():
            top[sec] = replace(getattr(self, sec), **subs)
        return replace(self, **top)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _check(cond: bool, message: str):
    if not cond:
        raise ValidationError(message)


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def validate_run(cfg: RunConfig) -> None:
    for name in ("F", "c", "r", "N", "T", "M", "seed"):
        _check(_is_int(getattr(cfg, name)), f"{name} must be an integer")
    _check(cfg.F >= 1, "catalog size F >= 1")
    _check(1 <= cfg.c, "cache_budget >= 1")
    _check(cfg.c <= cfg.F, f"cache_budget ≤ F violated (c={cfg.c}, F={cfg.F})")
    _check(1 <= cfg.r, "rec_budget >= 1")
    _check(cfg.r <= cfg.F, f"rec_budget ≤ F violated (r={cfg.r}, F={cfg.F})")
    _check(cfg.N >= 1, "user count N >= 1")
    _check(cfg.T >= 1, "horizon T >= 1")
    _check(cfg.M >= 1, "station count M >= 1")
    _check(cfg.seed >= 0, "seed >= 0")
    _check(cfg.policy in POLICIES, f"policy must be one of {POLICIES}")
    p = cfg.ptm
    _check(p.kind in PTM_KINDS, f"ptm.kind must be one of {PTM_KINDS}")
    _check(p.kind != "csv" or bool(p.path), "ptm.path is required when ptm.kind = 'csv'")
    _check(p.concentration > 0, "ptm.concentration > 0")
    _check(p.zipf_exponent >= 0, "ptm.zipf_exponent >= 0")
    _check(0 <= p.influence <= 1, "ptm.influence in [0, 1]")
    _check(0 <= p.heterogeneity <= 1, "ptm.heterogeneity in [0, 1]")
    e = cfg.estimator
    _check(e.prior_pseudocount >= 0, "estimator.prior_pseudocount >= 0")
    _check(_is_int(e.explore_slots) and e.explore_slots >= 1, "estimator.explore_slots >= 1")
    f = cfg.fusion
    _check(f.mode in ("static", "time_decay"), "fusion.mode must be static or time_decay")
    _check(0 <= f.lam <= 1, "fusion.lambda in [0, 1]")
    o = cfg.optimizer
    for name in ("restarts", "max_alternations", "benchmark_restarts"):
        _check(_is_int(getattr(o, name)) and getattr(o, name) >= 1, f"optimizer.{name} >= 1")
    _check(_is_int(o.exchange_limit) and o.exchange_limit >= 0, "optimizer.exchange_limit >= 0")
    s = cfg.scenario
    _check(s.mode in ("fixed_link", "sinr"), "scenario.mode must be fixed_link or sinr")
    _check(0 < s.link_probability <= 1, "scenario.link_probability in (0, 1]")
    _check(s.area_radius > 0, "scenario.area_radius > 0")
    _check(not math.isnan(s.sinr_threshold_db), "scenario.sinr_threshold_db is a number")
    _check(s.path_loss_exponent > 0, "scenario.path_loss_exponent > 0")
    _check(s.tx_power > 0 and s.noise_power > 0, "scenario powers > 0")
    _check(s.min_distance > 0, "scenario.min_distance > 0")
    _check(s.fixed_link_sinr > 0, "scenario.fixed_link_sinr > 0")
    _check(s.miss_penalty_alpha >= 0, "scenario.miss_penalty_alpha >= 0")
    _check(s.rate_threshold_bits >= 0, "scenario.rate_threshold_bits >= 0")
    _check(s.log_base in ("2", "e"), "scenario.log_base must be '2' or 'e'")
    _check(cfg.baseline.lrfu_lambda >= 0, "baseline.lrfu_lambda >= 0")


@dataclass(frozen=True)
class ExperimentSpec:
    base: RunConfig
    T: Tuple[int, ...] = ()
    lam: Tuple[float, ...] = ()
    c: Tuple[int, ...] = ()
    policy: Tuple[str, ...] = ()
    seeds: Tuple[int, ...] = ()
    max_runs: int = 10_000
    out_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        _check(self.max_runs >= 1, "sweep.max_runs >= 1")
        _check(self.workers >= 1, "output.workers >= 1")
        n = len(self.runs())
        _check(n <= self.max_runs, f"sweep size {n} exceeds sweep.max_runs = {self.max_runs}")

    @property
    def replicate_seeds(self) -> Tuple[int, ...]:
        return self.seeds or (self.base.seed,)

    def runs(self) -> List[RunConfig]:
        """Cartesian product of the sweep axes, ordered (T, lambda, c, policy, seed)."""
        axes = [
            [("T", t) for t in self.T] or [None],
            [("fusion__lam", x) for x in self.lam] or [None],
            [("c", x) for x in self.c] or [None],
            [("policy", x) for x in self.policy] or [None],
            [("seed", s) for s in self.replicate_seeds],
        ]
        out = []
        for combo in itertools.product(*axes):
            changes = dict(kv for kv in combo if kv is not None)
            if "fusion__lam" in changes:
                changes["fusion__mode"] = "static"
            out.append(self.base.with_(**changes))
        return out


_SECTIONS = {
    "ptm": PtmConfig,
    "estimator": EstimatorConfig,
    "fusion": FusionConfig,
    "optimizer": OptimizerSection,
    "scenario": ScenarioConfig,
    "baseline": BaselineConfig,
}
_RENAMES = {("fusion", "lambda"): "lam"}
_TOP_KEYS = {"F", "c", "r", "N", "M", "T", "policy", "seed"}
_REQUIRED = ("F", "c", "r", "N", "T")
_SWEEP_KEYS = {"T", "lambda", "c", "policy", "seeds", "max_runs"}
_OUTPUT_KEYS = {"dir", "workers"}


def _external_keys(section: str, cls) -> set:
    keys = {f.name for f in fields(cls)}
    for (sec, ext), internal in _RENAMES.items():
        if sec == section:
            keys.discard(internal)
            keys.add(ext)
    return keys


def _locate(text: str, section: Optional[str], key: str) -> Optional[int]:
    current = None
    pat = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = re.match(r"^\s*\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
            continue
        if current == section and pat.match(line):
            return lineno
    return None


def _coerce(value, default, where: str):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = _is_int(value)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    else:
        ok = isinstance(value, str)
    if not ok:
        raise ValidationError(f"{where} has the wrong type ({type(value).__name__})")
    return value


def spec_from_dict(data: Dict[str, Any], text: str = "") -> ExperimentSpec:
    top: Dict[str, Any] = {}
    sections: Dict[str, Dict[str, Any]] = {}
    sweep: Dict[str, Any] = {}
    output: Dict[str, Any] = {}
    for key, val in data.items():
        if key in _SECTIONS:
            if not isinstance(val, dict):
                raise ParseError(f"'{key}' must be a table", _locate(text, None, key), key)
            cls = _SECTIONS[key]
            allowed = _external_keys(key, cls)
            defaults = cls()
            sub = {}
            for k, v in val.items():
                if k not in allowed:
                    raise ParseError(f"unknown key '{key}.{k}'", _locate(text, key, k), f"{key}.{k}")
                name = _RENAMES.get((key, k), k)
                sub[name] = _coerce(v, getattr(defaults, name), f"{key}.{k}")
            sections[key] = cls(**sub)
        elif key == "sweep":
            for k in val:
                if k not in _SWEEP_KEYS:
                    raise ParseError(f"unknown key 'sweep.{k}'", _locate(text, "sweep", k), f"sweep.{k}")
            sweep = dict(val)
        elif key == "output":
            for k in val:
                if k not in _OUTPUT_KEYS:
                    raise ParseError(f"unknown key 'output.{k}'", _locate(text, "output", k), f"output.{k}")
            output = dict(val)
        elif key in _TOP_KEYS:
            want_str = key == "policy"
            if want_str and not isinstance(val, str) or not want_str and not _is_int(val):
                raise ValidationError(f"{key} has the wrong type ({type(val).__name__})")
            top[key] = val
        else:
            raise ParseError(f"unknown key '{key}'", _locate(text, None, key), key)
    missing = [k for k in _REQUIRED if k not in top]
    if missing:
        raise ValidationError(f"missing required key(s): {', '.join(missing)}")
    base = RunConfig(**top, **sections)

    def axis(name, kind):
        vals = sweep.get(name, [])
        if not isinstance(vals, list):
            raise ValidationError(f"sweep.{name} must be a list")
        for x in vals:
            if kind is int and not _is_int(x) or kind is float and not isinstance(x, (int, float)) \
                    or kind is str and not isinstance(x, str):
                raise ValidationError(f"sweep.{name} entries must be {kind.__name__}")
        return tuple(kind(x) for x in vals)

    T_axis = axis("T", int)
    lam_axis = axis("lambda", float)
    c_axis = axis("c", int)
    pol_axis = axis("policy", str)
    seeds = axis("seeds", int)
    for t in T_axis:
        _check(t >= 1, "every sweep.T value >= 1")
    for x in lam_axis:
        _check(0 <= x <= 1, "every sweep.lambda value in [0, 1]")
    for x in c_axis:
        _check(1 <= x <= base.F, f"every sweep.c value: cache_budget ≤ F (got {x})")
    for x in pol_axis:
        _check(x in POLICIES, f"sweep.policy value {x!r} not in {POLICIES}")
    max_runs = sweep.get("max_runs", 10_000)
    _check(_is_int(max_runs), "sweep.max_runs must be an integer")
    out_dir = output.get("dir", "results")
    workers = output.get("workers", 1)
    _check(isinstance(out_dir, str), "output.dir must be a string")
    _check(_is_int(workers), "output.workers must be an integer")
    return ExperimentSpec(base=base, T=T_axis, lam=lam_axis, c=c_axis, policy=pol_axis,
                          seeds=seeds, max_runs=max_runs, out_dir=out_dir, workers=workers)


def parse_config(path) -> ExperimentSpec:
    """Read a TOML experiment file.

    Raises:
        ParseError: malformed TOML or an unknown key (with line and key when known).
        ValidationError: a value violates an invariant; the message names it.
    """
    text = Path(path).read_text()
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ParseError(str(exc), int(m.group(1)) if m else None) from None
    return spec_from_dict(data, text)
