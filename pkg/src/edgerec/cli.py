"""Command-line front end: ``edgerec run | sweep | scaling --config FILE``.

Every command writes plain files only. A single run goes to a directory named
``<config digest>-s<seed>`` holding ``metrics.csv`` and ``summary.json``.
Sweeps add ``aggregate.json`` and long-format CSVs meant for external
plotting tools. Environment variables ``EDGEREC_OUT`` and ``EDGEREC_WORKERS``
override the output directory and worker count from the config file;
command-line flags override both.

Exit codes: 0 success, 1 a run failed, 2 the configuration is invalid.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import shutil
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence

from .config import SCHEMA_VERSION, ExperimentSpec, RunConfig, parse_config
from .errors import ParseError, ValidationError
from .simulator import RunMetrics, regret_scaling_experiment, run

log = logging.getLogger("edgerec")

EXIT_OK, EXIT_RUN_FAILURE, EXIT_CONFIG = 0, 1, 2
ENV_OUT = "EDGEREC_OUT"
ENV_WORKERS = "EDGEREC_WORKERS"

METRICS_FILE = "metrics.csv"
SUMMARY_FILE = "summary.json"
AGGREGATE_FILE = "aggregate.json"
SCALING_FILE = "scaling.json"
HIT_VS_CACHE = "hit_vs_cache.csv"
HIT_VS_LAMBDA = "hit_vs_lambda.csv"
SIGMA_VS_T = "sigma_vs_t.csv"
REGRET_VS_T = "regret_vs_T.csv"


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def run_dir_name(cfg: RunConfig) -> str:
    return f"{cfg.digest()}-s{cfg.seed}"


@contextmanager
def _staging(final: Path) -> Iterator[Path]:
    """Yield a scratch directory that replaces ``final`` only if the block succeeds."""
    final.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{final.name}.", dir=final.parent))
    try:
        yield tmp
        if final.exists():
            shutil.rmtree(final)
        tmp.rename(final)
    finally:
        if tmp.exists():
            shutil.rmtree(tmp)


def write_run(metrics: RunMetrics, out_dir: Path) -> Path:
    """Write ``metrics.csv`` and ``summary.json`` into the run's content-addressed directory."""
    final = Path(out_dir) / run_dir_name(metrics.config)
    with _staging(final) as tmp:
        metrics.to_csv(tmp / METRICS_FILE)
        _dump_json(metrics.summary(), tmp / SUMMARY_FILE)
    return final


def _run_one(cfg: RunConfig):
    m = run(cfg)
    return m.summary(), m.sigma_bar_sq.mean(axis=1).tolist(), m.csv_text()


def _executor_map(workers: int):
    if workers <= 1:
        return None, map
    pool = ProcessPoolExecutor(max_workers=workers)
    return pool, pool.map


def _settings(spec: ExperimentSpec, out: Optional[str], workers: Optional[int]):
    out_dir = out or os.environ.get(ENV_OUT) or spec.out_dir
    if workers is None:
        env = os.environ.get(ENV_WORKERS)
        try:
            workers = int(env) if env else spec.workers
        except ValueError:
            raise ValidationError(f"{ENV_WORKERS} must be an integer, got {env!r}") from None
    if workers < 1:
        raise ValidationError("worker count must be >= 1")
    return Path(out_dir), workers


def cmd_run(spec: ExperimentSpec, seed: Optional[int] = None, out: Optional[str] = None,
            workers: Optional[int] = None) -> Path:
    """Run the base configuration once; returns the run directory."""
    out_dir, _ = _settings(spec, out, workers)
    cfg = spec.base if seed is None else spec.base.with_(seed=seed)
    log.info("run %s seed %d (T=%d, M=%d, policy=%s)", cfg.digest(), cfg.seed, cfg.T, cfg.M, cfg.policy)
    path = write_run(run(cfg), out_dir)
    log.info("wrote %s", path)
    return path


def _entry(cfg: RunConfig, summary: Dict) -> Dict:
    keep = ("mean_expected_hit", "final_quarter_expected_hit", "mean_realized_hit",
            "final_cum_regret", "mean_delay", "mean_throughput", "final_sigma_bar_sq",
            "benchmark_exact", "optimal_value")
    return {
        "run_dir": run_dir_name(cfg),
        "seed": cfg.seed,
        "T": cfg.T,
        "c": cfg.c,
        "lambda": cfg.fusion.lam if cfg.fusion.mode == "static" else None,
        "fusion_mode": cfg.fusion.mode,
        "policy": cfg.policy,
        **{k: summary[k] for k in keep},
    }


def _mean_regret(e: Dict) -> float:
    vals = e["final_cum_regret"]
    return sum(vals) / len(vals)


def cmd_sweep(spec: ExperimentSpec, out: Optional[str] = None, workers: Optional[int] = None) -> Path:
    """Run every point of the sweep; returns the output directory.

    Writes one run directory per point plus ``aggregate.json`` and the
    long-format plot tables. On failure nothing from this invocation is left.
    """
    out_dir, workers = _settings(spec, out, workers)
    configs = spec.runs()
    log.info("sweep: %d runs on %d worker(s)", len(configs), workers)
    out_dir.mkdir(parents=True, exist_ok=True)
    created: List[Path] = []
    pool, map_fn = _executor_map(workers)
    try:
        entries, sigma_rows = [], []
        for cfg, (summary, sigma, text) in zip(configs, map_fn(_run_one, configs)):
            final = out_dir / run_dir_name(cfg)
            with _staging(final) as tmp:
                (tmp / METRICS_FILE).write_text(text)
                _dump_json(summary, tmp / SUMMARY_FILE)
            created.append(final)
            e = _entry(cfg, summary)
            entries.append(e)
            sigma_rows.extend((e["run_dir"], cfg.policy, cfg.seed, t + 1, repr(x)) for t, x in enumerate(sigma))
            log.debug("finished %s", e["run_dir"])
        aggregate = {
            "schema_version": SCHEMA_VERSION,
            "base_config": spec.base.to_dict(),
            "axes": {"T": list(spec.T), "lambda": list(spec.lam), "c": list(spec.c),
                     "policy": list(spec.policy), "seeds": list(spec.replicate_seeds)},
            "n_runs": len(entries),
            "runs": entries,
        }
        files = {
            AGGREGATE_FILE: lambda p: _dump_json(aggregate, p),
            HIT_VS_CACHE: lambda p: _write_rows(
                p, ("policy", "c", "seed", "mean_expected_hit", "mean_realized_hit", "mean_throughput", "mean_delay"),
                [(e["policy"], e["c"], e["seed"], repr(e["mean_expected_hit"]), repr(e["mean_realized_hit"]),
                  repr(e["mean_throughput"]), repr(e["mean_delay"])) for e in entries]),
            HIT_VS_LAMBDA: lambda p: _write_rows(
                p, ("lambda", "T", "policy", "seed", "mean_expected_hit"),
                [("" if e["lambda"] is None else repr(e["lambda"]), e["T"], e["policy"], e["seed"],
                  repr(e["mean_expected_hit"])) for e in entries]),
            SIGMA_VS_T: lambda p: _write_rows(p, ("run_dir", "policy", "seed", "slot", "sigma_bar_sq"), sigma_rows),
            REGRET_VS_T: lambda p: _write_rows(
                p, ("policy", "T", "seed", "cum_regret"),
                [(e["policy"], e["T"], e["seed"], repr(_mean_regret(e))) for e in entries]),
        }
        for name, write in files.items():
            write(out_dir / name)
            created.append(out_dir / name)
    except BaseException:
        for path in created:
            if path.is_dir():
                shutil.rmtree(path, ignore_errors=True)
            elif path.exists():
                path.unlink()
        raise
    finally:
        if pool is not None:
            pool.shutdown()
    return out_dir


def cmd_scaling(spec: ExperimentSpec, out: Optional[str] = None, workers: Optional[int] = None) -> Path:
    """Fit the regret growth exponent for each policy over the ``sweep.T`` horizons."""
    out_dir, workers = _settings(spec, out, workers)
    if len(spec.T) < 2:
        raise ValidationError("scaling needs at least two sweep.T values")
    policies = spec.policy or (spec.base.policy,)
    seeds = spec.replicate_seeds
    final = out_dir / f"scaling-{spec.base.digest()}"
    pool, map_fn = _executor_map(workers)
    try:
        results = []
        for policy in policies:
            log.info("scaling: policy %s, %d horizons, %d seeds", policy, len(spec.T), len(seeds))
            res = regret_scaling_experiment(spec.base, spec.T, seeds, policy=policy, map_fn=map_fn)
            log.info("policy %s fitted exponent %.3f", policy, res["fitted_exponent"])
            results.append(res)
    finally:
        if pool is not None:
            pool.shutdown()
    rows = [(res["policy"], T, seed, repr(res["per_seed_regret"][i][j]))
            for res in results for i, seed in enumerate(res["seeds"]) for j, T in enumerate(res["T"])]
    with _staging(final) as tmp:
        _dump_json({
            "schema_version": SCHEMA_VERSION,
            "base_config": spec.base.to_dict(),
            "fitted_exponent": {res["policy"]: _finite_or_none(res["fitted_exponent"]) for res in results},
            "results": results,
        }, tmp / SCALING_FILE)
        _write_rows(tmp / REGRET_VS_T, ("policy", "T", "seed", "cum_regret"), rows)
    return final


def _finite_or_none(x: float) -> Optional[float]:
    return x if math.isfinite(x) else None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="edgerec", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="WARNING",
                        choices=("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"))
    parser.add_argument("--workers", type=int, default=None, help="worker processes for sweeps")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "simulate the base configuration once"),
                            ("sweep", "run the Cartesian product of the sweep axes"),
                            ("scaling", "fit regret exponents over sweep.T")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="TOML configuration file")
        p.add_argument("--out", default=None, help="output directory")
        if name == "run":
            p.add_argument("--seed", type=int, default=None, help="override the config seed")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = parse_config(args.config)
        if args.command == "run" and args.seed is not None:
            spec = replace(spec, base=spec.base.with_(seed=args.seed))
        _settings(spec, args.out, args.workers)
    except (ParseError, ValidationError, OSError) as exc:
        print(f"edgerec: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "run":
            path = cmd_run(spec, out=args.out, workers=args.workers)
        elif args.command == "sweep":
            path = cmd_sweep(spec, out=args.out, workers=args.workers)
        else:
            path = cmd_scaling(spec, out=args.out, workers=args.workers)
    except ValidationError as exc:
        print(f"edgerec: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # any run failure maps to exit 1
        log.debug("run failed", exc_info=True)
        print(f"edgerec: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUN_FAILURE
    print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
