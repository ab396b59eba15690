"""Replication engine for size and power experiments.

Each replication simulates a series, fits the null-order model by Gaussian
QMLE, runs the requested portmanteau tests (the rank-based ones after a
one-step R-estimation with the matching score), and records p-values.
Replications are seeded from the master seed by spawn key, so results are
identical for any parallelism width; failures are logged and excluded, and
the experiment errors out if more than 5% of replications fail.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .estimation import estimate_K, perturbation_maps, qmle, r_estimate_one_step
from .grids import make_grid
from .innovations import make_sampler
from .portmanteau import CSV_HEADER, gaussian_stat, rank_stat
from .scores import NAMED_KINDS, make_score
from .varma import VarmaSpec, simulate

FAILURE_BUDGET = 0.05


class ExperimentError(RuntimeError):
    """Raised when too many replications fail to produce a result."""


def null_spec_default() -> VarmaSpec:
    """Bivariate VARMA(1,1) null used throughout the experiments."""
    return VarmaSpec(d=2, p=1, q=1,
                     A=[[[0.5, 0.2], [-0.1, 0.4]]],
                     B=[[[0.3, 0.0], [0.0, 0.4]]])


def alt_spec_default() -> VarmaSpec:
    """Bivariate VARMA(1,2) alternative: the null plus a small second MA lag."""
    return VarmaSpec(d=2, p=1, q=2,
                     A=[[[0.5, 0.2], [-0.1, 0.4]]],
                     B=[[[0.3, 0.0], [0.0, 0.4]],
                        [[0.07, 0.03], [-0.02, 0.1]]])


@dataclass(frozen=True)
class McConfig:
    """A reproducible experiment description."""

    null_spec: VarmaSpec
    n: int
    N: int
    m_values: tuple
    tests: tuple                  # "gaussian" and/or score kinds
    density: str = "spherical_normal"
    sampler_params: dict = field(default_factory=dict)
    alt_spec: VarmaSpec | None = None
    n_R: int | None = None
    grid_seed: int = 0
    symmetric: bool | None = None
    alpha: float = 0.05
    master_seed: int = 20240501
    width: int = 1
    burn_in: int = 200

    def __post_init__(self):
        object.__setattr__(self, "m_values", tuple(int(m) for m in self.m_values))
        object.__setattr__(self, "tests", tuple(self.tests))
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.N < 1 or self.n < 1:
            raise ValueError("need N >= 1 and n >= 1")
        for t in self.tests:
            if t != "gaussian" and t not in NAMED_KINDS:
                raise ValueError(f"unknown test {t!r}")

    def to_json(self) -> str:
        obj = {
            "null_spec": json.loads(self.null_spec.to_json()),
            "alt_spec": (json.loads(self.alt_spec.to_json())
                         if self.alt_spec else None),
            "n": self.n, "N": self.N,
            "m_values": list(self.m_values),
            "tests": list(self.tests),
            "density": self.density,
            "sampler_params": self.sampler_params,
            "n_R": self.n_R,
            "grid_seed": self.grid_seed,
            "symmetric": self.symmetric,
            "alpha": self.alpha,
            "master_seed": self.master_seed,
            "width": self.width,
            "burn_in": self.burn_in,
        }
        return json.dumps(obj, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "McConfig":
        obj = json.loads(text)
        null = VarmaSpec.from_json(json.dumps(obj["null_spec"]))
        alt = (VarmaSpec.from_json(json.dumps(obj["alt_spec"]))
               if obj.get("alt_spec") else None)
        keys = ("n", "N", "m_values", "tests", "density", "sampler_params",
                "n_R", "grid_seed", "symmetric", "alpha", "master_seed",
                "width", "burn_in")
        kw = {k: obj[k] for k in keys if k in obj}
        return cls(null_spec=null, alt_spec=alt, **kw)


@dataclass(frozen=True)
class McResult:
    config: McConfig
    experiment: str                        # "size" or "power"
    pvalues: tuple                         # per rep: dict of "test:m" -> p, or None
    failures: tuple                        # (rep, message) pairs
    rates: dict                            # (test, m) -> (rate, se)
    n_effective: int
    wall_clock: float


def _run_replication(args):
    config, rep, use_alt = args
    try:
        ss = np.random.SeedSequence(entropy=config.master_seed,
                                    spawn_key=(rep,))
        rng = np.random.default_rng(ss)
        spec_true = config.alt_spec if use_alt else config.null_spec
        d = spec_true.d
        sampler = make_sampler(config.density, d=d, **config.sampler_params)
        series = simulate(spec_true, config.n, sampler, seed=rng,
                          burn_in=config.burn_in)
        p, q = config.null_spec.p, config.null_spec.q
        fit = qmle(series, p, q)
        out = {}
        if "gaussian" in config.tests:
            for m in config.m_values:
                out[f"gaussian:{m}"] = gaussian_stat(series, fit, m).p_value
        rank_kinds = [t for t in config.tests if t != "gaussian"]
        if rank_kinds:
            grid = make_grid(config.n, d, config.n_R, seed=config.grid_seed,
                             symmetric=config.symmetric)
            maps = perturbation_maps(series, fit.spec, grid)
            for kind in rank_kinds:
                score = make_score(kind, d)
                K = estimate_K(series, fit.spec, score, grid, maps=maps)
                rest = r_estimate_one_step(series, fit.spec, score, grid, K,
                                           prelim_scores=maps.base)
                for m in config.m_values:
                    out[f"{kind}:{m}"] = rank_stat(series, rest, score, grid,
                                                   m, K).p_value
        return rep, out, None
    except Exception as exc:  # logged and excluded by the aggregator
        return rep, None, f"{type(exc).__name__}: {exc}"


def _aggregate(config: McConfig, experiment: str, results, wall: float) -> McResult:
    results = sorted(results, key=lambda r: r[0])
    pvals = tuple(r[1] for r in results)
    failures = tuple((r[0], r[2]) for r in results if r[2] is not None)
    n_ok = sum(1 for r in results if r[1] is not None)
    if len(failures) > FAILURE_BUDGET * config.N:
        raise ExperimentError(
            f"{len(failures)} of {config.N} replications failed "
            f"(> {FAILURE_BUDGET:.0%}); first: {failures[0][1]}")
    rates = {}
    for t in config.tests:
        for m in config.m_values:
            key = f"{t}:{m}"
            hits = sum(1 for pv in pvals
                       if pv is not None and pv[key] < config.alpha)
            rate = hits / n_ok if n_ok else float("nan")
            se = float(np.sqrt(rate * (1 - rate) / n_ok)) if n_ok else float("nan")
            rates[(t, m)] = (rate, se)
    return McResult(config=config, experiment=experiment, pvalues=pvals,
                    failures=failures, rates=rates, n_effective=n_ok,
                    wall_clock=wall)


def _run(config: McConfig, use_alt: bool, experiment: str) -> McResult:
    if use_alt and config.alt_spec is None:
        raise ValueError("power experiment needs alt_spec")
    tasks = [(config, rep, use_alt) for rep in range(config.N)]
    t0 = time.perf_counter()
    if config.width <= 1:
        results = [_run_replication(t) for t in tasks]
    else:
        chunk = max(1, config.N // (config.width * 8))
        with ProcessPoolExecutor(max_workers=config.width) as ex:
            results = list(ex.map(_run_replication, tasks, chunksize=chunk))
    return _aggregate(config, experiment, results, time.perf_counter() - t0)


def run_size_experiment(config: McConfig) -> McResult:
    """Rejection rates under the null model."""
    return _run(config, use_alt=False, experiment="size")


def run_power_experiment(config: McConfig) -> McResult:
    """Rejection rates when data come from the alternative but the null-order
    model is fitted and tested."""
    return _run(config, use_alt=True, experiment="power")


def default_width() -> int:
    """Parallelism width from RANKPORT_WORKERS (default 1)."""
    try:
        return max(1, int(os.environ.get("RANKPORT_WORKERS", "1")))
    except ValueError:
        return 1


def _test_label(t: str):
    return ("gaussian", "") if t == "gaussian" else ("rank", t)


def rates_csv(result: McResult) -> str:
    lines = ["density,method,scores,m,rate,se,N"]
    for t in result.config.tests:
        for m in result.config.m_values:
            rate, se = result.rates[(t, m)]
            method, sc = _test_label(t)
            lines.append(f"{result.config.density},{method},{sc},{m},"
                         f"{rate:.6f},{se:.6f},{result.n_effective}")
    return "\n".join(lines) + "\n"


def result_json(result: McResult) -> str:
    obj = {
        "experiment": result.experiment,
        "config": json.loads(result.config.to_json()),
        "n_effective": result.n_effective,
        "wall_clock_seconds": result.wall_clock,
        "rates": [
            {"test": t, "m": m,
             "rate": result.rates[(t, m)][0],
             "se": result.rates[(t, m)][1]}
            for t in result.config.tests for m in result.config.m_values
        ],
        "failures": [{"rep": r, "error": msg} for r, msg in result.failures],
        "replications": [
            {"rep": i, "ok": pv is not None, "pvalues": pv}
            for i, pv in enumerate(result.pvalues)
        ],
    }
    return json.dumps(obj, indent=2)


def emit_results(result: McResult, path: str, formats=("csv", "json")) -> list:
    """Write ``<path>.csv`` (rates table) and/or ``<path>.json`` (full config
    echo plus the per-replication p-value log).  Emission is a pure function
    of the result, so re-emitting the same result is byte-identical."""
    written = []
    if "csv" in formats:
        fn = f"{path}.csv"
        with open(fn, "w") as fh:
            fh.write(rates_csv(result))
        written.append(fn)
    if "json" in formats:
        fn = f"{path}.json"
        with open(fn, "w") as fh:
            fh.write(result_json(result))
        written.append(fn)
    return written


def recompute_rates(result_json_text: str, alpha: float | None = None) -> dict:
    """Recount rejection rates from an emitted JSON log (round-trip check)."""
    obj = json.loads(result_json_text)
    a = alpha if alpha is not None else obj["config"]["alpha"]
    counts = {}
    n_ok = 0
    for rec in obj["replications"]:
        if not rec["ok"]:
            continue
        n_ok += 1
        for key, pv in rec["pvalues"].items():
            counts[key] = counts.get(key, 0) + (1 if pv < a else 0)
    return {k: v / n_ok for k, v in counts.items()}
