"""Headline estimators, run orchestration, and CSV/JSON persistence.

Every estimator draws trial t of a run from the (seed, trial)-keyed
counter stream, so results are independent of batch sizes and thread
counts. Standard errors of nonlinear functionals (fractional powers,
ratios) use batch means over sqrt(trials) batches.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimates import (MomentEstimate, RunManifest, TailEstimate,
                        UnstableEstimateError, config_hash)
from .numtheory import PrimeTable, build_prime_table, squarefree_count
from .products import (ProductSpec, build_chaos_grid, chaos_integral,
                       parseval_check)
from .rmf import RmfModel, batched_partial_sums, sample_rmf
from .walks import WalkSpec, scaling_fit, walk_barrier_dp, walk_barrier_mc

__all__ = [
    "ConfigError",
    "FieldSummary",
    "ResultRow",
    "sample_abs_partial_sums",
    "moment_from_samples",
    "estimate_moment",
    "theorem_ratio",
    "chaos_mass_estimate",
    "chaos_bridge_ratio",
    "tail_probability",
    "field_max_experiment",
    "run_experiment",
    "write_results",
]

_TRIAL_BLOCK = 2048
DEFAULT_V = 10.0

# Deterministic-output contract: the CSV wallclock_s column is fixed at 0.0
# (true timings go to the run manifest, which also carries a timestamp and
# is exempt from byte comparison).
CSV_WALLCLOCK = 0.0


class ConfigError(ValueError):
    """Bad run configuration; message names the offending key."""


def _model_from_name(name: str) -> RmfModel:
    try:
        return RmfModel(name)
    except ValueError:
        raise ConfigError(f"bad value for key 'model': {name!r}") from None


_table_cache: dict[int, PrimeTable] = {}


def _table(limit: int) -> PrimeTable:
    limit = int(limit)
    if limit not in _table_cache:
        _table_cache[limit] = build_prime_table(limit)
    return _table_cache[limit]


def sample_abs_partial_sums(model: RmfModel, x_points, trials: int,
                            table: PrimeTable, seed: int,
                            threads: int = 1) -> np.ndarray:
    """|S(x_i)| for each trial, shape (trials, len(x_points)).

    Trials split into fixed 2048-trial blocks; each block lands in its own
    output slice, so the result is identical for any thread count.
    """
    x_points = [int(x) for x in x_points]
    out = np.empty((trials, len(x_points)))
    blocks = [(lo, min(lo + _TRIAL_BLOCK, trials))
              for lo in range(0, trials, _TRIAL_BLOCK)]

    def work(bounds: tuple[int, int]) -> None:
        lo, hi = bounds
        out[lo:hi] = np.abs(
            batched_partial_sums(model, x_points, table, seed, lo, hi))

    if threads <= 1 or len(blocks) == 1:
        for b in blocks:
            work(b)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, blocks))
    return out


def batch_mean(values: np.ndarray) -> tuple[float, float]:
    """(mean, batch-means standard error) over sqrt(n) contiguous batches."""
    n = values.size
    estimate = float(values.mean())
    nb = max(2, math.isqrt(n))
    bs = n // nb
    batches = values[: nb * bs].reshape(nb, bs).mean(axis=1)
    se = float(batches.std(ddof=1) / math.sqrt(nb))
    return estimate, se


def moment_from_samples(abs_values: np.ndarray, q: float) -> tuple[float, float]:
    """(mean |S|^{2q}, batch-means standard error) from per-trial |S|."""
    return batch_mean(abs_values ** (2.0 * q))


def estimate_moment(model: RmfModel, x: int, q: float, trials: int,
                    stream: int, table: PrimeTable,
                    threads: int = 1) -> MomentEstimate:
    """MC estimate of E|S(x)|^{2q} with batch-means errors.

    q = 0 is identically 1. The q = 1 config carries the exact reference
    (floor x for Steinhaus, the squarefree count for Rademacher).
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"need 0 <= q <= 1, got {q}")
    if x > table.limit:
        raise ValueError(f"x={x} beyond table limit {table.limit}")
    if trials < 100:
        raise ValueError(f"need trials >= 100, got {trials}")
    config = {"x": x, "q": q, "model": model.value, "seed": stream}
    if q == 0.0:
        return MomentEstimate(quantity="abs-moment", estimate=1.0, stderr=0.0,
                              trials=trials, config=config)
    abs_s = sample_abs_partial_sums(model, [x], trials, table, stream, threads)
    estimate, se = moment_from_samples(abs_s[:, 0], q)
    if q == 1.0:
        config["exact_reference"] = float(
            x if model is RmfModel.STEINHAUS else squarefree_count(table, x))
    return MomentEstimate(quantity="abs-moment", estimate=estimate, stderr=se,
                          trials=trials, config=config)


def theorem_reference(x: int, q: float) -> float:
    """(x / (1 + (1-q) sqrt(log log x)))^q, the low-moment target size."""
    return (x / (1.0 + (1.0 - q) * math.sqrt(math.log(math.log(x))))) ** q


def theorem_ratio(model: RmfModel, x_list, q: float, trials: int,
                  table: PrimeTable, seed: int = 0,
                  threads: int = 1) -> list[dict]:
    """Measured moment over the predicted size, per x, on shared samples.

    Each row carries the raw moment, its error, the reference, the ratio,
    and normalized = moment / x^q (at q = 1/2 this is E|S|/sqrt(x), whose
    strict decrease is the headline trend).
    """
    x_list = [int(x) for x in x_list]
    if len(x_list) < 3:
        raise ValueError("need at least 3 x values")
    if any(b <= a for a, b in zip(x_list, x_list[1:])):
        raise ValueError("x_list must be ascending")
    abs_s = sample_abs_partial_sums(model, x_list, trials, table, seed, threads)
    rows = []
    for i, x in enumerate(x_list):
        estimate, se = moment_from_samples(abs_s[:, i], q)
        ref = theorem_reference(x, q)
        rows.append({
            "x": x, "q": q, "model": model.value, "trials": trials,
            "moment": estimate, "moment_se": se, "reference": ref,
            "ratio": estimate / ref, "ratio_se": se / ref,
            "normalized": estimate / x**q, "normalized_se": se / x**q,
        })
    return rows


def chaos_mass_estimate(model: RmfModel, x: int, trials: int,
                        table: PrimeTable, seed: int = 0,
                        sigma: float | None = None,
                        dt: float | None = None,
                        v: float = DEFAULT_V) -> MomentEstimate:
    """MC mean of (1/log x) * integral of |F(1/2+sigma+it)|^2 over |t|<=1/2.

    sigma defaults to the bridge shift 4V/log x. Per-trial masses feed the
    bridge's right-hand side; this op reports their mean.
    """
    masses = chaos_mass_samples(model, x, trials, table, seed, sigma, dt, v)
    estimate, se = batch_mean(masses)
    config = {"x": x, "model": model.value, "seed": seed, "v": v,
              "sigma": sigma if sigma is not None else 4.0 * v / math.log(x)}
    return MomentEstimate(quantity="chaos-mass", estimate=estimate, stderr=se,
                          trials=trials, config=config)


def chaos_mass_samples(model: RmfModel, x: int, trials: int,
                       table: PrimeTable, seed: int = 0,
                       sigma: float | None = None, dt: float | None = None,
                       v: float = DEFAULT_V) -> np.ndarray:
    lx = math.log(x)
    if sigma is None:
        sigma = 4.0 * v / lx
    if dt is None:
        dt = 1.0 / (10.0 * lx)
    spec = ProductSpec(model=model, x=x, sigma=sigma, V=v)
    masses = np.empty(trials)
    for trial in range(trials):
        sample = sample_rmf(model, x, table, (seed, trial))
        masses[trial] = chaos_integral(sample, spec, -0.5, 0.5, dt, table) / lx
    return masses


def chaos_bridge_ratio(model: RmfModel, x: int, q: float, trials: int,
                       table: PrimeTable, seed: int = 0,
                       chaos_trials: int | None = None,
                       threads: int = 1,
                       v: float = DEFAULT_V) -> tuple[MomentEstimate, MomentEstimate, float]:
    """(lhs, rhs, ratio): E|S(x)|^{2q} vs x^q E[(chaos mass)^q].

    The right side uses its own trial budget (chaos grids cost far more
    per trial than partial sums) on an offset stream.
    """
    lhs = estimate_moment(model, x, q, trials, seed, table, threads)
    if chaos_trials is None:
        chaos_trials = min(trials, 2000)
    masses = chaos_mass_samples(model, x, chaos_trials, table, seed + 1, v=v)
    est, se = batch_mean(masses ** q)
    rhs = MomentEstimate(
        quantity="chaos-bridge-rhs", estimate=x**q * est,
        stderr=x**q * se, trials=chaos_trials,
        config={"x": x, "q": q, "model": model.value, "seed": seed + 1,
                "v": v, "sigma": 4.0 * v / math.log(x)})
    ratio = lhs.estimate / rhs.estimate if rhs.estimate > 0 else math.inf
    return lhs, rhs, ratio


def tail_probability(model: RmfModel, x: int, lambda_list, trials: int,
                     table: PrimeTable, seed: int = 0, threads: int = 1,
                     allow_small: bool = False) -> list[TailEstimate]:
    """P(|S(x)| >= lam sqrt(x)/(log log x)^{1/4}) for each lam, shared samples.

    lam >= 2 unless allow_small (test-only path for the threshold -> 0
    sanity limit). Fewer than 25 hits at any lam raises the
    unstable-estimate error (document: lam <= 8 is safe at 1e5 trials).
    """
    lams = [float(v) for v in lambda_list]
    if not lams:
        raise ValueError("need at least one lambda")
    if not allow_small and any(lam < 2.0 for lam in lams):
        raise ValueError("lambda >= 2 required (allow_small for test paths)")
    if any(lam <= 0 for lam in lams):
        raise ValueError("lambda must be positive")
    llx = math.log(math.log(x))
    abs_s = sample_abs_partial_sums(model, [x], trials, table, seed,
                                    threads)[:, 0]
    out = []
    for lam in lams:
        threshold = lam * math.sqrt(x) / llx**0.25
        hits = int((abs_s >= threshold).sum())
        if hits < 25:
            raise UnstableEstimateError(
                f"only {hits} tail hits at lambda={lam}; increase trials",
                hits=hits)
        p = hits / trials
        se = math.sqrt(p * (1.0 - p) / trials)
        out.append(TailEstimate(
            lam=lam, threshold=threshold, probability=p, stderr=se,
            trials=trials, hits=hits,
            upper_ref=min(math.log(lam), math.sqrt(llx)) / lam**2 if lam > 1
            else math.sqrt(llx) / lam**2,
            lower_ref=1.0 / (lam**2 * llx**2),
            config={"x": x, "model": model.value, "seed": seed}))
    return out


@dataclass(frozen=True)
class FieldSummary:
    """Windowed log-product field: per-trial maxima and covariance by lag."""

    x: int
    grid_count: int
    trials: int
    sigma: float
    maxima: np.ndarray
    cov_by_lag: np.ndarray
    lag0_target: float
    config: dict = field(default_factory=dict)


def field_max_experiment(x: int, grid_count: int, trials: int,
                         table: PrimeTable, seed: int = 0,
                         dt: float | None = None) -> FieldSummary:
    """Windowed averages of log|F| on a shifted vertical line (Steinhaus).

    Window k holds log x times the integral of log|F(1/2 + llx/lx + it)|
    over t in [k/lx, (k+1)/lx), i.e. the window average of log|F|. The
    summary carries each trial's maximum over windows and the empirical
    covariance as a function of lag, whose lag-0 value targets
    (1/2)(log log x - 2 log log log x). A factor 2 on the field would
    belong to |F|^2 and quadruples every covariance; the comparison is
    stated for the plain average.
    """
    if x < 10**4:
        raise ValueError(f"need x >= 1e4, got {x}")
    lx = math.log(x)
    if grid_count > lx:
        raise ValueError(f"grid_count={grid_count} exceeds log x = {lx:.2f}")
    llx = math.log(lx)
    sigma = llx / lx
    if dt is None:
        dt = 1.0 / (10.0 * lx)
    nodes_per_window = max(2, int(round((1.0 / lx) / dt)))
    dt = (1.0 / lx) / nodes_per_window
    spec = ProductSpec(model=RmfModel.STEINHAUS, x=x, sigma=sigma)
    # exact node count: grid_count * nodes_per_window steps of width dt
    t_hi = grid_count * nodes_per_window * dt
    values = np.empty((trials, grid_count))
    for trial in range(trials):
        sample = sample_rmf(RmfModel.STEINHAUS, x, table, (seed, trial))
        grid = build_chaos_grid(sample, spec, 0.0, t_hi, dt, table)
        log_f = 0.5 * np.log(grid.values)
        for k in range(grid_count):
            seg = log_f[k * nodes_per_window: (k + 1) * nodes_per_window + 1]
            integral = dt * (seg.sum() - 0.5 * (seg[0] + seg[-1]))
            values[trial, k] = lx * integral
    centered = values - values.mean(axis=0)
    cov = np.empty(grid_count)
    for lag in range(grid_count):
        cov[lag] = float(np.mean(centered[:, : grid_count - lag]
                                 * centered[:, lag:]))
    lag0_target = 0.5 * (llx - 2.0 * math.log(llx))
    return FieldSummary(
        x=x, grid_count=grid_count, trials=trials, sigma=sigma,
        maxima=values.max(axis=1), cov_by_lag=cov, lag0_target=lag0_target,
        config={"x": x, "grid_count": grid_count, "trials": trials,
                "seed": seed, "dt": dt})


# ---------------------------------------------------------------------------
# persistence


@dataclass(frozen=True)
class ResultRow:
    """One CSV/JSON row: fixed base columns plus per-kind extras."""

    experiment: str
    model: str
    x: object
    q: object
    trials: object
    estimate: float
    stderr: float
    seed: object
    extras: dict = field(default_factory=dict)


def _cell(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_results(rows: list[ResultRow], path: str, fmt: str = "csv",
                  manifest: RunManifest | None = None) -> None:
    """Write rows as CSV (fixed header + sorted extras) or a JSON mirror.

    CSV: UTF-8, LF endings, 17-significant-digit floats; the JSON array
    holds one object per row plus a trailing manifest object.
    """
    if fmt not in ("csv", "json"):
        raise ConfigError(f"bad value for key 'format': {fmt!r}")
    extra_keys = sorted({k for row in rows for k in row.extras})
    if fmt == "csv":
        header = ["experiment", "model", "x", "q", "trials", "estimate",
                  "stderr", "seed", "wallclock_s"] + extra_keys
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                base = [row.experiment, row.model, _cell(row.x), _cell(row.q),
                        _cell(row.trials), _cell(row.estimate),
                        _cell(row.stderr), _cell(row.seed),
                        _cell(CSV_WALLCLOCK)]
                writer.writerow(base + [_cell(row.extras.get(k, ""))
                                        for k in extra_keys])
        return
    payload = []
    for row in rows:
        obj = {"experiment": row.experiment, "model": row.model, "x": row.x,
               "q": row.q, "trials": row.trials, "estimate": row.estimate,
               "stderr": row.stderr, "seed": row.seed,
               "wallclock_s": CSV_WALLCLOCK}
        obj.update({k: row.extras.get(k) for k in extra_keys})
        payload.append(obj)
    if manifest is not None:
        payload.append({"manifest": {
            "experiment": manifest.experiment,
            "config_hash": manifest.config_hash,
            "seed": manifest.seed,
            "timestamp": manifest.timestamp,
            "outputs": list(manifest.outputs),
            "code_version": manifest.code_version,
        }})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# run orchestration

_COMMON_KEYS = {"experiment", "model", "x", "q", "trials", "seed", "threads",
                "sigma", "grid_dt", "out", "format"}
_EXTRA_KEYS = {
    "moments": {"q_list", "x_list"},
    "ratio": {"x_list"},
    "chaos": {"v"},
    "bridge": {"chaos_trials", "v"},
    "walks": {"n", "a", "n_list", "a_list", "components"},
    "tilt": {"scales", "t", "kind", "a", "dimension", "band_lo", "band_hi"},
    "tails": {"lambdas"},
    "characters": {"p"},
    "parseval": {"t_max", "x_cap"},
    "fieldmax": {"grid_count"},
}

_DEFAULTS = {"model": "steinhaus", "trials": 1000, "seed": 0, "threads": 1,
             "format": "csv"}


def _validated_config(config: dict) -> dict:
    if "experiment" not in config:
        raise ConfigError("missing required key 'experiment'")
    experiment = config["experiment"]
    if experiment not in _EXTRA_KEYS:
        raise ConfigError(f"bad value for key 'experiment': {experiment!r}")
    allowed = _COMMON_KEYS | _EXTRA_KEYS[experiment]
    for key in config:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} for {experiment}")
    merged = dict(_DEFAULTS)
    merged.update(config)
    for key in ("trials", "seed", "threads"):
        if not isinstance(merged[key], (int, np.integer)) or isinstance(merged[key], bool):
            raise ConfigError(f"bad value for key {key!r}: {merged[key]!r}")
    if "out" not in merged:
        raise ConfigError("missing required key 'out'")
    return merged


def _int_list(config: dict, key: str, fallback=None) -> list[int]:
    if key in config:
        return [int(v) for v in config[key]]
    if fallback is None:
        raise ConfigError(f"missing required key {key!r}")
    return fallback


def _run_moments(cfg: dict, table: PrimeTable) -> list[ResultRow]:
    model = _model_from_name(cfg["model"])
    xs = _int_list(cfg, "x_list", [int(cfg["x"])] if "x" in cfg else None)
    qs = [float(v) for v in cfg.get("q_list", [cfg.get("q", 1.0)])]
    rows = []
    for x in xs:
        for q in qs:
            est = estimate_moment(model, x, q, cfg["trials"], cfg["seed"],
                                  table, cfg["threads"])
            extras = {}
            if "exact_reference" in est.config:
                extras["exact_reference"] = est.config["exact_reference"]
            rows.append(ResultRow("moments", model.value, x, q, cfg["trials"],
                                  est.estimate, est.stderr, cfg["seed"],
                                  extras))
    return rows


def _run_ratio(cfg: dict, table: PrimeTable) -> list[ResultRow]:
    model = _model_from_name(cfg["model"])
    xs = _int_list(cfg, "x_list")
    q = float(cfg.get("q", 0.5))
    rows = []
    for r in theorem_ratio(model, xs, q, cfg["trials"], table, cfg["seed"],
                           cfg["threads"]):
        rows.append(ResultRow(
            "ratio", model.value, r["x"], q, cfg["trials"], r["ratio"],
            r["ratio_se"], cfg["seed"],
            {"moment": r["moment"], "moment_se": r["moment_se"],
             "normalized": r["normalized"],
             "normalized_se": r["normalized_se"],
             "reference": r["reference"]}))
    return rows


def _run_chaos(cfg: dict, table: PrimeTable) -> list[ResultRow]:
    # One row per trial so downstream tooling can histogram the mass
    # distribution; the mean is recoverable but the spread is not.
    model = _model_from_name(cfg["model"])
    x = int(cfg["x"])
    v = float(cfg.get("v", DEFAULT_V))
    sigma = cfg.get("sigma")
    if sigma is None:
        sigma = 4.0 * v / math.log(x)
    masses = chaos_mass_samples(model, x, cfg["trials"], table, cfg["seed"],
                                cfg.get("sigma"), cfg.get("grid_dt"), v)
    return [ResultRow("chaos", model.value, x, "", cfg["trials"],
                      float(mass), 0.0, cfg["seed"],
                      {"sigma": sigma, "trial": trial})
            for trial, mass in enumerate(masses)]


def _run_bridge(cfg: dict, table: PrimeTable) -> list[ResultRow]:
    model = _model_from_name(cfg["model"])
    x = int(cfg["x"])
    q = float(cfg.get("q", 0.75))
    lhs, rhs, ratio = chaos_bridge_ratio(
        model, x, q, cfg["trials"], table, cfg["seed"],
        cfg.get("chaos_trials"), cfg["threads"],
        float(cfg.get("v", DEFAULT_V)))
    return [ResultRow("bridge", model.value, x, q, cfg["trials"], ratio,
                      ratio * math.hypot(lhs.stderr / lhs.estimate,
                                         rhs.stderr / rhs.estimate),
                      cfg["seed"],
                      {"lhs": lhs.estimate, "lhs_se": lhs.stderr,
                       "rhs": rhs.estimate, "rhs_se": rhs.stderr})]


def _run_walks(cfg: dict, table: PrimeTable) -> list[ResultRow]:
    trials, seed = cfg["trials"], cfg["seed"]
    if "n_list" in cfg or "a_list" in cfg:
        ns = _int_list(cfg, "n_list")
        a_values = [float(a) for a in cfg.get("a_list", [2.0])]
        family = [WalkSpec(n=n, variances=(1.0,) * n, a=a)
                  for n in ns for a in a_values
                  if a <= math.sqrt(n) / 2.0]
        fit = scaling_fit(family, trials=trials, stream=seed,
                          components=int(cfg.get("components", 1)))
        rows = []
        for spec, logr, logp in zip(family, fit.log_ratios, fit.log_probs):
            rows.append(ResultRow(
                "walks", "gaussian", "", "", trials, math.exp(logp),
                0.0, seed,
                {"n": spec.n, "a": spec.a, "slope": fit.slope,
                 "intercept": fit.intercept, "log_ratio": logr}))
        return rows
    n = int(cfg.get("n", 0))
    if n < 1:
        raise ConfigError("missing required key 'n'")
    if "a" not in cfg:
        raise ConfigError("missing required key 'a'")
    spec = WalkSpec(n=n, variances=(1.0,) * n, a=float(cfg["a"]))
    mc = walk_barrier_mc(spec, trials, seed)
    extras = {"n": n, "a": spec.a}
    if n <= 64:
        extras["dp"] = walk_barrier_dp(spec)
    return [ResultRow("walks", "gaussian", "", "", trials, mc.estimate,
                      mc.stderr, seed, extras)]


def _run_tilt(cfg: dict, table: PrimeTable) -> list[ResultRow]:
    from .tilt import BandEvent, TiltSpec, _gaussian_params, girsanov_compare
    model = _model_from_name(cfg["model"])
    x = int(cfg["x"])
    scales = [int(v) for v in cfg.get("scales", [0])]
    sigma = float(cfg["sigma"]) if cfg.get("sigma") is not None else 0.0
    spec = TiltSpec.from_scales(model, x, sigma, scales,
                                t=float(cfg.get("t", 0.0)),
                                dimension=int(cfg.get("dimension", 1)))
    means, variances = _gaussian_params(spec, table)
    kind = cfg.get("kind", "increment")
    if kind == "increment":
        event = BandEvent.increment_bands(
            [means[j] - 0.5 / (j + 1) ** 2 for j in range(len(scales))])
    elif kind == "corridor":
        a = float(cfg.get("a", 3.0))
        cum = np.cumsum(means)
        event = BandEvent(kind="corridor",
                          lower=tuple(cum - a), upper=tuple(cum + a))
    else:
        raise ConfigError(f"bad value for key 'kind': {kind!r}")
    band = (float(cfg.get("band_lo", 0.25)), float(cfg.get("band_hi", 4.0)))
    result = girsanov_compare(spec, event, cfg["trials"], table, cfg["seed"],
                              band=band)
    return [ResultRow("tilt", model.value, x, "", cfg["trials"],
                      result.tilted, result.tilted_se, cfg["seed"],
                      {"kind": result.kind, "n_scales": result.n_scales,
                       "reference": result.reference, "ratio": result.ratio,
                       "ess": result.ess, "passed": result.passed})]


def _run_tails(cfg: dict, table: PrimeTable) -> list[ResultRow]:
    model = _model_from_name(cfg["model"])
    x = int(cfg["x"])
    lams = [float(v) for v in cfg.get("lambdas", [2.0, 4.0])]
    rows = []
    for est in tail_probability(model, x, lams, cfg["trials"], table,
                                cfg["seed"], cfg["threads"]):
        rows.append(ResultRow(
            "tails", model.value, x, "", cfg["trials"], est.probability,
            est.stderr, cfg["seed"],
            {"lambda": est.lam, "threshold": est.threshold,
             "hits": est.hits, "upper_ref": est.upper_ref,
             "lower_ref": est.lower_ref}))
    return rows


def _run_characters(cfg: dict, table: PrimeTable) -> list[ResultRow]:
    from .characters import build_character_table, char_sum_moment
    if "p" not in cfg:
        raise ConfigError("missing required key 'p'")
    p = int(cfg["p"])
    x = int(cfg["x"])
    q = float(cfg.get("q", 1.0))
    value = char_sum_moment(build_character_table(p), x, q)
    return [ResultRow("characters", "character", x, q, p - 1, value, 0.0,
                      cfg["seed"], {"p": p})]


def _run_parseval(cfg: dict, table: PrimeTable) -> list[ResultRow]:
    model = _model_from_name(cfg["model"])
    x = int(cfg["x"])
    sigma = float(cfg["sigma"]) if cfg.get("sigma") is not None else 0.1
    sample = sample_rmf(model, x, table, (cfg["seed"], 0))
    kwargs = {}
    if "t_max" in cfg:
        kwargs["t_max"] = float(cfg["t_max"])
    if "x_cap" in cfg:
        kwargs["x_cap"] = int(cfg["x_cap"])
    if "grid_dt" in cfg and cfg["grid_dt"]:
        kwargs["dt"] = float(cfg["grid_dt"])
    lhs, rhs = parseval_check(sample, x, sigma, table, **kwargs)
    return [ResultRow("parseval", model.value, x, "", 1, lhs, 0.0,
                      cfg["seed"],
                      {"sigma": sigma, "rhs": rhs,
                       "rel_gap": abs(lhs - rhs) / lhs if lhs else 0.0})]


def _run_fieldmax(cfg: dict, table: PrimeTable) -> list[ResultRow]:
    x = int(cfg["x"])
    grid_count = int(cfg.get("grid_count", min(12, int(math.log(x)))))
    summary = field_max_experiment(x, grid_count, cfg["trials"], table,
                                   cfg["seed"], cfg.get("grid_dt"))
    mean_max = float(summary.maxima.mean())
    rows = []
    for lag in range(grid_count):
        rows.append(ResultRow(
            "fieldmax", "steinhaus", x, "", cfg["trials"],
            float(summary.cov_by_lag[lag]), 0.0, cfg["seed"],
            {"lag": lag, "lag0_target": summary.lag0_target,
             "mean_max": mean_max, "sigma": summary.sigma}))
    return rows


_RUNNERS = {
    "moments": _run_moments,
    "ratio": _run_ratio,
    "chaos": _run_chaos,
    "bridge": _run_bridge,
    "walks": _run_walks,
    "tilt": _run_tilt,
    "tails": _run_tails,
    "characters": _run_characters,
    "parseval": _run_parseval,
    "fieldmax": _run_fieldmax,
}

def _required_limit(cfg: dict) -> int:
    if cfg["experiment"] == "walks":
        return 100
    xs: list[int] = []
    if "x" in cfg:
        xs.append(int(cfg["x"]))
    if "x_list" in cfg:
        xs.extend(int(v) for v in cfg["x_list"])
    if not xs:
        raise ConfigError("missing required key 'x'")
    return max(xs)


def run_experiment(config: dict, out_dir: str | None = None) -> RunManifest:
    """Validate a config, run its experiment, persist rows + manifest."""
    cfg = _validated_config(dict(config))
    experiment = cfg["experiment"]
    table = _table(_required_limit(cfg))
    start = time.monotonic()
    rows = _RUNNERS[experiment](cfg, table)
    wallclock = time.monotonic() - start
    out_path = cfg["out"]
    manifest = RunManifest(
        experiment=experiment,
        config_hash=config_hash({k: v for k, v in cfg.items() if k != "out"}),
        seed=cfg["seed"],
        timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(),
        outputs=(out_path,),
        code_version=_code_version(),
    )
    write_results(rows, out_path, cfg["format"], manifest)
    manifest_path = out_path + ".manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump({
            "experiment": manifest.experiment,
            "config_hash": manifest.config_hash,
            "seed": manifest.seed,
            "timestamp": manifest.timestamp,
            "outputs": list(manifest.outputs),
            "code_version": manifest.code_version,
            "wallclock_s": wallclock,
        }, fh, indent=1)
        fh.write("\n")
    return manifest


def _code_version() -> str:
    from . import __version__
    return __version__
