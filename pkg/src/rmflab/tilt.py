"""Tilted-measure band probabilities via self-normalized importance sampling.

The tilted laws are densities against the plain sampling law: a product
weight W over the primes of the event's windows (weights over untouched
primes factor out of the ratio E[1_A W]/E[W] by independence, so they are
never drawn). Estimates are compared against closed-form Gaussian
references: independent per-window normals for increment bands, a
corridor dynamic program with per-step means subtracted for cumulative-sum
events, and bivariate rectangles for the two-product tilt.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .estimates import MomentEstimate, UnstableEstimateError
from .numtheory import PrimeTable, prime_power_sum, primes_between
from .products import increment_window
from .rmf import RmfModel, _draw_prime_values
from .walks import corridor_dp

__all__ = [
    "TiltSpec",
    "BandEvent",
    "GirsanovComparison",
    "equal_mass_windows",
    "tilted_probability",
    "tilted_statistic_means",
    "weight_mean_exact",
    "gaussian_band_reference",
    "girsanov_compare",
]

MIN_TRIALS = 1000
MIN_ESS = 50.0


@dataclass(frozen=True)
class TiltSpec:
    """Which tilted law, which windows, and where each window is evaluated.

    dimension 1 with a Steinhaus model is the plain product tilt (weight
    |prod (1 - f(p) p^(-1/2-sigma))^-1|^2, anchored at t = 0); dimension 1
    with Rademacher tilts at the spec's own t; dimension 2 (Steinhaus only)
    weights by two products at vertical separation t.

    Windows are ascending disjoint prime intervals (lo, hi]. They usually
    come from the increment decomposition via from_scales, but any disjoint
    family is admissible (desk-scale corridors need more windows than the
    increment ladder can supply at reachable x).
    """

    model: RmfModel
    x: int
    sigma: float
    windows: tuple[tuple[float, float], ...]
    t_points: tuple[float, ...]
    t: float = 0.0
    dimension: int = 1
    scales: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.x < 16:
            raise ValueError(f"need x >= 16, got {self.x}")
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.dimension == 2 and self.model is not RmfModel.STEINHAUS:
            raise ValueError("two-product tilt is defined for Steinhaus only")
        if not self.windows:
            raise ValueError("need at least one window")
        if len(self.t_points) != len(self.windows):
            raise ValueError("one evaluation point per window required")
        prev_hi = 1.0
        for lo, hi in self.windows:
            if not lo < hi:
                raise ValueError(f"bad window ({lo}, {hi}]")
            if lo < prev_hi - 1e-9:
                raise ValueError("windows must be ascending and disjoint")
            prev_hi = hi
        top = self.windows[-1][1]
        if abs(self.sigma) > 1.0 / math.log(top) + 1e-12:
            raise ValueError(
                f"|sigma|={abs(self.sigma)} exceeds 1/log(top window) = "
                f"{1.0 / math.log(top):.6g}")

    @classmethod
    def from_scales(cls, model: RmfModel, x: int, sigma: float, scales,
                    t_points=None, t: float = 0.0,
                    dimension: int = 1) -> "TiltSpec":
        """Build windows from a strictly decreasing increment-scale list."""
        scales = tuple(int(l) for l in scales)
        if any(b >= a for a, b in zip(scales, scales[1:])):
            raise ValueError(f"scales must be strictly decreasing, got {scales}")
        llx = math.log(math.log(x))
        if scales and scales[0] > llx - 2.0:
            raise ValueError(
                f"largest scale {scales[0]} exceeds loglog x - 2 = {llx - 2.0:.3f}")
        if any(l < 0 for l in scales):
            raise ValueError("scale indices must be >= 0")
        windows = tuple(increment_window(x, l) for l in scales)
        if t_points is None:
            t_points = (float(t),) * len(scales)
        return cls(model=model, x=x, sigma=sigma, windows=windows,
                   t_points=tuple(float(v) for v in t_points), t=float(t),
                   dimension=dimension, scales=scales)

    @property
    def n_scales(self) -> int:
        return len(self.windows)


@dataclass(frozen=True)
class BandEvent:
    """Per-window bands on log|I| or a corridor on its cumulative sums.

    kind "increment": window j (1-indexed) must satisfy
    lower[j-1] <= log|I_j| <= upper[j-1], with the mandatory band width
    1/j^2. kind "corridor": the same bounds constrain the partial sums
    sum_{m<=j} log|I_m|; infinities are allowed.
    """

    kind: str
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.kind not in ("increment", "corridor"):
            raise ValueError(f"unknown event kind {self.kind!r}")
        if len(self.lower) != len(self.upper) or not self.lower:
            raise ValueError("lower/upper must be equal-length and nonempty")
        for lo, hi in zip(self.lower, self.upper):
            if not lo < hi:
                raise ValueError(f"band ({lo}, {hi}) is empty")

    @classmethod
    def full_space(cls, n: int) -> "BandEvent":
        return cls(kind="corridor", lower=(-math.inf,) * n,
                   upper=(math.inf,) * n)

    @classmethod
    def increment_bands(cls, v) -> "BandEvent":
        """Bands (v_j, v_j + 1/j^2) from the per-window base points."""
        v = tuple(float(u) for u in v)
        upper = tuple(u + 1.0 / (j + 1) ** 2 for j, u in enumerate(v))
        return cls(kind="increment", lower=v, upper=upper)


def _validate_pair(spec: TiltSpec, event: BandEvent) -> None:
    if len(event.lower) != spec.n_scales:
        raise ValueError(
            f"event has {len(event.lower)} bands for {spec.n_scales} windows")
    if event.kind == "increment":
        for j, (lo, hi) in enumerate(zip(event.lower, event.upper), start=1):
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError("increment bands must be finite")
            if abs((hi - lo) - 1.0 / j**2) > 1e-9:
                raise ValueError(
                    f"band width at scale {j} must be 1/{j}^2, got {hi - lo}")
            bound = math.sqrt(math.log(spec.windows[j - 1][1])) / 40.0 + 2.0
            if abs(lo) > bound + 1e-9:
                raise ValueError(
                    f"|v_{j}| = {abs(lo)} exceeds sqrt(log x_{j})/40 + 2 = {bound:.4f}")


def equal_mass_windows(table: PrimeTable, lo: float, hi: float, count: int,
                       sigma: float = 0.0) -> tuple[tuple[float, float], ...]:
    """Split (lo, hi] into contiguous prime windows of near-equal mass.

    Mass is sum of 1/p^(1+2 sigma); cut points fall midway between
    consecutive primes so window membership is unambiguous.
    """
    if count < 1:
        raise ValueError(f"need count >= 1, got {count}")
    ps = primes_between(table, lo, hi).astype(np.float64)
    if ps.size < count:
        raise ValueError(f"only {ps.size} primes in ({lo}, {hi}] for {count} windows")
    mass = np.cumsum(ps ** -(1.0 + 2.0 * sigma))
    bounds = [float(lo)]
    for k in range(1, count):
        idx = int(np.searchsorted(mass, mass[-1] * k / count))
        idx = min(max(idx, k - 1), ps.size - (count - k) - 1)
        bounds.append(float(0.5 * (ps[idx] + ps[idx + 1])))
    bounds.append(float(hi))
    return tuple((bounds[i], bounds[i + 1]) for i in range(count))


def _window_slices(spec: TiltSpec, primes: np.ndarray) -> list[slice]:
    out = []
    for lo, hi in spec.windows:
        i0 = int(np.searchsorted(primes, lo, side="right"))
        i1 = int(np.searchsorted(primes, hi, side="right"))
        if i1 <= i0:
            raise ValueError(f"window ({lo}, {hi}] contains no primes")
        out.append(slice(i0, i1))
    return out


def _log_abs_factors(model: RmfModel, values: np.ndarray,
                     coef: np.ndarray) -> np.ndarray:
    """Per-trial log|prod (1 -+ f(p) c_p)^(-+1)| over one window block."""
    z = values * coef
    if model is RmfModel.STEINHAUS:
        return -np.log(np.abs(1.0 - z)).sum(axis=1)
    return np.log(np.abs(1.0 + z)).sum(axis=1)


def _simulate(spec: TiltSpec, table: PrimeTable, trials: int, stream: int):
    """Per-trial (log-weight, per-window statistics) under the plain law.

    Statistics are log|I_j| at t_j (and, for dimension 2, also at t_j + t).
    Streams are (stream, trial)-keyed, so identical inputs reproduce
    identical arrays regardless of blocking.
    """
    top = spec.windows[-1][1]
    x_max = int(math.ceil(top))
    cut = int(np.searchsorted(table.primes, x_max, side="right"))
    primes = table.primes[:cut].astype(np.float64)
    slices = _window_slices(spec, table.primes[:cut])
    logp = np.log(primes)
    base = np.exp(-(0.5 + spec.sigma) * logp)

    # weight coefficients per prime (anchor t for the tilt itself)
    coef_w1 = base if spec.model is RmfModel.STEINHAUS and spec.dimension == 1 \
        else base * np.exp(-1j * spec.t * logp)
    stat_coefs = [base[sl] * np.exp(-1j * tj * logp[sl])
                  for sl, tj in zip(slices, spec.t_points)]
    stat_coefs2 = [base[sl] * np.exp(-1j * (tj + spec.t) * logp[sl])
                   for sl, tj in zip(slices, spec.t_points)]

    union = np.zeros(cut, dtype=bool)
    for sl in slices:
        union[sl] = True

    n = spec.n_scales
    logw = np.empty(trials)
    stats1 = np.empty((trials, n))
    stats2 = np.empty((trials, n)) if spec.dimension == 2 else None
    block = max(1, 2**22 // max(cut, 1))
    for lo_t in range(0, trials, block):
        hi_t = min(lo_t + block, trials)
        pv = np.vstack([_draw_prime_values(spec.model, cut, stream, t)
                        for t in range(lo_t, hi_t)])
        sel = slice(lo_t, hi_t)
        if spec.dimension == 1:
            w = 2.0 * _log_abs_factors(spec.model, pv[:, union],
                                       coef_w1[union])
        else:
            w = 2.0 * (_log_abs_factors(spec.model, pv[:, union], base[union])
                       + _log_abs_factors(spec.model, pv[:, union],
                                          coef_w1[union]))
        logw[sel] = w
        for j, sl in enumerate(slices):
            stats1[sel, j] = _log_abs_factors(spec.model, pv[:, sl],
                                              stat_coefs[j])
            if stats2 is not None:
                stats2[sel, j] = _log_abs_factors(spec.model, pv[:, sl],
                                                  stat_coefs2[j])
    return logw, stats1, stats2


def _indicator(event: BandEvent, stats1: np.ndarray,
               stats2: np.ndarray | None) -> np.ndarray:
    lower = np.asarray(event.lower)
    upper = np.asarray(event.upper)

    def inside(arr: np.ndarray) -> np.ndarray:
        walk = np.cumsum(arr, axis=1) if event.kind == "corridor" else arr
        return ((walk >= lower) & (walk <= upper)).all(axis=1)

    ok = inside(stats1)
    if stats2 is not None:
        ok &= inside(stats2)
    return ok


def _snis(logw: np.ndarray, ok: np.ndarray) -> tuple[float, float, float]:
    w = np.exp(logw - logw.max())
    total = float(w.sum())
    ess = total**2 / float((w**2).sum())
    p = float((w * ok).sum() / total)
    resid = ok.astype(np.float64) - p
    se = math.sqrt(float(((w * resid) ** 2).sum())) / total
    return p, se, ess


def tilted_probability(spec: TiltSpec, event: BandEvent, trials: int,
                       stream: int, table: PrimeTable) -> MomentEstimate:
    """P-tilde(event) = E[1_A W]/E[W] by self-normalized importance sampling.

    Weights are computed in log space over the union of the event's
    windows only. Raises an unstable-estimate error carrying the effective
    sample size whenever ESS < 50.
    """
    if trials < MIN_TRIALS:
        raise ValueError(f"need trials >= {MIN_TRIALS}, got {trials}")
    _validate_pair(spec, event)
    logw, stats1, stats2 = _simulate(spec, table, trials, stream)
    ok = _indicator(event, stats1, stats2)
    p, se, ess = _snis(logw, ok)
    if ess < MIN_ESS:
        raise UnstableEstimateError(
            f"effective sample size {ess:.1f} below {MIN_ESS}", ess=ess)
    config = {"kind": event.kind, "dimension": spec.dimension, "ess": ess,
              "x": spec.x, "sigma": spec.sigma, "t": spec.t,
              "model": spec.model.value, "stream": stream}
    return MomentEstimate(quantity="tilted-band-prob", estimate=p, stderr=se,
                          trials=trials, config=config)


def tilted_statistic_means(spec: TiltSpec, trials: int, stream: int,
                           table: PrimeTable,
                           weighted: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Per-window mean of log|I_j| under the tilted (or plain) law.

    Returns (means, standard errors); the plain law is the weighted=False
    path (all weights one), used by the mean-shift checks.
    """
    if trials < MIN_TRIALS:
        raise ValueError(f"need trials >= {MIN_TRIALS}, got {trials}")
    logw, stats1, _ = _simulate(spec, table, trials, stream)
    if not weighted:
        logw = np.zeros_like(logw)
    w = np.exp(logw - logw.max())
    total = float(w.sum())
    means = (w[:, None] * stats1).sum(axis=0) / total
    resid = stats1 - means
    ses = np.sqrt(((w[:, None] * resid) ** 2).sum(axis=0)) / total
    return means, ses


def weight_mean_exact(spec: TiltSpec, table: PrimeTable) -> float:
    """Closed-form E[W] under the plain law (per-prime exact averages)."""
    log_factors: list[float] = []
    for lo, hi in spec.windows:
        ps = primes_between(table, lo, hi).astype(np.float64)
        logp = np.log(ps)
        a = np.exp(-(0.5 + spec.sigma) * logp)
        if spec.model is RmfModel.STEINHAUS and spec.dimension == 1:
            log_factors.extend((-np.log1p(-a * a)).tolist())
        elif spec.model is RmfModel.RADEMACHER:
            log_factors.extend(np.log1p(a * a).tolist())
        else:  # two-product weight: circle average per prime
            w2 = np.exp(-1j * spec.t * logp)
            for i in range(ps.size):
                nodes = 256 if ps[i] < 5 else 64
                z = np.exp(2j * np.pi * np.arange(nodes) / nodes)
                g = 1.0 / (np.abs(1.0 - z * a[i]) ** 2
                           * np.abs(1.0 - z * a[i] * w2[i]) ** 2)
                log_factors.append(math.log(g.mean()))
    return math.exp(math.fsum(log_factors))


def _gaussian_params(spec: TiltSpec, table: PrimeTable) -> tuple[np.ndarray, np.ndarray]:
    """Reference mean and variance of log|I_j| per window under the tilt."""
    means = np.empty(spec.n_scales)
    variances = np.empty(spec.n_scales)
    for j, ((lo, hi), tj) in enumerate(zip(spec.windows, spec.t_points)):
        if spec.model is RmfModel.STEINHAUS:
            means[j] = prime_power_sum(table, lo, hi, spec.sigma, tj, "cos")
            variances[j] = 0.5 * prime_power_sum(table, lo, hi, spec.sigma,
                                                 0.0, "one")
        else:
            # c(t, tj - t, p) = cos((t+tj) log p) + cos((t-tj) log p)
            #                   - cos(2 tj log p)/2
            means[j] = (
                prime_power_sum(table, lo, hi, spec.sigma, spec.t + tj, "cos")
                + prime_power_sum(table, lo, hi, spec.sigma, spec.t - tj, "cos")
                - 0.5 * prime_power_sum(table, lo, hi, spec.sigma, tj, "cos2"))
            variances[j] = 0.5 * (
                prime_power_sum(table, lo, hi, spec.sigma, 0.0, "one")
                + prime_power_sum(table, lo, hi, spec.sigma, tj, "cos2"))
    return means, variances


def _bivariate_params(spec: TiltSpec, table: PrimeTable):
    means = np.empty(spec.n_scales)
    variances = np.empty(spec.n_scales)
    covariances = np.empty(spec.n_scales)
    for j, (lo, hi) in enumerate(spec.windows):
        one = prime_power_sum(table, lo, hi, spec.sigma, 0.0, "one")
        cos_t = prime_power_sum(table, lo, hi, spec.sigma, spec.t, "cos")
        means[j] = one + cos_t
        variances[j] = 0.5 * one
        covariances[j] = 0.5 * cos_t
    return means, variances, covariances


def _bivariate_rectangle(lo: float, hi: float, mean: float, var: float,
                         cov: float) -> float:
    """P(lo <= N1 <= hi, lo <= N2 <= hi) for the symmetric bivariate pair."""
    sd = math.sqrt(var)
    lo = max(lo, mean - 12.0 * sd)
    hi = min(hi, mean + 12.0 * sd)
    if hi <= lo:
        return 0.0
    dist = stats.multivariate_normal(mean=[mean, mean],
                                     cov=[[var, cov], [cov, var]],
                                     allow_singular=True)
    return float(dist.cdf([hi, hi]) - dist.cdf([hi, lo]) - dist.cdf([lo, hi])
                 + dist.cdf([lo, lo]))


def gaussian_band_reference(spec: TiltSpec, event: BandEvent,
                            table: PrimeTable) -> float:
    """Probability of the event under the Gaussian reference law.

    Increment bands: product over windows of normal band probabilities
    (bivariate rectangles for the two-product tilt). Corridors: the walks
    DP oracle on the centered steps G_m = N_m - E N_m; the two-product
    corridor reference is the squared marginal corridor (the covariance-
    zero regime of the bivariate comparison).
    """
    _validate_pair(spec, event)
    lower = np.asarray(event.lower)
    upper = np.asarray(event.upper)
    if spec.dimension == 2:
        means, variances, covariances = _bivariate_params(spec, table)
    else:
        means, variances = _gaussian_params(spec, table)
        covariances = None
    if event.kind == "increment":
        if spec.dimension == 2:
            probs = [_bivariate_rectangle(lower[j], upper[j], means[j],
                                          variances[j], covariances[j])
                     for j in range(spec.n_scales)]
            return float(np.prod(probs))
        sd = np.sqrt(variances)
        probs = (stats.norm.cdf((upper - means) / sd)
                 - stats.norm.cdf((lower - means) / sd))
        return float(np.prod(probs))
    cum_means = np.cumsum(means)
    marginal = corridor_dp(variances, lower - cum_means, upper - cum_means)
    if spec.dimension == 2:
        return float(marginal**2)
    return float(marginal)


@dataclass(frozen=True)
class GirsanovComparison:
    """Side-by-side tilted MC probability vs Gaussian reference."""

    kind: str
    dimension: int
    n_scales: int
    tilted: float
    tilted_se: float
    reference: float
    ratio: float
    ess: float
    band: tuple[float, float]
    passed: bool


def girsanov_compare(spec: TiltSpec, event: BandEvent, trials: int,
                     table: PrimeTable, stream: int = 0,
                     band: tuple[float, float] = (0.25, 4.0),
                     csv_path=None) -> GirsanovComparison:
    """Run tilted_probability against gaussian_band_reference.

    Desk-scale preconditions: at most 12 windows and x <= 1e8 (windows must
    be nonempty, which _simulate enforces). The record is optionally
    persisted as a one-row CSV.
    """
    if spec.n_scales > 12:
        raise ValueError(f"at most 12 windows at desk scale, got {spec.n_scales}")
    if spec.x > 10**8:
        raise ValueError(f"x={spec.x} beyond desk scale 1e8")
    est = tilted_probability(spec, event, trials, stream, table)
    ref = gaussian_band_reference(spec, event, table)
    ratio = est.estimate / ref if ref > 0 else math.inf
    result = GirsanovComparison(
        kind=event.kind, dimension=spec.dimension, n_scales=spec.n_scales,
        tilted=est.estimate, tilted_se=est.stderr, reference=ref,
        ratio=ratio, ess=float(est.config["ess"]), band=band,
        passed=bool(band[0] <= ratio <= band[1]))
    if csv_path is not None:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["kind", "dimension", "n_scales", "tilted",
                             "tilted_se", "reference", "ratio", "ess",
                             "band_lo", "band_hi", "passed"])
            writer.writerow([result.kind, result.dimension, result.n_scales,
                             format(result.tilted, ".17g"),
                             format(result.tilted_se, ".17g"),
                             format(result.reference, ".17g"),
                             format(result.ratio, ".17g"),
                             format(result.ess, ".17g"),
                             result.band[0], result.band[1], result.passed])
    return result
