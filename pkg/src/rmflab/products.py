"""Random Euler products over sampled multiplicative functions.

Covers the per-window increments of the product along the critical line,
closed-form mean squares (the per-prime averages are exact, including p = 2
and 3), the vertical-shift discretization ladder, multi-scale barrier
events, trapezoid chaos integrals of |F|^2, and a Parseval-style identity
check connecting partial sums to the product on a vertical line.

All "log of product" values are sums of per-prime principal logarithms;
the real part is branch-free and is what every barrier event consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .estimates import MomentEstimate
from .numtheory import PrimeTable, _lpf_array, build_prime_table, primes_between
from .rmf import RmfModel, RmfSample, _sample_f_table, sample_rmf

__all__ = [
    "ProductSpec",
    "IncrementIndex",
    "ChaosGrid",
    "ScaleEventSpec",
    "increment_window",
    "smooth_cap",
    "log_euler_window",
    "log_increment",
    "log_product",
    "mean_square_exact",
    "window_mean_square",
    "mc_mean_square",
    "two_point_mean_square",
    "t_ladder",
    "event_scales",
    "event_sigma",
    "event_barriers",
    "scale_event_holds",
    "scale_event_fail_prob",
    "build_chaos_grid",
    "chaos_integral",
    "parseval_check",
]


@dataclass(frozen=True)
class ProductSpec:
    """Euler product F_k(1/2 + sigma + it) over x^(1/e^(k+1))-smooth support.

    k = -1 selects the full product over p <= x. V is the optional
    lower-bound shift parameter entering sigma as 4V/log x where a caller
    wants it; it is carried here so specs serialize completely.
    """

    model: RmfModel
    x: int
    sigma: float = 0.0
    t: float = 0.0
    k: int = -1
    V: float = 10.0

    def __post_init__(self) -> None:
        if self.x < 2:
            raise ValueError(f"need x >= 2, got {self.x}")
        if self.k < -1:
            raise ValueError(f"need k >= -1, got {self.k}")
        if self.k >= 0:
            llx = math.log(math.log(self.x))
            if self.k > math.floor(llx):
                raise ValueError(
                    f"k={self.k} exceeds floor(loglog x) = {math.floor(llx)}")
        if self.V < 0:
            raise ValueError(f"need V >= 0, got {self.V}")


@dataclass(frozen=True)
class IncrementIndex:
    """Index l of the prime window (x^(1/e^(l+2)), x^(1/e^(l+1))]."""

    l: int

    def __post_init__(self) -> None:
        if self.l < 0:
            raise ValueError(f"need l >= 0, got {self.l}")


@dataclass(frozen=True)
class ChaosGrid:
    """|F(1/2 + sigma + it)|^2 sampled on a uniform t-grid."""

    t_lo: float
    t_hi: float
    dt: float
    values: np.ndarray

    def __post_init__(self) -> None:
        if not self.t_hi > self.t_lo:
            raise ValueError(f"need t_hi > t_lo, got [{self.t_lo}, {self.t_hi}]")
        if self.dt <= 0:
            raise ValueError(f"need dt > 0, got {self.dt}")


@dataclass(frozen=True)
class ScaleEventSpec:
    """Multi-scale barrier event on suffix products of increments.

    kind "product-barrier": two-sided barriers +-(log(log x / e^(j+1)) + g)
    with g = C*min(sqrt(loglog x), 1/(1-q)) + 2*loglog(log x / e^(j+1)),
    evaluated at sigma = -k/log x with the vertical shift discretized
    through the t-ladder and quantified over every ladder reachable from
    |t| <= 1/2.

    kind "weighted-band": asymmetric barriers at sigma = 4V/log x evaluated
    at the spec's own t (no ladder), scales starting at floor(log V) + 3.

    j_lo/j_hi override the scale range (needed at desk scale, where the
    weighted-band default range is empty). lower_level/upper_level replace
    both barriers by flat levels, for degenerate-event tests.
    """

    model: RmfModel
    x: int
    kind: str
    k: int = 0
    q: float = 0.75
    C: float = 2.0
    B: int = 0
    t: float = 0.0
    V: float = 10.0
    j_lo: int | None = None
    j_hi: int | None = None
    lower_level: float | None = None
    upper_level: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("product-barrier", "weighted-band"):
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.x < 16:
            raise ValueError(f"need x >= 16, got {self.x}")
        if self.k < 0:
            raise ValueError(f"need k >= 0, got {self.k}")
        if self.kind == "product-barrier" and abs(self.t) > 0.5:
            raise ValueError(f"|t| <= 1/2 required for ladder events, got {self.t}")
        if self.q >= 1.0 + 1e-12 or self.C <= 0 or self.B < 0:
            raise ValueError("need q <= 1, C > 0, and B >= 0")
        if self.kind == "weighted-band" and self.V < 1:
            raise ValueError(f"weighted-band events need V >= 1, got {self.V}")


def increment_window(x: int, l: int) -> tuple[float, float]:
    """Prime window (x^(1/e^(l+2)), x^(1/e^(l+1))] of increment l."""
    return smooth_cap(x, l + 1), smooth_cap(x, l)


def smooth_cap(x: int, k: int) -> float:
    """Largest prime entering F_k: x^(1/e^(k+1)); k = -1 gives x itself."""
    if k == -1:  # exp/log round trip can land a hair above x
        return float(x)
    return math.exp(math.log(x) * math.exp(-(k + 1.0)))


def _window_slice(sample: RmfSample, lo: float, hi: float) -> slice:
    i0 = int(np.searchsorted(sample.primes, lo, side="right"))
    i1 = int(np.searchsorted(sample.primes, hi, side="right"))
    return slice(i0, i1)


def log_euler_window(sample: RmfSample, sigma: float, t: float, lo: float,
                     hi: float, table: PrimeTable) -> complex:
    """Sum of per-prime principal logs over primes in (lo, hi].

    Steinhaus: sum of -log(1 - f(p) p^(-s)); Rademacher: +log(1 + f(p) p^(-s))
    with s = 1/2 + sigma + it. Empty windows contribute 0 (empty product).
    """
    if hi > table.limit or hi > sample.x_max:
        raise ValueError(
            f"window top {hi} exceeds available primes "
            f"(table {table.limit}, sample {sample.x_max})")
    sl = _window_slice(sample, lo, hi)
    if sl.stop <= sl.start:
        return complex(0.0)
    p = sample.primes[sl].astype(np.float64)
    logp = np.log(p)
    z = sample.values[sl] * np.exp(-(0.5 + sigma) * logp - 1j * t * logp)
    if np.abs(z).max() >= 1.0:
        raise ValueError(
            f"|f(p) p^(-s)| >= 1 in window ({lo}, {hi}] at sigma={sigma}")
    if sample.model is RmfModel.STEINHAUS:
        return complex(-np.sum(np.log(1.0 - z)))
    return complex(np.sum(np.log(1.0 + z)))


def _as_l(l) -> int:
    return l.l if isinstance(l, IncrementIndex) else int(l)


def log_increment(sample: RmfSample, spec: ProductSpec, l,
                  table: PrimeTable) -> complex:
    """log I_l(1/2 + sigma + it) for the window indexed by l."""
    lo, hi = increment_window(spec.x, _as_l(l))
    if hi < 2.0:
        return complex(0.0)
    return log_euler_window(sample, spec.sigma, spec.t, lo, hi, table)


def log_product(sample: RmfSample, spec: ProductSpec,
                table: PrimeTable) -> complex:
    """log F_k(1/2 + sigma + it) by summing log increments over all scales.

    The windows l = k, k+1, ... tile (y, cap] down to some y < 2, so the
    residual block of primes below the last window is empty and the sum of
    increments is the whole product. (The window formula extends to l = -1,
    whose window is (x^(1/e), x]: that is how k = -1 reaches the full range.)
    """
    cap = smooth_cap(spec.x, spec.k)
    if cap < 2.0:
        return complex(0.0)
    re_parts: list[float] = []
    im_parts: list[float] = []
    l = spec.k
    while True:
        lo, hi = increment_window(spec.x, l)
        if hi < 2.0:
            break
        val = log_euler_window(sample, spec.sigma, spec.t, lo, hi, table)
        re_parts.append(val.real)
        im_parts.append(val.imag)
        l += 1
    return complex(math.fsum(re_parts), math.fsum(im_parts))


def _check_mean_square_domain(sigma: float, cap: float) -> None:
    if cap >= 3.0 and sigma < -1.0 / math.log(cap):
        raise ValueError(
            f"sigma={sigma} below -1/log(cap) = {-1.0 / math.log(cap):.6f}")


def _per_prime_log_factors(model: RmfModel, p: np.ndarray, sigma: float,
                           t: float, power: int) -> np.ndarray:
    """log of E|1 -+ f(p) p^(-s)|^(+-2) per prime, all four cases exact."""
    a2 = np.exp(-(1.0 + 2.0 * sigma) * np.log(p))
    if np.any(a2 >= 1.0):
        raise ValueError("p^-(1+2 sigma) >= 1: mean square diverges")
    if model is RmfModel.STEINHAUS:
        # circle averages: E|1-za|^-2 = 1/(1-a^2), E|1-za|^2 = 1+a^2
        return -np.log1p(-a2) if power == 2 else np.log1p(a2)
    if power == 2:
        return np.log1p(a2)
    a = np.sqrt(a2)
    c = np.cos(t * np.log(p))
    avg = 0.5 * (1.0 / (1.0 + 2.0 * a * c + a2) + 1.0 / (1.0 - 2.0 * a * c + a2))
    return np.log(avg)


def window_mean_square(model: RmfModel, lo: float, hi: float, sigma: float,
                       t: float, table: PrimeTable, power: int = 2) -> float:
    """Exact E|product over (lo, hi]|^power for power in {2, -2}."""
    if power not in (2, -2):
        raise ValueError(f"power must be 2 or -2, got {power}")
    _check_mean_square_domain(sigma, hi)
    p = primes_between(table, max(lo, 1.0), hi).astype(np.float64)
    if p.size == 0:
        return 1.0
    logs = _per_prime_log_factors(model, p, sigma, t, power)
    return math.exp(math.fsum(logs.tolist()))


def mean_square_exact(spec: ProductSpec, table: PrimeTable,
                      power: int = 2) -> float:
    """Closed-form E|F_k|^2 (power=2) or E|F_k|^(-2) (power=-2).

    Steinhaus: prod (1 - p^-(1+2 sigma))^-1 for power 2 and
    prod (1 + p^-(1+2 sigma)) for power -2. Rademacher power 2 is
    prod (1 + p^-(1+2 sigma)); power -2 averages |1 +- p^(-1/2-sigma-it)|^-2
    over the sign exactly per prime and depends on t.
    """
    cap = smooth_cap(spec.x, spec.k)
    if cap < 2.0:
        return 1.0
    return window_mean_square(spec.model, 1.0, cap, spec.sigma, spec.t, table,
                              power)


def mc_mean_square(spec: ProductSpec, trials: int, table: PrimeTable,
                   seed: int = 0, power: int = 2) -> MomentEstimate:
    """MC companion of mean_square_exact over fresh samples per trial."""
    if trials < 1:
        raise ValueError(f"need trials >= 1, got {trials}")
    if power not in (2, -2):
        raise ValueError(f"power must be 2 or -2, got {power}")
    cap = smooth_cap(spec.x, spec.k)
    x_max = max(2, int(math.ceil(cap)))
    vals = np.empty(trials)
    for trial in range(trials):
        sample = sample_rmf(spec.model, x_max, table, (seed, trial))
        logf = log_product(sample, spec, table)
        vals[trial] = math.exp(power * logf.real)
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return MomentEstimate(quantity="product-mean-square", estimate=est,
                          stderr=se, trials=trials,
                          config={"x": spec.x, "sigma": spec.sigma,
                                  "t": spec.t, "k": spec.k, "power": power,
                                  "model": spec.model.value, "seed": seed})


def two_point_mean_square(spec: ProductSpec, t_gap: float,
                          table: PrimeTable) -> float:
    """Exact E[|F(1/2+sigma+it)|^2 |F(1/2+sigma+i(t+t_gap))|^2].

    Per prime the Steinhaus average over the unit circle is computed by an
    N-point trapezoid rule (N = 64 for p >= 5, 256 for p in {2, 3}; the
    rule is spectrally accurate on these periodic integrands, below 1e-14).
    Rademacher averages the two signs exactly.
    """
    cap = smooth_cap(spec.x, spec.k)
    if cap < 2.0:
        return 1.0
    _check_mean_square_domain(spec.sigma, cap)
    p = primes_between(table, 1.0, cap).astype(np.float64)
    if p.size == 0:
        return 1.0
    logp = np.log(p)
    a = np.exp(-(0.5 + spec.sigma) * logp)
    if np.any(a >= 1.0):
        raise ValueError("p^-(1/2+sigma) >= 1: product diverges")
    w1 = np.exp(-1j * spec.t * logp)
    w2 = np.exp(-1j * (spec.t + t_gap) * logp)
    factors = np.empty(p.size)
    if spec.model is RmfModel.STEINHAUS:
        for i in range(p.size):
            n_nodes = 256 if p[i] < 5 else 64
            z = np.exp(2j * np.pi * np.arange(n_nodes) / n_nodes)
            g = 1.0 / (np.abs(1.0 - z * a[i] * w1[i]) ** 2
                       * np.abs(1.0 - z * a[i] * w2[i]) ** 2)
            factors[i] = g.mean()
    else:
        for i in range(p.size):
            g = [abs(1.0 + s * a[i] * w1[i]) ** 2
                 * abs(1.0 + s * a[i] * w2[i]) ** 2 for s in (1.0, -1.0)]
            factors[i] = 0.5 * math.fsum(g)
    return math.exp(math.fsum(np.log(factors).tolist()))


def _ladder_d(x: int, j: int) -> float:
    lx = math.log(x)
    scale = lx / math.exp(j + 1.0)
    if scale <= 1.0:
        raise ValueError(f"ladder resolution undefined at j={j} for x={x}")
    return scale * math.log(scale)


def t_ladder(x: int, t: float, j_count: int) -> list[float]:
    """Successive grid approximations t(0), ..., t(j_count - 1) of t.

    t(j) is the largest point <= t(j-1) on the grid of spacing
    1/D_j, D_j = (log x / e^(j+1)) * log(log x / e^(j+1)). The defining
    bound t - t(j) <= 2/D_j is asserted on every returned value.
    """
    if abs(t) > 1.0:
        raise ValueError(f"|t| <= 1 required, got {t}")
    if j_count < 1:
        raise ValueError(f"need j_count >= 1, got {j_count}")
    llx = math.log(math.log(x))
    if j_count - 1 > llx - 2.0:
        raise ValueError(
            f"j range {j_count - 1} exceeds loglog x - 2 = {llx - 2.0:.3f}")
    out: list[float] = []
    prev = t
    for j in range(j_count):
        d = _ladder_d(x, j)
        v = prev * d
        # nudge guards against floor(n - eps) when prev already sits on grid
        tj = math.floor(v + 1e-9 * (1.0 + abs(v))) / d
        if tj > prev + 1e-15:
            raise AssertionError("ladder point exceeds its predecessor")
        if t - tj > 2.0 / d + 1e-12:
            raise AssertionError(f"ladder bound violated at j={j}")
        out.append(tj)
        prev = tj
    return out


def event_sigma(event: ScaleEventSpec) -> float:
    """Horizontal shift off the half-line used by the event's products."""
    lx = math.log(event.x)
    if event.kind == "product-barrier":
        return -event.k / lx
    return 4.0 * event.V / lx


def event_scales(event: ScaleEventSpec) -> tuple[int, int, int]:
    """(j_lo, j_hi, L): checked scale range and the top increment index L."""
    llx = math.log(math.log(event.x))
    top = math.floor(llx) - event.B - 2
    if event.kind == "product-barrier":
        j_lo = event.k if event.j_lo is None else event.j_lo
    else:
        j_lo = (math.floor(math.log(event.V)) + 3 if event.j_lo is None
                else event.j_lo)
    j_hi = top if event.j_hi is None else event.j_hi
    if j_lo < 0 or j_hi > top:
        raise ValueError(f"scale range [{j_lo}, {j_hi}] outside [0, {top}]")
    if j_lo > j_hi:
        raise ValueError(
            f"empty scale range [{j_lo}, {j_hi}] for x={event.x}; "
            "override j_lo/j_hi to evaluate this event at desk scale")
    return j_lo, j_hi, top


def event_barriers(event: ScaleEventSpec, j: int) -> tuple[float, float]:
    """Lower/upper log-barriers for the suffix product starting at scale j."""
    llx = math.log(math.log(event.x))
    y = llx - (j + 1.0)  # log(log x / e^(j+1))
    if y <= 0:
        raise ValueError(f"scale j={j} leaves an empty window range")
    mixing = math.sqrt(llx) if event.q >= 1.0 else min(
        math.sqrt(llx), 1.0 / (1.0 - event.q))
    if event.kind == "product-barrier":
        g = event.C * mixing + 2.0 * math.log(y)
        lo, hi = -(y + g), y + g
    else:
        lo = -event.B * y - mixing
        hi = y + mixing - 2.0 * math.log(y)
    if event.lower_level is not None:
        lo = event.lower_level
    if event.upper_level is not None:
        hi = event.upper_level
    return lo, hi


def _ladder_grid(event: ScaleEventSpec, count: int) -> list[list[float]]:
    """Every distinct ladder reachable from |t| <= 1/2 (one per t(0) point)."""
    d0 = _ladder_d(event.x, 0)
    n_lo = math.floor(-0.5 * d0)
    n_hi = math.floor(0.5 * d0)
    return [t_ladder(event.x, n / d0, count) for n in range(n_lo, n_hi + 1)]


def _suffix_sums_ok(sample: RmfSample, event: ScaleEventSpec, sigma: float,
                    t_points: list[float], j_lo: int, j_hi: int, top: int,
                    table: PrimeTable) -> bool:
    w = np.empty(top - j_lo + 1)
    for l in range(j_lo, top + 1):
        lo, hi = increment_window(event.x, l)
        w[l - j_lo] = log_euler_window(sample, sigma, t_points[l], lo, hi,
                                       table).real
    suffix = np.cumsum(w[::-1])[::-1]
    for j in range(j_lo, j_hi + 1):
        lo_j, hi_j = event_barriers(event, j)
        s = suffix[j - j_lo]
        if not lo_j <= s <= hi_j:
            return False
    return True


def scale_event_holds(sample: RmfSample, event: ScaleEventSpec,
                      table: PrimeTable) -> bool:
    """Evaluate the multi-scale barrier event on one sampled realization."""
    j_lo, j_hi, top = event_scales(event)
    sigma = event_sigma(event)
    if event.kind == "product-barrier":
        for ladder in _ladder_grid(event, top + 1):
            if not _suffix_sums_ok(sample, event, sigma, ladder, j_lo, j_hi,
                                   top, table):
                return False
        return True
    t_points = [event.t] * (top + 1)
    return _suffix_sums_ok(sample, event, sigma, t_points, j_lo, j_hi, top,
                           table)


def scale_event_fail_prob(event: ScaleEventSpec, trials: int,
                          table: PrimeTable | None = None,
                          seed: int = 0) -> MomentEstimate:
    """MC estimate of P(event fails) with binomial standard error."""
    if trials < 1:
        raise ValueError(f"need trials >= 1, got {trials}")
    j_lo, _, _ = event_scales(event)
    hi_max = increment_window(event.x, j_lo)[1]
    x_max = max(2, int(math.ceil(hi_max)))
    if table is None:
        table = build_prime_table(x_max + 1)
    fails = 0
    for trial in range(trials):
        sample = sample_rmf(event.model, x_max, table, (seed, trial))
        if not scale_event_holds(sample, event, table):
            fails += 1
    p = fails / trials
    se = math.sqrt(p * (1.0 - p) / trials)
    return MomentEstimate(quantity="scale-event-fail-prob", estimate=p,
                          stderr=se, trials=trials,
                          config={"x": event.x, "kind": event.kind,
                                  "k": event.k, "q": event.q, "C": event.C,
                                  "B": event.B, "model": event.model.value,
                                  "seed": seed})


def build_chaos_grid(sample: RmfSample, spec: ProductSpec, t_lo: float,
                     t_hi: float, dt: float, table: PrimeTable) -> ChaosGrid:
    """Evaluate |F_k(1/2 + sigma + it)|^2 on a uniform grid over [t_lo, t_hi].

    dt must resolve the product's oscillation scale: dt <= 1/(10 log x).
    Phases p^(-it) advance incrementally between nodes and are re-anchored
    every 128 nodes to stop drift.
    """
    if not t_hi > t_lo:
        raise ValueError(f"need t_hi > t_lo, got [{t_lo}, {t_hi}]")
    if dt <= 0 or dt > 1.0 / (10.0 * math.log(spec.x)) + 1e-15:
        raise ValueError(
            f"dt={dt} too coarse; need dt <= 1/(10 log x) = "
            f"{1.0 / (10.0 * math.log(spec.x)):.6g}")
    cap = smooth_cap(spec.x, spec.k)
    steps = max(1, int(math.ceil((t_hi - t_lo) / dt - 1e-12)))
    dt_eff = (t_hi - t_lo) / steps
    if cap < 2.0:
        values = np.ones(steps + 1)
        return ChaosGrid(t_lo=t_lo, t_hi=t_hi, dt=dt_eff, values=values)
    if cap > sample.x_max or cap > table.limit:
        raise ValueError(f"smooth cap {cap:.1f} exceeds available primes")
    sl = _window_slice(sample, 1.0, cap)
    logp = np.log(sample.primes[sl].astype(np.float64))
    base = sample.values[sl] * np.exp(-(0.5 + spec.sigma) * logp)
    if np.abs(base).max() >= 1.0:
        raise ValueError("|f(p) p^(-1/2-sigma)| >= 1: integrand diverges")
    step_ph = np.exp(-1j * dt_eff * logp)
    # |F|^2 = prod |1 + sign*z|^(2*sign): sign -1 for Steinhaus (inverse
    # factors 1 - z), +1 for Rademacher (direct factors 1 + z).
    sign = -1.0 if sample.model is RmfModel.STEINHAUS else 1.0
    values = np.empty(steps + 1)
    ph = np.ones_like(logp, dtype=np.complex128)
    for i in range(steps + 1):
        if i % 128 == 0:
            ph = np.exp(-1j * (t_lo + i * dt_eff) * logp)
        z = base * ph
        log_sq = np.log(np.abs(1.0 + sign * z) ** 2)
        values[i] = math.exp(sign * float(log_sq.sum()))
        ph = ph * step_ph
    return ChaosGrid(t_lo=t_lo, t_hi=t_hi, dt=dt_eff, values=values)


def chaos_integral(sample: RmfSample, spec: ProductSpec, t_lo: float,
                   t_hi: float, dt: float, table: PrimeTable) -> float:
    """Trapezoid integral of |F_k(1/2 + sigma + it)|^2 over [t_lo, t_hi]."""
    grid = build_chaos_grid(sample, spec, t_lo, t_hi, dt, table)
    v = grid.values
    return float(grid.dt * (v.sum() - 0.5 * (v[0] + v[-1])))


def parseval_check(sample: RmfSample, x: int, sigma: float, table: PrimeTable,
                   x_cap: int | None = None, t_max: float = 200.0,
                   dt: float = 0.01) -> tuple[float, float]:
    """Both sides of the partial-sum/product Parseval identity.

    LHS: integral over u of |sum of f(n) over x-smooth n <= u|^2 u^(-1-2 sigma),
    evaluated exactly: the inner sum is a step function, each unit interval
    contributes in closed form, and the tail beyond the largest carrier
    (where the step function freezes) integrates to |A(N)|^2 N^(-2 sigma)/(2 sigma).

    RHS: (1/2 pi) * integral of |D(sigma + it)|^2 / |sigma + it|^2 over
    [-t_max, t_max] by trapezoid quadrature, where D is the Dirichlet
    polynomial of the same coefficients. The discarded |t| > t_max tail is
    bounded by sum |a_n|^2 n^(-2 sigma) / (pi t_max) and must stay below
    0.5% of the computed value, else the call refuses.
    """
    if sigma <= 0:
        raise ValueError(f"need sigma > 0, got {sigma}")
    if x < 1:
        raise ValueError(f"need x >= 1, got {x}")
    n_top = sample.x_max if x_cap is None else int(x_cap)
    if not 1 <= n_top <= sample.x_max:
        raise ValueError(f"x_cap={n_top} outside [1, {sample.x_max}]")
    f = _sample_f_table(sample, n_top, table).astype(np.complex128)
    lpf = _lpf_array(table, n_top)
    mask = np.zeros(n_top + 1, dtype=bool)
    mask[1:] = lpf[1:] <= x
    coeffs = np.where(mask, f, 0.0)

    partial = np.cumsum(coeffs)[1:]  # A(n) for n = 1..N
    n = np.arange(1, n_top + 1, dtype=np.float64)
    decay = n ** (-2.0 * sigma)
    sq = np.abs(partial) ** 2
    pieces = sq[:-1] * (decay[:-1] - decay[1:])
    lhs = (math.fsum(pieces.tolist()) + sq[-1] * decay[-1]) / (2.0 * sigma)

    nz = np.nonzero(mask[1:])[0] + 1
    logn = np.log(nz.astype(np.float64))
    coef = coeffs[nz] * np.exp(-sigma * logn)
    weight_mass = float(np.sum(np.abs(coef) ** 2))
    steps = int(round(2.0 * t_max / dt))
    dt_eff = 2.0 * t_max / steps
    ph = np.ones_like(logn, dtype=np.complex128)
    step_ph = np.exp(-1j * dt_eff * logn)
    integrand = np.empty(steps + 1)
    for i in range(steps + 1):
        if i % 256 == 0:
            ph = np.exp(-1j * (-t_max + i * dt_eff) * logn)
        t = -t_max + i * dt_eff
        d_val = np.dot(coef, ph)
        integrand[i] = abs(d_val) ** 2 / (sigma * sigma + t * t)
        ph = ph * step_ph
    rhs = dt_eff * (integrand.sum() - 0.5 * (integrand[0] + integrand[-1]))
    rhs /= 2.0 * math.pi
    tail_bound = weight_mass / (math.pi * t_max)
    if tail_bound > 0.005 * max(rhs, 1e-300):
        raise ValueError(
            f"t_max={t_max} leaves a quadrature tail bound {tail_bound:.3g} "
            f"above 0.5% of the main term {rhs:.3g}; increase t_max")
    return float(lhs), float(rhs)
