"""Sampling of random multiplicative functions and their partial sums.

Two models are supported. The Steinhaus model draws f(p) independently and
uniformly from the complex unit circle and extends totally multiplicatively:
f(n) = prod f(p)^a over p^a || n. The Rademacher model draws f(p) in {-1, +1}
and extends multiplicatively with support on squarefree n (f(n) = 0 whenever
a square divides n).

Random streams are counter-based (Philox) and keyed by (seed, trial), so any
trial's sample is reproducible bit-for-bit regardless of batching, thread
count, or evaluation order.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .numtheory import PrimeTable, _lpf_array, factorize

__all__ = [
    "RmfModel",
    "RmfSample",
    "PartialSumSeries",
    "Restriction",
    "sample_rmf",
    "value_at",
    "partial_sum",
    "partial_sum_series",
    "restricted_sum",
    "batched_partial_sums",
]

_MASK64 = (1 << 64) - 1

# Cap on the elements of the batched DP work matrix (values * integers);
# keeps peak memory near 128 MiB of complex128 regardless of x.
_BATCH_ELEMENTS = 2**23


class RmfModel(enum.Enum):
    """Model flag: Steinhaus (unit circle) or Rademacher (signs)."""

    STEINHAUS = "steinhaus"
    RADEMACHER = "rademacher"


@dataclass
class RmfSample:
    """One realization of f: values at all primes <= x_max.

    ``values[i]`` is f(primes[i]): complex128 of unit modulus for Steinhaus,
    float64 in {-1.0, +1.0} for Rademacher. (seed, trial) identify the
    random stream that produced the sample.
    """

    model: RmfModel
    x_max: int
    primes: np.ndarray
    values: np.ndarray
    seed: int
    trial: int


@dataclass(frozen=True)
class PartialSumSeries:
    """Partial sums S(c) = sum_{n <= c} f(n) at ascending checkpoints."""

    checkpoints: tuple[int, ...]
    sums: tuple[complex, ...]


@dataclass(frozen=True)
class Restriction:
    """Predicate restricting which n enter a partial sum.

    kind is one of "large-prime-factor" (largest prime factor > sqrt(x)),
    "smooth" (y-smooth for the given y), or "factor-window" (every prime
    factor inside (y1, y2]).
    """

    kind: str
    y: float | None = None
    window: tuple[float, float] | None = None

    @classmethod
    def large_prime_factor(cls) -> "Restriction":
        return cls(kind="large-prime-factor")

    @classmethod
    def smooth(cls, y: float) -> "Restriction":
        if y < 1:
            raise ValueError(f"smoothness bound must be >= 1, got {y}")
        return cls(kind="smooth", y=float(y))

    @classmethod
    def factor_window(cls, y1: float, y2: float) -> "Restriction":
        if not y1 < y2:
            raise ValueError(f"need y1 < y2, got ({y1}, {y2})")
        return cls(kind="factor-window", window=(float(y1), float(y2)))


def _generator(seed: int, trial: int) -> np.random.Generator:
    key = np.array([seed & _MASK64, trial & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _draw_prime_values(model: RmfModel, count: int, seed: int,
                       trial: int) -> np.ndarray:
    gen = _generator(seed, trial)
    if model is RmfModel.STEINHAUS:
        vals = np.exp(2j * np.pi * gen.random(count))
        vals /= np.abs(vals)  # renormalize to exact unit modulus
        return vals
    return (gen.integers(0, 2, size=count) * 2 - 1).astype(np.float64)


def sample_rmf(model: RmfModel, x_max: int, table: PrimeTable,
               stream: tuple[int, int]) -> RmfSample:
    """Draw one sample of f at all primes <= x_max.

    ``stream`` is the (seed, trial) pair keying the counter-based RNG;
    identical pairs give bitwise-identical samples.
    """
    if not 1 <= x_max <= table.limit:
        raise ValueError(f"x_max={x_max} outside [1, {table.limit}]")
    seed, trial = stream
    cut = int(np.searchsorted(table.primes, x_max, side="right"))
    primes = table.primes[:cut]
    values = _draw_prime_values(model, primes.size, seed, trial)
    return RmfSample(model=model, x_max=int(x_max), primes=primes,
                     values=values, seed=int(seed), trial=int(trial))


def value_at(sample: RmfSample, n: int, table: PrimeTable) -> complex:
    """f(n) for the sampled realization; f(1) = 1."""
    if not 1 <= n <= sample.x_max:
        raise ValueError(f"n={n} outside [1, {sample.x_max}]")
    out = complex(1.0)
    for p, a in factorize(table, n).pairs:
        if sample.model is RmfModel.RADEMACHER and a >= 2:
            return complex(0.0)
        fp = sample.values[int(np.searchsorted(sample.primes, p))]
        out *= fp**a
    return complex(out)


# --- multiplicative DP over 2..x ------------------------------------------
#
# f(n) = f(n / spf(n)) * f(spf(n)) for the totally multiplicative Steinhaus
# model, and the same with a zero whenever spf(n) also divides n / spf(n)
# for Rademacher. Processing integers grouped by Omega(n) (number of prime
# factors with multiplicity) turns the recurrence into ~log2(x) vectorized
# gather passes. Everything sample-independent is cached per (table, x).


def _sum_plan(table: PrimeTable, x: int) -> dict:
    key = ("sumplan", x)
    plan = table._cache.get(key)
    if plan is not None:
        return plan
    spf = table.spf[: x + 1].astype(np.int64)
    n = np.arange(x + 1, dtype=np.int64)
    m = np.zeros(x + 1, dtype=np.int64)
    if x >= 2:
        m[2:] = n[2:] // spf[2:]
    primes = table.primes
    sidx = np.zeros(x + 1, dtype=np.int64)
    if x >= 2:
        sidx[2:] = np.searchsorted(primes, spf[2:])
    omega = np.zeros(x + 1, dtype=np.int8)
    for p in primes[primes <= x].tolist():
        pe = p
        while pe <= x:
            omega[pe::pe] += 1
            pe *= p
    levels: list[np.ndarray] = []
    if x >= 2:
        order = np.argsort(omega[2:], kind="stable") + 2
        counts = np.bincount(omega[2:])
        start = int(counts[0]) if counts.size else 0  # level 0 is empty for n >= 2
        for lev in range(1, counts.size):
            cnt = int(counts[lev])
            levels.append(order[start:start + cnt])
            start += cnt
    bad = np.zeros(x + 1, dtype=bool)
    if x >= 2:
        bad[2:] = (m[2:] % spf[2:]) == 0  # cofactor shares the smallest prime
    plan = {"x": x, "m": m, "sidx": sidx, "levels": levels, "bad": bad}
    table._cache[key] = plan
    return plan


def _values_dtype(model: RmfModel) -> type:
    return np.complex128 if model is RmfModel.STEINHAUS else np.float64


def _batch_f_table(model: RmfModel, prime_values: np.ndarray,
                   plan: dict) -> np.ndarray:
    """f(n) for n = 0..x, shape (x+1, nbatch); f[0] = 0, f[1] = 1.

    The n-major layout keeps each gather row (one integer, all trials)
    contiguous, which is what makes the level passes memory-bound rather
    than cache-miss-bound.
    """
    x = plan["x"]
    m, sidx, bad = plan["m"], plan["sidx"], plan["bad"]
    nbatch = prime_values.shape[0]
    pv = np.ascontiguousarray(prime_values.T)
    f = np.zeros((x + 1, nbatch), dtype=_values_dtype(model))
    if x >= 1:
        f[1] = 1.0
    for idx in plan["levels"]:
        vals = f[m[idx]] * pv[sidx[idx]]
        if model is RmfModel.RADEMACHER:
            vals[bad[idx]] = 0.0
        f[idx] = vals
    return f


def _checkpoint_sums(f: np.ndarray, checkpoints: np.ndarray) -> np.ndarray:
    """Prefix sums of f over 1..c for each checkpoint (rows = trials)."""
    starts = np.concatenate(([1], checkpoints[:-1] + 1))
    seg = np.add.reduceat(f[: checkpoints[-1] + 1], starts, axis=0)
    return np.cumsum(seg, axis=0).T


def _validate_checkpoints(checkpoints, x_max: int) -> np.ndarray:
    cps = np.asarray(checkpoints, dtype=np.int64)
    if cps.size == 0:
        raise ValueError("need at least one checkpoint")
    if np.any(cps[1:] <= cps[:-1]):
        raise ValueError("checkpoints must be strictly ascending")
    if cps[0] < 1 or cps[-1] > x_max:
        raise ValueError(f"checkpoints must lie in [1, {x_max}]")
    return cps


def batched_partial_sums(model: RmfModel, checkpoints, table: PrimeTable,
                         seed: int, trial_lo: int,
                         trial_hi: int) -> np.ndarray:
    """Partial sums S(c) for trials trial_lo..trial_hi-1 at each checkpoint.

    Returns an array of shape (trial_hi - trial_lo, len(checkpoints)),
    complex for Steinhaus and real for Rademacher. Each row is a function of
    (seed, trial) only, so any partition into batches or threads reproduces
    identical numbers.
    """
    cps = _validate_checkpoints(checkpoints, table.limit)
    x = int(cps[-1])
    plan = _sum_plan(table, x)
    cut = int(np.searchsorted(table.primes, x, side="right"))
    total = trial_hi - trial_lo
    if total <= 0:
        raise ValueError("empty trial range")
    out = np.zeros((total, cps.size), dtype=_values_dtype(model))
    step = max(1, min(4096, _BATCH_ELEMENTS // (x + 1)))
    for lo in range(trial_lo, trial_hi, step):
        hi = min(lo + step, trial_hi)
        pv = np.vstack([_draw_prime_values(model, cut, seed, t)
                        for t in range(lo, hi)])
        f = _batch_f_table(model, pv, plan)
        out[lo - trial_lo: hi - trial_lo] = _checkpoint_sums(f, cps)
    return out


def _sample_f_table(sample: RmfSample, x: int, table: PrimeTable) -> np.ndarray:
    if not 1 <= x <= sample.x_max:
        raise ValueError(f"x={x} outside [1, {sample.x_max}]")
    plan = _sum_plan(table, x)
    cut = int(np.searchsorted(sample.primes, x, side="right"))
    pv = sample.values[np.newaxis, :cut]
    return _batch_f_table(sample.model, pv, plan)[:, 0]


def partial_sum(sample: RmfSample, x: int, table: PrimeTable) -> complex:
    """S(x) = sum_{n <= x} f(n) for the given sample."""
    f = _sample_f_table(sample, x, table)
    return complex(_compensated_total(f[1:]))


def partial_sum_series(sample: RmfSample, checkpoints,
                       table: PrimeTable) -> PartialSumSeries:
    """S at every checkpoint from one ascending pass over n <= max(checkpoints)."""
    cps = _validate_checkpoints(checkpoints, sample.x_max)
    f = _sample_f_table(sample, int(cps[-1]), table)
    if cps[-1] > 10**6:
        sums = _compensated_prefix(f, cps)
    else:
        sums = _checkpoint_sums(f[:, np.newaxis], cps)[0]
    return PartialSumSeries(checkpoints=tuple(int(c) for c in cps),
                            sums=tuple(complex(s) for s in sums))


def _compensated_total(values: np.ndarray) -> complex:
    """Two-level compensated sum: chunked reduction, fsum on top."""
    if values.size <= 2**16:
        total = values.sum()
        return complex(total)
    bounds = np.arange(0, values.size, 2**16)
    chunks = np.add.reduceat(values, bounds)
    if np.iscomplexobj(chunks):
        return complex(math.fsum(chunks.real.tolist()),
                       math.fsum(chunks.imag.tolist()))
    return complex(math.fsum(chunks.tolist()))


def _compensated_prefix(f: np.ndarray, cps: np.ndarray) -> list[complex]:
    out = []
    total = complex(0.0)
    prev = 1
    for c in cps.tolist():
        total += _compensated_total(f[prev: c + 1])
        out.append(total)
        prev = c + 1
    return out


def restricted_sum(sample: RmfSample, x: int, table: PrimeTable,
                   restriction: Restriction) -> complex:
    """Partial sum over n <= x satisfying the restriction predicate."""
    f = _sample_f_table(sample, x, table)
    lpf = _lpf_array(table, x).astype(np.int64)
    if restriction.kind == "large-prime-factor":
        mask = lpf * lpf > x  # P(n) > sqrt(x), integer-exact
        mask[1] = False  # P(1) = 1 is never > sqrt(x) for x >= 1
    elif restriction.kind == "smooth":
        mask = lpf <= restriction.y
        mask[1] = True
    elif restriction.kind == "factor-window":
        y1, y2 = restriction.window
        spf = table.spf[: x + 1]
        mask = (spf > y1) & (lpf <= y2)
        mask[1] = True  # empty product qualifies
    else:
        raise ValueError(f"unknown restriction kind {restriction.kind!r}")
    mask[0] = False
    return complex(f[mask[: x + 1]].sum())
