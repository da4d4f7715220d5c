"""Deterministic number-theoretic kernel.

Primes, factorization, smoothness predicates, prime sums, smooth-number and
prime-block counts. The central object is :class:`PrimeTable`, a
smallest-prime-factor sieve that makes factorization of any n up to the sieve
limit cost O(number of prime factors), which is what the Monte Carlo loops
elsewhere in the package rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "PrimeTable",
    "Factorization",
    "build_prime_table",
    "factorize",
    "largest_prime_factor",
    "is_squarefree",
    "is_smooth",
    "primes_between",
    "prime_power_sum",
    "smooth_count",
    "squarefree_count",
    "prime_block_count",
]

# The sieve stores one int32 per integer: ~4 bytes * limit. A limit of 1e8
# therefore needs ~0.4 GiB and is the intended desk-scale ceiling; int32
# indexing caps the hard bound below 2^31.
MAX_SIEVE_LIMIT = 2**31 - 1

PRIME_SUM_WEIGHTS = ("one", "cos", "cos2", "logp")


@dataclass
class PrimeTable:
    """Smallest-prime-factor sieve up to ``limit``.

    Attributes
    ----------
    limit : int
        Largest integer covered by the sieve.
    primes : numpy.ndarray
        All primes <= limit, ascending (int64).
    spf : numpy.ndarray
        ``spf[n]`` is the smallest prime factor of n for 2 <= n <= limit
        (int32). Entries 0 and 1 are unused.

    The table is immutable after construction and safe to share across
    threads; the private cache only memoizes derived read-only arrays.
    """

    limit: int
    primes: np.ndarray
    spf: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)


@dataclass(frozen=True)
class Factorization:
    """Prime factorization as ascending (prime, exponent) pairs."""

    pairs: tuple[tuple[int, int], ...]

    @property
    def value(self) -> int:
        out = 1
        for p, a in self.pairs:
            out *= p**a
        return out


def build_prime_table(limit: int) -> PrimeTable:
    """Sieve smallest prime factors for all integers up to ``limit``.

    Raises
    ------
    ValueError
        If ``limit`` < 2 or exceeds the int32 sieve bound.
    MemoryError
        If the sieve cannot be allocated; the message reports the size.
    """
    if limit < 2:
        raise ValueError(f"limit must be >= 2, got {limit}")
    if limit > MAX_SIEVE_LIMIT:
        raise ValueError(
            f"limit {limit} exceeds the int32 sieve bound {MAX_SIEVE_LIMIT}")
    try:
        spf = np.zeros(limit + 1, dtype=np.int32)
    except MemoryError as exc:
        need = 4 * (limit + 1) / 2**30
        raise MemoryError(
            f"cannot allocate prime sieve for limit={limit} "
            f"(~{need:.2f} GiB required)") from exc
    for p in range(2, math.isqrt(limit) + 1):
        if spf[p] == 0:
            block = spf[p * p:: p]
            block[block == 0] = p
    # Entries still unmarked are exactly the primes: every composite n has a
    # prime factor <= sqrt(n) <= sqrt(limit) and was marked above.
    primes = (np.flatnonzero(spf[2:] == 0) + 2).astype(np.int64)
    spf[primes] = primes
    return PrimeTable(limit=int(limit), primes=primes, spf=spf)


def _check_n(table: PrimeTable, n: int) -> None:
    if not 1 <= n <= table.limit:
        raise ValueError(f"n={n} outside [1, {table.limit}]")


def factorize(table: PrimeTable, n: int) -> Factorization:
    """Factor n into ascending (prime, exponent) pairs; n=1 gives ()."""
    _check_n(table, n)
    pairs = []
    spf = table.spf
    m = n
    while m > 1:
        p = int(spf[m])
        a = 0
        while m % p == 0:
            m //= p
            a += 1
        pairs.append((p, a))
    return Factorization(tuple(pairs))


def largest_prime_factor(table: PrimeTable, n: int) -> int:
    """Largest prime factor of n, with the convention P(1) = 1."""
    _check_n(table, n)
    if n == 1:
        return 1
    spf = table.spf
    m = n
    p = 1
    while m > 1:
        p = int(spf[m])
        while m % p == 0:
            m //= p
    return p


def is_squarefree(table: PrimeTable, n: int) -> bool:
    """True if no prime divides n more than once (n=1 is squarefree)."""
    _check_n(table, n)
    spf = table.spf
    m = n
    while m > 1:
        p = int(spf[m])
        m //= p
        if m % p == 0:
            return False
    return True


def is_smooth(table: PrimeTable, n: int, y: float) -> bool:
    """True if every prime factor of n is <= y; n=1 is smooth for y >= 1."""
    _check_n(table, n)
    if y < 1:
        raise ValueError(f"smoothness bound must be >= 1, got {y}")
    m = n
    spf = table.spf
    while m > 1:
        p = int(spf[m])
        if p > y:
            return False
        while m % p == 0:
            m //= p
    return True


def primes_between(table: PrimeTable, lo: float, hi: float) -> np.ndarray:
    """Primes p with lo < p <= hi, ascending. Bounds may be non-integer."""
    if hi > table.limit:
        raise ValueError(f"upper bound {hi} exceeds table limit {table.limit}")
    primes = table.primes
    i = int(np.searchsorted(primes, lo, side="right"))
    j = int(np.searchsorted(primes, hi, side="right"))
    return primes[i:j]


def prime_power_sum(table: PrimeTable, x0: float, y: float, sigma: float,
                    t: float, weight: str = "one") -> float:
    """Compensated sum of w(p) / p^(1+2*sigma) over primes x0 < p <= y.

    ``weight`` selects w(p) from {1, cos(t log p), cos(2 t log p), log p}
    via the keys "one", "cos", "cos2", "logp". Terms are accumulated in
    ascending p with error-free (fsum) summation so that exp(sum) values
    derived downstream are reproducible at 1e-12 relative tolerance.
    """
    if not 1 <= x0 <= y or y > table.limit:
        raise ValueError(
            f"need 1 <= x0 <= y <= {table.limit}, got x0={x0}, y={y}")
    if y >= 3 and sigma < -1.0 / math.log(y):
        raise ValueError(
            f"sigma={sigma} below the admissible bound -1/log(y)={-1.0 / math.log(y):.6f}")
    if weight not in PRIME_SUM_WEIGHTS:
        raise ValueError(f"unknown weight {weight!r}; expected one of {PRIME_SUM_WEIGHTS}")
    ps = primes_between(table, x0, y)
    if ps.size == 0:
        return 0.0
    logp = np.log(ps.astype(np.float64))
    base = np.exp(-(1.0 + 2.0 * sigma) * logp)
    if weight == "one":
        terms = base
    elif weight == "cos":
        terms = base * np.cos(t * logp)
    elif weight == "cos2":
        terms = base * np.cos(2.0 * t * logp)
    else:
        terms = base * logp
    return math.fsum(terms.tolist())


def _lpf_array(table: PrimeTable, x: int) -> np.ndarray:
    """Largest-prime-factor array for 1..x (index 0 unused, lpf[1] = 1).

    Built by overwriting multiples with each prime in ascending order, so the
    final writer of any slot is its largest prime factor. Cached on the table
    keyed by size; a request smaller than the cached array returns a view.
    """
    cached = table._cache.get("lpf")
    if cached is None or cached.size < x + 1:
        arr = np.zeros(x + 1, dtype=np.int32)
        if x >= 1:
            arr[1] = 1
        for p in table.primes[table.primes <= x].tolist():
            arr[p::p] = p
        table._cache["lpf"] = arr
        cached = arr
    return cached[: x + 1]


def smooth_count(table: PrimeTable, x: int, y: float) -> int:
    """Exact count of y-smooth integers n <= x (n=1 counts for any y >= 1)."""
    if not 1 <= x <= table.limit:
        raise ValueError(f"x={x} outside [1, {table.limit}]")
    if y < 1:
        raise ValueError(f"smoothness bound must be >= 1, got {y}")
    lpf = _lpf_array(table, x)
    return int(np.count_nonzero(lpf[1:] <= y))


def squarefree_count(table: PrimeTable, x: int) -> int:
    """Exact count of squarefree integers in [1, x] by sieving p^2 multiples."""
    if not 1 <= x <= table.limit:
        raise ValueError(f"x={x} outside [1, {table.limit}]")
    mask = np.ones(x + 1, dtype=bool)
    mask[0] = False
    for p in table.primes[table.primes.astype(np.int64) ** 2 <= x].tolist():
        mask[p * p:: p * p] = False
    return int(np.count_nonzero(mask))


def prime_block_count(table: PrimeTable, x: int, k: int) -> int:
    """Count d <= x all of whose prime factors lie in (x^(1/e^(k+1)), x^(1/e^k)].

    d = 1 (empty product) is always counted. The admissible range for k is
    0 <= k <= loglog x + 5: wide enough to keep every block that can still
    contain primes at desk scale while rejecting runaway indices.
    """
    if not 2 <= x <= table.limit:
        raise ValueError(f"x={x} outside [2, {table.limit}]")
    llx = math.log(math.log(x))
    if not 0 <= k <= llx + 5:
        raise ValueError(f"k={k} outside [0, loglog x + 5] = [0, {llx + 5:.3f}]")
    hi = float(x) ** math.exp(-float(k))
    lo = float(x) ** math.exp(-(k + 1.0))
    lpf = _lpf_array(table, x)
    spf = table.spf[: x + 1]
    mask = (spf[2:] > lo) & (lpf[2:] <= hi)
    return 1 + int(np.count_nonzero(mask))
