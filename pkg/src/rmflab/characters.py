"""Dirichlet-character moment averages as exact finite models.

For a prime p, the multiplicative group mod p is cyclic; every character is
chi_j(n) = exp(2*pi*i * j * dlog(n) / (p-1)) for a fixed primitive root g,
where dlog is the discrete logarithm base g. Averaging |sum_{n<=x} chi(n)|^{2q}
over all p-1 characters gives a finite analogue of the Steinhaus moment
E|S(x)|^{2q}; as p grows the average converges to the Steinhaus value.

The whole character average is one FFT: bucket n <= x by dlog(n) into counts
c[e], then sum_{n<=x} chi_j(n) = hat{c}(j) and the average of |.|^{2q} is the
mean of |fft(c)|^{2q}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CharacterTable",
    "build_character_table",
    "char_sum_moment",
]

MAX_CHARACTER_PRIME = 10**6


@dataclass
class CharacterTable:
    """Discrete logarithms mod a prime p to the least primitive root g.

    dlog has length p with dlog[0] = -1 (undefined) and dlog[g^e mod p] = e
    for e in 0..p-2. In particular dlog[1] = 0.
    """

    p: int
    g: int
    dlog: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    for q in range(2, math.isqrt(n) + 1):
        if n % q == 0:
            return False
    return True


def _factor_small(n: int) -> list[int]:
    """Distinct prime factors by trial division (n fits well under 2**40)."""
    out = []
    d = 2
    while d * d <= n:
        if n % d == 0:
            out.append(d)
            while n % d == 0:
                n //= d
        d += 1
    if n > 1:
        out.append(n)
    return out


def _least_primitive_root(p: int) -> int:
    if p == 2:
        return 1
    order_factors = _factor_small(p - 1)
    for g in range(2, p):
        if all(pow(g, (p - 1) // q, p) != 1 for q in order_factors):
            return g
    raise RuntimeError(f"no primitive root found mod {p}")  # unreachable


def build_character_table(p: int) -> CharacterTable:
    """Least primitive root and full discrete-log table mod p.

    p must be an odd prime, 3 <= p <= 10**6 (the table is dense in p).
    """
    if not 3 <= p <= MAX_CHARACTER_PRIME:
        raise ValueError(f"p={p} outside [3, {MAX_CHARACTER_PRIME}]")
    if not _is_prime(p):
        raise ValueError(f"p={p} is not prime")
    g = _least_primitive_root(p)
    dlog = np.full(p, -1, dtype=np.int64)
    acc = 1
    for e in range(p - 1):
        dlog[acc] = e
        acc = (acc * g) % p
    return CharacterTable(p=p, g=g, dlog=dlog)


def char_sum_moment(table: CharacterTable, x: int, q: float) -> float:
    """Average of |sum_{n<=x} chi(n)|^{2q} over all characters mod p.

    Requires 1 <= x < p and 0 <= q <= 1. For q = 0 the average is exactly 1
    (taking 0^0 = 1). For q = 1 Parseval collapses the average to the integer
    sum_e c[e]^2 where c[e] = #{n <= x : dlog(n) = e}; since x < p no two
    n <= x can share a discrete log, so that sum is exactly x.
    """
    if not 1 <= x < table.p:
        raise ValueError(f"x={x} outside [1, {table.p - 1}]")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q={q} outside [0, 1]")
    if q == 0.0:
        return 1.0
    counts = np.bincount(table.dlog[1: x + 1], minlength=table.p - 1)
    if q == 1.0:
        # exact integer path, no FFT roundoff; sum c^2 <= x^2 fits in int64
        return float(np.sum(counts * counts))
    spectrum = np.fft.fft(counts.astype(np.float64))
    power = np.abs(spectrum) ** 2
    return float(np.mean(power**q))
