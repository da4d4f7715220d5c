"""Euler-product window tests.

Oracle strategy: per-prime circle averages are recomputed here with a dense
trapezoid rule (spectrally accurate on these periodic integrands), window
anchors are checked against hand arithmetic, and every Monte Carlo path is
compared to the closed-form product it estimates.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmflab.numtheory import prime_power_sum, primes_between
from rmflab.products import (
    ChaosGrid,
    ProductSpec,
    ScaleEventSpec,
    chaos_integral,
    event_scales,
    increment_window,
    log_increment,
    log_product,
    mc_mean_square,
    mean_square_exact,
    parseval_check,
    scale_event_fail_prob,
    smooth_cap,
    t_ladder,
    two_point_mean_square,
    window_mean_square,
)
from rmflab.rmf import RmfModel, sample_rmf


def _windows(x):
    """All increment windows of x from the top (l = -1) down, high to low."""
    out = []
    l = -1
    while True:
        lo, hi = increment_window(x, l)
        if hi < 2.0:
            break
        out.append((lo, hi))
        l += 1
    return out


def test_smooth_cap_top_is_the_integer_itself():
    # regression: exp(log(x) * e^0) used to land a hair above x and fall
    # outside the prime table
    assert smooth_cap(10**4, -1) == 10000.0
    assert smooth_cap(997, -1) == 997.0


def test_increment_windows_tile_the_range():
    x = 10**4
    wins = _windows(x)
    assert wins[0][1] == float(x)
    for (lo_hi, _), (_, hi_lo) in zip(wins[:-1], wins[1:]):
        assert lo_hi == hi_lo
    assert wins[-1][0] < 2.0 or not wins


@pytest.mark.parametrize(
    "model, power, expected",
    [
        (RmfModel.STEINHAUS, 2, 1.25),
        (RmfModel.STEINHAUS, -2, 1.2),
        (RmfModel.RADEMACHER, 2, 1.2),
        (RmfModel.RADEMACHER, -2, 1.875),
    ],
)
def test_single_prime_window_anchors(table_1e4, model, power, expected):
    # window holding only p = 5, at sigma = t = 0
    value = window_mean_square(model, 4.5, 5.5, 0.0, 0.0, table_1e4, power=power)
    assert value == pytest.approx(expected, rel=1e-12)


def test_rademacher_inverse_square_shape(table_1e4):
    # 0.5 * ((1+a)^-2 + (1-a)^-2) = (1+a^2) / (1-a^2)^2 with a = p^-(1/2+sigma)
    sigma = 0.2
    a = 7.0 ** -(0.5 + sigma)
    expected = (1.0 + a * a) / (1.0 - a * a) ** 2
    value = window_mean_square(
        RmfModel.RADEMACHER, 6.5, 7.5, sigma, 0.0, table_1e4, power=-2
    )
    assert value == pytest.approx(expected, rel=1e-12)


def test_empty_window_gives_unit_product(table_1e4):
    # (30.5, 30.9] holds no prime
    assert window_mean_square(RmfModel.STEINHAUS, 30.5, 30.9, 0.0, 0.0, table_1e4) == 1.0


def test_mean_square_factorizes_over_windows(table_1e4):
    x = 10**4
    spec = ProductSpec(model=RmfModel.STEINHAUS, x=x, sigma=2.0 / math.log(x))
    full = mean_square_exact(spec, table_1e4)
    prod = 1.0
    for lo, hi in _windows(x):
        prod *= window_mean_square(spec.model, lo, hi, spec.sigma, spec.t, table_1e4)
    assert prod == pytest.approx(full, rel=1e-12)


def test_log_product_sums_increments(table_1e4):
    x = 10**4
    spec = ProductSpec(model=RmfModel.STEINHAUS, x=x, sigma=2.0 / math.log(x))
    sample = sample_rmf(spec.model, x, table_1e4, (2, 9))
    total = log_product(sample, spec, table_1e4)
    acc = complex(0.0)
    l = -1
    while increment_window(x, l)[1] >= 2.0:
        acc += log_increment(sample, spec, l, table_1e4)
        l += 1
    assert abs(total - acc) <= 1e-12


def test_small_cap_product_is_trivial(table_1e4):
    spec = ProductSpec(model=RmfModel.STEINHAUS, x=16, sigma=0.3, k=1)
    assert smooth_cap(16, 1) < 2.0
    assert mean_square_exact(spec, table_1e4) == 1.0
    sample = sample_rmf(spec.model, 16, table_1e4, (0, 0))
    assert log_product(sample, spec, table_1e4) == complex(0.0)


def test_mc_mean_square_matches_exact(table_1e4):
    x = 1000
    spec = ProductSpec(model=RmfModel.STEINHAUS, x=x, sigma=2.0 / math.log(x))
    exact = mean_square_exact(spec, table_1e4)
    est = mc_mean_square(spec, 2000, table_1e4, seed=2)
    assert abs(est.estimate - exact) <= 3.0 * est.stderr + 0.05 * exact


def test_two_point_matches_dense_quadrature(table_1e4):
    # independent oracle: 4096-node trapezoid per prime instead of 64/256
    x, sigma, gap = 100, 0.1, 0.3
    spec = ProductSpec(model=RmfModel.STEINHAUS, x=x, sigma=sigma)
    value = two_point_mean_square(spec, gap, table_1e4)
    theta = 2.0 * np.pi * np.arange(4096) / 4096
    z = np.exp(1j * theta)
    acc = 0.0
    for p in primes_between(table_1e4, 1.0, smooth_cap(x, -1)).astype(float):
        a = p ** -(0.5 + sigma)
        w2 = np.exp(-1j * gap * math.log(p))
        g = 1.0 / (np.abs(1.0 - a * z) ** 2 * np.abs(1.0 - a * z * w2) ** 2)
        acc += math.log(g.mean())
    assert value == pytest.approx(math.exp(acc), rel=1e-12)


def test_two_point_zero_gap_dominates_squared_mean(table_1e4):
    spec = ProductSpec(model=RmfModel.STEINHAUS, x=100, sigma=0.1)
    fourth = two_point_mean_square(spec, 0.0, table_1e4)
    second = mean_square_exact(spec, table_1e4)
    assert fourth >= second * second


def test_two_point_decorrelated_prime_factor(table_1e4):
    # with cos(gap * log 7) = 0 the p = 7 factor loses its cross term and
    # sits within a few percent of exp(2 / 7)
    gap = (math.pi / 2.0) / math.log(7.0)
    top = two_point_mean_square(
        ProductSpec(model=RmfModel.STEINHAUS, x=7, sigma=0.0), gap, table_1e4
    )
    base = two_point_mean_square(
        ProductSpec(model=RmfModel.STEINHAUS, x=5, sigma=0.0), gap, table_1e4
    )
    assert top / base == pytest.approx(math.exp(2.0 / 7.0), rel=0.03)


def test_two_point_rademacher_runs(table_1e4):
    spec = ProductSpec(model=RmfModel.RADEMACHER, x=100, sigma=0.1)
    value = two_point_mean_square(spec, 0.5, table_1e4)
    assert math.isfinite(value) and value > 0.0


def test_t_ladder_first_rung_frozen():
    x = 10**6
    lx = math.log(x)
    d0 = (lx / math.e) * math.log(lx / math.e)
    rung = t_ladder(x, 0.25, 1)[0]
    assert rung == math.floor(0.25 * d0) / d0
    assert rung == pytest.approx(0.24204302896867108, abs=0.0)


def test_t_ladder_validation():
    with pytest.raises(ValueError):
        t_ladder(10**6, 1.5, 1)
    with pytest.raises(ValueError):
        t_ladder(10**6, 0.1, 0)
    # loglog(1e6) - 2 < 1, so a second rung is out of range
    with pytest.raises(ValueError):
        t_ladder(10**6, 0.1, 2)


@settings(max_examples=60, deadline=None)
@given(t=st.floats(min_value=-1.0, max_value=1.0, allow_nan=False))
def test_t_ladder_rungs_track_target(t):
    x = 10**100
    lx = math.log(x)
    rungs = t_ladder(x, t, 4)
    prev = t
    for j, rung in enumerate(rungs):
        d = (lx / math.e ** (j + 1)) * math.log(lx / math.e ** (j + 1))
        assert rung <= prev + 1e-15
        assert t - rung <= 2.0 / d + 1e-12
        prev = rung


def test_scale_event_flat_levels(table_1e4):
    wide = ScaleEventSpec(
        model=RmfModel.STEINHAUS, x=10**4, kind="product-barrier",
        lower_level=-1e9, upper_level=1e9,
    )
    assert scale_event_fail_prob(wide, 50, table_1e4, seed=0).estimate == 0.0
    impossible = ScaleEventSpec(
        model=RmfModel.STEINHAUS, x=10**4, kind="product-barrier",
        lower_level=-1e9, upper_level=-1e8,
    )
    assert scale_event_fail_prob(impossible, 50, table_1e4, seed=0).estimate == 1.0


def test_product_barrier_failure_is_rare(table_1e6):
    # per-rung failure bound exp(-2C min(sqrt(loglog x), 1/(1-q))) ~ 0.039
    # at these settings; 200 trials should see (almost) none
    event = ScaleEventSpec(
        model=RmfModel.STEINHAUS, x=10**6, kind="product-barrier",
        B=0, C=2.0, q=0.75,
    )
    est = scale_event_fail_prob(event, 200, table_1e6, seed=4)
    assert est.estimate <= 0.05


def test_weighted_band_needs_explicit_range_at_small_x(table_1e4):
    event = ScaleEventSpec(model=RmfModel.STEINHAUS, x=10**4, kind="weighted-band")
    with pytest.raises(ValueError, match="j_lo"):
        event_scales(event)
    overridden = ScaleEventSpec(
        model=RmfModel.STEINHAUS, x=10**4, kind="weighted-band", j_lo=0, j_hi=0,
    )
    est = scale_event_fail_prob(overridden, 50, table_1e4, seed=1)
    assert 0.0 <= est.estimate <= 1.0


def test_scale_event_kind_validation():
    with pytest.raises(ValueError, match="kind"):
        ScaleEventSpec(model=RmfModel.STEINHAUS, x=10**4, kind="sideways")
    with pytest.raises(ValueError):
        ScaleEventSpec(
            model=RmfModel.STEINHAUS, x=10**4, kind="product-barrier", t=0.7
        )


def test_chaos_integral_of_trivial_product(table_1e4):
    # cap below 2 leaves no primes, so the squared product is 1 everywhere
    spec = ProductSpec(model=RmfModel.STEINHAUS, x=16, sigma=0.3, k=1)
    sample = sample_rmf(spec.model, 16, table_1e4, (0, 0))
    value = chaos_integral(sample, spec, -0.1, 0.4, 0.01, table_1e4)
    assert value == pytest.approx(0.5, rel=1e-12)


def test_chaos_integral_grid_refinement(table_1e4):
    x = 1000
    lx = math.log(x)
    spec = ProductSpec(model=RmfModel.STEINHAUS, x=x, sigma=40.0 / lx, k=0)
    sample = sample_rmf(spec.model, x, table_1e4, (3, 7))
    coarse = chaos_integral(sample, spec, -0.5, 0.5, 1.0 / (10.0 * lx), table_1e4)
    fine = chaos_integral(sample, spec, -0.5, 0.5, 0.5 / (10.0 * lx), table_1e4)
    assert abs(coarse - fine) <= 0.01 * abs(coarse)


def test_chaos_integral_mean_matches_exact_product(table_1e4):
    # Fubini: E of the integral is the integration range times E|F|^2,
    # which is t-independent for Steinhaus
    x = 1000
    lx = math.log(x)
    spec = ProductSpec(model=RmfModel.STEINHAUS, x=x, sigma=40.0 / lx, k=0)
    lo, hi = -0.25, 0.25
    values = np.array([
        chaos_integral(
            sample_rmf(spec.model, x, table_1e4, (11, trial)),
            spec, lo, hi, 1.0 / (10.0 * lx), table_1e4,
        ) / (hi - lo)
        for trial in range(150)
    ])
    exact = mean_square_exact(spec, table_1e4)
    se = values.std(ddof=1) / math.sqrt(values.size)
    assert abs(values.mean() - exact) <= 3.0 * se + 0.01 * exact


def test_chaos_integral_rademacher_runs(table_1e4):
    x = 1000
    lx = math.log(x)
    spec = ProductSpec(model=RmfModel.RADEMACHER, x=x, sigma=40.0 / lx, k=0)
    sample = sample_rmf(spec.model, x, table_1e4, (5, 1))
    value = chaos_integral(sample, spec, -0.2, 0.2, 1.0 / (10.0 * lx), table_1e4)
    assert math.isfinite(value) and value > 0.0


def test_parseval_one_term_is_exact(table_1e4):
    # restricting carriers to n = 1 leaves |A(1)|^2 / (2 sigma) = 5 exactly
    sample = sample_rmf(RmfModel.STEINHAUS, 100, table_1e4, (1, 0))
    lhs, rhs = parseval_check(sample, 100, 0.1, table_1e4, x_cap=1)
    assert lhs == 5.0
    # the truncated integral side only carries the documented 1/(pi t_max) tail
    assert rhs == pytest.approx(5.0, abs=2.0 / (math.pi * 200.0))


def test_parseval_sides_agree(table_1e4):
    sample = sample_rmf(RmfModel.STEINHAUS, 100, table_1e4, (1, 0))
    lhs, rhs = parseval_check(sample, 100, 0.1, table_1e4)
    assert rhs == pytest.approx(lhs, rel=0.01)


def test_parseval_integral_stable_under_longer_range(table_1e4):
    sample = sample_rmf(RmfModel.RADEMACHER, 80, table_1e4, (6, 3))
    _, rhs_short = parseval_check(sample, 80, 0.1, table_1e4, t_max=200.0)
    _, rhs_long = parseval_check(sample, 80, 0.1, table_1e4, t_max=400.0)
    assert abs(rhs_long - rhs_short) <= 0.002 * abs(rhs_short)


def test_parseval_rejects_nonpositive_sigma(table_1e4):
    sample = sample_rmf(RmfModel.STEINHAUS, 100, table_1e4, (1, 0))
    with pytest.raises(ValueError):
        parseval_check(sample, 100, 0.0, table_1e4)


def test_rotation_invariance_of_steinhaus_mean_square(table_1e4):
    # multiplying each f(p) by p^-it is a measure-preserving rotation, so
    # the Monte Carlo mean square cannot depend on t
    x = 1000
    sigma = 2.0 / math.log(x)
    still = mc_mean_square(
        ProductSpec(model=RmfModel.STEINHAUS, x=x, sigma=sigma, t=0.0),
        2000, table_1e4, seed=2,
    )
    shifted = mc_mean_square(
        ProductSpec(model=RmfModel.STEINHAUS, x=x, sigma=sigma, t=0.3),
        2000, table_1e4, seed=2,
    )
    gap = abs(still.estimate - shifted.estimate)
    assert gap <= 4.0 * math.hypot(still.stderr, shifted.stderr)


def _increment_reals(model, spec, l, table, trials, seed):
    return np.array([
        log_increment(sample_rmf(model, spec.x, table, (seed, trial)), spec, l, table).real
        for trial in range(trials)
    ])


def test_disjoint_increments_are_uncorrelated(table_1e4):
    x = 10**4
    spec = ProductSpec(model=RmfModel.STEINHAUS, x=x, sigma=2.0 / math.log(x))
    first = _increment_reals(spec.model, spec, 0, table_1e4, 400, 5)
    second = _increment_reals(spec.model, spec, 1, table_1e4, 400, 5)
    cov = float(np.cov(first, second)[0, 1])
    se = math.sqrt(first.var(ddof=1) * second.var(ddof=1) / first.size)
    assert abs(cov) <= 4.0 * se


def test_increment_variance_matches_prime_sum(table_1e4):
    # Var Re log I ~ sum over the window of p^-(1+2 sigma) / 2
    x = 10**4
    spec = ProductSpec(model=RmfModel.STEINHAUS, x=x, sigma=2.0 / math.log(x))
    lo, hi = increment_window(x, 0)
    values = _increment_reals(spec.model, spec, 0, table_1e4, 400, 5)
    target = prime_power_sum(table_1e4, lo, hi, spec.sigma, 0.0, "one") / 2.0
    sample_se = values.var(ddof=1) * math.sqrt(2.0 / (values.size - 1))
    assert abs(values.var(ddof=1) - target) <= 0.05 * target + 3.0 * sample_se


def test_increment_means_match_circle_averages(table_1e4):
    # Steinhaus: the circle average of log|1 - a e^(i theta)| vanishes for
    # a < 1. Rademacher: the two-sign average is (log(1+a) + log(1-a)) / 2.
    x = 10**4
    spec = ProductSpec(model=RmfModel.STEINHAUS, x=x, sigma=2.0 / math.log(x))
    lo, hi = increment_window(x, 0)
    st_values = _increment_reals(RmfModel.STEINHAUS, spec, 0, table_1e4, 400, 5)
    st_se = st_values.std(ddof=1) / math.sqrt(st_values.size)
    assert abs(st_values.mean()) <= 4.0 * st_se

    primes = primes_between(table_1e4, lo, hi).astype(float)
    a = primes ** -(0.5 + spec.sigma)
    oracle = float(np.sum(0.5 * (np.log1p(a) + np.log1p(-a))))
    rad_values = _increment_reals(RmfModel.RADEMACHER, spec, 0, table_1e4, 400, 5)
    rad_se = rad_values.std(ddof=1) / math.sqrt(rad_values.size)
    assert rad_values.mean() == pytest.approx(oracle, abs=4.0 * rad_se)
