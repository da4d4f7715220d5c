"""Importance-sampling change-of-measure tests.

The tilted estimator is exact on the full space and additive over
complementary events, so those two identities anchor the weights before
any distributional comparison. Gaussian references are rebuilt here from
prime sums rather than taken from the module under test.
"""

import math

import numpy as np
import pytest

from rmflab.numtheory import prime_power_sum
from rmflab.products import increment_window, window_mean_square
from rmflab.rmf import RmfModel
from rmflab.tilt import (
    BandEvent,
    TiltSpec,
    UnstableEstimateError,
    equal_mass_windows,
    gaussian_band_reference,
    girsanov_compare,
    tilted_probability,
    tilted_statistic_means,
    weight_mean_exact,
)

X = 10**4
SIGMA = 2.0 / math.log(X)


@pytest.fixture(scope="module")
def window(table_1e4):
    return increment_window(X, 0)


@pytest.fixture(scope="module")
def one_scale():
    return TiltSpec.from_scales(RmfModel.STEINHAUS, X, SIGMA, (0,))


def test_full_space_probability_is_one(one_scale, table_1e4):
    est = tilted_probability(one_scale, BandEvent.full_space(1), 1000, 0, table_1e4)
    assert est.estimate == 1.0
    assert est.stderr == 0.0


def test_complementary_corridors_sum_to_one(one_scale, table_1e4):
    cut = 0.1
    below = BandEvent(kind="corridor", lower=(-math.inf,), upper=(cut,))
    above = BandEvent(kind="corridor", lower=(cut,), upper=(math.inf,))
    p_below = tilted_probability(one_scale, below, 2000, 3, table_1e4).estimate
    p_above = tilted_probability(one_scale, above, 2000, 3, table_1e4).estimate
    assert p_below + p_above == pytest.approx(1.0, abs=1e-12)


def test_weight_mean_closed_form(one_scale, window, table_1e4):
    # E[W] is the window mean square of the tilting product itself
    lo, hi = window
    expected = window_mean_square(
        RmfModel.STEINHAUS, lo, hi, SIGMA, 0.0, table_1e4, power=2)
    assert weight_mean_exact(one_scale, table_1e4) == pytest.approx(expected, rel=1e-12)
    rad = TiltSpec.from_scales(RmfModel.RADEMACHER, X, SIGMA, (0,))
    expected_rad = window_mean_square(
        RmfModel.RADEMACHER, lo, hi, SIGMA, 0.0, table_1e4, power=2)
    assert weight_mean_exact(rad, table_1e4) == pytest.approx(expected_rad, rel=1e-12)


def test_tilt_shifts_the_statistic_mean(window, table_1e4):
    # under the weighted law the window statistic centers on the prime sum
    # sum cos(t_j log p) / p^(1+2 sigma); the plain law centers on zero
    lo, hi = window
    spec = TiltSpec(model=RmfModel.STEINHAUS, x=X, sigma=SIGMA,
                    windows=((lo, hi),), t_points=(0.4,))
    target = prime_power_sum(table_1e4, lo, hi, SIGMA, 0.4, "cos")
    means, ses = tilted_statistic_means(spec, 4000, 1, table_1e4)
    assert abs(means[0] - target) <= 4.0 * ses[0] + 0.1 * abs(target)
    plain, plain_ses = tilted_statistic_means(spec, 4000, 1, table_1e4, weighted=False)
    assert abs(plain[0]) <= 4.0 * plain_ses[0]


def test_gaussian_reference_anchors(window, table_1e4):
    lo, hi = window
    spec = TiltSpec(model=RmfModel.STEINHAUS, x=X, sigma=SIGMA,
                    windows=((lo, hi),), t_points=(0.0,))
    assert gaussian_band_reference(spec, BandEvent.full_space(1), table_1e4) == 1.0
    mean = prime_power_sum(table_1e4, lo, hi, SIGMA, 0.0, "cos")
    sd = math.sqrt(prime_power_sum(table_1e4, lo, hi, SIGMA, 0.0, "one") / 2.0)
    one_sd = BandEvent(kind="corridor", lower=(mean - sd,), upper=(mean + sd,))
    assert gaussian_band_reference(spec, one_sd, table_1e4) == pytest.approx(
        0.6826894921370859, abs=1e-9)


def test_steinhaus_band_comparison(one_scale, window, table_1e4):
    lo, hi = window
    mean = prime_power_sum(table_1e4, lo, hi, SIGMA, 0.0, "cos")
    # unit-width band (the scale-1 admissible width) straddling the mean
    event = BandEvent(kind="increment", lower=(mean - 0.5,), upper=(mean + 0.5,))
    cmp = girsanov_compare(one_scale, event, 4000, table_1e4, stream=7)
    assert cmp.passed
    assert 0.25 <= cmp.ratio <= 4.0


def test_rademacher_corridor_comparison(window, table_1e4):
    lo, hi = window
    t = 0.3
    spec = TiltSpec.from_scales(RmfModel.RADEMACHER, X, SIGMA, (0,), t=t)
    mean = (prime_power_sum(table_1e4, lo, hi, SIGMA, 2.0 * t, "cos")
            + prime_power_sum(table_1e4, lo, hi, SIGMA, 0.0, "cos")
            - 0.5 * prime_power_sum(table_1e4, lo, hi, SIGMA, t, "cos2"))
    sd = math.sqrt(0.5 * (prime_power_sum(table_1e4, lo, hi, SIGMA, 0.0, "one")
                          + prime_power_sum(table_1e4, lo, hi, SIGMA, 2.0 * t, "cos")))
    event = BandEvent(kind="corridor",
                      lower=(mean - 1.5 * sd,), upper=(mean + 1.5 * sd,))
    cmp = girsanov_compare(spec, event, 4000, table_1e4, stream=2)
    assert cmp.passed
    assert 0.25 <= cmp.ratio <= 4.0


def _two_product_specs(table):
    # (100, 878] at shift t = 20 leaves the two copies nearly uncorrelated:
    # |cov| / var < 1e-2
    sigma = 2.0 / math.log(10**6)
    windows = ((100.0, 878.0),)
    common = dict(model=RmfModel.STEINHAUS, x=10**6, sigma=sigma,
                  windows=windows, t_points=(0.0,), t=20.0)
    return (TiltSpec(dimension=2, **common), TiltSpec(dimension=1, **common))


def test_two_product_reference_factorizes(table_1e6):
    spec2, spec1 = _two_product_specs(table_1e6)
    corridor = BandEvent(kind="corridor", lower=(-math.inf,), upper=(0.4,))
    r2 = gaussian_band_reference(spec2, corridor, table_1e6)
    r1 = gaussian_band_reference(spec1, corridor, table_1e6)
    assert r2 == pytest.approx(r1 * r1, rel=0.02)
    mean = prime_power_sum(table_1e6, 100.0, 878.0, spec2.sigma, 0.0, "cos")
    bands = BandEvent(kind="increment", lower=(mean - 0.5,), upper=(mean + 0.5,))
    b2 = gaussian_band_reference(spec2, bands, table_1e6)
    b1 = gaussian_band_reference(spec1, bands, table_1e6)
    assert b2 == pytest.approx(b1 * b1, rel=0.02)


def test_two_product_corridor_comparison(table_1e6):
    spec2, _ = _two_product_specs(table_1e6)
    corridor = BandEvent(kind="corridor", lower=(-math.inf,), upper=(0.4,))
    cmp = girsanov_compare(spec2, corridor, 4000, table_1e6, stream=3)
    assert cmp.passed
    assert 0.25 <= cmp.ratio <= 4.0


def test_low_effective_sample_size_raises(table_1e6):
    # a near-zero shift makes the two tilting factors coincide, doubling
    # the log weight and collapsing the effective sample size
    sigma = 2.0 / math.log(10**6)
    windows = equal_mass_windows(table_1e6, 4.0, 878.0, 2, sigma=0.0)
    spec = TiltSpec(model=RmfModel.STEINHAUS, x=10**6, sigma=sigma,
                    windows=windows, t_points=(0.0, 0.0), t=1e-6, dimension=2)
    with pytest.raises(UnstableEstimateError) as err:
        tilted_probability(spec, BandEvent.full_space(2), 1000, 0, table_1e6)
    assert err.value.ess < 50.0


def test_equal_mass_windows_partition(table_1e6):
    windows = equal_mass_windows(table_1e6, 4.0, 878.0, 4, sigma=0.0)
    assert len(windows) == 4
    assert windows[0][0] == 4.0 and windows[-1][1] == 878.0
    for (_, hi_prev), (lo_next, _) in zip(windows[:-1], windows[1:]):
        assert hi_prev == lo_next
    masses = [prime_power_sum(table_1e6, lo, hi, 0.0, 0.0, "one")
              for lo, hi in windows]
    assert max(masses) <= 2.0 * min(masses)


def test_spec_validation(window, table_1e4):
    lo, hi = window
    with pytest.raises(ValueError, match="decreas"):
        TiltSpec.from_scales(RmfModel.STEINHAUS, X, SIGMA, (0, 0))
    with pytest.raises(ValueError, match="loglog"):
        TiltSpec.from_scales(RmfModel.STEINHAUS, X, SIGMA, (5, 0))
    with pytest.raises(ValueError, match="sigma"):
        TiltSpec(model=RmfModel.STEINHAUS, x=X, sigma=0.9,
                 windows=((lo, hi),), t_points=(0.0,))
    with pytest.raises(ValueError, match="Steinhaus"):
        TiltSpec(model=RmfModel.RADEMACHER, x=X, sigma=SIGMA,
                 windows=((lo, hi),), t_points=(0.0,), dimension=2)
    with pytest.raises(ValueError, match="empty"):
        BandEvent(kind="corridor", lower=(1.0,), upper=(0.5,))


def test_event_validation(one_scale, table_1e4):
    wrong_width = BandEvent(kind="increment", lower=(0.0,), upper=(0.9,))
    with pytest.raises(ValueError, match="width"):
        tilted_probability(one_scale, wrong_width, 1000, 0, table_1e4)
    runaway = BandEvent.increment_bands((10.0,))
    with pytest.raises(ValueError, match="v"):
        tilted_probability(one_scale, runaway, 1000, 0, table_1e4)
    with pytest.raises(ValueError, match="trials"):
        tilted_probability(one_scale, BandEvent.full_space(1), 10, 0, table_1e4)


def test_increment_bands_constructor():
    event = BandEvent.increment_bands((0.25, -0.1))
    assert event.kind == "increment"
    assert event.lower == (0.25, -0.1)
    assert event.upper == (1.25, -0.1 + 0.25)
