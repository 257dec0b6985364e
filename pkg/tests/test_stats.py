import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heralded.stats import (
    PhotonNumberDistribution,
    PumpCalibration,
    SourceModel,
    pair_distribution,
    pair_pmf,
    sample_pair_count,
)


def test_vacuum_source():
    assert pair_pmf(SourceModel("poisson", 0.0), 0) == 1.0
    assert pair_pmf(SourceModel("poisson", 0.0), 3) == 0.0


def test_poisson_single_pair():
    expected = math.exp(-0.1) * 0.1
    assert pair_pmf(SourceModel("poisson", 0.1), 1) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.090483742, abs=1e-9)


def test_thermal_two_pairs():
    assert pair_pmf(SourceModel("thermal", 1.0), 2) == pytest.approx(1 / 2**3, rel=1e-12)


def test_negative_photon_number_rejected():
    with pytest.raises(ValueError):
        pair_pmf(SourceModel(), -1)


def test_invalid_source():
    with pytest.raises(ValueError):
        SourceModel("coherent", 0.1)
    with pytest.raises(ValueError):
        SourceModel("poisson", -0.1)


def test_pump_calibration():
    cal = PumpCalibration(slope=0.01, power=40.0)
    assert SourceModel.from_pump(cal).mean_pairs == pytest.approx(0.4)
    with pytest.raises(ValueError):
        PumpCalibration(slope=-1.0)


def test_pair_distribution_poisson():
    p = pair_distribution(SourceModel("poisson", 0.1), 10)
    assert p.truncation == 10
    assert p[0] == pytest.approx(0.904837, abs=1e-6)
    assert p.probs.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("kind", ["poisson", "thermal"])
def test_zero_mean_is_point_mass(kind):
    p = pair_distribution(SourceModel(kind, 0.0), 5)
    np.testing.assert_array_equal(p.probs, [1, 0, 0, 0, 0, 0])


def test_thermal_geometric_ratio():
    p = pair_distribution(SourceModel("thermal", 0.5), 30).probs
    np.testing.assert_allclose(p[1:] / p[:-1], 1 / 3, rtol=1e-12)


def test_tail_check_reports_mass():
    with pytest.raises(ValueError, match="tail mass"):
        pair_distribution(SourceModel("poisson", 5.0), 5)


def test_auto_truncation_meets_tolerance():
    p = pair_distribution(SourceModel("poisson", 2.0))
    tail = 1 - sum(math.exp(-2.0) * 2.0**n / math.factorial(n) for n in range(p.truncation + 1))
    assert tail < 1e-12


@given(mu=st.floats(0.0, 20.0), kind=st.sampled_from(["poisson", "thermal"]))
def test_pmf_normalised(mu, kind):
    model = SourceModel(kind, mu)
    # thermal tails are geometric; 2000 terms cover mu <= 20 to far below 1e-12
    total = pair_pmf(model, np.arange(2000)).sum()
    assert total == pytest.approx(1.0, abs=1e-10)


def test_distribution_type_invariants():
    with pytest.raises(ValueError):
        PhotonNumberDistribution([0.5, 0.4])
    with pytest.raises(ValueError):
        PhotonNumberDistribution([1.1, -0.1])
    signed = PhotonNumberDistribution([1.1, -0.1], signed=True)
    assert signed.probs.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        PhotonNumberDistribution([np.nan, 1.0])
    pm = PhotonNumberDistribution.point_mass(2, 4)
    assert pm.mean() == 2.0


def test_sample_vacuum():
    rng = np.random.default_rng(0)
    assert sample_pair_count(SourceModel("poisson", 0.0), rng) == 0
    assert not sample_pair_count(SourceModel("thermal", 0.0), rng, 1000).any()


def test_sample_determinism():
    model = SourceModel("poisson", 0.3)
    a = sample_pair_count(model, np.random.default_rng(42), 1000)
    b = sample_pair_count(model, np.random.default_rng(42), 1000)
    np.testing.assert_array_equal(a, b)


def test_poisson_sample_mean_three_sigma():
    n = 10**6
    x = sample_pair_count(SourceModel("poisson", 0.1), np.random.default_rng(7), n)
    assert abs(x.mean() - 0.1) < 3 * math.sqrt(0.1 / n)


@pytest.mark.parametrize("mu", [0.05, 0.5, 2.0])
def test_poisson_moments_five_se(mu):
    n = 10**6
    x = sample_pair_count(SourceModel("poisson", mu), np.random.default_rng(11), n)
    assert abs(x.mean() - mu) < 5 * math.sqrt(mu / n)
    # var of the sample variance for Poisson: (mu + 2 mu^2) / n
    assert abs(x.var() - mu) < 5 * math.sqrt((mu + 2 * mu * mu) / n)


def test_thermal_is_super_poissonian():
    x = sample_pair_count(SourceModel("thermal", 0.5), np.random.default_rng(3), 10**6)
    assert x.var() > x.mean()
    # geometric law: variance mu(1 + mu)
    assert x.var() == pytest.approx(0.75, rel=0.02)


@settings(max_examples=20, deadline=None)
@given(mu=st.floats(0.01, 3.0), seed=st.integers(0, 2**32 - 1))
def test_thermal_sampler_matches_pmf(mu, seed):
    model = SourceModel("thermal", mu)
    n = 20_000
    x = sample_pair_count(model, np.random.default_rng(seed), n)
    p0 = pair_pmf(model, 0)
    assert abs((x == 0).mean() - p0) < 5 * math.sqrt(p0 * (1 - p0) / n) + 1e-12
