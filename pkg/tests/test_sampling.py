"""Uniform elliptope sampling, checked against closed-form marginals and the
brute-force rejection oracle."""

import numpy as np
import pytest
from scipy import stats

from corrgan.core import StructuralError, to_upper_vector, validate
from corrgan.sampling import (
    SamplerConfig,
    UnsupportedDimensionError,
    rejection_acceptance_rate,
    rejection_oracle,
    sample_onion,
)


def _pooled_coeffs(mats):
    return np.concatenate([to_upper_vector(m).coeffs for m in mats])


class TestSamplerConfig:
    def test_validation(self):
        SamplerConfig(n=2, count=1, seed=0)
        with pytest.raises(StructuralError):
            SamplerConfig(n=1, count=1, seed=0)
        with pytest.raises(StructuralError):
            SamplerConfig(n=3, count=0, seed=0)
        with pytest.raises(StructuralError):
            SamplerConfig(n=3, count=1, seed=-1)


class TestOnion:
    def test_all_samples_valid(self):
        for n in (2, 3, 5, 10, 25):
            mats = sample_onion(SamplerConfig(n=n, count=8, seed=n))
            assert all(validate(m).is_valid for m in mats)

    def test_deterministic(self):
        a = sample_onion(SamplerConfig(n=6, count=4, seed=123))
        b = sample_onion(SamplerConfig(n=6, count=4, seed=123))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.values, y.values)

    def test_n2_marginal_is_uniform(self):
        # at n=2 the single coefficient is uniform on [-1, 1]
        mats = sample_onion(SamplerConfig(n=2, count=4000, seed=7))
        coeffs = _pooled_coeffs(mats)
        ks = stats.kstest(coeffs, stats.uniform(loc=-1.0, scale=2.0).cdf)
        assert ks.pvalue > 1e-3

    def test_n3_marginal_matches_closed_form(self):
        # each coefficient has density proportional to (1 - r^2)^(1/2),
        # i.e. Beta(3/2, 3/2) rescaled to [-1, 1]
        mats = sample_onion(SamplerConfig(n=3, count=4000, seed=11))
        coeffs = _pooled_coeffs(mats)
        ks = stats.kstest(coeffs, stats.beta(1.5, 1.5, loc=-1.0, scale=2.0).cdf)
        assert ks.pvalue > 1e-3

    def test_matches_rejection_oracle_at_n3(self):
        onion = _pooled_coeffs(sample_onion(SamplerConfig(n=3, count=3000, seed=21)))
        brute = _pooled_coeffs(rejection_oracle(SamplerConfig(n=3, count=3000, seed=22)))
        ks = stats.ks_2samp(onion, brute)
        assert ks.pvalue > 1e-3

    def test_min_eigenvalue_distribution_matches_oracle(self):
        onion = sample_onion(SamplerConfig(n=3, count=2000, seed=31))
        brute = rejection_oracle(SamplerConfig(n=3, count=2000, seed=32))
        eig_a = [np.linalg.eigvalsh(m.values)[0] for m in onion]
        eig_b = [np.linalg.eigvalsh(m.values)[0] for m in brute]
        ks = stats.ks_2samp(eig_a, eig_b)
        assert ks.pvalue > 1e-3


class TestRejection:
    def test_only_small_n(self):
        with pytest.raises(UnsupportedDimensionError):
            rejection_oracle(SamplerConfig(n=5, count=1, seed=0))

    def test_samples_valid(self):
        mats = rejection_oracle(SamplerConfig(n=4, count=10, seed=9))
        assert all(validate(m).is_valid for m in mats)

    def test_acceptance_rate_n3(self):
        # elliptope volume pi^2/2 over cube volume 8 = pi^2/16 ~ 0.61685
        rate = rejection_acceptance_rate(3, proposals=100_000, seed=17)
        assert rate == pytest.approx(np.pi**2 / 16.0, abs=0.01)

    def test_deterministic(self):
        a = rejection_oracle(SamplerConfig(n=3, count=5, seed=44))
        b = rejection_oracle(SamplerConfig(n=3, count=5, seed=44))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.values, y.values)
