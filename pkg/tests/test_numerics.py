import math

import numpy as np
import pytest
import scipy.integrate
import scipy.special
import scipy.stats

from simodal import DomainError, NumericError
from simodal.numerics import (
    RngStream,
    digamma,
    integrate,
    ln_gamma,
    normal_cdf,
    sample_gamma,
    sample_normal,
    sample_student_t,
    sample_uniform,
    student_t_logpdf,
)


class TestLnGamma:
    def test_gamma_one_is_zero(self):
        assert ln_gamma(1.0) == 0.0

    def test_gamma_half_is_sqrt_pi(self):
        assert ln_gamma(0.5) == pytest.approx(0.5 * math.log(math.pi), rel=1e-14)

    def test_factorial_nine(self):
        # gamma(10) = 9! = 362880 exactly
        assert ln_gamma(10.0) == pytest.approx(math.log(362880.0), rel=1e-14)

    def test_matches_scipy_over_range(self):
        xs = np.geomspace(0.5, 1e6, 200)
        ours = np.array([ln_gamma(float(x)) for x in xs])
        ref = scipy.special.gammaln(xs)
        mask = ref != 0
        assert np.max(np.abs((ours[mask] - ref[mask]) / ref[mask])) < 1e-12

    @pytest.mark.parametrize("bad", [0.0, -1.0, math.nan, math.inf])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            ln_gamma(bad)


class TestDigamma:
    def test_matches_lngamma_derivative(self):
        h = 1e-6
        for x in (0.7, 2.3, 17.0, 400.0):
            fd = (ln_gamma(x + h) - ln_gamma(x - h)) / (2 * h)
            assert digamma(x) == pytest.approx(fd, rel=1e-7)

    def test_domain(self):
        with pytest.raises(DomainError):
            digamma(-2.0)


class TestStudentTLogpdf:
    def test_closed_form_at_zero_df5(self):
        # f(0|5) = Gamma(3) / (sqrt(5 pi) Gamma(2.5))
        expect = math.log(
            math.gamma(3.0) / (math.sqrt(5 * math.pi) * math.gamma(2.5))
        )
        assert student_t_logpdf(0.0, 5.0) == pytest.approx(expect, rel=1e-14)

    def test_symmetry(self):
        xs = np.linspace(0.1, 30, 50)
        np.testing.assert_array_equal(
            student_t_logpdf(xs, 4.5), student_t_logpdf(-xs, 4.5)
        )

    def test_matches_scipy(self):
        xs = np.linspace(-20, 20, 101)
        for df in (2.5, 6.0, 30.0):
            np.testing.assert_allclose(
                student_t_logpdf(xs, df), scipy.stats.t.logpdf(xs, df), rtol=1e-12
            )

    @pytest.mark.parametrize("delta", [2.5, 4.0, 6.0, 30.0])
    def test_normalizes(self, delta):
        hi = float(scipy.stats.t.isf(1e-10, delta))
        val = integrate(lambda x: np.exp(student_t_logpdf(x, delta)),
                        -hi, hi, tol=1e-9)
        assert val == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("delta", [2.0, 1.0, -3.0])
    def test_domain(self, delta):
        with pytest.raises(DomainError):
            student_t_logpdf(0.0, delta)


class TestNormalCdf:
    def test_at_zero(self):
        assert normal_cdf(0.0) == 0.5

    def test_tail_limit(self):
        assert normal_cdf(10.0) == pytest.approx(1.0, abs=1e-12)

    def test_at_one_vs_quadrature(self):
        phi = lambda t: np.exp(-t * t / 2) / math.sqrt(2 * math.pi)
        ref = integrate(phi, -10.0, 1.0, tol=1e-13)
        assert normal_cdf(1.0) == pytest.approx(ref, abs=1e-10)
        assert normal_cdf(1.0) == pytest.approx(0.8413447, abs=5e-8)

    def test_monotone_and_reflection(self):
        xs = np.linspace(-8, 8, 400)
        vals = normal_cdf(xs)
        assert np.all(np.diff(vals) >= 0)
        assert np.max(np.abs(vals + normal_cdf(-xs) - 1.0)) < 1e-12

    def test_domain(self):
        with pytest.raises(DomainError):
            normal_cdf(math.nan)


class TestIntegrate:
    def test_constant(self):
        assert integrate(lambda x: np.ones_like(x), 0.0, 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_linear(self):
        assert integrate(lambda x: x, 0.0, 2.0) == pytest.approx(2.0, abs=1e-12)

    def test_normal_density(self):
        phi = lambda t: np.exp(-t * t / 2) / math.sqrt(2 * math.pi)
        assert integrate(phi, -8.0, 8.0, tol=1e-12) == pytest.approx(1.0, abs=1e-9)

    def test_matches_scipy_quad_on_peaked_integrand(self):
        f = lambda x: np.exp(-np.abs(x) ** 1.5) * (1 + np.sin(3 * x) ** 2)
        ref, _ = scipy.integrate.quad(lambda x: float(f(np.asarray(x))), -6, 6,
                                      epsabs=1e-12)
        assert integrate(f, -6.0, 6.0, tol=1e-10) == pytest.approx(ref, abs=1e-8)

    def test_bad_interval(self):
        with pytest.raises(DomainError):
            integrate(lambda x: x, 1.0, 1.0)
        with pytest.raises(DomainError):
            integrate(lambda x: x, 0.0, math.inf)

    def test_non_finite_integrand(self):
        with np.errstate(divide="ignore"), pytest.raises(DomainError):
            integrate(lambda x: 1.0 / x, 0.0, 1.0)

    def test_subdivision_cap(self):
        wiggly = lambda x: np.sin(1000.0 * x)
        with pytest.raises(NumericError):
            integrate(wiggly, 0.0, 10.0, tol=1e-14, max_segments=8)


class TestRngStream:
    def test_reproducible(self):
        a = sample_normal(RngStream(42), size=10_000)
        b = sample_normal(RngStream(42), size=10_000)
        np.testing.assert_array_equal(a, b)

    def test_substreams_are_distinct(self):
        root = RngStream(42)
        a = sample_normal(root.substream(0), size=100)
        b = sample_normal(root.substream(1), size=100)
        assert not np.array_equal(a, b)

    def test_substream_path_reproducible(self):
        a = sample_normal(RngStream(7).substream(3).substream(1), size=50)
        b = sample_normal(RngStream(7, path=(3, 1)), size=50)
        np.testing.assert_array_equal(a, b)

    def test_seed_domain(self):
        with pytest.raises(DomainError):
            RngStream(-1)


class TestSamplers:
    def test_uniform_degenerate(self):
        assert sample_uniform(RngStream(0), 3.0, 3.0) == 3.0

    def test_uniform_bounds(self):
        draws = sample_uniform(RngStream(1), -2.0, 5.0, size=1000)
        assert draws.min() >= -2.0 and draws.max() <= 5.0

    def test_normal_mean(self):
        draws = sample_normal(RngStream(2), size=100_000)
        assert abs(draws.mean()) < 0.02

    def test_student_t_variance(self):
        # var = delta / (delta - 2) = 1.5 for delta = 6
        draws = sample_student_t(RngStream(3), 6.0, size=100_000)
        assert draws.var() == pytest.approx(1.5, abs=0.1)

    def test_gamma_moments(self):
        draws = sample_gamma(RngStream(4), 3.0, 2.0, size=100_000)
        assert draws.mean() == pytest.approx(6.0, abs=0.1)

    def test_parameter_domains(self):
        rng = RngStream(5)
        with pytest.raises(DomainError):
            sample_gamma(rng, -1.0, 1.0)
        with pytest.raises(DomainError):
            sample_gamma(rng, 1.0, 0.0)
        with pytest.raises(DomainError):
            sample_student_t(rng, 2.0)
        with pytest.raises(DomainError):
            sample_uniform(rng, 2.0, 1.0)
