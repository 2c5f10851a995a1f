import json

import numpy as np
import pytest

from simodal import DomainError
from simodal.bernstein import (
    BernsteinParams,
    bern_backward,
    bern_coefficients,
    bern_forward,
    bern_from_json,
    bern_to_json,
    bernstein_basis,
)


def random_params(seed, degree=10):
    rng = np.random.default_rng(seed)
    return BernsteinParams(
        degree=degree,
        gamma0=float(rng.normal()),
        eta=rng.normal(-1, 1, degree),
        u_lo=-2.0,
        u_hi=3.0,
    )


class TestBasis:
    def test_endpoint_zero(self):
        basis = bernstein_basis(0.0, 5)
        np.testing.assert_array_equal(basis, np.eye(6)[0])

    def test_endpoint_one(self):
        basis = bernstein_basis(1.0, 5)
        np.testing.assert_array_equal(basis, np.eye(6)[5])

    @pytest.mark.parametrize("degree", [1, 10, 50])
    def test_partition_of_unity(self, degree):
        ts = np.linspace(0, 1, 101)
        sums = bernstein_basis(ts, degree).sum(axis=1)
        np.testing.assert_allclose(sums, 1.0, atol=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            bernstein_basis(-0.01, 5)
        with pytest.raises(DomainError):
            bernstein_basis(1.01, 5)


class TestForward:
    def test_clamped_endpoints(self):
        params = random_params(1)
        gam = bern_coefficients(params)
        assert bern_forward(params, -5.0) == pytest.approx(gam[0], rel=1e-13)
        assert bern_forward(params, 10.0) == pytest.approx(gam[-1], rel=1e-13)

    def test_linear_case_midpoint(self):
        # J=1 with coefficients (0, 1) is the identity on [0, 1]
        params = BernsteinParams(degree=1, gamma0=0.0, eta=np.zeros(1),
                                 u_lo=0.0, u_hi=1.0)
        assert bern_forward(params, 0.5) == pytest.approx(0.5, rel=1e-14)

    def test_monotone(self):
        for seed in range(5):
            params = random_params(seed, degree=25)
            us = np.linspace(-4, 5, 400)
            vals = bern_forward(params, us)
            assert np.all(np.diff(vals) >= -1e-12)

    def test_coefficients_increasing(self):
        gam = bern_coefficients(random_params(3))
        assert np.all(np.diff(gam) > 0)


class TestBackward:
    def test_zero_upstream(self):
        params = random_params(2)
        grads = bern_backward(params, np.array([0.1, 0.7]), np.zeros(2))
        assert grads.dgamma0 == 0.0
        assert np.all(grads.deta == 0.0)
        assert np.all(grads.dinput == 0.0)

    def test_finite_differences(self):
        params = random_params(4, degree=10)
        rng = np.random.default_rng(11)
        us = rng.uniform(-2, 3, 6)
        coef = rng.normal(0, 1, 6)

        def loss(p):
            return float(coef @ bern_forward(p, us))

        grads = bern_backward(params, us, coef)
        h = 1e-6
        p_hi, p_lo = params.copy(), params.copy()
        p_hi.gamma0 += h
        p_lo.gamma0 -= h
        fd = (loss(p_hi) - loss(p_lo)) / (2 * h)
        assert grads.dgamma0 == pytest.approx(fd, rel=1e-6)
        worst = 0.0
        for l in range(params.degree):
            p_hi, p_lo = params.copy(), params.copy()
            p_hi.eta[l] += h
            p_lo.eta[l] -= h
            fd = (loss(p_hi) - loss(p_lo)) / (2 * h)
            worst = max(worst, abs(grads.deta[l] - fd) / max(abs(fd), 1e-8))
        assert worst < 1e-6

    def test_input_gradient(self):
        params = random_params(5, degree=8)
        us = np.array([-1.0, 0.4, 2.2])
        grads = bern_backward(params, us, np.ones(3))
        h = 1e-6
        fd = (bern_forward(params, us + h) - bern_forward(params, us - h)) / (2 * h)
        np.testing.assert_allclose(grads.dinput, fd, rtol=1e-6)

    def test_clamped_region_zero_input_gradient(self):
        params = random_params(6)
        grads = bern_backward(params, np.array([-10.0, 20.0]), np.ones(2))
        np.testing.assert_array_equal(grads.dinput, 0.0)


class TestValidationAndJson:
    def test_eta_length_checked(self):
        with pytest.raises(DomainError):
            BernsteinParams(degree=3, gamma0=0.0, eta=np.zeros(2), u_lo=0, u_hi=1)

    def test_range_checked(self):
        with pytest.raises(DomainError):
            BernsteinParams(degree=2, gamma0=0.0, eta=np.zeros(2), u_lo=1, u_hi=1)

    def test_roundtrip(self):
        params = random_params(7)
        back = bern_from_json(json.loads(json.dumps(bern_to_json(params))))
        assert back.degree == params.degree
        assert back.gamma0 == params.gamma0
        np.testing.assert_array_equal(back.eta, params.eta)
        assert (back.u_lo, back.u_hi) == (params.u_lo, params.u_hi)
