import json
import math

import numpy as np
import pytest

from simodal import (
    DataError,
    Dataset,
    DomainError,
    ModelSpec,
    ParamVector,
    RngStream,
    TrainConfig,
    compute_index,
    fit_from_json,
    fit_to_json,
    negative_log_likelihood,
    nll_gradient,
    predict_mode,
    residuals,
    sgd_fit,
    st_logpdf,
    STParams,
)
from simodal.bernstein import BernsteinParams
from simodal.estimation import _init_param_vector
from simodal.numerics import student_t_logpdf
from simodal.simulation import SchemeConfig, gen_dataset


def small_scheme_data(n=200, seed=42):
    data, truth = gen_dataset(SchemeConfig(scheme=1, n=n, seed=seed),
                              RngStream(seed))
    return data, truth


def make_params(spec, data, seed=0):
    return _init_param_vector(spec, data, RngStream(seed).substream(1), False)


class TestModelSpec:
    @pytest.mark.parametrize("tag,link,family", [
        ("st-gx-d", "gx-d", "st"), ("sn-gx-d", "gx-d", "sn"),
        ("n-gx-d", "gx-d", "normal"), ("st-gx-b", "gx-b", "st"),
        ("sn-gx-b", "gx-b", "sn"), ("n-gx-b", "gx-b", "normal"),
        ("st-fx", "fx", "st"), ("sn-fx", "fx", "sn"),
        ("n-fx", "fx", "normal"), ("t-gx-d", "gx-d", "symt"),
    ])
    def test_tag_bijection(self, tag, link, family):
        spec = ModelSpec.from_tag(tag)
        assert (spec.link, spec.error_family) == (link, family)
        assert spec.tag == tag

    def test_bad_tag(self):
        with pytest.raises(DomainError):
            ModelSpec.from_tag("st-nonsense")

    def test_active_params(self):
        assert ModelSpec.from_tag("st-gx-d").active_params() == ["w", "sigma", "delta"]
        assert ModelSpec.from_tag("n-fx").active_params() == ["sigma"]
        assert ModelSpec.from_tag("t-gx-d").active_params() == ["sigma", "delta"]


class TestDataset:
    def test_reports_bad_cell(self):
        X = np.ones((4, 2))
        X[2, 1] = np.nan
        with pytest.raises(DataError, match="row 2, column 1"):
            Dataset(np.zeros(4), X)

    def test_reports_bad_response(self):
        y = np.zeros(3)
        y[1] = np.inf
        with pytest.raises(DataError, match="row 1"):
            Dataset(y, np.ones((3, 2)))

    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            Dataset(np.zeros(3), np.ones((4, 2)))


class TestNegativeLogLikelihood:
    def test_mode_value_closed_form(self):
        # a link that outputs exactly y_1 makes the single-row NLL the
        # negative log density at the mode
        w, sigma, delta = 0.63, 1.7, 5.0
        y1 = 2.4
        link = BernsteinParams(degree=1, gamma0=y1, eta=np.array([0.0]),
                               u_lo=10.0, u_hi=11.0)  # index clamps to gamma0
        params = ParamVector(v=np.array([1.0, 0.0]), link=link,
                             a=math.log(w / (1 - w)), b=math.log(sigma),
                             c=math.log(delta - 2.0))
        data = Dataset(np.array([y1]), np.array([[0.5, 0.2]]))
        spec = ModelSpec(link="gx-b", error_family="st", degree=1)
        expect = -(math.log(2.0) + 0.5 * math.log(w * (1 - w)) - math.log(sigma)
                   + student_t_logpdf(0.0, delta))
        assert negative_log_likelihood(spec, params, data) == pytest.approx(
            expect, rel=1e-12
        )

    def test_normal_family_is_gaussian_nll(self):
        data, _ = small_scheme_data(50)
        spec = ModelSpec(link="gx-d", error_family="normal", widths=(8, 8))
        params = make_params(spec, data)
        nll = negative_log_likelihood(spec, params, data)
        theta = predict_mode_from_params(spec, params, data.X)
        sigma = params.sigma
        ref = np.sum(0.5 * np.log(2 * np.pi * sigma**2)
                     + (data.y - theta) ** 2 / (2 * sigma**2))
        assert nll == pytest.approx(float(ref), rel=1e-12)

    def test_batch_additivity(self):
        data, _ = small_scheme_data(60)
        spec = ModelSpec(link="gx-d", error_family="st", widths=(8, 8))
        params = make_params(spec, data)
        total = negative_log_likelihood(spec, params, data)
        part1 = negative_log_likelihood(spec, params, data.subset(range(0, 25)))
        part2 = negative_log_likelihood(spec, params, data.subset(range(25, 60)))
        assert total == pytest.approx(part1 + part2, rel=1e-12)


def predict_mode_from_params(spec, params, X):
    from simodal.estimation import _thetas

    theta, _, _ = _thetas(spec, params, X)
    return theta


def finite_diff_check(spec, data, seed=3, h=1e-5):
    """Max relative error between nll_gradient and central differences over
    every coordinate of the parameter vector."""
    params = make_params(spec, data, seed)
    params.a, params.b, params.c = 0.3, 0.25, 1.2
    y, X = data.y, data.X
    grads = nll_gradient(spec, params, y, X)

    def nll(p):
        return negative_log_likelihood(spec, p, data)

    checks = []
    for j in range(params.v.size):
        hi, lo = params.copy(), params.copy()
        hi.v[j] += h
        lo.v[j] -= h
        checks.append((grads.dv[j], (nll(hi) - nll(lo)) / (2 * h)))
    for name in ("a", "b", "c"):
        hi, lo = params.copy(), params.copy()
        setattr(hi, name, getattr(hi, name) + h)
        setattr(lo, name, getattr(lo, name) - h)
        checks.append((getattr(grads, "d" + name), (nll(hi) - nll(lo)) / (2 * h)))
    if spec.link in ("gx-d", "fx"):
        for k in range(len(params.link.U)):
            for pos in np.ndindex(params.link.U[k].shape):
                hi, lo = params.copy(), params.copy()
                hi.link.U[k][pos] += h
                lo.link.U[k][pos] -= h
                checks.append((grads.dlink.dU[k][pos], (nll(hi) - nll(lo)) / (2 * h)))
            for i in range(params.link.b[k].size):
                hi, lo = params.copy(), params.copy()
                hi.link.b[k][i] += h
                lo.link.b[k][i] -= h
                checks.append((grads.dlink.db[k][i], (nll(hi) - nll(lo)) / (2 * h)))
    else:
        hi, lo = params.copy(), params.copy()
        hi.link.gamma0 += h
        lo.link.gamma0 -= h
        checks.append((grads.dlink.dgamma0, (nll(hi) - nll(lo)) / (2 * h)))
        for l in range(params.link.degree):
            hi, lo = params.copy(), params.copy()
            hi.link.eta[l] += h
            lo.link.eta[l] -= h
            checks.append((grads.dlink.deta[l], (nll(hi) - nll(lo)) / (2 * h)))
    worst = 0.0
    for analytic, fd in checks:
        worst = max(worst, abs(analytic - fd) / max(abs(fd), 1e-7))
    return worst


class TestGradients:
    def test_st_gx_d_full_vector(self):
        data, _ = small_scheme_data(8, seed=5)
        spec = ModelSpec(link="gx-d", error_family="st", widths=(8, 8))
        assert finite_diff_check(spec, data) < 1e-4

    def test_sn_gx_b(self):
        data, _ = small_scheme_data(12, seed=6)
        spec = ModelSpec(link="gx-b", error_family="sn", degree=8)
        assert finite_diff_check(spec, data) < 1e-4

    def test_normal_fx(self):
        data, _ = small_scheme_data(10, seed=7)
        spec = ModelSpec(link="fx", error_family="normal", widths=(6, 6))
        assert finite_diff_check(spec, data) < 1e-4

    def test_symt_gx_d(self):
        data, _ = small_scheme_data(9, seed=8)
        spec = ModelSpec(link="gx-d", error_family="symt", widths=(6, 6))
        assert finite_diff_check(spec, data) < 1e-4

    def test_symt_w_gradient_pinned(self):
        data, _ = small_scheme_data(20, seed=9)
        spec = ModelSpec(link="gx-d", error_family="symt", widths=(6, 6))
        params = make_params(spec, data)
        grads = nll_gradient(spec, params, data.y, data.X)
        assert grads.da == 0.0

    def test_v_gradient_orthogonal_to_beta(self):
        data, _ = small_scheme_data(30, seed=10)
        spec = ModelSpec(link="gx-d", error_family="st", widths=(8, 8))
        params = make_params(spec, data)
        grads = nll_gradient(spec, params, data.y, data.X)
        assert abs(params.beta @ grads.dv) < 1e-10

    def test_empty_batch_rejected(self):
        data, _ = small_scheme_data(5)
        spec = ModelSpec(link="gx-d", error_family="st", widths=(4,))
        params = make_params(spec, data)
        with pytest.raises(DataError):
            nll_gradient(spec, params, np.array([]), np.zeros((0, 3)))


class TestSgdFit:
    CFG = TrainConfig(epochs=40, batch=64, lr=3e-4, seed=2)

    def test_deterministic(self):
        data, _ = small_scheme_data(150)
        spec = ModelSpec(link="gx-d", error_family="st", widths=(8, 8))
        a = sgd_fit(spec, data, self.CFG, RngStream(2))
        b = sgd_fit(spec, data, self.CFG, RngStream(2))
        assert a.learning_curve == b.learning_curve
        np.testing.assert_array_equal(a.beta, b.beta)
        np.testing.assert_array_equal(a.params.v, b.params.v)
        assert (a.w, a.sigma, a.delta) == (b.w, b.sigma, b.delta)

    def test_curve_length_and_improvement(self):
        data, _ = small_scheme_data(400)
        spec = ModelSpec(link="gx-d", error_family="st", widths=(16, 16))
        cfg = TrainConfig(epochs=60, batch=128, lr=3e-4, seed=1)
        fit = sgd_fit(spec, data, cfg, RngStream(1))
        assert len(fit.learning_curve) == 60
        assert fit.learning_curve[-1] < fit.learning_curve[0]

    def test_unit_norm_beta(self):
        data, _ = small_scheme_data(100)
        for tag in ("st-gx-d", "st-gx-b"):
            spec = ModelSpec.from_tag(tag, widths=(6, 6), degree=6)
            fit = sgd_fit(spec, data, self.CFG, RngStream(3))
            assert abs(np.linalg.norm(fit.beta) - 1.0) < 1e-12

    def test_final_nll_matches_public_op(self):
        data, _ = small_scheme_data(120)
        spec = ModelSpec(link="gx-d", error_family="st", widths=(8, 8))
        fit = sgd_fit(spec, data, self.CFG, RngStream(4))
        recomputed = negative_log_likelihood(spec, fit.params, data)
        assert fit.final_nll == pytest.approx(recomputed, rel=1e-9)

    def test_affine_response_shift(self):
        data, _ = small_scheme_data(150, seed=21)
        spec = ModelSpec(link="gx-d", error_family="st", widths=(12, 12))
        cfg = TrainConfig(epochs=80, batch=64, lr=3e-4, seed=6)
        f0 = sgd_fit(spec, data, cfg, RngStream(6))
        shifted = Dataset(data.y + 5.5, data.X, list(data.columns))
        f1 = sgd_fit(spec, shifted, cfg, RngStream(6))
        np.testing.assert_allclose(
            predict_mode(f1, data.X), predict_mode(f0, data.X) + 5.5, atol=1e-6
        )
        assert abs(f0.w - f1.w) < 1e-6
        assert abs(f0.delta - f1.delta) < 1e-6

    def test_covariate_permutation_invariance(self):
        data, _ = small_scheme_data(150, seed=22)
        spec = ModelSpec(link="gx-d", error_family="st", widths=(12, 12))
        cfg = TrainConfig(epochs=60, batch=64, lr=3e-4, seed=8)
        f0 = sgd_fit(spec, data, cfg, RngStream(8))
        perm = [2, 0, 1]
        pdata = Dataset(data.y, data.X[:, perm],
                        [data.columns[j] for j in perm])
        f1 = sgd_fit(spec, pdata, cfg, RngStream(8))
        np.testing.assert_allclose(predict_mode(f1, pdata.X),
                                   predict_mode(f0, data.X), atol=1e-6)
        np.testing.assert_allclose(np.asarray(f1.beta),
                                   np.asarray(f0.beta)[perm], atol=1e-6)

    def test_multi_start_keeps_best(self):
        data, _ = small_scheme_data(100)
        spec = ModelSpec(link="gx-d", error_family="st", widths=(6, 6))
        cfg1 = TrainConfig(epochs=25, batch=64, lr=3e-4, seed=2, starts=1)
        cfg3 = TrainConfig(epochs=25, batch=64, lr=3e-4, seed=2, starts=3)
        f1 = sgd_fit(spec, data, cfg1, RngStream(2))
        f3 = sgd_fit(spec, data, cfg3, RngStream(2))
        assert f3.final_nll <= f1.final_nll + 1e-9


class TestComputeIndex:
    # coefficients and patient from the fitted published index equation
    BETA = np.array([0.0233, 0.1794, 0.9609, -0.1203, 0.0545, 0.1516,
                     -0.0197, -0.0526])

    def test_published_patient(self):
        x = np.array([(60 - 54.981) / 15.107, 1, 1, 0, 1, 1, 0, 0],
                     dtype=float)
        assert compute_index(self.BETA, x) == pytest.approx(1.354, abs=0.005)

    def test_second_patient(self):
        # direct arithmetic from the published coefficients; the source
        # table's own rounded headline value differs by ~0.02
        x = np.array([(30 - 54.981) / 15.107, 0, 0, 1, 0, 0, 1, 1],
                     dtype=float)
        assert compute_index(self.BETA, x) == pytest.approx(-0.23113, abs=0.0005)

    def test_zero_row(self):
        assert compute_index(np.array([0.3, 0.4]), np.zeros(2)) == 0.0

    def test_unit_vector_projection(self):
        beta = np.eye(3)[0]
        assert compute_index(beta, np.array([2.5, 1.0, -4.0])) == 2.5

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            compute_index(np.ones(3), np.ones(4))


class TestPrediction:
    def test_residuals_identity(self):
        data, _ = small_scheme_data(80)
        spec = ModelSpec(link="gx-d", error_family="st", widths=(8, 8))
        fit = sgd_fit(spec, data, TestSgdFit.CFG, RngStream(5))
        res = residuals(fit, data)
        np.testing.assert_allclose(res + predict_mode(fit, data.X), data.y,
                                   rtol=1e-12)

    def test_monotone_in_index(self):
        data, _ = small_scheme_data(120)
        spec = ModelSpec(link="gx-d", error_family="st", widths=(8, 8))
        fit = sgd_fit(spec, data, TestSgdFit.CFG, RngStream(7))
        idx = compute_index(fit.beta, data.X)
        order = np.argsort(idx)
        preds = predict_mode(fit, data.X[order])
        assert np.all(np.diff(preds) >= -1e-12)

    def test_fx_ignores_direction_vector(self):
        data, _ = small_scheme_data(60)
        spec = ModelSpec(link="fx", error_family="st", widths=(6, 6))
        fit = sgd_fit(spec, data, TestSgdFit.CFG, RngStream(9))
        before = predict_mode(fit, data.X)
        fit.params.v = np.array([0.9, -0.1, 0.42])
        np.testing.assert_array_equal(predict_mode(fit, data.X), before)
        assert fit.beta is None


class TestFitJson:
    def test_roundtrip(self):
        data, _ = small_scheme_data(70)
        for tag in ("st-gx-d", "st-gx-b", "n-fx"):
            spec = ModelSpec.from_tag(tag, widths=(6, 6), degree=6)
            fit = sgd_fit(spec, data, TestSgdFit.CFG, RngStream(11))
            doc = json.loads(json.dumps(fit_to_json(fit)))
            back = fit_from_json(doc)
            np.testing.assert_array_equal(predict_mode(back, data.X),
                                          predict_mode(fit, data.X))
            assert back.spec.tag == tag
            assert back.estimates() == fit.estimates()

    def test_schema_checked(self):
        with pytest.raises(DataError):
            fit_from_json({"schema": "bogus"})
