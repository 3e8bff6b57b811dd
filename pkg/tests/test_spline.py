import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from smartbayes.spline import (
    FitOptions,
    PenalizedSplineFit,
    SplineError,
    build_basis,
    curvature_penalty,
    fit_penalized_logistic,
    gcv_score,
    lambda_path,
    penalized_objective,
    predict_eta,
    select_lambda,
)

from conftest import two_gaussians
from oracles import best_line_deviation, fd_gradient_check


@pytest.fixture(scope="module")
def gauss_data():
    return two_gaussians(seed=0)


@pytest.fixture(scope="module")
def gauss_setup(gauss_data):
    x, y = gauss_data
    basis = build_basis(x)
    return x, y, basis, curvature_penalty(basis)


def paired_labels(n_points=200, pattern=(0, 1), seed=0):
    """Every x value carries the same label pattern, so labels carry no
    information about x and the penalized MLE is exactly constant."""
    x = np.random.default_rng(seed).uniform(-3, 3, n_points)
    xs = np.repeat(x, len(pattern))
    ys = np.tile(np.asarray(pattern, float), n_points)
    return xs, ys


class TestBasis:
    def test_dimension(self):
        x = np.linspace(0, 1, 100)
        assert build_basis(x, 10).dimension == 14

    def test_partition_of_unity(self):
        rng = np.random.default_rng(0)
        basis = build_basis(rng.normal(size=300))
        pts = rng.uniform(basis.lo, basis.hi, 1000)
        np.testing.assert_allclose(basis.evaluate(pts).sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(basis.evaluate([basis.lo, basis.hi]).sum(axis=1), 1.0, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=8, max_size=80, unique=True),
           st.integers(1, 12))
    def test_partition_of_unity_property(self, xs, k):
        x = np.array(xs)
        if np.unique(x).size < 5 or np.ptp(x) < 1e-6:
            return
        basis = build_basis(x, k)
        pts = np.linspace(basis.lo, basis.hi, 97)
        np.testing.assert_allclose(basis.evaluate(pts).sum(axis=1), 1.0, atol=1e-10)
        assert np.all(np.diff(basis.knots[3:-3]) > 0)

    def test_heavy_ties_dedup(self):
        x = np.r_[np.zeros(500), np.ones(500), np.arange(2, 7)]
        basis = build_basis(x, 10)
        inner = basis.interior_knots
        assert np.all(np.diff(inner) > 0)
        assert np.all((inner > 0) & (inner < 1))

    def test_too_few_distinct(self):
        with pytest.raises(SplineError):
            build_basis([1, 2, 3, 4, 1, 2], 3)


class TestPenalty:
    @pytest.fixture
    def basis(self):
        return build_basis(np.random.default_rng(4).normal(size=200))

    def test_symmetric_psd(self, basis):
        P = curvature_penalty(basis)
        np.testing.assert_allclose(P, P.T)
        assert np.linalg.eigvalsh(P).min() > -1e-9 * np.abs(P).max()

    def test_constant_and_linear_null(self, basis):
        P = curvature_penalty(basis)
        const = np.ones(basis.dimension)
        lin = basis.greville()
        u = np.linspace(0, 1, 11)
        np.testing.assert_allclose(basis.evaluate_unit(u) @ lin, u, atol=1e-12)
        assert abs(const @ P @ const) <= 1e-10
        assert abs(lin @ P @ lin) <= 1e-10

    def test_convex_matches_adaptive_quadrature(self, basis):
        P = curvature_penalty(basis)
        c = (basis.greville() - 0.3) ** 2
        rho = basis.penalty_scale
        bp = basis.breakpoints / rho

        def integrand(v):
            return float(basis.evaluate_unit([v * rho], nu=2)[0] @ c) ** 2 * rho**4

        oracle = sum(integrate.quad(integrand, a, b, epsabs=1e-13, epsrel=1e-12)[0]
                     for a, b in zip(bp[:-1], bp[1:]))
        value = c @ P @ c
        assert value > 0
        assert value == pytest.approx(oracle, rel=1e-8)


class TestFit:
    @pytest.mark.parametrize("lam", [1e-6, 1e-2, 1.0, 1e6])
    @pytest.mark.parametrize("pattern", [(0, 1), (0, 0, 1)])
    def test_uninformative_labels_give_constant(self, lam, pattern):
        x, y = paired_labels(pattern=pattern)
        basis = build_basis(x)
        fit = fit_penalized_logistic(x, y, basis, curvature_penalty(basis), lam)
        eta = predict_eta(fit, np.linspace(basis.lo, basis.hi, 200))
        target = np.log(y.mean() / (1 - y.mean()))
        assert fit.converged
        assert np.max(np.abs(eta - target)) <= 1e-3

    def test_large_lambda_is_linear(self, gauss_setup):
        x, y, basis, P = gauss_setup
        fit = fit_penalized_logistic(x, y, basis, P, 1e6)
        assert best_line_deviation(fit, np.linspace(basis.lo, basis.hi, 50)) <= 1e-4

    def test_linear_truth_stays_linear(self):
        rng = np.random.default_rng(8)
        x = rng.uniform(-2, 2, 800)
        y = (rng.random(800) < 1 / (1 + np.exp(-(0.3 + 1.5 * x)))).astype(float)
        basis = build_basis(x)
        P = curvature_penalty(basis)
        grid = np.linspace(-2, 2, 50)
        for fit in lambda_path(x, y, basis, P):
            # statistical error bound for a 14-dimensional fit at n = 800
            assert best_line_deviation(fit, grid) <= 1.5
        assert best_line_deviation(fit, grid) <= 1e-4

    def test_two_gaussian_recovery(self):
        # single draws scatter (GCV occasionally undersmooths), so use a median
        grid = np.linspace(-1, 2, 301)
        rmses = []
        for seed in range(5):
            x, y = two_gaussians(seed)
            basis = build_basis(x)
            fit = select_lambda(x, y, basis, curvature_penalty(basis))
            rmses.append(np.sqrt(np.mean((predict_eta(fit, grid) - (grid - 0.5)) ** 2)))
        assert np.median(rmses) <= 0.15

    def test_score_and_fd_gradient(self, gauss_setup):
        x, y, basis, P = gauss_setup
        for fit in lambda_path(x, y, basis, P):
            assert fit.converged
            rel, score = fd_gradient_check(fit, x, y)
            assert score <= 1e-8
            assert rel <= 1e-4

    def test_objective_monotone(self, gauss_setup):
        x, y, basis, P = gauss_setup
        for lam in (1e-6, 1e-2, 1e3):
            trace = []
            fit = fit_penalized_logistic(x, y, basis, P, lam, start=np.zeros(basis.dimension) + 3.0, trace=trace)
            assert len(trace) >= 2
            assert np.all(np.diff(trace) <= 1e-12 * abs(trace[0]))
            assert penalized_objective(fit.coefficients, x, y, basis, P, lam) == pytest.approx(trace[-1], rel=1e-9)

    def test_edf_bounds(self, gauss_setup):
        x, y, basis, P = gauss_setup
        for fit in lambda_path(x, y, basis, P):
            assert 1 <= fit.edf <= basis.dimension

    def test_nonconvergence_flagged(self):
        x = np.linspace(-1, 1, 40)
        y = (x > 0).astype(float)
        basis = build_basis(x)
        fit = fit_penalized_logistic(x, y, basis, curvature_penalty(basis), 1e-6,
                                     FitOptions(max_iterations=5))
        assert not fit.converged
        assert fit.iterations == 5
        assert np.all(np.isfinite(fit.coefficients))
        assert np.all((predict_eta(fit, x) > 0) == (y == 1))

    def test_single_class_rejected(self):
        x = np.linspace(0, 1, 20)
        basis = build_basis(x)
        with pytest.raises(SplineError):
            fit_penalized_logistic(x, np.ones(20), basis, curvature_penalty(basis), 1.0)


class TestGcv:
    def fake(self, deviance, edf):
        return PenalizedSplineFit(None, np.zeros(1), 1.0, edf, deviance, True, 1, 0.0, 200)

    def test_arithmetic(self):
        assert gcv_score(self.fake(100.0, 10.0), 200) == pytest.approx(200 * 100 / 190**2)

    def test_edf_at_n(self):
        assert gcv_score(self.fake(100.0, 200.0), 200) == float("inf")
        assert gcv_score(self.fake(100.0, 199.999), 200) > 1e6

    def test_interior_minimiser(self, gauss_setup):
        # recorded by exhaustive evaluation over the default grid for seed 0;
        # with a linear truth other seeds often bottom out at the largest lambda
        x, y, basis, P = gauss_setup
        scores = [gcv_score(f, x.size) for f in lambda_path(x, y, basis, P)]
        k = int(np.argmin(scores))
        assert 0 < k < len(scores) - 1

    def test_selected_attains_minimum(self, gauss_setup):
        x, y, basis, P = gauss_setup
        fits = lambda_path(x, y, basis, P)
        best = select_lambda(x, y, basis, P)
        assert gcv_score(best, x.size) == min(gcv_score(f, x.size) for f in fits)

    def test_edf_nonincreasing(self, gauss_setup):
        x, y, basis, P = gauss_setup
        edf = [f.edf for f in lambda_path(x, y, basis, P)]
        assert np.all(np.diff(edf) <= 1e-6)

    @pytest.mark.parametrize("seed", range(5))
    def test_shuffled_labels_smooth_heavily(self, gauss_setup, seed):
        x, y, basis, P = gauss_setup
        y = np.random.default_rng(seed).permutation(y)
        assert select_lambda(x, y, basis, P).edf <= 3


@pytest.fixture(scope="module")
def fit():
    x, y = two_gaussians(seed=2, n_per_class=200)
    basis = build_basis(x)
    return x, select_lambda(x, y, basis, curvature_penalty(basis))


class TestPredict:
    def test_in_sample(self, fit):
        x, f = fit
        np.testing.assert_allclose(predict_eta(f, x), f.basis.evaluate(x) @ f.coefficients, rtol=0, atol=1e-14)

    def test_extrapolation(self, fit):
        _, f = fit
        hi, lo = f.basis.hi, f.basis.lo
        slope_hi = float(f.basis.evaluate([hi], nu=1)[0] @ f.coefficients)
        slope_lo = float(f.basis.evaluate([lo], nu=1)[0] @ f.coefficients)
        e_hi, e_lo = predict_eta(f, [hi, lo])
        for d in (0.5, 3.0):
            assert predict_eta(f, [hi + d])[0] == pytest.approx(e_hi + d * slope_hi, rel=1e-12)
            assert predict_eta(f, [lo - d])[0] == pytest.approx(e_lo - d * slope_lo, rel=1e-12)

    def test_slope_matches_finite_difference(self, fit):
        _, f = fit
        hi = f.basis.hi
        h = 1e-6
        fd = (predict_eta(f, [hi])[0] - predict_eta(f, [hi - h])[0]) / h
        assert float(f.basis.evaluate([hi], nu=1)[0] @ f.coefficients) == pytest.approx(fd, rel=1e-4, abs=1e-6)

    def test_continuity(self, fit):
        _, f = fit
        for edge in (f.basis.hi, f.basis.lo):
            step = 1e-9 if edge == f.basis.hi else -1e-9
            assert abs(predict_eta(f, [edge + step])[0] - predict_eta(f, [edge])[0]) <= 1e-6
