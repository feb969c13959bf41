import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskscreen import lasso
from riskscreen.errors import AlignmentError, ConfigurationError, ConvergenceError, ValidationError


def objective(x, y, b0, b, lam):
    r = y - b0 - x @ b
    return r @ r / (2 * len(y)) + lam * np.abs(b).sum()


def grid_single(x, y, lam, half_width=5.0, n=200_001):
    """Brute-force 1-D lasso: scan the slope, intercept profiled out."""
    xc, yc = x - x.mean(), y - y.mean()
    grid = np.linspace(-half_width, half_width, n)
    obj = ((yc[:, None] - xc[:, None] * grid) ** 2).mean(axis=0) / 2 + lam * np.abs(grid)
    i = int(np.argmin(obj))
    # refine with a parabola through the neighbours
    lo, hi = max(i - 1, 0), min(i + 1, n - 1)
    fine = np.linspace(grid[lo], grid[hi], 20_001)
    obj = ((yc[:, None] - xc[:, None] * fine) ** 2).mean(axis=0) / 2 + lam * np.abs(fine)
    return fine[int(np.argmin(obj))]


class TestSoftThreshold:
    @pytest.mark.parametrize("z,g,out", [(3.0, 1.0, 2.0), (-3.0, 1.0, -2.0), (0.5, 1.0, 0.0), (1.0, 1.0, 0.0),
                                         (2.0, 0.0, 2.0)])
    def test_examples(self, z, g, out):
        assert lasso.soft_threshold(z, g) == out

    def test_negative_threshold(self):
        with pytest.raises(ValueError):
            lasso.soft_threshold(1.0, -1.0)


class TestLambdaPath:
    def test_geometric(self):
        p = lasso.LambdaPath.geometric(2.0, 100, 1e-3)
        assert len(p) == 100 and p.values[0] == 2.0
        assert p.values[-1] == pytest.approx(2e-3)
        np.testing.assert_allclose(p.values[1:] / p.values[:-1], (1e-3) ** (1 / 99))

    def test_not_decreasing(self):
        with pytest.raises(ConfigurationError):
            lasso.LambdaPath([0.1, 0.2])

    def test_zero_lambda_max(self):
        with pytest.raises(ValidationError):
            lasso.LambdaPath.geometric(0.0)


class TestFit:
    @pytest.mark.parametrize("seed", range(5))
    def test_single_feature_against_grid(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((40, 1))
        y = 1.5 * x[:, 0] + rng.standard_normal(40) + 3
        lam = 0.3 * lasso.lambda_max(x, y)
        (m,) = lasso.fit_path(x, y, [lam])
        assert m.coefficients[0] == pytest.approx(grid_single(x[:, 0], y, lam), abs=1e-6)
        # closed form as a second check
        xc = x[:, 0] - x[:, 0].mean()
        b = lasso.soft_threshold(xc @ (y - y.mean()) / 40, lam) / (xc @ xc / 40)
        assert m.coefficients[0] == pytest.approx(b, abs=1e-9)
        assert m.intercept == pytest.approx(y.mean() - b * x[:, 0].mean(), abs=1e-9)

    def test_lambda_max_gives_zeros(self, rng):
        x = rng.standard_normal((30, 4))
        y = rng.standard_normal(30) + 2
        (m,) = lasso.fit_path(x, y, [lasso.lambda_max(x, y)])
        np.testing.assert_array_equal(m.coefficients, 0.0)
        assert m.intercept == pytest.approx(y.mean())

    def test_orthonormal_design_at_zero_penalty(self, rng):
        q, _ = np.linalg.qr(rng.standard_normal((50, 6)))
        x = (q - q.mean(axis=0)) * np.sqrt(50)
        beta = rng.standard_normal(6)
        y = x @ beta + 0.1 * rng.standard_normal(50)
        (m,) = lasso.fit_path(x, y, [0.0])
        ols, *_ = np.linalg.lstsq(np.c_[np.ones(50), x], y, rcond=None)
        np.testing.assert_allclose(m.coefficients, ols[1:], atol=1e-6)
        assert m.intercept == pytest.approx(ols[0], abs=1e-6)

    def test_objective_nonincreasing(self, rng):
        x = rng.standard_normal((60, 15))
        y = x[:, :3] @ [2.0, -1.0, 0.5] + rng.standard_normal(60)
        path = lasso.LambdaPath.geometric(lasso.lambda_max(x, y), 20, 1e-3)
        _, tr = lasso.fit_path(x, y, path, trace=100_000)
        for k in range(len(path)):
            obj = tr[tr[:, 0] == k, 1]
            assert np.all(np.diff(obj) <= 1e-12 * (1 + np.abs(obj[:-1])))

    def test_warm_and_cold_agree(self, rng):
        x = rng.standard_normal((50, 12))
        y = x[:, 0] - x[:, 5] + rng.standard_normal(50)
        path = lasso.LambdaPath.geometric(lasso.lambda_max(x, y), 30, 1e-2)
        warm = lasso.fit_path(x, y, path)
        for lam, m in zip(path.values[::7], warm[::7]):
            (cold,) = lasso.fit_path(x, y, [lam])
            np.testing.assert_allclose(m.coefficients, cold.coefficients, atol=1e-6)

    def test_matches_direct_objective_minimum(self, rng):
        # the solution must beat random perturbations of itself
        x = rng.standard_normal((40, 8))
        y = x[:, 1] * 2 + rng.standard_normal(40)
        lam = 0.1
        (m,) = lasso.fit_path(x, y, [lam])
        f0 = objective(x, y, m.intercept, m.coefficients, lam)
        for _ in range(200):
            d = rng.standard_normal(9) * 1e-3
            assert objective(x, y, m.intercept + d[0], m.coefficients + d[1:], lam) >= f0 - 1e-12

    def test_more_features_than_rows(self, rng):
        x = rng.standard_normal((20, 60))
        y = x[:, 0] + 0.1 * rng.standard_normal(20)
        path = lasso.LambdaPath.geometric(lasso.lambda_max(x, y), 50, 1e-3)
        models = lasso.fit_path(x, y, path)
        assert all(lasso.kkt_violation(x, y, m, m.lambda_chosen) < 1e-6 for m in models)

    def test_duplicated_column_sanity(self, rng):
        x1 = rng.standard_normal(50)
        x = np.c_[x1, x1]
        y = 2 * x1 + 0.1 * rng.standard_normal(50)
        (m,) = lasso.fit_path(x, y, [0.05])
        # the split between twins is not unique but their sum is
        (single,) = lasso.fit_path(x[:, :1], y, [0.05])
        assert m.coefficients.sum() == pytest.approx(single.coefficients[0], abs=1e-6)

    def test_convergence_error_names_lambda(self, rng):
        x = rng.standard_normal((30, 10))
        x[:, 1] = x[:, 0] + 1e-3 * rng.standard_normal(30)
        y = x[:, 0] + rng.standard_normal(30)
        with pytest.raises(ConvergenceError, match="lambda="):
            lasso.fit_path(x, y, [1e-4], max_iter=1)

    def test_alignment(self, rng):
        with pytest.raises(AlignmentError):
            lasso.fit_path(rng.standard_normal((5, 2)), np.zeros(4), [0.1])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(5, 40), st.integers(1, 25), st.integers(0, 2**32 - 1))
    def test_kkt_on_random_problems(self, n, p, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n, p))
        y = x @ rng.standard_normal(p) + rng.standard_normal(n)
        lmax = lasso.lambda_max(x, y)
        if lmax <= 0:
            return
        path = lasso.LambdaPath.geometric(lmax, 15, 1e-3)
        for m in lasso.fit_path(x, y, path):
            assert lasso.kkt_violation(x, y, m, m.lambda_chosen) < 1e-6


class TestCrossValidation:
    def test_recovers_signal_among_noise(self, rng):
        x = rng.standard_normal((200, 11))
        y = 2 * x[:, 0] + rng.standard_normal(200)
        names = [f"f{j}" for j in range(11)]
        runs, avg = lasso.cv_replicates(x, y, n_replicates=10, seed=1, names=names)
        assert 1.5 <= avg.coefficient("f0") <= 2.0
        assert avg.selection_frequency[0] == 1.0
        assert len(runs) == 10
        assert avg.lambdas.shape == (10,)

    def test_noise_only(self, rng):
        x = rng.standard_normal((150, 10))
        y = rng.standard_normal(150)
        runs, _ = lasso.cv_replicates(x, y, n_replicates=5, seed=2)
        assert np.median([r.r2 for r in runs]) <= 0.05

    def test_deterministic(self, rng):
        x = rng.standard_normal((60, 5))
        y = x[:, 0] + rng.standard_normal(60)
        _, a = lasso.cv_replicates(x, y, n_replicates=4, seed=3)
        _, b = lasso.cv_replicates(x, y, n_replicates=4, seed=3, threads=2)
        np.testing.assert_array_equal(a.coefficients, b.coefficients)

    def test_replicate_folds_differ(self, rng):
        x = rng.standard_normal((60, 5))
        y = x[:, 0] + rng.standard_normal(60)
        runs, _ = lasso.cv_replicates(x, y, n_replicates=2, seed=3)
        assert not np.array_equal(runs[0].folds, runs[1].folds)
        assert np.bincount(runs[0].folds).tolist() == [12] * 5

    def test_fold_fits_match_direct_fits(self, rng):
        # downdated fold Grams must agree with fitting the kept rows directly
        x = rng.standard_normal((40, 6))
        y = x[:, 2] + rng.standard_normal(40)
        held = np.arange(0, 40, 5)
        keep = np.setdiff1d(np.arange(40), held)
        path = lasso.LambdaPath.geometric(lasso.lambda_max(x, y), 10, 1e-2)
        betas, b0 = lasso._FoldSolver(x, y).solve(held, path.values, 1e-10, 100_000)
        direct = lasso.fit_path(x[keep], y[keep], path, tol=1e-10)
        np.testing.assert_allclose(betas, [m.coefficients for m in direct], atol=1e-7)
        np.testing.assert_allclose(b0, [m.intercept for m in direct], atol=1e-7)

    def test_shared_lambda(self, rng):
        x = rng.standard_normal((60, 5))
        y = x[:, 0] + rng.standard_normal(60)
        _, avg = lasso.cv_replicates(x, y, n_replicates=4, seed=3, shared_lambda=True)
        assert np.unique(avg.lambdas).size == 1

    def test_auc_with_labels(self, rng):
        x = rng.standard_normal((80, 3))
        y = 3 * x[:, 0] + rng.standard_normal(80)
        runs, _ = lasso.cv_replicates(x, y, labels=y > 0, n_replicates=3, seed=0)
        assert all(r.auc > 0.8 for r in runs)

    @pytest.mark.parametrize("kw", [{"n_folds": 1}, {"n_replicates": 0}])
    def test_bad_config(self, rng, kw):
        with pytest.raises(ConfigurationError):
            lasso.cv_replicates(rng.standard_normal((10, 2)), rng.standard_normal(10), **kw)


class TestAverageAndPredict:
    def _runs(self, coefs):
        return [
            lasso.ReplicateRun(i, np.zeros(1), lasso.FittedModel(float(i), np.array(c), ("a", "b"), 0.1),
                               np.zeros(1), np.zeros(1), 0.0, None, i)
            for i, c in enumerate(coefs)
        ]

    def test_average_includes_zeros(self):
        avg = lasso.average_models(self._runs([[1.0, 0.0], [0.0, 0.0], [2.0, 0.5]]))
        np.testing.assert_allclose(avg.coefficients, [1.0, 0.5 / 3])
        np.testing.assert_allclose(avg.selection_frequency, [2 / 3, 1 / 3])
        assert avg.intercept == 1.0

    def test_predict(self):
        m = lasso.FittedModel(1.0, np.array([2.0, 0.0]), ("a", "b"), 0.1)
        np.testing.assert_array_equal(lasso.predict(m, np.array([[1.0, 5.0], [0.0, 0.0]])), [3.0, 1.0])
        # columns matched by name
        np.testing.assert_array_equal(lasso.predict(m, np.array([[5.0, 1.0]]), ["b", "a"]), [3.0])

    def test_predict_mismatch(self):
        m = lasso.FittedModel(1.0, np.array([2.0, 0.0]), ("a", "b"), 0.1)
        with pytest.raises(AlignmentError):
            lasso.predict(m, np.zeros((1, 2)), ["a", "c"])
        with pytest.raises(AlignmentError):
            lasso.predict(m, np.zeros((1, 3)))


class TestCholeskyUpdates:
    def test_drop_matches_refactorization(self, rng):
        x = rng.standard_normal((30, 8))
        g = x.T @ x / 30
        order = np.arange(8, dtype=np.int64)
        pos = order.copy()
        fac = np.zeros((8, 8))
        fac[:, :] = np.linalg.cholesky(g)
        m = lasso._chol_drop(fac, order, pos, 8, 2)
        m = lasso._chol_drop(fac, order, pos, m, 5)
        keep = order[:m]
        np.testing.assert_array_equal(keep, [0, 1, 3, 4, 5, 7])
        np.testing.assert_allclose(fac[:m, :m] @ fac[:m, :m].T, g[np.ix_(keep, keep)], atol=1e-12)
        np.testing.assert_array_equal(np.triu(fac, 1), 0.0)
        assert pos[2] == -1 and pos[7] == 5

    def test_append_detects_dependent_column(self, rng):
        x = rng.standard_normal((30, 3))
        x = np.c_[x, x[:, 0] - 2 * x[:, 2]]
        g = x.T @ x / 30
        fac = np.zeros((4, 4))
        fac[:3, :3] = np.linalg.cholesky(g[:3, :3])
        z = np.zeros(4)
        d = lasso._chol_append(g, fac, np.arange(4, dtype=np.int64), 3, 3, z)
        assert abs(d) < 1e-12
        np.testing.assert_allclose(lasso._back_solve(fac, 3, z), [1.0, 0.0, -2.0], atol=1e-10)
