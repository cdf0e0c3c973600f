import numpy as np
import pytest

from cemlab.bounds import NoiseModel
from cemlab.errors import NonPositiveDefinite
from cemlab.mixture import GaussianComponent, GaussianMixture
from cemlab.numerics import Covariance, gaussian_logpdf, logdet, mc_entropy, trace

HALF_LOG_2PI = 0.9189385332046727
HALF_LOG_2PIE = 1.4189385332046727
LOG2 = 0.6931471805599453


def mix_1d(weights, means, variances, ridge=0.0):
    comps = [
        GaussianComponent(
            weight=w,
            mean=np.array([m], dtype=np.float64),
            cov=Covariance.diagonal([v], ridge=ridge),
        )
        for w, m, v in zip(weights, means, variances)
    ]
    return GaussianMixture(components=comps, dim=1, dataset_size=1000)


class TestLogdet:
    def test_identity(self):
        c = Covariance.diagonal([1.0, 1.0], ridge=0.0)
        assert logdet(c) == pytest.approx(0.0, abs=1e-12)

    def test_scalar_log(self):
        c = Covariance.diagonal([np.exp(2.0)], ridge=0.0)
        assert logdet(c) == pytest.approx(2.0, abs=1e-12)

    def test_full_2x2(self):
        # det [[2,1],[1,2]] = 3 by cofactor expansion
        c = Covariance.full([[2.0, 1.0], [1.0, 2.0]], ridge=0.0)
        assert logdet(c) == pytest.approx(np.log(3.0), abs=1e-12)

    def test_matches_eigenvalue_route(self, rng):
        for _ in range(20):
            d = int(rng.integers(1, 9))
            q, _ = np.linalg.qr(rng.standard_normal((d, d)))
            eigs = rng.uniform(0.5, 3.0, size=d)
            a = q @ np.diag(eigs) @ q.T
            c = Covariance.full(0.5 * (a + a.T), ridge=0.0)
            expected = float(np.sum(np.log(np.linalg.eigvalsh(0.5 * (a + a.T)))))
            assert abs(logdet(c) - expected) <= 1e-9

    def test_non_pd_rejected(self):
        with pytest.raises(NonPositiveDefinite):
            Covariance.full([[1.0, 2.0], [2.0, 1.0]], ridge=0.0)

    def test_zero_diag_requires_ridge(self):
        with pytest.raises(NonPositiveDefinite):
            Covariance.diagonal([0.0], ridge=0.0)
        c = Covariance.diagonal([0.0], ridge=1e-6)
        assert np.isfinite(logdet(c))

    def test_negative_diag_rejected(self):
        with pytest.raises(NonPositiveDefinite):
            Covariance.diagonal([-0.1, 1.0])


class TestTrace:
    def test_identity(self):
        assert trace(Covariance.diagonal([1.0, 1.0], ridge=0.0)) == 2.0

    def test_sum(self):
        assert trace(Covariance.diagonal([0.3, 0.7], ridge=0.0)) == pytest.approx(1.0)

    def test_full_diagonal_sum(self):
        assert trace(Covariance.full([[2.0, 1.0], [1.0, 2.0]], ridge=0.0)) == 4.0

    def test_ridge_excluded(self):
        assert trace(Covariance.diagonal([1.0], ridge=1e-3)) == 1.0

    def test_matches_eigenvalue_sum(self, rng):
        for _ in range(20):
            d = int(rng.integers(2, 9))
            q, _ = np.linalg.qr(rng.standard_normal((d, d)))
            a = q @ np.diag(rng.uniform(0.5, 3.0, size=d)) @ q.T
            a = 0.5 * (a + a.T)
            c = Covariance.full(a, ridge=0.0)
            assert abs(trace(c) - np.sum(np.linalg.eigvalsh(a))) <= 1e-10


class TestGaussianLogpdf:
    def test_standard_normal_at_mode(self):
        c = Covariance.diagonal([1.0], ridge=0.0)
        assert gaussian_logpdf([0.0], [0.0], c) == pytest.approx(
            -HALF_LOG_2PI, abs=1e-12
        )

    def test_mode_any_dim(self):
        for d in (1, 3, 7):
            c = Covariance.diagonal(np.ones(d), ridge=0.0)
            x = np.zeros(d)
            assert gaussian_logpdf(x, x, c) == pytest.approx(
                -d * HALF_LOG_2PI, abs=1e-12
            )

    def test_unit_offset(self):
        # Hand substitution: -1/2 - log(2 pi)/2
        c = Covariance.diagonal([1.0], ridge=0.0)
        assert gaussian_logpdf([1.0], [0.0], c) == pytest.approx(
            -0.5 - HALF_LOG_2PI, abs=1e-12
        )

    def test_full_matches_diagonal(self, rng):
        entries = rng.uniform(0.5, 2.0, size=4)
        x = rng.standard_normal(4)
        mean = rng.standard_normal(4)
        c_diag = Covariance.diagonal(entries, ridge=0.0)
        c_full = Covariance.full(np.diag(entries), ridge=0.0)
        assert gaussian_logpdf(x, mean, c_diag) == pytest.approx(
            gaussian_logpdf(x, mean, c_full), abs=1e-10
        )

    def test_integrates_to_one(self):
        sigma = 1.7
        c = Covariance.diagonal([sigma**2], ridge=0.0)
        grid = np.linspace(-10 * sigma, 10 * sigma, 200_001)
        density = np.exp(gaussian_logpdf(grid[:, None], [0.0], c))
        integral = np.trapezoid(density, grid)
        assert abs(integral - 1.0) <= 1e-6

    def test_batch_evaluation(self, rng):
        c = Covariance.diagonal([0.5, 2.0], ridge=0.0)
        pts = rng.standard_normal((5, 2))
        batched = gaussian_logpdf(pts, [0.0, 0.0], c)
        singles = [gaussian_logpdf(p, [0.0, 0.0], c) for p in pts]
        assert np.allclose(batched, singles, atol=1e-12)


class TestMcEntropy:
    def test_single_gaussian(self):
        mix = mix_1d([1.0], [0.0], [0.0], ridge=1e-12)
        est = mc_entropy(mix, NoiseModel(std=1.0, dim=1), n_samples=10**6, seed=7)
        assert abs(est.value - HALF_LOG_2PIE) <= 3 * est.std_error
        assert est.std_error < 0.01

    def test_separated_mixture(self):
        # Label entropy log 2 plus the shared component entropy.
        mix = mix_1d([0.5, 0.5], [0.0, 100.0], [0.0, 0.0], ridge=1e-12)
        est = mc_entropy(mix, NoiseModel(std=1.0, dim=1), n_samples=10**6, seed=11)
        assert abs(est.value - (LOG2 + HALF_LOG_2PIE)) <= 3 * est.std_error

    def test_coincident_components_collapse(self):
        mix = mix_1d([0.5, 0.5], [0.0, 0.0], [0.0, 0.0], ridge=1e-12)
        est = mc_entropy(mix, NoiseModel(std=1.0, dim=1), n_samples=10**6, seed=13)
        assert abs(est.value - HALF_LOG_2PIE) <= 3 * est.std_error

    def test_deterministic_for_seed(self):
        mix = mix_1d([0.3, 0.7], [0.0, 2.0], [0.5, 0.1], ridge=0.0)
        noise = NoiseModel(std=0.5, dim=1)
        a = mc_entropy(mix, noise, n_samples=10**4, seed=42)
        b = mc_entropy(mix, noise, n_samples=10**4, seed=42)
        assert a.value == b.value and a.std_error == b.std_error

    def test_std_error_shrinks_with_doubling(self):
        mix = mix_1d([0.4, 0.6], [0.0, 3.0], [0.8, 0.3], ridge=0.0)
        noise = NoiseModel(std=0.7, dim=1)
        ratios = []
        for seed in (1, 2, 3):
            small = mc_entropy(mix, noise, n_samples=2 * 10**4, seed=seed)
            large = mc_entropy(mix, noise, n_samples=4 * 10**4, seed=seed)
            ratios.append(small.std_error / large.std_error)
        for r in ratios:
            assert 1.2 <= r <= 1.7
