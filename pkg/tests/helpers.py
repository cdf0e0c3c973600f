"""Shared fixtures-by-hand for bound and adversary tests."""

import numpy as np

from cemlab.bounds import JointGaussianSpec, NoiseModel
from cemlab.mixture import GaussianComponent, GaussianMixture
from cemlab.numerics import Covariance


def make_mixture(weights, means, variances, n=100, ridge=0.0):
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    comps = [
        GaussianComponent(
            weight=float(w),
            mean=np.asarray(m, dtype=np.float64),
            cov=Covariance.diagonal(v, ridge=ridge),
        )
        for w, m, v in zip(weights, means, np.atleast_2d(variances))
    ]
    return GaussianMixture(components=comps, dim=means.shape[1], dataset_size=n)


def random_mixture(rng, k, d, n=200):
    raw = rng.uniform(0.05, 1.0, size=k)
    return make_mixture(
        raw / raw.sum(),
        rng.uniform(-3.0, 3.0, size=(k, d)),
        rng.uniform(0.05, 2.0, size=(k, d)),
        n=n,
    )


def isotropic_spec(rng, d=None):
    """A jointly Gaussian world whose posterior covariance has equal
    eigenvalues: scaled-orthogonal channel, isotropic prior and noise.
    This is the regime where the entropy-based MSE floor is tight."""
    if d is None:
        d = int(rng.integers(1, 9))
    sigma_x = float(rng.uniform(0.3, 2.0))
    gain = float(rng.uniform(0.2, 3.0))
    noise_std = float(rng.uniform(0.1, 1.5))
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return JointGaussianSpec(
        x_cov=Covariance.diagonal(np.full(d, sigma_x**2), ridge=0.0),
        channel=gain * q,
        noise=NoiseModel(std=noise_std, dim=d),
    )


def random_spec(rng, d_x=None, d_z=None):
    """A generic jointly Gaussian world (anisotropic posterior)."""
    if d_x is None:
        d_x = int(rng.integers(1, 7))
    if d_z is None:
        d_z = int(rng.integers(1, 7))
    q, _ = np.linalg.qr(rng.standard_normal((d_x, d_x)))
    eigs = rng.uniform(0.3, 2.5, size=d_x)
    x_cov = q @ np.diag(eigs) @ q.T
    return JointGaussianSpec(
        x_cov=Covariance.full(0.5 * (x_cov + x_cov.T), ridge=0.0),
        channel=rng.standard_normal((d_z, d_x)),
        noise=NoiseModel(std=float(rng.uniform(0.2, 1.2)), dim=d_z),
    )
