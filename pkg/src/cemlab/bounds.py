"""Closed-form information quantities: Gaussian entropy, the mixture-entropy
upper bound, the mutual-information bound used as the training loss, the
reconstruction-MSE floor, and the jointly-Gaussian analytic oracle.

The MI bound for a noisy mixture z with components (pi_i, mu_i, S_i) and
isotropic corruption of variance v is

    sum_i pi_i * ( -log pi_i + 0.5 * (logdet(S_i + v*I) - logdet(v*I)) ).

Log-determinant ratios are always computed as differences of logs, never
as determinant quotients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveDefinite, ShapeMismatch, StaleState
from .mixture import BatchAssignment, GaussianMixture, batch_tag, blend_coefficient
from .numerics import LOG_2PI, Covariance, logdet

LOG_2PIE = LOG_2PI + 1.0


@dataclass
class NoiseModel:
    """Isotropic Gaussian corruption z = zhat + eps, eps ~ N(0, std^2 * I)."""

    std: float
    dim: int

    def __post_init__(self):
        if self.std < 0:
            raise ValueError("noise std must be nonnegative")

    @property
    def cov(self) -> Covariance:
        """The corruption covariance; requires std > 0 to be PD."""
        if self.std <= 0:
            raise NonPositiveDefinite("noise covariance is PD only for std > 0")
        return Covariance.diagonal(
            np.full(self.dim, self.std**2, dtype=np.float64), ridge=0.0
        )


@dataclass
class BoundsReport:
    mi_bound: float
    rel_cond_entropy: float
    mse_floor: float
    h_x_offset: float
    cem_loss: float

    def to_dict(self) -> dict:
        return {
            "mi_bound": float(self.mi_bound),
            "rel_cond_entropy": float(self.rel_cond_entropy),
            "mse_floor": float(self.mse_floor),
            "h_x_offset": float(self.h_x_offset),
            "cem_loss": float(self.cem_loss),
        }


@dataclass
class JointGaussianSpec:
    """A jointly Gaussian world x ~ N(0, x_cov), z = W x + eps."""

    x_cov: Covariance
    channel: np.ndarray   # (d_z, d_x)
    noise: NoiseModel

    def __post_init__(self):
        self.channel = np.asarray(self.channel, dtype=np.float64)
        if self.channel.ndim != 2:
            raise ShapeMismatch("channel must be a matrix")
        if self.channel.shape[1] != self.x_cov.dim:
            raise ShapeMismatch(
                f"channel columns {self.channel.shape[1]} != x dim {self.x_cov.dim}"
            )
        if self.channel.shape[0] != self.noise.dim:
            raise ShapeMismatch(
                f"channel rows {self.channel.shape[0]} != noise dim {self.noise.dim}"
            )

    def x_cov_matrix(self) -> np.ndarray:
        if self.x_cov.is_diagonal:
            return np.diag(self.x_cov.entries)
        return np.array(self.x_cov.matrix)


def gaussian_entropy(c: Covariance) -> float:
    """Differential entropy of N(mu, c): 0.5 * log((2*pi*e)^d * det(c))."""
    return 0.5 * (c.dim * LOG_2PIE + logdet(c))


def mixture_entropy_upper(mix: GaussianMixture, noise: NoiseModel) -> float:
    """Closed-form upper bound on the entropy of the noisy mixture:
    sum_i pi_i * (-log pi_i + entropy of the widened component)."""
    v = noise.std**2
    total = 0.0
    for comp in mix.components:
        widened = comp.cov.add_diagonal_noise(v)
        total += comp.weight * (
            -np.log(comp.weight) + gaussian_entropy(widened)
        )
    return float(total)


def mi_upper_bound(mix: GaussianMixture, noise: NoiseModel) -> float:
    """Upper bound on the information the noisy feature carries about the
    clean feature; equals :func:`mixture_entropy_upper` minus the noise
    entropy. Nonnegative for PSD component covariances."""
    ld_noise = logdet(noise.cov)
    v = noise.std**2
    total = 0.0
    for comp in mix.components:
        widened = comp.cov.add_diagonal_noise(v)
        total += comp.weight * (
            -np.log(comp.weight) + 0.5 * (logdet(widened) - ld_noise)
        )
    return float(total)


def cond_entropy_lower(h_x: float, mi: float) -> float:
    """Lower bound on the input's conditional entropy given the feature."""
    return h_x - mi


def mse_floor(h_cond: float, d: int) -> float:
    """Reconstruction-MSE floor per input dimension implied by the
    conditional entropy: exp(2 * h_cond / d) / (2*pi*e)."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return float(np.exp(2.0 * h_cond / d - LOG_2PIE))


def posterior_covariance(spec: JointGaussianSpec) -> Covariance:
    """Exact covariance of x given z for the jointly Gaussian world."""
    sx = spec.x_cov_matrix()
    w = spec.channel
    if spec.noise.std <= 0:
        raise NonPositiveDefinite("posterior requires a PD noise covariance")
    gram = w @ sx @ w.T + spec.noise.std**2 * np.eye(w.shape[0])
    try:
        sol = np.linalg.solve(gram, w @ sx)
    except np.linalg.LinAlgError as exc:
        raise NonPositiveDefinite("channel gram matrix is singular") from exc
    post = sx - sx @ w.T @ sol
    return Covariance.full(0.5 * (post + post.T), ridge=0.0)


def minimal_mse_oracle(spec: JointGaussianSpec) -> float:
    """Per-dimension MSE of the exact posterior-mean reconstructor."""
    post = posterior_covariance(spec)
    return float(np.trace(post.matrix) / spec.x_cov.dim)


def wiener_gain(spec: JointGaussianSpec) -> np.ndarray:
    """The linear posterior-mean map z -> E[x|z] for zero prior mean."""
    sx = spec.x_cov_matrix()
    w = spec.channel
    gram = w @ sx @ w.T + spec.noise.std**2 * np.eye(w.shape[0])
    try:
        return sx @ w.T @ np.linalg.inv(gram)
    except np.linalg.LinAlgError as exc:
        raise NonPositiveDefinite("channel gram matrix is singular") from exc


def cem_loss(mix: GaussianMixture, noise: NoiseModel) -> float:
    """The conditional-entropy training penalty; by construction identical
    to :func:`mi_upper_bound`, kept as a named alias so the trainer's loss
    ledger refers to the penalty by its role."""
    return mi_upper_bound(mix, noise)


def cem_loss_grad(
    batch: np.ndarray,
    assign: BatchAssignment,
    mix: GaussianMixture,
    noise: NoiseModel,
) -> np.ndarray:
    """Gradient of :func:`cem_loss` with respect to each feature vector in
    the batch, through the covariance blend only.

    Assignments, weights, and means are held constant (straight-through);
    the chain runs batch covariance -> blended covariance -> log-determinant
    term. ``mix`` must be the mixture returned by the covariance update for
    exactly this (assignment, batch) pair.
    """
    z = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if mix.update_tag is None or mix.update_tag != batch_tag(assign, z):
        raise StaleState("mixture covariances were not updated for this batch")
    v = noise.std**2
    grad = np.zeros_like(z)
    for j, comp in enumerate(mix.components):
        n_j = int(assign.counts[j])
        if n_j == 0:
            continue
        members = assign.indices == j
        c = blend_coefficient(comp.weight, n_j, mix.dataset_size)
        denom = comp.cov.add_diagonal_noise(v).ridged_entries()
        dev = z[members] - comp.mean
        grad[members] = comp.weight * c * dev / (n_j * denom)
    return grad


def bounds_report(
    mix: GaussianMixture,
    noise: NoiseModel,
    h_x_offset: float,
    input_dim: int,
) -> BoundsReport:
    """Assemble the standard report: MI bound, relative conditional entropy,
    and the MSE floor at the stated entropy offset."""
    mi = mi_upper_bound(mix, noise)
    return BoundsReport(
        mi_bound=mi,
        rel_cond_entropy=-mi,
        mse_floor=mse_floor(cond_entropy_lower(h_x_offset, mi), input_dim),
        h_x_offset=h_x_offset,
        cem_loss=cem_loss(mix, noise),
    )
