"""k-component Gaussian mixture over noisy features: initial k-means++ fit,
per-batch streaming weight/covariance updates, and the posterior-utility
responsibility.

The streaming updates blend batch statistics into the running mixture:

    weight:      pi_j <- (pi_j * (N - N_batch) + n_j) / N
    covariance:  S_j  <- (1 - c_j) * S_j + c_j * dS_j,   c_j = n_j / (pi_j * N)

with c_j clamped to [0, 1] and dS_j the diagonal covariance of the newly
assigned samples about the stored mean. Means are refreshed only by the
full refit, never inside the batch loop.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateData, ParseError, ShapeMismatch
from .numerics import Covariance, gaussian_logpdf

WEIGHT_FLOOR = 1e-8


@dataclass
class GaussianComponent:
    weight: float
    mean: np.ndarray
    cov: Covariance


@dataclass
class GaussianMixture:
    components: list[GaussianComponent]
    dim: int
    dataset_size: int
    # Fingerprint of the (assignment, batch) the covariances were last
    # updated for; consumed by the loss gradient's staleness check.
    update_tag: str | None = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return len(self.components)

    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])

    def means(self) -> np.ndarray:
        return np.stack([c.mean for c in self.components])


@dataclass
class BatchAssignment:
    indices: np.ndarray   # (N_batch,) cluster id per sample
    counts: np.ndarray    # (k,) samples per cluster
    batch_size: int


def _floor_and_renormalize(weights: np.ndarray) -> np.ndarray:
    w = np.maximum(weights, WEIGHT_FLOOR)
    return w / w.sum()


def _distinct_rows(x: np.ndarray) -> int:
    return np.unique(x, axis=0).shape[0]


def _kmeanspp_seeds(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: first center uniform, then D^2-weighted."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            # All remaining mass sits on already-chosen points.
            centers[j] = x[rng.integers(n)]
            continue
        centers[j] = x[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, np.sum((x - centers[j]) ** 2, axis=1))
    return centers


def _nearest(x: np.ndarray, means: np.ndarray) -> np.ndarray:
    # Explicit difference form keeps exact ties symmetric; argmin breaks
    # ties toward the lowest index.
    dist = np.linalg.norm(x[:, None, :] - means[None, :, :], axis=2)
    return np.argmin(dist, axis=1)


def fit_init(
    features: np.ndarray,
    k: int,
    seed: int,
    iters: int = 10,
    *,
    init_means: np.ndarray | None = None,
    ridge: float = 1e-6,
) -> GaussianMixture:
    """Fit a k-component diagonal mixture by k-means++ plus hard Lloyd rounds.

    Weights are cluster frequencies (floored and renormalized), covariances
    are within-cluster diagonal covariances about the final means. Pass
    ``init_means`` to warm-start the Lloyd rounds from a previous fit
    instead of reseeding.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeMismatch(f"features must be 2-D, got shape {x.shape}")
    n, d = x.shape
    if n < k:
        raise DegenerateData(f"need at least k={k} samples, got {n}")
    if _distinct_rows(x) < k:
        raise DegenerateData(f"fewer than k={k} distinct feature vectors")
    rng = np.random.default_rng(np.random.SeedSequence([seed & (2**63 - 1), 0x6D]))

    if init_means is not None:
        means = np.asarray(init_means, dtype=np.float64).copy()
        if means.shape != (k, d):
            raise ShapeMismatch(f"init_means shape {means.shape} != ({k}, {d})")
    else:
        means = _kmeanspp_seeds(x, k, rng)

    assign = _nearest(x, means)
    for _ in range(iters):
        for j in range(k):
            members = assign == j
            if members.any():
                means[j] = x[members].mean(axis=0)
        new_assign = _nearest(x, means)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign

    counts = np.bincount(assign, minlength=k).astype(np.float64)
    weights = _floor_and_renormalize(counts / n)
    components = []
    for j in range(k):
        members = assign == j
        if members.any():
            dev = x[members] - means[j]
            var = np.mean(dev * dev, axis=0)
        else:
            var = np.zeros(d)
        components.append(
            GaussianComponent(
                weight=float(weights[j]),
                mean=means[j].copy(),
                cov=Covariance.diagonal(var, ridge=ridge),
            )
        )
    return GaussianMixture(components=components, dim=d, dataset_size=n)


def assign_nearest(batch: np.ndarray, mix: GaussianMixture) -> BatchAssignment:
    """Map each sample to the component with the nearest mean (Euclidean,
    ties to the lowest index)."""
    z = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if z.shape[1] != mix.dim:
        raise ShapeMismatch(f"batch dim {z.shape[1]} != mixture dim {mix.dim}")
    idx = _nearest(z, mix.means())
    counts = np.bincount(idx, minlength=mix.k)
    return BatchAssignment(indices=idx, counts=counts, batch_size=z.shape[0])


def update_weights(mix: GaussianMixture, assign: BatchAssignment) -> GaussianMixture:
    """Blend batch cluster frequencies into the mixture weights."""
    n_total = mix.dataset_size
    if assign.batch_size > n_total:
        raise ShapeMismatch(
            f"batch size {assign.batch_size} exceeds dataset size {n_total}"
        )
    raw = (
        mix.weights() * (n_total - assign.batch_size) + assign.counts
    ) / n_total
    weights = _floor_and_renormalize(raw)
    components = [
        replace(comp, weight=float(w)) for comp, w in zip(mix.components, weights)
    ]
    return GaussianMixture(
        components=components, dim=mix.dim, dataset_size=mix.dataset_size
    )


def batch_tag(assign: BatchAssignment, batch: np.ndarray) -> str:
    """Fingerprint tying a covariance update to its (assignment, batch)."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(assign.indices, dtype=np.int64).tobytes())
    h.update(np.ascontiguousarray(batch, dtype=np.float64).tobytes())
    return h.hexdigest()


def blend_coefficient(weight: float, count: int, dataset_size: int) -> float:
    """The covariance blend coefficient n_j / (pi_j * N), clamped to [0, 1].

    The clamp keeps the blend convex when a rare component receives a
    disproportionately large batch share.
    """
    if count <= 0:
        return 0.0
    return min(1.0, count / (weight * dataset_size))


def update_covariance(
    mix: GaussianMixture, assign: BatchAssignment, batch: np.ndarray
) -> GaussianMixture:
    """Blend the batch's within-cluster diagonal covariances into the mixture.

    Must run after :func:`update_weights` for the same batch; the blend
    coefficient uses the post-update weights. Components that received no
    samples are untouched.
    """
    z = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if z.shape[0] != assign.batch_size:
        raise ShapeMismatch("batch does not match assignment")
    components = []
    for j, comp in enumerate(mix.components):
        n_j = int(assign.counts[j])
        if n_j == 0:
            components.append(comp)
            continue
        if not comp.cov.is_diagonal:
            raise ShapeMismatch("streaming updates support diagonal covariances only")
        members = z[assign.indices == j]
        dev = members - comp.mean
        delta = np.mean(dev * dev, axis=0)
        c = blend_coefficient(comp.weight, n_j, mix.dataset_size)
        new_var = (1.0 - c) * comp.cov.entries + c * delta
        components.append(
            replace(comp, cov=Covariance.diagonal(new_var, ridge=comp.cov.ridge))
        )
    return GaussianMixture(
        components=components,
        dim=mix.dim,
        dataset_size=mix.dataset_size,
        update_tag=batch_tag(assign, z),
    )


def posterior_utility(z, mix: GaussianMixture, noise, j: int) -> float:
    """Responsibility of component j for the noisy feature z, computed with
    every component covariance widened by the noise variance."""
    if not 0 <= j < mix.k:
        raise ShapeMismatch(f"component index {j} out of range for k={mix.k}")
    noise_var = noise.std**2
    log_terms = np.array(
        [
            np.log(comp.weight)
            + gaussian_logpdf(z, comp.mean, comp.cov.add_diagonal_noise(noise_var))
            for comp in mix.components
        ]
    )
    return float(np.exp(log_terms[j] - logsumexp(log_terms)))


def save_mixture(mix: GaussianMixture, path) -> None:
    """Write the mixture checkpoint (JSON; diagonal covariances only)."""
    for c in mix.components:
        if not c.cov.is_diagonal:
            raise ShapeMismatch("mixture checkpoints support diagonal covariances only")
    doc = {
        "dim": mix.dim,
        "dataset_size": mix.dataset_size,
        "components": [
            {
                "weight": float(c.weight),
                "mean": [float(v) for v in c.mean],
                "cov_diag": [float(v) for v in c.cov.entries],
            }
            for c in mix.components
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_mixture(path, ridge: float = 1e-12) -> GaussianMixture:
    """Read a mixture checkpoint written by :func:`save_mixture`.

    The checkpoint schema does not carry the ridge; reloaded covariances
    get a tiny factorization guard so bound values stay faithful to the
    stored entries.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        components = [
            GaussianComponent(
                weight=float(c["weight"]),
                mean=np.array(c["mean"], dtype=np.float64),
                cov=Covariance.diagonal(
                    np.array(c["cov_diag"], dtype=np.float64), ridge=ridge
                ),
            )
            for c in doc["components"]
        ]
        return GaussianMixture(
            components=components,
            dim=int(doc["dim"]),
            dataset_size=int(doc["dataset_size"]),
        )
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise ParseError(f"invalid mixture checkpoint {path}: {exc}") from exc
