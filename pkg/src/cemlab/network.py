"""Minimal dense feed-forward machinery with explicit reverse-mode
gradients: forward tape, backward pass, momentum SGD, softmax
cross-entropy, and the additive noise layer with identity pass-through.

Everything is float64; batches are (N, d) row matrices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import LabelOutOfRange, NonFinite, ParseError, ShapeMismatch, StaleTape

ACTIVATIONS = ("relu", "tanh", "identity", "softmax", "sigmoid")


@dataclass
class Layer:
    weights: np.ndarray   # (out, in)
    bias: np.ndarray      # (out,)
    activation: str

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class NeuralModule:
    layers: list[Layer]
    # Momentum state, parallel to layers: [(vel_w, vel_b), ...].
    velocity: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        if not self.velocity:
            self.velocity = [
                (np.zeros_like(l.weights), np.zeros_like(l.bias))
                for l in self.layers
            ]
        for a, b in zip(self.layers[:-1], self.layers[1:]):
            if b.weights.shape[1] != a.weights.shape[0]:
                raise ShapeMismatch(
                    f"layer dims do not chain: {a.weights.shape} -> {b.weights.shape}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weights.shape[0]

    @property
    def param_count(self) -> int:
        return sum(l.weights.size + l.bias.size for l in self.layers)


@dataclass
class TapePass:
    """Per-layer cached values for one forward pass; consumed exactly once."""

    module_id: int
    inputs: np.ndarray
    pre_acts: list[np.ndarray]
    post_acts: list[np.ndarray]
    consumed: bool = False


def init_network(dims: list[int], activations: list[str], seed: int) -> NeuralModule:
    """Seeded He/Xavier-style initialization; biases start at zero."""
    if len(activations) != len(dims) - 1:
        raise ShapeMismatch("need one activation per layer")
    rng = np.random.default_rng(np.random.SeedSequence([seed & (2**63 - 1), 0x4E]))
    layers = []
    for fan_in, fan_out, act in zip(dims[:-1], dims[1:], activations):
        scale = np.sqrt(2.0 / fan_in) if act == "relu" else np.sqrt(1.0 / fan_in)
        layers.append(
            Layer(
                weights=rng.standard_normal((fan_out, fan_in)) * scale,
                bias=np.zeros(fan_out),
                activation=act,
            )
        )
    return NeuralModule(layers=layers)


def _cropped_orthogonal(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    n = max(rows, cols)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q[:rows, :cols]


def init_looks_linear(
    d_in: int, hidden: int, d_z: int, seed: int, scale: float = 2.0
) -> NeuralModule:
    """Mirrored-orthogonal ("looks-linear") init for a relu bottleneck
    encoder: hidden rows come in (+R, -R) pairs and the output layer
    recombines them as (P, -P), so at initialization the module computes
    the exact linear map scale^2 * P @ R.

    Starting from a distance-preserving map keeps the feature geometry of
    the inputs, which the entropy penalty needs: its pull toward cluster
    means only respects class structure if the initial clusters do.

    ``hidden`` is rounded down to an even width by the pairing.
    """
    half = hidden // 2
    if half < 1 or d_z > half:
        raise ShapeMismatch(
            f"looks-linear init needs hidden >= 2 and d_z <= hidden//2, "
            f"got hidden={hidden}, d_z={d_z}"
        )
    rng = np.random.default_rng(np.random.SeedSequence([seed & (2**63 - 1), 0x11]))
    r = _cropped_orthogonal(half, d_in, rng)
    p = _cropped_orthogonal(d_z, half, rng)
    layers = [
        Layer(weights=scale * np.vstack([r, -r]), bias=np.zeros(2 * half),
              activation="relu"),
        Layer(weights=scale * np.hstack([p, -p]), bias=np.zeros(d_z),
              activation="identity"),
    ]
    return NeuralModule(layers=layers)


def _apply_activation(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "identity":
        return z
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if kind == "softmax":
        shifted = z - z.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)
    raise ValueError(f"unknown activation {kind!r}")


def _activation_backward(
    grad_out: np.ndarray, pre: np.ndarray, post: np.ndarray, kind: str
) -> np.ndarray:
    if kind == "relu":
        return grad_out * (pre > 0)
    if kind == "tanh":
        return grad_out * (1.0 - post * post)
    if kind == "identity":
        return grad_out
    if kind == "sigmoid":
        return grad_out * post * (1.0 - post)
    if kind == "softmax":
        inner = np.sum(grad_out * post, axis=1, keepdims=True)
        return post * (grad_out - inner)
    raise ValueError(f"unknown activation {kind!r}")


def forward(m: NeuralModule, batch: np.ndarray) -> tuple[np.ndarray, TapePass]:
    """Run the module on a batch, caching everything backward needs."""
    x = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if x.shape[1] != m.in_dim:
        raise ShapeMismatch(f"input dim {x.shape[1]} != module in_dim {m.in_dim}")
    pre_acts, post_acts = [], []
    a = x
    for layer in m.layers:
        z = a @ layer.weights.T + layer.bias
        a = _apply_activation(z, layer.activation)
        pre_acts.append(z)
        post_acts.append(a)
    tape = TapePass(module_id=id(m), inputs=x, pre_acts=pre_acts, post_acts=post_acts)
    return a, tape


def noise_inject(feats: np.ndarray, noise, seed: int) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian noise of variance std^2 per entry.

    Gradient contract: identity pass-through. The noise is independent of
    the features, so the upstream gradient flows through unchanged; callers
    simply reuse the gradient at the noisy output for the clean features.
    """
    x = np.asarray(feats, dtype=np.float64)
    if noise.std == 0:
        return x.copy()
    rng = np.random.default_rng(np.random.SeedSequence([seed & (2**63 - 1), 0xE9]))
    return x + noise.std * rng.standard_normal(x.shape)


def backward(
    m: NeuralModule, tape: TapePass, out_grad: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Reverse-mode pass: returns ([(dW, db), ...], input gradient)."""
    if tape.consumed:
        raise StaleTape("tape was already consumed by a backward pass")
    if tape.module_id != id(m):
        raise StaleTape("tape does not belong to this module")
    g = np.atleast_2d(np.asarray(out_grad, dtype=np.float64))
    if g.shape != tape.post_acts[-1].shape:
        raise ShapeMismatch(
            f"out_grad shape {g.shape} != output shape {tape.post_acts[-1].shape}"
        )
    tape.consumed = True
    param_grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(m.layers)
    for i in range(len(m.layers) - 1, -1, -1):
        layer = m.layers[i]
        dz = _activation_backward(g, tape.pre_acts[i], tape.post_acts[i],
                                  layer.activation)
        a_prev = tape.inputs if i == 0 else tape.post_acts[i - 1]
        param_grads[i] = (dz.T @ a_prev, dz.sum(axis=0))
        g = dz @ layer.weights
    return param_grads, g


def sgd_step(
    m: NeuralModule,
    grads: list[tuple[np.ndarray, np.ndarray]],
    lr: float,
    momentum: float = 0.0,
) -> NeuralModule:
    """Classic momentum update; returns a new module carrying the updated
    velocity. Raises if any updated parameter is not finite."""
    if lr < 0:
        raise ValueError("learning rate must be nonnegative")
    layers, velocity = [], []
    for layer, (vw, vb), (gw, gb) in zip(m.layers, m.velocity, grads):
        new_vw = momentum * vw + gw
        new_vb = momentum * vb + gb
        w = layer.weights - lr * new_vw
        b = layer.bias - lr * new_vb
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise NonFinite("parameter update produced a non-finite value")
        layers.append(Layer(weights=w, bias=b, activation=layer.activation))
        velocity.append((new_vw, new_vb))
    return NeuralModule(layers=layers, velocity=velocity)


def task_loss(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy in nats plus its gradient w.r.t. logits."""
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    n, n_classes = z.shape
    if y.size != n:
        raise ShapeMismatch(f"{y.size} labels for {n} rows of logits")
    if np.any(y < 0) or np.any(y >= n_classes):
        raise LabelOutOfRange(f"labels must lie in [0, {n_classes})")
    log_z = logsumexp(z, axis=1)
    loss = float(np.mean(log_z - z[np.arange(n), y]))
    probs = np.exp(z - log_z[:, None])
    probs[np.arange(n), y] -= 1.0
    return loss, probs / n


def save_network(m: NeuralModule, path) -> None:
    """Write the checkpoint: shapes, flattened parameters, and momentum
    state, as decimal text that round-trips float64 exactly."""
    doc = {
        "layers": [
            {
                "shape": list(l.weights.shape),
                "activation": l.activation,
                "weights": [float(v) for v in l.weights.ravel()],
                "bias": [float(v) for v in l.bias],
            }
            for l in m.layers
        ],
        "velocity": [
            {
                "weights": [float(v) for v in vw.ravel()],
                "bias": [float(v) for v in vb],
            }
            for vw, vb in m.velocity
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_network(path) -> NeuralModule:
    """Read a checkpoint written by :func:`save_network`."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        layers, velocity = [], []
        for spec_l, spec_v in zip(doc["layers"], doc["velocity"]):
            shape = tuple(spec_l["shape"])
            layers.append(
                Layer(
                    weights=np.array(spec_l["weights"], dtype=np.float64).reshape(shape),
                    bias=np.array(spec_l["bias"], dtype=np.float64),
                    activation=spec_l["activation"],
                )
            )
            velocity.append(
                (
                    np.array(spec_v["weights"], dtype=np.float64).reshape(shape),
                    np.array(spec_v["bias"], dtype=np.float64),
                )
            )
        return NeuralModule(layers=layers, velocity=velocity)
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise ParseError(f"invalid network checkpoint {path}: {exc}") from exc
