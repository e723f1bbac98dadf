"""Minimal dense network engine with exact manual backpropagation.

Forward passes run through a summation kernel whose per-row results do
not depend on how a batch is partitioned (einsum without optimization),
so batched and per-sample evaluation agree bit for bit. Backward passes
use BLAS; they are deterministic for a fixed batch layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParameterError, ShapeError, TrainingError


def matmul_exact(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with batch-partition-invariant rounding."""
    return np.einsum("ij,jk->ik", a, b, optimize=False)


def activation(kind: str, x):
    """Apply an activation elementwise."""
    x = np.asarray(x)
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "snake":
        return x + np.sin(x) ** 2
    if kind == "snake_alt":
        return 0.5 * (x + 1.0 - np.cos(2.0 * x))
    raise ParameterError(f"unknown activation {kind!r}")


def activation_derivative(kind: str, x):
    """Exact analytic derivative of ``activation`` at x."""
    x = np.asarray(x)
    if kind == "relu":
        return (x > 0.0).astype(x.dtype)
    if kind == "snake":
        return 1.0 + np.sin(2.0 * x)
    if kind == "snake_alt":
        return 0.5 + np.sin(2.0 * x)
    raise ParameterError(f"unknown activation {kind!r}")


class Mlp:
    """Fully-connected stack: affine + activation per hidden layer, affine output.

    ``weights[i]`` has shape (fan_in, fan_out); a zero-layer instance acts
    as the identity (used by the encoder-less ablation).
    """

    def __init__(self, weights: list[np.ndarray], biases: list[np.ndarray],
                 act: str = "snake_alt", passthrough_dim: int | None = None):
        if len(weights) != len(biases):
            raise ConfigError("need one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer {i}: weight {w.shape} / bias {b.shape}")
            if i and w.shape[0] != weights[i - 1].shape[1]:
                raise ShapeError(
                    f"layer {i} expects {weights[i - 1].shape[1]} inputs, "
                    f"weight has {w.shape[0]}"
                )
        if not weights and passthrough_dim is None:
            raise ConfigError("identity MLP needs an explicit width")
        activation(act, 0.0)  # validates the kind
        self.weights = weights
        self.biases = biases
        self.act = act
        self._passthrough_dim = passthrough_dim

    @classmethod
    def initialize(cls, widths: list[int], act: str = "snake_alt",
                   rng: np.random.Generator | None = None,
                   dtype=np.float32) -> "Mlp":
        """Kaiming-style uniform fan-in init, zero biases.

        ``widths`` lists input width plus one entry per layer; a single
        entry yields the identity.
        """
        if len(widths) < 1:
            raise ConfigError("widths must at least name the input dimension")
        if len(widths) == 1:
            return cls([], [], act, passthrough_dim=widths[0])
        rng = rng or np.random.default_rng()
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = np.sqrt(6.0 / fan_in)
            weights.append(rng.uniform(-bound, bound, (fan_in, fan_out))
                           .astype(dtype))
            biases.append(np.zeros(fan_out, dtype=dtype))
        return cls(weights, biases, act)

    @property
    def layer_count(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0] if self.weights else self._passthrough_dim

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1] if self.weights else self._passthrough_dim

    @property
    def dtype(self):
        return self.weights[0].dtype if self.weights else np.float32

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if x.shape[1] != self.input_dim:
            raise ShapeError(f"input width {x.shape[1]}, expected {self.input_dim}")
        return x

    def forward(self, x: np.ndarray, exact: bool = True) -> np.ndarray:
        """Batched forward pass.

        With ``exact=True`` (default) results for each row are independent
        of the batch partitioning; ``exact=False`` trades that for BLAS
        speed inside the training loop.
        """
        h = self._check_input(x)
        mm = matmul_exact if exact else np.matmul
        last = self.layer_count - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = mm(h, w) + b
            h = z if i == last else activation(self.act, z)
        return h

    def forward_trace(self, x: np.ndarray, exact: bool = False):
        """Forward pass retaining per-layer inputs and pre-activations."""
        h = self._check_input(x)
        inputs, preacts = [], []
        mm = matmul_exact if exact else np.matmul
        last = self.layer_count - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(h)
            z = mm(h, w) + b
            preacts.append(z)
            h = z if i == last else activation(self.act, z)
        return h, (inputs, preacts)

    def backward(self, trace, upstream: np.ndarray):
        """Exact reverse-mode gradients.

        Returns (weight grads, bias grads, input grad); upstream and the
        trace must come from the same forward call.
        """
        inputs, preacts = trace
        delta = np.atleast_2d(upstream)
        if self.layer_count == 0:
            return [], [], delta
        if delta.shape[1] != self.output_dim:
            raise ShapeError(
                f"upstream width {delta.shape[1]}, expected {self.output_dim}"
            )
        wgrads = [None] * self.layer_count
        bgrads = [None] * self.layer_count
        for i in range(self.layer_count - 1, -1, -1):
            if i != self.layer_count - 1:
                delta = delta * activation_derivative(self.act, preacts[i])
            wgrads[i] = inputs[i].T @ delta
            bgrads[i] = delta.sum(axis=0)
            delta = delta @ self.weights[i].T
        return wgrads, bgrads, delta

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights],
                   [b.copy() for b in self.biases],
                   self.act, self._passthrough_dim)


class AdamState:
    """Adam with bias correction; moments live alongside the parameters."""

    def __init__(self, params: list[np.ndarray], lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if not 0 <= beta1 < 1 or not 0 <= beta2 < 1:
            raise ParameterError("betas must lie in [0, 1)")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        """One in-place update; zero gradients leave parameters unchanged."""
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ShapeError("parameter / gradient count mismatch")
        for p, g in zip(params, grads):
            if p.shape != g.shape:
                raise ShapeError(f"gradient shape {g.shape} for parameter {p.shape}")
            if not np.isfinite(g).all():
                raise TrainingError(
                    f"non-finite gradient at step {self.step_count + 1} "
                    f"(shape {g.shape})"
                )
        self.step_count += 1
        b1c = 1.0 - self.beta1 ** self.step_count
        b2c = 1.0 - self.beta2 ** self.step_count
        for p, g, m, v in zip(params, grads, self.m, self.v):
            g = g.astype(p.dtype, copy=False)
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


@dataclass
class PlateauScheduler:
    """Cuts the learning rate after ``patience`` passes without improvement.

    Improvement means the metric dropped by at least ``min_improvement``
    below the best value seen so far.
    """

    lr: float
    factor: float = 0.1
    patience: int = 5
    min_improvement: float = 1e-6
    best: float = field(default=np.inf)
    stalled: int = 0

    def __post_init__(self):
        if not 0.0 < self.factor < 1.0:
            raise ParameterError("factor must lie in (0, 1)")
        if self.patience < 1:
            raise ParameterError("patience must be >= 1")

    def step(self, metric: float) -> float:
        """Record one validation pass; returns the current learning rate."""
        if not np.isfinite(metric):
            raise ParameterError(f"metric must be finite, got {metric}")
        if metric <= self.best - self.min_improvement:
            self.best = float(metric)
            self.stalled = 0
        else:
            self.stalled += 1
            if self.stalled >= self.patience:
                self.lr *= self.factor
                self.stalled = 0
        return self.lr
