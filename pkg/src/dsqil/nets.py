"""Dense MLP substrate: forward, exact backprop, Adam, Polyak averaging.

Everything is float64 and written against plain numpy arrays so that the
loss gradients elsewhere in the package can be checked against finite
differences to tight tolerances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_ACTIVATIONS = ("identity", "sigmoid")


@dataclass(frozen=True)
class MlpSpec:
    """Architecture of a fully-connected net: widths plus activation names."""

    layer_widths: tuple[int, ...]
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        if len(self.layer_widths) < 2:
            raise ValueError("need at least input and output widths")
        if any(w < 1 for w in self.layer_widths):
            raise ValueError(f"all widths must be >= 1, got {self.layer_widths}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))

    @property
    def in_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def out_dim(self) -> int:
        return self.layer_widths[-1]

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1


@dataclass
class MlpParams:
    """Per-layer weight matrices (out, in) and bias vectors (out,).

    The same container is used for gradients: a gradient is shape-identical
    to the parameters it differentiates.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def arrays(self):
        """All parameter arrays, weights then bias per layer."""
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())


def init_params(spec: MlpSpec, rng: np.random.Generator) -> MlpParams:
    """Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)] per layer."""
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpParams(weights, biases)


def zeros_like_params(params: MlpParams) -> MlpParams:
    return MlpParams(
        [np.zeros_like(w) for w in params.weights],
        [np.zeros_like(b) for b in params.biases],
    )


def check_shapes(spec: MlpSpec, params: MlpParams) -> None:
    widths = spec.layer_widths
    if len(params.weights) != spec.n_layers or len(params.biases) != spec.n_layers:
        raise ValueError("layer count mismatch between spec and params")
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        if w.shape != (widths[i + 1], widths[i]) or b.shape != (widths[i + 1],):
            raise ValueError(
                f"layer {i}: expected W{(widths[i + 1], widths[i])} b({widths[i + 1]},), "
                f"got W{w.shape} b{b.shape}"
            )


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        # evaluated branch-wise so large |z| never overflows
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    return z  # identity


def _activation_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0).astype(z.dtype)
    if name == "tanh":
        return 1.0 - a * a
    if name == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


def forward(spec: MlpSpec, params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Evaluate the net on one input vector or a (batch, in_dim) matrix."""
    y, _ = forward_cached(spec, params, x)
    return y


def forward_cached(spec, params, x):
    """Like forward() but also returns the per-layer caches backward() needs."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.ndim != 2 or h.shape[1] != spec.in_dim:
        raise ValueError(f"input has width {h.shape[-1]}, net expects {spec.in_dim}")
    inputs, zs, acts = [], [], []
    for i in range(spec.n_layers):
        inputs.append(h)
        z = h @ params.weights[i].T + params.biases[i]
        name = spec.output_activation if i == spec.n_layers - 1 else spec.hidden_activation
        h = _activate(name, z)
        zs.append(z)
        acts.append(h)
    out = h[0] if single else h
    return out, (inputs, zs, acts, single)


def backward(spec, params, x, output_grad, cache=None):
    """Exact reverse-mode derivatives of forward().

    output_grad holds d(loss)/d(output); for batched inputs the returned
    parameter gradient is summed over the batch while the input gradient
    keeps one row per sample.

    Returns (param_grad: MlpParams, input_grad).
    """
    if cache is None:
        _, cache = forward_cached(spec, params, x)
    inputs, zs, acts, single = cache
    g = np.asarray(output_grad, dtype=np.float64)
    if single and g.ndim == 1:
        g = g[None, :]
    if g.shape != acts[-1].shape:
        raise ValueError(f"output_grad shape {g.shape} != output shape {acts[-1].shape}")

    grad = zeros_like_params(params)
    delta = g
    for i in reversed(range(spec.n_layers)):
        name = spec.output_activation if i == spec.n_layers - 1 else spec.hidden_activation
        delta = delta * _activation_grad(name, zs[i], acts[i])
        grad.weights[i] += delta.T @ inputs[i]
        grad.biases[i] += delta.sum(axis=0)
        delta = delta @ params.weights[i]
    input_grad = delta[0] if single else delta
    return grad, input_grad


@dataclass
class AdamState:
    """First/second moment accumulators plus the step counter."""

    m: MlpParams
    v: MlpParams
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: MlpParams) -> AdamState:
    return AdamState(m=zeros_like_params(params), v=zeros_like_params(params))


def adam_step(params: MlpParams, grad: MlpParams, state: AdamState, lr: float) -> None:
    """One in-place Adam update with bias correction."""
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    for g in grad.arrays():
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite gradient entries, refusing the step")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params.arrays(), grad.arrays(), state.m.arrays(), state.v.arrays()):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def polyak_update(target: MlpParams, online: MlpParams, rate: float) -> None:
    """In-place target <- target + rate * (online - target).

    rate=0 and rate=1 are exact no-op / exact copy.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must lie in [0, 1], got {rate}")
    for t, o in zip(target.arrays(), online.arrays()):
        if t.shape != o.shape:
            raise ValueError(f"shape mismatch {t.shape} vs {o.shape}")
        if rate == 1.0:
            t[...] = o
        elif rate != 0.0:
            t += rate * (o - t)


def save_checkpoint(path, spec: MlpSpec, params: MlpParams, extra: dict | None = None) -> None:
    """Write a self-describing JSON checkpoint (exact float round-trip)."""
    doc = {
        "layer_widths": list(spec.layer_widths),
        "hidden_activation": spec.hidden_activation,
        "output_activation": spec.output_activation,
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }
    if extra:
        doc["extra"] = extra
    with open(path, "w") as f:
        json.dump(doc, f)
        f.write("\n")


def load_checkpoint(path):
    """Inverse of save_checkpoint. Returns (spec, params, extra)."""
    with open(path) as f:
        doc = json.load(f)
    spec = MlpSpec(
        layer_widths=tuple(doc["layer_widths"]),
        hidden_activation=doc["hidden_activation"],
        output_activation=doc["output_activation"],
    )
    params = MlpParams(
        [np.asarray(w, dtype=np.float64) for w in doc["weights"]],
        [np.asarray(b, dtype=np.float64) for b in doc["biases"]],
    )
    check_shapes(spec, params)
    return spec, params, doc.get("extra", {})
