"""State-action discriminator and the reward mapping built on it.

The net scores a concatenated (observation, action) encoding with a
sigmoid head: outputs near 1 mean "looks like demonstration data". Reward
for a pair is half the score, plus a 1/(2*lambda_demo) bonus when the pair
was drawn from the demonstration buffer, which keeps every reward inside
[0, 1] at lambda_demo = 1.
"""

from __future__ import annotations

import numpy as np

from . import nets
from .nets import MlpSpec

LOG_CLAMP = 1e-12


def encode_pairs(states, actions, action_kind: str, action_dim: int) -> np.ndarray:
    """Concatenate observations with one-hot (discrete) or raw (continuous) actions."""
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    if action_kind == "discrete":
        idx = np.atleast_1d(np.asarray(actions, dtype=int))
        if np.any(idx < 0) or np.any(idx >= action_dim):
            raise ValueError("discrete action index out of range")
        onehot = np.zeros((len(states), action_dim))
        onehot[np.arange(len(states)), idx] = 1.0
        return np.concatenate([states, onehot], axis=1)
    if action_kind == "continuous":
        a = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        if a.shape != (len(states), action_dim):
            raise ValueError(f"continuous actions have shape {a.shape}, "
                             f"expected {(len(states), action_dim)}")
        return np.concatenate([states, a], axis=1)
    raise ValueError(f"unknown action kind {action_kind!r}")


class Discriminator:
    """Tanh MLP with a sigmoid head, trained with binary cross entropy."""

    def __init__(self, input_dim: int, rng: np.random.Generator,
                 hidden=(128, 128, 128), learning_rate: float = 3e-4,
                 warmup: int = 1024):
        self.spec = MlpSpec((input_dim, *hidden, 1), "tanh", "sigmoid")
        self.params = nets.init_params(self.spec, rng)
        self.adam = nets.adam_init(self.params)
        self.learning_rate = learning_rate
        self.warmup = warmup

    def predict(self, pairs: np.ndarray, source: str | None = None) -> np.ndarray:
        """D(s, a) for each row; always strictly inside (0, 1)."""
        pairs = np.asarray(pairs, dtype=np.float64)
        single = pairs.ndim == 1
        out = nets.forward(self.spec, self.params, np.atleast_2d(pairs))[:, 0]
        return float(out[0]) if single else out

    def loss(self, demo_pairs: np.ndarray, samp_pairs: np.ndarray):
        """Binary cross entropy pushing demo scores to 1 and sample scores to 0.

        Log arguments are clamped at 1e-12. Returns (loss, gradient).
        """
        demo_pairs = np.atleast_2d(np.asarray(demo_pairs, dtype=np.float64))
        samp_pairs = np.atleast_2d(np.asarray(samp_pairs, dtype=np.float64))
        if len(demo_pairs) == 0 or len(samp_pairs) == 0:
            raise ValueError("both batches must be non-empty")
        d_out, d_cache = nets.forward_cached(self.spec, self.params, demo_pairs)
        s_out, s_cache = nets.forward_cached(self.spec, self.params, samp_pairs)
        d = d_out[:, 0]
        s = s_out[:, 0]
        loss = -float(np.mean(np.log(np.maximum(d, LOG_CLAMP)))) \
            - float(np.mean(np.log(np.maximum(1.0 - s, LOG_CLAMP))))
        d_grad = np.where(d > LOG_CLAMP, -1.0 / np.maximum(d, LOG_CLAMP), 0.0) / len(d)
        s_grad = np.where(1.0 - s > LOG_CLAMP, 1.0 / np.maximum(1.0 - s, LOG_CLAMP), 0.0) / len(s)
        grad, _ = nets.backward(self.spec, self.params, demo_pairs,
                                d_grad[:, None], cache=d_cache)
        grad2, _ = nets.backward(self.spec, self.params, samp_pairs,
                                 s_grad[:, None], cache=s_cache)
        for g, g2 in zip(grad.arrays(), grad2.arrays()):
            g += g2
        return loss, grad

    def update(self, demo_pairs, samp_pairs, samp_buffer_size: int):
        """One Adam step, gated on the sample-buffer warm-up.

        Returns ("skipped", nan) before warm-up, else ("updated", loss).
        """
        if samp_buffer_size < self.warmup:
            return "skipped", float("nan")
        loss, grad = self.loss(demo_pairs, samp_pairs)
        nets.adam_step(self.params, grad, self.adam, self.learning_rate)
        return "updated", loss


class ConstantDiscriminator:
    """Stand-in scorer emitting a fixed value per source tag.

    With demo_value=1 and samp_value=0 the derived rewards collapse to the
    constant-reward scheme, which the degeneracy tests rely on.
    """

    def __init__(self, demo_value: float = 1.0, samp_value: float = 0.0):
        self.demo_value = demo_value
        self.samp_value = samp_value

    def predict(self, pairs, source: str | None = None):
        if source not in ("demo", "sample"):
            raise ValueError("constant discriminator needs a source tag")
        value = self.demo_value if source == "demo" else self.samp_value
        pairs = np.asarray(pairs, dtype=np.float64)
        return value if pairs.ndim == 1 else np.full(len(pairs), value)

    def update(self, demo_pairs, samp_pairs, samp_buffer_size: int):
        return "stub", float("nan")


def dsqil_rewards(disc, pairs, source: str, lambda_demo: float) -> np.ndarray:
    """Per-pair rewards: D/2 for samples, D/2 + 1/(2*lambda_demo) for demos.

    The demo bonus is added exactly once, on top of the already-halved
    score, so (demo reward) == (sample reward) + 1/(2*lambda_demo) holds
    bitwise for identical pairs.
    """
    if lambda_demo <= 0:
        raise ValueError("lambda_demo must be positive")
    if source not in ("demo", "sample"):
        raise ValueError(f"unknown source {source!r}")
    half = np.asarray(disc.predict(pairs, source=source)) / 2.0
    if source == "demo":
        return half + 1.0 / (2.0 * lambda_demo)
    return half
