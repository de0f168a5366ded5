"""Discrete maximum-entropy Q-learning primitives.

The policy is a softmax over Q-values at unit temperature; the state value
is the log-sum-exp of the Q row. Both are evaluated max-shifted so Q
entries up to +-1e3 stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from . import nets
from .nets import AdamState, MlpParams, MlpSpec


def _check_q(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape[-1] < 1:
        raise ValueError("need at least one action")
    if not np.all(np.isfinite(q)):
        raise ValueError("non-finite Q values")
    return q


def boltzmann_policy(q: np.ndarray) -> np.ndarray:
    """Action probabilities proportional to exp(Q); rows sum to 1."""
    return softmax(_check_q(q), axis=-1)


def soft_value(q: np.ndarray):
    """log sum_a exp Q(s, a), per row for batched input."""
    return logsumexp(_check_q(q), axis=-1)


@dataclass
class DiscreteAgent:
    """Q-network plus its Polyak target and optimizer state."""

    spec: MlpSpec
    params: MlpParams
    target_params: MlpParams
    adam: AdamState
    gamma: float
    learning_rate: float = 3e-4
    polyak_rate: float = 5e-3

    @classmethod
    def build(cls, obs_dim: int, n_actions: int, rng: np.random.Generator,
              hidden=(64, 64), gamma: float = 0.99,
              learning_rate: float = 3e-4, polyak_rate: float = 5e-3) -> "DiscreteAgent":
        if not 0.0 <= gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
        spec = MlpSpec((obs_dim, *hidden, n_actions), "relu", "identity")
        params = nets.init_params(spec, rng)
        return cls(
            spec=spec,
            params=params,
            target_params=params.copy(),
            adam=nets.adam_init(params),
            gamma=gamma,
            learning_rate=learning_rate,
            polyak_rate=polyak_rate,
        )

    @property
    def n_actions(self) -> int:
        return self.spec.out_dim

    def q_values(self, obs) -> np.ndarray:
        return nets.forward(self.spec, self.params, obs)

    def q_values_target(self, obs) -> np.ndarray:
        return nets.forward(self.spec, self.target_params, obs)

    def policy_probs(self, obs) -> np.ndarray:
        return boltzmann_policy(self.q_values(obs))

    def greedy_action(self, obs) -> int:
        return int(np.argmax(self.q_values(obs)))

    def sample_action(self, obs, rng: np.random.Generator) -> int:
        p = self.policy_probs(obs)
        return int(rng.choice(len(p), p=p))

    def update_target(self) -> None:
        nets.polyak_update(self.target_params, self.params, self.polyak_rate)


def bc_loss(agent: DiscreteAgent, states: np.ndarray, actions: np.ndarray):
    """Summed negative log-likelihood of the taken actions under the softmax policy.

    loss = sum_i [V(s_i) - Q(s_i, a_i)]; returns (loss, exact gradient).
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    actions = np.atleast_1d(np.asarray(actions, dtype=int))
    if len(states) == 0:
        raise ValueError("empty batch")
    if len(actions) != len(states):
        raise ValueError("states and actions length mismatch")
    q, cache = nets.forward_cached(agent.spec, agent.params, states)
    rows = np.arange(len(states))
    loss = float(np.sum(soft_value(q) - q[rows, actions]))
    # d loss / d q = policy probs minus one-hot of the taken action
    out_grad = boltzmann_policy(q)
    out_grad[rows, actions] -= 1.0
    grad, _ = nets.backward(agent.spec, agent.params, states, out_grad, cache=cache)
    return loss, grad


def soft_bellman_error(agent: DiscreteAgent, states, actions, rewards, next_states, dones):
    """Mean squared gap between Q(s, a) and r + gamma * V_target(s').

    Bootstrap values come from the target network and are held constant in
    the gradient; terminal transitions bootstrap from 0.
    Returns (loss, gradient w.r.t. the online parameters).
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    actions = np.atleast_1d(np.asarray(actions, dtype=int))
    rewards = np.atleast_1d(np.asarray(rewards, dtype=np.float64))
    next_states = np.atleast_2d(np.asarray(next_states, dtype=np.float64))
    dones = np.atleast_1d(np.asarray(dones, dtype=bool))
    n = len(states)
    if not (len(actions) == len(rewards) == len(next_states) == len(dones) == n):
        raise ValueError("batch columns have mismatched lengths")
    q, cache = nets.forward_cached(agent.spec, agent.params, states)
    rows = np.arange(n)
    v_next = soft_value(agent.q_values_target(next_states))
    targets = rewards + agent.gamma * np.where(dones, 0.0, v_next)
    delta = q[rows, actions] - targets
    loss = float(np.mean(delta * delta))
    out_grad = np.zeros_like(q)
    out_grad[rows, actions] = 2.0 * delta / n
    grad, _ = nets.backward(agent.spec, agent.params, states, out_grad, cache=cache)
    return loss, grad
