"""Soft actor-critic for the continuous-action tasks.

A squashed-Gaussian actor (tanh of a reparameterized sample), twin critics
with Polyak-averaged targets and a min-target bootstrap, and a learned
temperature driven toward a target entropy. Rewards are always supplied by
the caller: the environment's during expert training, constants or
discriminator scores during imitation.

All gradients are worked out by hand against the MLP substrate in
``nets``; the tests hold them to finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nets
from .nets import AdamState, MlpParams, MlpSpec

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
_LOG_2PI = np.log(2.0 * np.pi)


def _tanh_log_jacobian(u: np.ndarray) -> np.ndarray:
    # log(1 - tanh(u)^2) = 2 * (log 2 - u - softplus(-2u)), stable for any u
    return 2.0 * (np.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


@dataclass
class SacAgent:
    """Actor, twin critics with targets, and the temperature parameter."""

    obs_dim: int
    action_dim: int
    actor_spec: MlpSpec
    actor_params: MlpParams
    actor_adam: AdamState
    critic_specs: list[MlpSpec]
    critic_params: list[MlpParams]
    critic_targets: list[MlpParams]
    critic_adams: list[AdamState]
    log_alpha: float
    gamma: float
    target_entropy: float
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    alpha_lr: float = 3e-4
    polyak_rate: float = 5e-3
    # scalar Adam state for log_alpha
    _alpha_m: float = 0.0
    _alpha_v: float = 0.0
    _alpha_t: int = 0

    @classmethod
    def build(cls, obs_dim: int, action_dim: int, rng: np.random.Generator,
              hidden=(256, 256, 256), gamma: float = 0.99, init_alpha: float = 0.2,
              target_entropy: float | None = None, actor_lr: float = 3e-4,
              critic_lr: float = 3e-4, alpha_lr: float = 3e-4,
              polyak_rate: float = 5e-3) -> "SacAgent":
        actor_spec = MlpSpec((obs_dim, *hidden, 2 * action_dim), "relu", "identity")
        critic_spec = MlpSpec((obs_dim + action_dim, *hidden, 1), "relu", "identity")
        actor_params = nets.init_params(actor_spec, rng)
        critic_params = [nets.init_params(critic_spec, rng) for _ in range(2)]
        return cls(
            obs_dim=obs_dim,
            action_dim=action_dim,
            actor_spec=actor_spec,
            actor_params=actor_params,
            actor_adam=nets.adam_init(actor_params),
            critic_specs=[critic_spec, critic_spec],
            critic_params=critic_params,
            critic_targets=[p.copy() for p in critic_params],
            critic_adams=[nets.adam_init(p) for p in critic_params],
            log_alpha=float(np.log(init_alpha)),
            gamma=gamma,
            target_entropy=(-float(action_dim) if target_entropy is None else target_entropy),
            actor_lr=actor_lr,
            critic_lr=critic_lr,
            alpha_lr=alpha_lr,
            polyak_rate=polyak_rate,
        )

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha))

    # ----- policy -----

    def _actor_heads(self, obs, cache=False):
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        out, c = nets.forward_cached(self.actor_spec, self.actor_params, obs)
        mean = out[:, : self.action_dim]
        raw = out[:, self.action_dim:]
        log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
        if cache:
            return obs, mean, raw, log_std, c
        return mean, log_std

    def sample_action(self, obs, rng: np.random.Generator):
        """Reparameterized tanh-Gaussian sample.

        Returns (actions, log_probs); actions lie strictly inside (-1, 1)
        and the log-probability includes the tanh change of variables.
        """
        single = np.asarray(obs).ndim == 1
        mean, log_std = self._actor_heads(obs)
        std = np.exp(log_std)
        z = rng.standard_normal(mean.shape)
        u = mean + std * z
        a = np.tanh(u)
        logp = np.sum(-0.5 * z * z - log_std - 0.5 * _LOG_2PI, axis=1)
        logp -= np.sum(_tanh_log_jacobian(u), axis=1)
        if single:
            return a[0], float(logp[0])
        return a, logp

    def mean_action(self, obs) -> np.ndarray:
        single = np.asarray(obs).ndim == 1
        mean, _ = self._actor_heads(obs)
        a = np.tanh(mean)
        return a[0] if single else a

    def action_log_prob(self, obs, actions) -> np.ndarray:
        """log pi(a | s) for given squashed actions."""
        mean, log_std = self._actor_heads(obs)
        a = np.clip(np.atleast_2d(np.asarray(actions, dtype=np.float64)), -1 + 1e-12, 1 - 1e-12)
        u = np.arctanh(a)
        z = (u - mean) / np.exp(log_std)
        logp = np.sum(-0.5 * z * z - log_std - 0.5 * _LOG_2PI, axis=1)
        logp -= np.sum(_tanh_log_jacobian(u), axis=1)
        return logp

    # ----- critics -----

    def critic_values(self, which: int, obs, actions, target: bool = False):
        x = np.concatenate(
            [np.atleast_2d(np.asarray(obs, dtype=np.float64)),
             np.atleast_2d(np.asarray(actions, dtype=np.float64))], axis=1)
        params = self.critic_targets[which] if target else self.critic_params[which]
        return nets.forward(self.critic_specs[which], params, x)[:, 0]

    def bootstrap_targets(self, rewards, next_states, dones, rng) -> np.ndarray:
        """r + gamma * (min target Q' - alpha log pi') at fresh next actions.

        Terminal transitions bootstrap from 0, leaving the bare reward.
        """
        rewards = np.asarray(rewards, dtype=np.float64)
        next_states = np.atleast_2d(np.asarray(next_states, dtype=np.float64))
        dones = np.asarray(dones, dtype=bool)
        next_a, next_logp = self.sample_action(next_states, rng)
        qt = np.minimum(
            self.critic_values(0, next_states, next_a, target=True),
            self.critic_values(1, next_states, next_a, target=True),
        )
        return rewards + self.gamma * np.where(dones, 0.0, qt - self.alpha * next_logp)

    def critic_loss(self, which: int, states, actions, targets, weights=None):
        """(Weighted) mean squared error of one critic against fixed targets.

        Returns (loss, gradient); the targets are constants here.
        """
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        targets = np.asarray(targets, dtype=np.float64)
        n = len(states)
        w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
        x = np.concatenate([states, actions], axis=1)
        q, cache = nets.forward_cached(self.critic_specs[which], self.critic_params[which], x)
        delta = q[:, 0] - targets
        loss = float(np.mean(w * delta * delta))
        out_grad = (2.0 * w * delta / n)[:, None]
        grad, _ = nets.backward(self.critic_specs[which], self.critic_params[which], x,
                                out_grad, cache=cache)
        return loss, grad

    def update_critics(self, states, actions, rewards, next_states, dones, rng,
                       weights=None):
        """One Adam step per critic toward the soft bootstrap target.

        `weights` optionally rescales each squared error inside the mean.
        Returns the two loss values.
        """
        n = len(np.atleast_2d(np.asarray(states)))
        if not (len(np.atleast_2d(np.asarray(actions))) == len(np.asarray(rewards))
                == len(np.atleast_2d(np.asarray(next_states))) == len(np.asarray(dones)) == n):
            raise ValueError("batch columns have mismatched lengths")
        targets = self.bootstrap_targets(rewards, next_states, dones, rng)
        losses = []
        for k in range(2):
            loss, grad = self.critic_loss(k, states, actions, targets, weights)
            losses.append(loss)
            nets.adam_step(self.critic_params[k], grad, self.critic_adams[k], self.critic_lr)
        return losses[0], losses[1]

    # ----- actor & temperature -----

    def actor_loss(self, states, z):
        """-E[min-critic(s, a(theta)) - alpha * log pi(a | s)] at fixed noise z.

        Gradients flow through the reparameterized action into the critics
        (whose parameters stay fixed) and through the entropy term.
        Returns (loss, actor gradient, log_probs of the sampled actions).
        """
        obs, mean, raw, log_std, cache = self._actor_heads(states, cache=True)
        n, d = mean.shape
        std = np.exp(log_std)
        u = mean + std * z
        a = np.tanh(u)
        logp = np.sum(-0.5 * z * z - log_std - 0.5 * _LOG_2PI, axis=1)
        logp -= np.sum(_tanh_log_jacobian(u), axis=1)

        x = np.concatenate([obs, a], axis=1)
        qs, caches = [], []
        for k in range(2):
            q, c = nets.forward_cached(self.critic_specs[k], self.critic_params[k], x)
            qs.append(q[:, 0])
            caches.append(c)
        pick = np.argmin(np.stack(qs, axis=1), axis=1)
        qmin = np.where(pick == 0, qs[0], qs[1])
        alpha = self.alpha
        loss = -float(np.mean(qmin - alpha * logp))

        # d qmin / d action, routed through whichever critic attains the min
        dq_da = np.zeros((n, d))
        for k in range(2):
            mask = (pick == k).astype(np.float64)[:, None]
            _, in_grad = nets.backward(self.critic_specs[k], self.critic_params[k], x,
                                       mask, cache=caches[k])
            dq_da += mask * in_grad[:, self.obs_dim:]

        # d logp / du = 2 tanh(u); Gaussian part is constant in u for fixed z
        g_u = dq_da * (1.0 - a * a) - 2.0 * alpha * a
        g_mean = g_u
        g_logstd = g_u * std * z + alpha  # + alpha from d(-alpha * -log_std)/d log_std
        g_logstd = np.where((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX), g_logstd, 0.0)
        out_grad = np.concatenate([g_mean, g_logstd], axis=1) * (-1.0 / n)
        grad, _ = nets.backward(self.actor_spec, self.actor_params, obs,
                                out_grad, cache=cache)
        return loss, grad, logp

    def update_actor(self, states, rng):
        """One Adam step ascending the entropy-regularized critic value.

        Returns (loss, log_probs of the sampled actions).
        """
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        z = rng.standard_normal((len(states), self.action_dim))
        loss, grad, logp = self.actor_loss(states, z)
        nets.adam_step(self.actor_params, grad, self.actor_adam, self.actor_lr)
        return loss, logp

    def update_alpha(self, states, rng):
        """One scalar Adam step on log alpha.

        Minimizes -log_alpha * E[log pi + target_entropy], so alpha rises
        while the policy entropy sits below its target and falls above it.
        """
        _, logp = self.sample_action(np.atleast_2d(states), rng)
        g = -float(np.mean(logp + self.target_entropy))
        self._alpha_t += 1
        b1, b2, eps = 0.9, 0.999, 1e-8
        self._alpha_m = b1 * self._alpha_m + (1 - b1) * g
        self._alpha_v = b2 * self._alpha_v + (1 - b2) * g * g
        m_hat = self._alpha_m / (1 - b1**self._alpha_t)
        v_hat = self._alpha_v / (1 - b2**self._alpha_t)
        self.log_alpha -= self.alpha_lr * m_hat / (np.sqrt(v_hat) + eps)
        return -self.log_alpha * np.mean(logp + self.target_entropy)

    def update_targets(self) -> None:
        for k in range(2):
            nets.polyak_update(self.critic_targets[k], self.critic_params[k], self.polyak_rate)

    # ----- behavioral cloning -----

    def bc_loss(self, states, actions):
        """Summed negative log-likelihood of demo actions under the actor.

        The tanh-Jacobian term is constant in the parameters, so it shows
        up in the value but not the gradient. Returns (loss, actor grad).
        """
        obs, mean, raw, log_std, cache = self._actor_heads(states, cache=True)
        a = np.clip(np.atleast_2d(np.asarray(actions, dtype=np.float64)), -1 + 1e-12, 1 - 1e-12)
        if a.shape != mean.shape:
            raise ValueError("actions do not match batch/action dims")
        u = np.arctanh(a)
        inv_var = np.exp(-2.0 * log_std)
        z2 = (u - mean) ** 2 * inv_var
        loss = float(np.sum(0.5 * z2 + log_std + 0.5 * _LOG_2PI)
                     + np.sum(_tanh_log_jacobian(u)))
        g_mean = -(u - mean) * inv_var
        g_logstd = 1.0 - z2
        g_logstd = np.where((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX), g_logstd, 0.0)
        out_grad = np.concatenate([g_mean, g_logstd], axis=1)
        grad, _ = nets.backward(self.actor_spec, self.actor_params, obs,
                                out_grad, cache=cache)
        return loss, grad


def sac_train_step(agent: SacAgent, states, actions, rewards, next_states, dones,
                   rng, weights=None):
    """Critic, actor, temperature updates plus target tracking, in that order."""
    c1, c2 = agent.update_critics(states, actions, rewards, next_states, dones, rng,
                                  weights=weights)
    actor_loss, _ = agent.update_actor(states, rng)
    agent.update_alpha(states, rng)
    agent.update_targets()
    return {"critic1_loss": c1, "critic2_loss": c2, "actor_loss": actor_loss}
