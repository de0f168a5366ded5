"""The three imitation algorithms and the loss-rewrite oracle.

* Behavioral cloning: supervised likelihood on demo pairs, no environment
  interaction.
* Constant-reward soft-Q imitation: squared soft Bellman error with reward
  1 on demonstration minibatches and 0 on sampled ones.
* Discriminator-reward variant: same update, but rewards come from a
  jointly-trained discriminator (demo: D/2 + 1/(2 lambda_demo), sample: D/2),
  refreshed every step in the episode loop.

``rbc_gradient_oracle`` cross-checks the algebra connecting the
likelihood-plus-regularizer loss with its squared-error rewrite: at
gamma = 1, with all demo rollouts starting from one initial state and
ending absorbed, both gradient routes must coincide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nets, soft_q
from .discriminator import Discriminator, dsqil_rewards, encode_pairs
from .replay import ReplayBuffer, Transition, stack
from .sac import SacAgent, sac_train_step
from .soft_q import DiscreteAgent

ALGORITHMS = ("bc", "sqil", "dsqil")


@dataclass
class ImitationConfig:
    """Hyperparameters shared by the training algorithms."""

    algorithm: str = "dsqil"
    lambda_demo: float = 1.0
    lambda_samp: float = 1.0
    gamma: float = 0.99
    batch_size: int = 64
    updates_per_step: int = 1
    episodes: int = 500
    learning_rate: float = 3e-4
    polyak_rate: float = 5e-3
    agent_hidden: tuple[int, ...] = (256, 256, 256)
    samp_capacity: int = 1_000_000
    # discriminator
    disc_hidden: tuple[int, ...] = (128, 128, 128)
    disc_lr: float = 3e-4
    disc_warmup: int = 1024
    # continuous-action agent
    init_alpha: float = 0.2
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    alpha_lr: float = 3e-4

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.lambda_demo < 0 or self.lambda_samp < 0:
            raise ValueError("lambda weights must be nonnegative")
        if self.algorithm == "dsqil" and self.lambda_demo <= 0:
            raise ValueError("dsqil needs lambda_demo > 0 (its demo bonus divides by it)")
        self.agent_hidden = tuple(self.agent_hidden)
        self.disc_hidden = tuple(self.disc_hidden)


@dataclass
class TrainState:
    """Everything one training run mutates."""

    config: ImitationConfig
    agent: object  # DiscreteAgent | SacAgent
    disc: object | None
    demo_buffer: ReplayBuffer
    samp_buffer: ReplayBuffer
    rng: np.random.Generator
    action_kind: str
    action_dim: int
    episode_count: int = 0


def make_train_state(config: ImitationConfig, obs_dim: int, action_kind: str,
                     action_dim: int, demo_buffer: ReplayBuffer, seed: int,
                     disc=None) -> TrainState:
    """Build agent (+ discriminator for the dsqil algorithm) from a seed."""
    if len(demo_buffer) == 0:
        raise ValueError("demonstration buffer is empty")
    bad = sum(t.source != "demo" for t in demo_buffer)
    if bad:
        raise ValueError(f"demonstration buffer holds {bad} non-demo transitions")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    agent_seed, disc_seed, train_seed = ss.spawn(3)
    if action_kind == "discrete":
        agent = DiscreteAgent.build(
            obs_dim, action_dim, np.random.default_rng(agent_seed),
            hidden=config.agent_hidden, gamma=config.gamma,
            learning_rate=config.learning_rate, polyak_rate=config.polyak_rate)
        pair_dim = obs_dim + action_dim
    elif action_kind == "continuous":
        agent = SacAgent.build(
            obs_dim, action_dim, np.random.default_rng(agent_seed),
            hidden=config.agent_hidden, gamma=config.gamma,
            init_alpha=config.init_alpha, actor_lr=config.actor_lr,
            critic_lr=config.critic_lr, alpha_lr=config.alpha_lr,
            polyak_rate=config.polyak_rate)
        pair_dim = obs_dim + action_dim
    else:
        raise ValueError(f"unknown action kind {action_kind!r}")
    if config.algorithm == "dsqil" and disc is None:
        disc = Discriminator(pair_dim, np.random.default_rng(disc_seed),
                             hidden=config.disc_hidden,
                             learning_rate=config.disc_lr, warmup=config.disc_warmup)
    return TrainState(
        config=config,
        agent=agent,
        disc=disc,
        demo_buffer=demo_buffer,
        samp_buffer=ReplayBuffer(capacity=config.samp_capacity),
        rng=np.random.default_rng(train_seed),
        action_kind=action_kind,
        action_dim=action_dim,
    )


def _pairs(state: TrainState, batch) -> np.ndarray:
    return encode_pairs(batch.states, batch.actions, state.action_kind, state.action_dim)


def policy_action(state: TrainState, obs):
    """Exploration action of the current policy."""
    if state.action_kind == "discrete":
        return state.agent.sample_action(obs, state.rng)
    action, _ = state.agent.sample_action(obs, state.rng)
    return action


def bc_train_step(state: TrainState, m: int | None = None) -> dict:
    """One Adam step on the mean demo log-likelihood; never touches the env."""
    m = m or state.config.batch_size
    batch = state.demo_buffer.sample_batch(m, state.rng)
    if state.action_kind == "discrete":
        loss, grad = soft_q.bc_loss(state.agent, batch.states, batch.actions)
        for g in grad.arrays():
            g /= m
        nets.adam_step(state.agent.params, grad, state.agent.adam,
                       state.agent.learning_rate)
    else:
        loss, grad = state.agent.bc_loss(batch.states, batch.actions)
        for g in grad.arrays():
            g /= m
        nets.adam_step(state.agent.actor_params, grad, state.agent.actor_adam,
                       state.agent.actor_lr)
    return {"agent_loss": loss / m, "disc_loss": 0.0,
            "demo_reward_mean": 0.0, "samp_reward_mean": 0.0}


def _bellman_update(state: TrainState, demo, samp, demo_rewards, samp_rewards) -> float:
    """One weighted soft-Bellman step: lambda_demo * demo half + lambda_samp * sample half."""
    cfg = state.config
    if state.action_kind == "discrete":
        agent = state.agent
        l_demo, g_demo = soft_q.soft_bellman_error(
            agent, demo.states, demo.actions, demo_rewards, demo.next_states, demo.dones)
        l_samp, g_samp = soft_q.soft_bellman_error(
            agent, samp.states, samp.actions, samp_rewards, samp.next_states, samp.dones)
        for gd, gs in zip(g_demo.arrays(), g_samp.arrays()):
            gd *= cfg.lambda_demo
            gd += cfg.lambda_samp * gs
        nets.adam_step(agent.params, g_demo, agent.adam, agent.learning_rate)
        agent.update_target()
        return cfg.lambda_demo * l_demo + cfg.lambda_samp * l_samp
    # continuous: one SAC step on the concatenated batch; weights 2*lambda
    # turn the mean over both halves into lambda-weighted per-half means
    states = np.concatenate([demo.states, samp.states])
    actions = np.concatenate([np.atleast_2d(demo.actions), np.atleast_2d(samp.actions)])
    rewards = np.concatenate([demo_rewards, samp_rewards])
    next_states = np.concatenate([demo.next_states, samp.next_states])
    dones = np.concatenate([demo.dones, samp.dones])
    weights = np.concatenate([
        np.full(len(demo.states), 2.0 * cfg.lambda_demo),
        np.full(len(samp.states), 2.0 * cfg.lambda_samp),
    ])
    info = sac_train_step(state.agent, states, actions, rewards, next_states, dones,
                          state.rng, weights=weights)
    return info["critic1_loss"] + info["critic2_loss"]


def sqil_train_step(state: TrainState, m: int | None = None) -> dict:
    """Constant rewards: 1 per demo transition, 0 per sampled one."""
    m = m or state.config.batch_size
    demo = state.demo_buffer.sample_batch(m, state.rng)
    samp = state.samp_buffer.sample_batch(m, state.rng)
    demo_rewards = np.ones(m)
    samp_rewards = np.zeros(m)
    loss = _bellman_update(state, demo, samp, demo_rewards, samp_rewards)
    return {"agent_loss": loss, "disc_loss": 0.0,
            "demo_reward_mean": 1.0, "samp_reward_mean": 0.0}


def dsqil_train_step(state: TrainState, m: int | None = None) -> dict:
    """Discriminator-shaped rewards, 1:1 demo/sample minibatches.

    The discriminator trains first (gated on its warm-up), then the just
    updated scores become rewards for the same minibatches.
    """
    if state.disc is None:
        raise ValueError("dsqil training requires a discriminator")
    m = m or state.config.batch_size
    demo = state.demo_buffer.sample_batch(m, state.rng)
    samp = state.samp_buffer.sample_batch(m, state.rng)
    demo_pairs = _pairs(state, demo)
    samp_pairs = _pairs(state, samp)
    status, disc_loss = state.disc.update(demo_pairs, samp_pairs, len(state.samp_buffer))
    demo_rewards = dsqil_rewards(state.disc, demo_pairs, "demo", state.config.lambda_demo)
    samp_rewards = dsqil_rewards(state.disc, samp_pairs, "sample", state.config.lambda_demo)
    loss = _bellman_update(state, demo, samp, demo_rewards, samp_rewards)
    return {"agent_loss": loss,
            "disc_loss": disc_loss if status == "updated" else 0.0,
            "demo_reward_mean": float(np.mean(demo_rewards)),
            "samp_reward_mean": float(np.mean(samp_rewards)),
            "reward_min": float(min(demo_rewards.min(), samp_rewards.min())),
            "reward_max": float(max(demo_rewards.max(), samp_rewards.max()))}


def train_step(state: TrainState, m: int | None = None) -> dict:
    step = {"bc": bc_train_step, "sqil": sqil_train_step, "dsqil": dsqil_train_step}
    return step[state.config.algorithm](state, m)


def run_episode(state: TrainState, env) -> dict:
    """Collect one episode with the current policy, training as it goes.

    Every transition lands in the sample buffer the moment it happens and
    is followed by `updates_per_step` gradient updates.
    """
    if state.config.algorithm == "bc":
        raise ValueError("behavioral cloning never rolls out episodes")
    obs = env.reset()
    done = False
    steps = 0
    env_return = 0.0
    infos = []
    while not done:
        action = policy_action(state, obs)
        result = env.step(action)
        state.samp_buffer.push(Transition(
            state=obs, action=action, next_state=result.next_obs,
            done=result.done, source="sample", env_reward=result.env_reward))
        env_return += result.env_reward
        for _ in range(state.config.updates_per_step):
            infos.append(train_step(state))
        obs = result.next_obs
        done = result.done
        steps += 1
    state.episode_count += 1
    out = {"steps": steps, "env_return": env_return}
    for key in ("agent_loss", "disc_loss", "demo_reward_mean", "samp_reward_mean"):
        out[key] = float(np.mean([i[key] for i in infos])) if infos else 0.0
    if infos and "reward_min" in infos[0]:
        out["reward_min"] = min(i["reward_min"] for i in infos)
        out["reward_max"] = max(i["reward_max"] for i in infos)
    return out


# ----- gradient-identity oracle -----


@dataclass
class OracleResult:
    """Both gradient routes plus the telescoping diagnostics."""

    grad_direct: nets.MlpParams
    grad_rewritten: nets.MlpParams
    telescope_sum: float
    v_start: float
    v_terminal: float
    n_trajectories: int

    def max_rel_difference(self) -> float:
        flat_a = np.concatenate([a.ravel() for a in self.grad_direct.arrays()])
        flat_b = np.concatenate([b.ravel() for b in self.grad_rewritten.arrays()])
        scale = max(np.max(np.abs(flat_b)), 1e-12)
        return float(np.max(np.abs(flat_a - flat_b)) / scale)


def _split_trajectories(transitions) -> list[list[Transition]]:
    trajs, cur = [], []
    for t in transitions:
        cur.append(t)
        if t.done:
            trajs.append(cur)
            cur = []
    if cur:
        raise ValueError("demo trajectories must end absorbed (last done flag missing)")
    return trajs


def rbc_gradient_oracle(state: TrainState, demo_transitions, samp_transitions,
                        demo_rewards=None, samp_rewards=None) -> OracleResult:
    """Compute the imitation gradient two independent ways and compare.

    Route one differentiates the likelihood term plus the squared-error
    regularizer as written; route two differentiates the completed-square
    form, whose demo targets carry the extra 1/(2 lambda_demo) and which
    adds the soft value of the shared initial state once per trajectory.
    Both routes differentiate through every soft value (no target network,
    no stop-gradients), which is what makes the rewrite an identity.

    Requires gamma = 1, a common initial state across demo trajectories,
    and absorbed trajectory ends; anything else is refused.
    """
    cfg = state.config
    agent = state.agent
    if not isinstance(agent, DiscreteAgent):
        raise ValueError("the gradient oracle is defined for the discrete agent")
    if cfg.gamma != 1.0:
        raise ValueError(f"oracle requires gamma = 1, got {cfg.gamma}")
    trajs = _split_trajectories(list(demo_transitions))
    if not trajs:
        raise ValueError("need at least one demo trajectory")
    s0 = trajs[0][0].state
    for traj in trajs:
        if not np.array_equal(traj[0].state, s0):
            raise ValueError("demo trajectories must share one initial state")

    demo = stack([t for traj in trajs for t in traj])
    samp_transitions = list(samp_transitions)
    samp = stack(samp_transitions) if samp_transitions else None

    if demo_rewards is None:
        demo_rewards = _raw_rewards(state, demo)
    if samp_rewards is None:
        samp_rewards = _raw_rewards(state, samp) if samp is not None else np.zeros(0)
    demo_rewards = np.asarray(demo_rewards, dtype=np.float64)
    samp_rewards = np.asarray(samp_rewards, dtype=np.float64)

    bonus = 1.0 / (2.0 * cfg.lambda_demo)
    grad_direct = _loss_grad(agent, demo, demo_rewards, samp, samp_rewards,
                             cfg.lambda_demo, cfg.lambda_samp, with_bc=True, bonus=0.0)
    grad_rewritten = _loss_grad(agent, demo, demo_rewards, samp, samp_rewards,
                                cfg.lambda_demo, cfg.lambda_samp, with_bc=False,
                                bonus=bonus)
    # + grad of V(s0) once per trajectory
    q0, cache0 = nets.forward_cached(agent.spec, agent.params, s0[None, :])
    g0, _ = nets.backward(agent.spec, agent.params, s0[None, :],
                          len(trajs) * soft_q.boltzmann_policy(q0), cache=cache0)
    for a, b in zip(grad_rewritten.arrays(), g0.arrays()):
        a += b

    # telescoping over the demo values with the terminal forced to 0
    values = soft_q.soft_value(agent.q_values(demo.states))
    next_values = np.where(demo.dones, 0.0,
                           soft_q.soft_value(agent.q_values(demo.next_states)))
    telescope = math.fsum(float(a) - float(b) for a, b in zip(values, next_values))
    v_start = float(soft_q.soft_value(agent.q_values(s0[None, :]))[0])
    return OracleResult(
        grad_direct=grad_direct,
        grad_rewritten=grad_rewritten,
        telescope_sum=telescope,
        v_start=v_start,
        v_terminal=0.0,
        n_trajectories=len(trajs),
    )


def _raw_rewards(state: TrainState, batch) -> np.ndarray:
    """Reward function R before any demo bonus: D/2 when a scorer exists, else 0."""
    if state.disc is None:
        return np.zeros(len(batch.states))
    pairs = _pairs(state, batch)
    return np.asarray(state.disc.predict(pairs, source="sample")) / 2.0


def _loss_grad(agent: DiscreteAgent, demo, demo_rewards, samp, samp_rewards,
               lambda_demo, lambda_samp, with_bc: bool, bonus: float) -> nets.MlpParams:
    """Fully-differentiated gradient of the summed imitation loss.

    with_bc toggles the likelihood term; bonus is added to the demo
    squared-error targets. Soft values at next states are differentiated,
    not stopped, with terminal transitions contributing no bootstrap.
    """
    total = None

    def accumulate(grad):
        nonlocal total
        if total is None:
            total = grad
        else:
            for a, b in zip(total.arrays(), grad.arrays()):
                a += b

    for batch, rewards, lam, bc_part in (
        (demo, demo_rewards + bonus, lambda_demo, with_bc),
        (samp, samp_rewards, lambda_samp, False),
    ):
        if batch is None or len(batch.states) == 0:
            continue
        n = len(batch.states)
        rows = np.arange(n)
        q, cache = nets.forward_cached(agent.spec, agent.params, batch.states)
        qn, cache_n = nets.forward_cached(agent.spec, agent.params, batch.next_states)
        v_next = np.where(batch.dones, 0.0, soft_q.soft_value(qn))
        delta = q[rows, batch.actions] - (rewards + agent.gamma * v_next)

        out_grad = np.zeros_like(q)
        out_grad[rows, batch.actions] += lam * 2.0 * delta
        if bc_part:
            out_grad += soft_q.boltzmann_policy(q)
            out_grad[rows, batch.actions] -= 1.0
        grad, _ = nets.backward(agent.spec, agent.params, batch.states, out_grad,
                                cache=cache)
        accumulate(grad)

        # bootstrap term differentiated through the next-state soft values
        coeff = lam * 2.0 * delta * agent.gamma * (~batch.dones)
        out_grad_n = -coeff[:, None] * soft_q.boltzmann_policy(qn)
        grad_n, _ = nets.backward(agent.spec, agent.params, batch.next_states,
                                  out_grad_n, cache=cache_n)
        accumulate(grad_n)
    return total
