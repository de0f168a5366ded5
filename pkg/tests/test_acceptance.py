"""End-to-end acceptance suite.

Nine criteria, one test each, every test printing a single verdict line
(run with `pytest -s` to watch them live). The end-to-end criteria run the
shipped configs in configs/ at reduced desk scale; property criteria pin
exact tolerances.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from dsqil import nets, soft_q
from dsqil.discriminator import ConstantDiscriminator, Discriminator, dsqil_rewards, encode_pairs
from dsqil.harness import (
    ExperimentConfig,
    evaluate,
    generate_expert,
    load_demos,
    load_policy,
    make_env,
    make_eval_env,
    run_training,
)
from dsqil.imitation import (
    ImitationConfig,
    dsqil_train_step,
    make_train_state,
    rbc_gradient_oracle,
    run_episode,
    sqil_train_step,
)
from dsqil.nets import MlpSpec
from dsqil.replay import ReplayBuffer, Transition
from dsqil.sac import SacAgent
from dsqil.soft_q import DiscreteAgent, bc_loss, boltzmann_policy, soft_bellman_error, soft_value

from conftest import finite_difference_grad, gradient_rel_error

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def verdict(criterion: int, ok: bool, detail: str):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}"
    print(line, flush=True)
    assert ok, line


def grid_config(**overrides) -> ExperimentConfig:
    config = ExperimentConfig.from_file(CONFIG_DIR / "gridworld.toml")
    for key, value in overrides.items():
        setattr(config, key, value)
    return config


def pm_config(**overrides) -> ExperimentConfig:
    config = ExperimentConfig.from_file(CONFIG_DIR / "pointmass.toml")
    for key, value in overrides.items():
        setattr(config, key, value)
    return config


@pytest.fixture(scope="module")
def grid_expert(tmp_path_factory):
    config = grid_config()
    config.out_dir = str(tmp_path_factory.mktemp("grid_expert"))
    return config, generate_expert(config)


@pytest.fixture(scope="module")
def pm_expert(tmp_path_factory):
    config = pm_config()
    config.out_dir = str(tmp_path_factory.mktemp("pm_expert"))
    return config, generate_expert(config)


def test_criterion_1_gradient_suite():
    started = time.perf_counter()
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)

        spec = MlpSpec((3, 6, 3), "tanh", "identity")
        params = nets.init_params(spec, rng)
        agent = DiscreteAgent(spec=spec, params=params,
                              target_params=nets.init_params(spec, rng),
                              adam=nets.adam_init(params), gamma=0.97)
        states = rng.uniform(-1, 1, size=(5, 3))
        actions = rng.integers(0, 3, size=5)
        _, g = bc_loss(agent, states, actions)
        worst = max(worst, gradient_rel_error(
            g, finite_difference_grad(lambda: bc_loss(agent, states, actions)[0], params)))

        rewards = rng.uniform(size=5)
        next_states = rng.uniform(-1, 1, size=(5, 3))
        dones = rng.uniform(size=5) < 0.3
        _, g = soft_bellman_error(agent, states, actions, rewards, next_states, dones)
        worst = max(worst, gradient_rel_error(
            g, finite_difference_grad(
                lambda: soft_bellman_error(agent, states, actions, rewards,
                                           next_states, dones)[0], params)))

        disc = Discriminator(3, rng, hidden=(6, 6), warmup=0)
        demo_pairs = rng.uniform(-1, 1, size=(4, 3))
        samp_pairs = rng.uniform(-1, 1, size=(4, 3))
        _, g = disc.loss(demo_pairs, samp_pairs)
        worst = max(worst, gradient_rel_error(
            g, finite_difference_grad(lambda: disc.loss(demo_pairs, samp_pairs)[0],
                                      disc.params)))

        sac = SacAgent.build(3, 1, rng, hidden=(5, 5))
        sac_states = rng.uniform(-1, 1, size=(4, 3))
        sac_actions = rng.uniform(-0.9, 0.9, size=(4, 1))
        targets = rng.uniform(-1, 1, size=4)
        _, g = sac.critic_loss(0, sac_states, sac_actions, targets)
        worst = max(worst, gradient_rel_error(
            g, finite_difference_grad(
                lambda: sac.critic_loss(0, sac_states, sac_actions, targets)[0],
                sac.critic_params[0])))

        z = rng.standard_normal((4, 1))
        _, g, _ = sac.actor_loss(sac_states, z)
        worst = max(worst, gradient_rel_error(
            g, finite_difference_grad(lambda: sac.actor_loss(sac_states, z)[0],
                                      sac.actor_params)))

    elapsed = time.perf_counter() - started
    verdict(1, worst <= 1e-4 and elapsed < 30,
            f"gradient suite worst relative error {worst:.2e} "
            f"(tolerance 1e-4), {elapsed:.1f}s")


def test_criterion_2_soft_math_identities():
    started = time.perf_counter()
    rng = np.random.default_rng(99)
    qs = rng.uniform(-1e3, 1e3, size=(10_000, 5))
    probs = boltzmann_policy(qs)
    norm_err = float(np.max(np.abs(probs.sum(axis=1) - 1.0)))

    values = soft_value(qs)
    maxes = qs.max(axis=1)
    dominance_ok = bool(np.all(values >= maxes)
                        and np.all(values - maxes <= math.log(5) + 1e-12))

    small = rng.uniform(-50, 50, size=(2_000, 4))
    consistency_err = float(np.max(np.abs(
        np.log(boltzmann_policy(small)) - (small - soft_value(small)[:, None]))))

    extreme = boltzmann_policy(np.array([1000.0, 0.0]))
    stable_ok = bool(np.all(np.isfinite(extreme)) and extreme[0] >= 1 - 1e-300
                     and np.isfinite(soft_value(np.array([1000.0, -1000.0]))))

    elapsed = time.perf_counter() - started
    ok = (norm_err <= 1e-12 and dominance_ok and consistency_err <= 1e-10
          and stable_ok and elapsed < 10)
    verdict(2, ok, f"normalization err {norm_err:.1e} (<=1e-12), dominance {dominance_ok}, "
                   f"consistency err {consistency_err:.1e} (<=1e-10), "
                   f"stable at |Q|=1e3 {stable_ok}, {elapsed:.1f}s")


def _degeneracy_states():
    def one_hot(i):
        v = np.zeros(5)
        v[i] = 1.0
        return v

    demo = ReplayBuffer()
    for actions in ((0, 1, 0), (1, 0, 1)):
        for t, a in enumerate(actions):
            demo.push(Transition(state=one_hot(t), action=a, next_state=one_hot(t + 1),
                                 done=(t == 2), source="demo"))
    rng = np.random.default_rng(0)
    samples = [Transition(state=rng.uniform(-1, 1, 5), action=int(rng.integers(2)),
                          next_state=rng.uniform(-1, 1, 5), done=(i % 4 == 3),
                          source="sample") for i in range(16)]
    states = []
    for algorithm, disc in (("sqil", None), ("dsqil", ConstantDiscriminator(1.0, 0.0))):
        config = ImitationConfig(algorithm=algorithm, lambda_demo=1.0, lambda_samp=1.0,
                                 gamma=0.99, batch_size=16, agent_hidden=(16,),
                                 learning_rate=1e-3)
        state = make_train_state(config, obs_dim=5, action_kind="discrete",
                                 action_dim=2, demo_buffer=demo, seed=77, disc=disc)
        for s in samples:
            state.samp_buffer.push(s)
        states.append(state)
    return states


def test_criterion_3_sqil_dsqil_degeneracy():
    started = time.perf_counter()
    sqil_state, dsqil_state = _degeneracy_states()
    worst = 0.0
    for _ in range(100):
        sqil_train_step(sqil_state)
        dsqil_train_step(dsqil_state)
        for a, b in zip(sqil_state.agent.params.arrays(),
                        dsqil_state.agent.params.arrays()):
            worst = max(worst, float(np.max(np.abs(a - b))))
    elapsed = time.perf_counter() - started
    verdict(3, worst <= 1e-12 and elapsed < 30,
            f"stub-discriminator runs diverge by {worst:.2e} over 100 updates "
            f"(tolerance 1e-12), {elapsed:.1f}s")


def test_criterion_4_derivation_identity():
    started = time.perf_counter()

    def one_hot(i):
        v = np.zeros(5)
        v[i] = 1.0
        return v

    # three-step absorbing episode from a fixed start, discount exactly 1
    demo = [Transition(state=one_hot(t), action=a, next_state=one_hot(t + 1),
                       done=(t == 2), source="demo")
            for t, a in enumerate((0, 1, 0))]
    rng = np.random.default_rng(5)
    samp = [Transition(state=rng.uniform(-1, 1, 5), action=int(rng.integers(2)),
                       next_state=rng.uniform(-1, 1, 5), done=(i == 3),
                       source="sample") for i in range(4)]
    from dsqil.imitation import ImitationConfig
    config = ImitationConfig(algorithm="sqil", gamma=1.0, batch_size=4,
                             agent_hidden=(8,))
    demo_buf = ReplayBuffer()
    for t in demo:
        demo_buf.push(t)
    state = make_train_state(config, obs_dim=5, action_kind="discrete", action_dim=2,
                             demo_buffer=demo_buf, seed=13)
    state.disc = None
    result = rbc_gradient_oracle(state, demo, samp,
                                 demo_rewards=rng.uniform(size=3),
                                 samp_rewards=rng.uniform(size=4))
    rel = result.max_rel_difference()
    telescope_exact = (result.telescope_sum == result.v_start
                       and result.v_terminal == 0.0)
    elapsed = time.perf_counter() - started
    verdict(4, rel <= 1e-6 and telescope_exact and elapsed < 10,
            f"gradient routes differ by {rel:.2e} relative (tolerance 1e-6), "
            f"telescoping exact: {telescope_exact}, {elapsed:.1f}s")


def test_criterion_5_reward_bounds(grid_expert):
    config, artifacts = grid_expert
    run_cfg = grid_config(demo_path=artifacts["datasets"][8], seed=2)
    run_cfg.train.algorithm = "dsqil"
    demo_buffer = load_demos(run_cfg)
    state = make_train_state(run_cfg.train, obs_dim=demo_buffer.env_meta["obs_dim"],
                             action_kind="discrete", action_dim=4,
                             demo_buffer=demo_buffer, seed=run_cfg.seed)
    env = make_env(run_cfg.env, 11)
    lo, hi = np.inf, -np.inf
    for _ in range(run_cfg.train.episodes):
        stats = run_episode(state, env)
        lo = min(lo, stats["reward_min"])
        hi = max(hi, stats["reward_max"])
    # exact per-pair gap on every state-action pair the run ever stored
    pairs = encode_pairs(
        np.stack([t.state for t in list(state.demo_buffer) + list(state.samp_buffer)]),
        np.array([t.action for t in list(state.demo_buffer) + list(state.samp_buffer)]),
        "discrete", 4)
    demo_r = dsqil_rewards(state.disc, pairs, "demo", run_cfg.train.lambda_demo)
    samp_r = dsqil_rewards(state.disc, pairs, "sample", run_cfg.train.lambda_demo)
    gap_exact = bool(np.all(demo_r == samp_r + 1.0 / (2.0 * run_cfg.train.lambda_demo)))
    ok = (0.0 <= lo and hi <= 1.0 and gap_exact)
    verdict(5, ok, f"full run emitted rewards in [{lo:.4f}, {hi:.4f}] (within [0,1]), "
                   f"demo-sample gap exactly 1/(2 lambda): {gap_exact}")


def test_criterion_6_discriminator_separability():
    started = time.perf_counter()
    rng = np.random.default_rng(3)
    dim = 4
    demo_cloud = rng.normal(1.5, 0.3, size=(512, dim))
    samp_cloud = rng.normal(-1.5, 0.3, size=(512, dim))
    disc = Discriminator(dim, rng, warmup=0)  # stock width/depth and 3e-4 rate
    for _ in range(500):
        demo_idx = rng.integers(0, 512, size=128)
        samp_idx = rng.integers(0, 512, size=128)
        disc.update(demo_cloud[demo_idx], samp_cloud[samp_idx], samp_buffer_size=10_000)
    demo_score = float(np.mean(disc.predict(demo_cloud)))
    samp_score = float(np.mean(disc.predict(samp_cloud)))
    elapsed = time.perf_counter() - started
    verdict(6, demo_score >= 0.9 and samp_score <= 0.1 and elapsed < 60,
            f"after 500 updates mean D(demo)={demo_score:.3f} (>=0.9), "
            f"mean D(sample)={samp_score:.3f} (<=0.1), {elapsed:.1f}s")


def test_criterion_7_gridworld_end_to_end(grid_expert, tmp_path):
    config, artifacts = grid_expert
    expert_return = artifacts["expert_return"]
    finals, shifted, times = {}, {}, {}
    for algorithm in ("sqil", "dsqil", "bc"):
        started = time.perf_counter()
        run_cfg = grid_config(demo_path=artifacts["datasets"][8], seed=2,
                              out_dir=str(tmp_path / algorithm))
        run_cfg.train.algorithm = algorithm
        result = run_training(run_cfg)
        finals[algorithm] = result.final_return_mean
        policy = load_policy(result.checkpoint_path)
        shift_env = make_eval_env(run_cfg, 501, "shifted")
        shifted[algorithm], _, _ = evaluate(policy, shift_env, 20, run_cfg.train.gamma)
        times[algorithm] = time.perf_counter() - started

    threshold = 0.9 * expert_return
    ok = (finals["sqil"] >= threshold and finals["dsqil"] >= threshold
          and shifted["sqil"] > shifted["bc"] and shifted["dsqil"] > shifted["bc"]
          and max(times.values()) < 300)
    verdict(7, ok,
            f"expert={expert_return:.4f}; fixed-start sqil={finals['sqil']:.4f}, "
            f"dsqil={finals['dsqil']:.4f} (threshold {threshold:.4f}); shifted-start "
            f"bc={shifted['bc']:.4f}, sqil={shifted['sqil']:.4f}, "
            f"dsqil={shifted['dsqil']:.4f}; slowest run {max(times.values()):.0f}s")


def test_criterion_8_pointmass_trend(pm_expert, tmp_path):
    started = time.perf_counter()
    config, artifacts = pm_expert
    wins = 0
    details = []
    for seed in (1, 2, 3, 4, 5):
        finals = {}
        for algorithm in ("sqil", "dsqil"):
            run_cfg = pm_config(demo_path=artifacts["datasets"][4], seed=seed,
                                out_dir=str(tmp_path / f"{algorithm}_{seed}"))
            run_cfg.train.algorithm = algorithm
            finals[algorithm] = run_training(run_cfg).final_return_mean
        wins += finals["dsqil"] >= finals["sqil"]
        details.append(f"seed{seed}: sqil={finals['sqil']:.2f} dsqil={finals['dsqil']:.2f}")
    elapsed = time.perf_counter() - started
    verdict(8, wins >= 3 and elapsed < 900,
            f"dsqil >= sqil in {wins}/5 seeds ({'; '.join(details)}), {elapsed:.0f}s")


def test_criterion_9_byte_identical_metrics(grid_expert, tmp_path):
    config, artifacts = grid_expert
    blobs = []
    for name in ("one", "two"):
        run_cfg = grid_config(demo_path=artifacts["datasets"][8], seed=4,
                              out_dir=str(tmp_path / name))
        run_cfg.train.episodes = 30
        result = run_training(run_cfg)
        blobs.append(Path(result.metrics_path).read_bytes())
    verdict(9, blobs[0] == blobs[1],
            f"two identical (config, seed) runs wrote byte-identical metrics CSVs "
            f"({len(blobs[0])} bytes)")
