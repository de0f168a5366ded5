"""Experiment orchestration: experts, demo datasets, training runs, reports.

A run is fully described by an ExperimentConfig (usually parsed from a TOML
file) plus a seed. Given the same (config, seed), every artifact a run
writes — datasets, metrics CSV, checkpoints — is byte-identical across
repeats: all randomness flows from one seed tree and floats are printed
with their exact shortest repr. Wall-clock timing therefore lives in the
run summary, not in the metrics CSV.
"""

from __future__ import annotations

import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import nets
from .envs import GridWorld, PointMass, make_gridworld_expert
from .imitation import ImitationConfig, bc_train_step, make_train_state, run_episode
from .replay import ReplayBuffer, Transition, save_dataset, load_dataset
from .sac import SacAgent, sac_train_step
from .soft_q import DiscreteAgent

METRICS_COLUMNS = (
    "epoch",
    "eval_return_mean",
    "eval_return_std",
    "demo_reward_mean",
    "samp_reward_mean",
    "disc_loss",
    "agent_loss",
)


class ExpertTrainingError(RuntimeError):
    """Raised when the continuous expert misses its return threshold."""


@dataclass
class EnvConfig:
    name: str = "gridworld"
    size: int = 5
    goal: tuple[int, int] | None = None
    start: tuple[int, int] = (0, 0)
    max_steps: int = 50
    dims: int = 1  # pointmass
    start_pos: float = 1.0  # pointmass


@dataclass
class EvalConfig:
    epoch_episodes: int = 5
    final_episodes: int = 50
    start_mode: str = "fixed"


@dataclass
class ExpertConfig:
    trajectory_counts: tuple[int, ...] = (2, 4, 8, 16, 32)
    return_threshold: float = 15.0
    episodes: int = 300
    eval_episodes: int = 50
    eval_every: int = 10
    warmup_steps: int = 256
    batch_size: int = 64


@dataclass
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    train: ImitationConfig = field(default_factory=ImitationConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    expert: ExpertConfig = field(default_factory=ExpertConfig)
    demo_path: str = ""
    demo_trajectories: int = 0  # >0 slices that many leading trajectories
    seed: int = 0
    out_dir: str = "out/run"

    def to_dict(self) -> dict:
        # JSON round-trip normalizes tuples to lists, matching what any
        # consumer of a written manifest will read back
        return json.loads(json.dumps(asdict(self)))

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as f:
            doc = tomllib.load(f)
        return cls.from_dict(doc)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        cfg = cls()
        env = dict(doc.get("env", {}))
        if "goal" in env and env["goal"] is not None:
            env["goal"] = tuple(env["goal"])
        if "start" in env:
            env["start"] = tuple(env["start"])
        cfg.env = EnvConfig(**env)

        train = dict(doc.get("train", {}))
        for disc_key, cfg_key in (("hidden", "disc_hidden"),
                                  ("learning_rate", "disc_lr"),
                                  ("warmup", "disc_warmup")):
            if disc_key in doc.get("discriminator", {}):
                train[cfg_key] = doc["discriminator"][disc_key]
        for sac_key in ("init_alpha", "actor_lr", "critic_lr", "alpha_lr"):
            if sac_key in doc.get("sac", {}):
                train[sac_key] = doc["sac"][sac_key]
        if "agent_hidden" in train:
            train["agent_hidden"] = tuple(train["agent_hidden"])
        cfg.train = ImitationConfig(**train)

        ev = dict(doc.get("eval", {}))
        cfg.eval = EvalConfig(**ev)
        ex = dict(doc.get("expert", {}))
        if "trajectory_counts" in ex:
            ex["trajectory_counts"] = tuple(ex["trajectory_counts"])
        cfg.expert = ExpertConfig(**ex)

        data = doc.get("data", {})
        cfg.demo_path = data.get("demo_path", "")
        cfg.demo_trajectories = int(data.get("demo_trajectories", 0))
        run = doc.get("run", {})
        cfg.seed = int(run.get("seed", 0))
        cfg.out_dir = run.get("out_dir", "out/run")
        return cfg


def _seed_for(config_seed: int, *words: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(config_seed), *map(int, words)])


def make_env(env_cfg: EnvConfig, seed, start_mode: str | None = None,
             shifted_starts=None):
    rng_seed = seed if isinstance(seed, np.random.SeedSequence) else int(seed)
    if env_cfg.name == "gridworld":
        return GridWorld(
            size=env_cfg.size,
            goal=env_cfg.goal,
            start=env_cfg.start,
            max_steps=env_cfg.max_steps,
            start_mode=start_mode or "fixed",
            shifted_starts=shifted_starts,
            seed=rng_seed,
        )
    if env_cfg.name == "pointmass":
        return PointMass(
            dims=env_cfg.dims,
            max_steps=env_cfg.max_steps,
            start_pos=env_cfg.start_pos,
            start_mode=start_mode or "fixed",
            seed=rng_seed,
        )
    raise ValueError(f"unknown environment {env_cfg.name!r}")


def env_metadata(env) -> dict:
    spec = env.spec
    return {
        "name": spec.name,
        "obs_dim": spec.obs_dim,
        "action_kind": spec.action_kind,
        "action_dim": spec.action_dim,
        "max_steps": spec.max_steps,
        "params": env.params(),
    }


# ----- policies & evaluation -----


class TabularQPolicy:
    """Greedy policy over a stored gridworld Q-table."""

    kind = "tabular_q"

    def __init__(self, q_table: np.ndarray, grid_size: int):
        self.q_table = np.asarray(q_table, dtype=np.float64)
        self.grid_size = grid_size

    def act(self, obs: np.ndarray):
        idx = int(np.argmax(obs[2:]))
        return int(np.argmax(self.q_table[idx]))


class DiscreteQPolicy:
    """Greedy policy over a Q-network."""

    kind = "discrete_q"

    def __init__(self, spec, params):
        self.spec = spec
        self.params = params

    def act(self, obs: np.ndarray):
        return int(np.argmax(nets.forward(self.spec, self.params, obs)))


class SacMeanPolicy:
    """Deterministic tanh(mean) head of a trained actor."""

    kind = "sac_actor"

    def __init__(self, spec, params, action_dim: int):
        self.spec = spec
        self.params = params
        self.action_dim = action_dim

    def act(self, obs: np.ndarray):
        out = nets.forward(self.spec, self.params, obs)
        return np.tanh(out[: self.action_dim])


def save_policy_checkpoint(path, policy) -> None:
    if policy.kind == "tabular_q":
        doc = {"kind": "tabular_q", "grid_size": policy.grid_size,
               "q_table": policy.q_table.tolist()}
        with open(path, "w") as f:
            json.dump(doc, f)
            f.write("\n")
    elif policy.kind == "discrete_q":
        nets.save_checkpoint(path, policy.spec, policy.params, extra={"kind": "discrete_q"})
    elif policy.kind == "sac_actor":
        nets.save_checkpoint(path, policy.spec, policy.params,
                             extra={"kind": "sac_actor", "action_dim": policy.action_dim})
    else:
        raise ValueError(f"unknown policy kind {policy.kind!r}")


def load_policy(path):
    with open(path) as f:
        doc = json.load(f)
    kind = doc.get("kind") or doc.get("extra", {}).get("kind")
    if kind == "tabular_q":
        return TabularQPolicy(np.asarray(doc["q_table"]), int(doc["grid_size"]))
    spec, params, extra = nets.load_checkpoint(path)
    if kind == "discrete_q":
        return DiscreteQPolicy(spec, params)
    if kind == "sac_actor":
        return SacMeanPolicy(spec, params, int(extra["action_dim"]))
    raise ValueError(f"checkpoint {path} has unknown kind {kind!r}")


def agent_policy(agent):
    """Greedy/mean evaluation policy for a live agent."""
    if isinstance(agent, DiscreteAgent):
        return DiscreteQPolicy(agent.spec, agent.params)
    if isinstance(agent, SacAgent):
        return SacMeanPolicy(agent.actor_spec, agent.actor_params, agent.action_dim)
    raise TypeError(f"cannot evaluate agent of type {type(agent).__name__}")


def evaluate(policy, env, episodes: int, gamma: float, start_mode: str | None = None):
    """Discounted return of a deterministic policy over fresh episodes.

    Returns (mean, std, per-episode returns); never writes to any buffer.
    """
    if episodes < 1:
        raise ValueError("need at least one evaluation episode")
    if hasattr(policy, "act"):
        act = policy.act
    elif callable(policy):
        act = policy
    else:
        raise TypeError("policy must expose .act or be callable")
    returns = np.zeros(episodes)
    for ep in range(episodes):
        obs = env.reset(start_mode)
        done = False
        discount = 1.0
        total = 0.0
        while not done:
            result = env.step(act(obs))
            total += discount * result.env_reward
            discount *= gamma
            obs = result.next_obs
            done = result.done
        returns[ep] = total
    return float(np.mean(returns)), float(np.std(returns)), returns


# ----- expert generation -----


def rollout_trajectory(env, policy_fn, source: str) -> list[Transition]:
    """One fixed-start episode under policy_fn, as a list of transitions."""
    obs = env.reset("fixed")
    out = []
    done = False
    while not done:
        action = policy_fn(obs)
        result = env.step(action)
        out.append(Transition(state=obs, action=action, next_state=result.next_obs,
                              done=result.done, source=source,
                              env_reward=result.env_reward))
        obs = result.next_obs
        done = result.done
    return out


def train_pointmass_expert(config: ExperimentConfig):
    """Train a soft actor-critic on the environment reward until it clears
    the configured evaluation threshold.

    Raises ExpertTrainingError (reporting the best return seen) when the
    episode budget runs out first.
    """
    ex = config.expert
    env = make_env(config.env, _seed_for(config.seed, 30), start_mode="fixed")
    agent = SacAgent.build(
        env.spec.obs_dim, env.spec.action_dim,
        np.random.default_rng(_seed_for(config.seed, 31)),
        hidden=config.train.agent_hidden, gamma=config.train.gamma,
        init_alpha=config.train.init_alpha, actor_lr=config.train.actor_lr,
        critic_lr=config.train.critic_lr, alpha_lr=config.train.alpha_lr,
        polyak_rate=config.train.polyak_rate)
    rng = np.random.default_rng(_seed_for(config.seed, 32))
    buffer: list[tuple] = []
    best = -np.inf
    for episode in range(ex.episodes):
        obs = env.reset()
        done = False
        while not done:
            if len(buffer) < ex.warmup_steps:
                action = rng.uniform(-1.0, 1.0, size=env.spec.action_dim)
            else:
                action, _ = agent.sample_action(obs, rng)
            result = env.step(action)
            buffer.append((obs, np.asarray(action, dtype=np.float64),
                           result.env_reward, result.next_obs, result.done))
            obs = result.next_obs
            done = result.done
            if len(buffer) >= ex.warmup_steps:
                idx = rng.integers(0, len(buffer), size=ex.batch_size)
                cols = [[buffer[i][c] for i in idx] for c in range(5)]
                sac_train_step(agent, np.stack(cols[0]), np.stack(cols[1]),
                               np.asarray(cols[2]), np.stack(cols[3]),
                               np.asarray(cols[4], dtype=bool), rng)
        if (episode + 1) % ex.eval_every == 0:
            eval_env = make_env(config.env, _seed_for(config.seed, 33, episode))
            mean, _, _ = evaluate(agent_policy(agent), eval_env, ex.eval_episodes,
                                  config.train.gamma)
            best = max(best, mean)
            if mean >= ex.return_threshold:
                return agent, mean
    raise ExpertTrainingError(
        f"expert missed the return threshold {ex.return_threshold} "
        f"within {ex.episodes} episodes (best evaluation {best:.3f})")


def generate_expert(config: ExperimentConfig) -> dict:
    """Build the expert, roll its demo sets, and write all artifacts.

    The trajectory-count sweep is nested by construction: the largest set
    is rolled once and the smaller files are its prefixes, so data-amount
    effects are not confounded by fresh sampling noise.
    """
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    counts = sorted(config.expert.trajectory_counts)
    env = make_env(config.env, _seed_for(config.seed, 10), start_mode="fixed")

    if config.env.name == "gridworld":
        expert, q_table = make_gridworld_expert(
            env, config.train.gamma,
            rng=np.random.default_rng(_seed_for(config.seed, 11)))
        policy_fn = expert
        checkpoint = out_dir / "expert_checkpoint.json"
        save_policy_checkpoint(checkpoint, TabularQPolicy(q_table, env.size))
        eval_env = make_env(config.env, _seed_for(config.seed, 12))
        expert_return, _, _ = evaluate(TabularQPolicy(q_table, env.size), eval_env,
                                       config.expert.eval_episodes, config.train.gamma)
    else:
        agent, expert_return = train_pointmass_expert(config)
        demo_rng = np.random.default_rng(_seed_for(config.seed, 13))
        policy_fn = lambda obs: agent.sample_action(obs, demo_rng)[0]
        checkpoint = out_dir / "expert_checkpoint.json"
        save_policy_checkpoint(checkpoint, agent_policy(agent))

    trajectories = [rollout_trajectory(env, policy_fn, "demo") for _ in range(max(counts))]
    meta = env_metadata(env)
    dataset_paths = {}
    for k in counts:
        buf = ReplayBuffer(env_meta=meta)
        for traj in trajectories[:k]:
            for t in traj:
                buf.push(t)
        path = out_dir / f"demos_{k:03d}.jsonl"
        save_dataset(buf, path)
        dataset_paths[k] = str(path)
    return {"checkpoint": str(checkpoint), "datasets": dataset_paths,
            "expert_return": expert_return}


# ----- training runs -----


def _demo_cells(buffer: ReplayBuffer, size: int) -> set:
    cells = set()
    for t in buffer:
        for obs in (t.state, t.next_state):
            cells.add(divmod(int(np.argmax(obs[2:])), size))
    return cells


def shifted_start_cells(config: ExperimentConfig, demo_buffer: ReplayBuffer) -> list:
    """Start cells for distribution-shift evaluation: never seen in demos."""
    env_cfg = config.env
    goal = tuple(env_cfg.goal) if env_cfg.goal else (env_cfg.size - 1, env_cfg.size - 1)
    seen = _demo_cells(demo_buffer, env_cfg.size)
    cells = [(r, c) for r in range(env_cfg.size) for c in range(env_cfg.size)
             if (r, c) != goal and (r, c) not in seen]
    if not cells:
        raise ValueError("demos cover every cell; no shifted starts available")
    return cells


def make_eval_env(config: ExperimentConfig, seed, start_mode: str,
                  demo_buffer: ReplayBuffer | None = None):
    shifted = None
    if start_mode == "shifted" and config.env.name == "gridworld":
        if demo_buffer is None:
            demo_buffer = load_demos(config)
        shifted = shifted_start_cells(config, demo_buffer)
    return make_env(config.env, seed, start_mode=start_mode, shifted_starts=shifted)


def load_demos(config: ExperimentConfig) -> ReplayBuffer:
    buffer = load_dataset(config.demo_path)
    if config.demo_trajectories > 0:
        trajs = buffer.trajectories()
        if len(trajs) < config.demo_trajectories:
            raise ValueError(
                f"dataset holds {len(trajs)} trajectories, "
                f"config asks for {config.demo_trajectories}")
        sliced = ReplayBuffer(env_meta=buffer.env_meta)
        for traj in trajs[: config.demo_trajectories]:
            for t in traj:
                sliced.push(t)
        buffer = sliced
    return buffer


def validate_training_config(config: ExperimentConfig) -> list[str]:
    """All problems at once, before any work starts."""
    problems = []
    if not config.demo_path:
        problems.append("data.demo_path is not set")
    elif not Path(config.demo_path).exists():
        problems.append(f"demo dataset {config.demo_path} does not exist")
    if config.train.episodes < 1:
        problems.append("train.episodes must be >= 1")
    if config.eval.epoch_episodes < 1 or config.eval.final_episodes < 1:
        problems.append("evaluation episode counts must be >= 1")
    if config.eval.start_mode not in ("fixed", "distribution", "shifted"):
        problems.append(f"unknown eval start mode {config.eval.start_mode!r}")
    return problems


def _fmt(x) -> str:
    return repr(float(x))


@dataclass
class RunResult:
    out_dir: str
    metrics_path: str
    summary_path: str
    checkpoint_path: str
    final_return_mean: float
    final_return_std: float
    train_env_steps: int


def run_training(config: ExperimentConfig) -> RunResult:
    """Train per the config; emit manifest, per-epoch CSV, summary, checkpoint."""
    problems = validate_training_config(config)
    if problems:
        raise ValueError("invalid configuration:\n" + "\n".join(f"- {p}" for p in problems))
    started = time.perf_counter()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w") as f:
        json.dump({"config": config.to_dict()}, f, indent=2)
        f.write("\n")

    demo_buffer = load_demos(config)
    meta = demo_buffer.env_meta
    state = make_train_state(
        config.train, obs_dim=int(meta["obs_dim"]), action_kind=meta["action_kind"],
        action_dim=int(meta["action_dim"]), demo_buffer=demo_buffer,
        seed=_seed_for(config.seed, 20))

    algorithm = config.train.algorithm
    train_env = None
    if algorithm != "bc":
        train_env = make_env(config.env, _seed_for(config.seed, 21), start_mode="fixed")
        if env_metadata(train_env) != meta:
            raise ValueError("training environment does not match the dataset header")
    bc_updates = config.env.max_steps * config.train.updates_per_step

    rows = []
    for epoch in range(config.train.episodes):
        if algorithm == "bc":
            infos = [bc_train_step(state) for _ in range(bc_updates)]
            stats = {k: float(np.mean([i[k] for i in infos]))
                     for k in ("agent_loss", "disc_loss", "demo_reward_mean",
                               "samp_reward_mean")}
        else:
            stats = run_episode(state, train_env)
        eval_env = make_eval_env(config, _seed_for(config.seed, 22, epoch),
                                 config.eval.start_mode, demo_buffer)
        mean, std, _ = evaluate(agent_policy(state.agent), eval_env,
                                config.eval.epoch_episodes, config.train.gamma)
        rows.append((epoch, mean, std, stats["demo_reward_mean"],
                     stats["samp_reward_mean"], stats["disc_loss"], stats["agent_loss"]))

    metrics_path = out_dir / "metrics.csv"
    with open(metrics_path, "w") as f:
        f.write(",".join(METRICS_COLUMNS) + "\n")
        for row in rows:
            f.write(",".join([str(row[0])] + [_fmt(x) for x in row[1:]]) + "\n")

    checkpoint_path = out_dir / "checkpoint.json"
    save_policy_checkpoint(checkpoint_path, agent_policy(state.agent))

    final_env = make_eval_env(config, _seed_for(config.seed, 23),
                              config.eval.start_mode, demo_buffer)
    final_mean, final_std, _ = evaluate(agent_policy(state.agent), final_env,
                                        config.eval.final_episodes, config.train.gamma)
    train_env_steps = train_env.total_env_steps if train_env is not None else 0
    summary = {
        "env_name": meta["name"],
        "env": config.to_dict()["env"],
        "algorithm": algorithm,
        "trajectories": len(demo_buffer.trajectories()),
        "seed": config.seed,
        "epochs": config.train.episodes,
        "final_return_mean": final_mean,
        "final_return_std": final_std,
        "eval_episodes": config.eval.final_episodes,
        "eval_start_mode": config.eval.start_mode,
        "train_env_steps": train_env_steps,
        "metrics_csv": str(metrics_path),
        "checkpoint": str(checkpoint_path),
        "wall_clock_seconds": time.perf_counter() - started,
        "config": config.to_dict(),
    }
    summary_path = out_dir / "summary.json"
    with open(summary_path, "w") as f:
        json.dump(summary, f, indent=2)
        f.write("\n")
    return RunResult(
        out_dir=str(out_dir),
        metrics_path=str(metrics_path),
        summary_path=str(summary_path),
        checkpoint_path=str(checkpoint_path),
        final_return_mean=final_mean,
        final_return_std=final_std,
        train_env_steps=train_env_steps,
    )


# ----- reporting -----


def emit_report(summary_paths, out_dir) -> dict:
    """Comparison grid plus merged per-epoch curves from run summaries.

    Rows are trajectory counts, columns algorithms; the best cell per row
    is starred. Curve rows are copied from each run's metrics CSV into one
    long-format file any plotting tool can ingest.
    """
    if not summary_paths:
        raise ValueError("need at least one summary file")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summaries = []
    for path in summary_paths:
        with open(path) as f:
            summaries.append(json.load(f))
    envs = {json.dumps(s["env"], sort_keys=True) for s in summaries}
    if len(envs) > 1:
        raise ValueError("summaries come from different environment configurations")
    env_name = summaries[0]["env_name"]

    algorithms = sorted({s["algorithm"] for s in summaries})
    traj_counts = sorted({s["trajectories"] for s in summaries})
    cells = {}
    for s in summaries:
        key = (s["trajectories"], s["algorithm"])
        cells.setdefault(key, []).append((s["final_return_mean"], s["final_return_std"]))

    def cell_stats(key):
        runs = cells.get(key)
        if not runs:
            return None
        means = [m for m, _ in runs]
        if len(runs) == 1:
            return runs[0]
        return float(np.mean(means)), float(np.std(means))

    report_txt = out_dir / "report.txt"
    report_csv = out_dir / "report.csv"
    with open(report_txt, "w") as txt, open(report_csv, "w") as csv:
        csv.write("env,trajectories,algorithm,return_mean,return_std,is_best\n")
        header = ["traj"] + algorithms
        widths = [6] + [24] * len(algorithms)
        txt.write(f"environment: {env_name}\n")
        txt.write("  ".join(h.ljust(w) for h, w in zip(header, widths)) + "\n")
        for k in traj_counts:
            stats = {alg: cell_stats((k, alg)) for alg in algorithms}
            present = {alg: s for alg, s in stats.items() if s is not None}
            best = max(present, key=lambda alg: present[alg][0]) if present else None
            line = [str(k).ljust(widths[0])]
            for alg, w in zip(algorithms, widths[1:]):
                s = stats[alg]
                if s is None:
                    line.append("-".ljust(w))
                    continue
                mark = "*" if alg == best else ""
                line.append(f"{s[0]:.4f} ± {s[1]:.4f}{mark}".ljust(w))
                csv.write(f"{env_name},{k},{alg},{_fmt(s[0])},{_fmt(s[1])},"
                          f"{str(alg == best).lower()}\n")
            txt.write("  ".join(line) + "\n")

    curves_path = out_dir / "curves.csv"
    with open(curves_path, "w") as f:
        f.write("env,algorithm,trajectories,seed," + ",".join(METRICS_COLUMNS) + "\n")
        for s in summaries:
            prefix = f"{env_name},{s['algorithm']},{s['trajectories']},{s['seed']},"
            with open(s["metrics_csv"]) as m:
                for i, line in enumerate(m):
                    if i == 0:
                        continue
                    f.write(prefix + line.rstrip("\n") + "\n")
    return {"report_txt": str(report_txt), "report_csv": str(report_csv),
            "curves_csv": str(curves_path)}
