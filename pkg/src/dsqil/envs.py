"""Built-in toy environments with absorbing-state termination.

Two tasks:

* GridWorld: NxN cells, four discrete moves, sparse reward of 1 on
  entering the goal cell. The goal absorbs: every step taken after
  termination keeps the observation fixed and pays 0.
* PointMass: 1-D or 2-D double integrator with actions in [-1, 1] and a
  bounded positive reward exp(-4 |pos|^2) around the origin. Episodes
  terminate at the step limit and absorb from there on.

Environment rewards exist only for expert construction and evaluation;
the imitation algorithms never read them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

START_MODES = ("fixed", "distribution", "shifted")


@dataclass(frozen=True)
class EnvSpec:
    """Static description of an environment instance."""

    name: str
    obs_dim: int
    action_kind: str  # "discrete" | "continuous"
    action_dim: int  # |A| for discrete, vector width for continuous
    max_steps: int
    start_mode: str


@dataclass
class StepResult:
    next_obs: np.ndarray
    env_reward: float
    done: bool


class GridWorld:
    """Deterministic NxN grid, 4 actions, absorbing goal.

    Observations concatenate normalized (row, col) coordinates with a
    one-hot cell indicator, so exact-state checks and smooth function
    approximation both work on the same encoding.
    """

    # up, down, left, right
    MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))
    N_ACTIONS = 4

    def __init__(
        self,
        size: int = 5,
        goal: tuple[int, int] | None = None,
        start: tuple[int, int] = (0, 0),
        max_steps: int = 50,
        start_mode: str = "fixed",
        shifted_starts: list[tuple[int, int]] | None = None,
        seed: int = 0,
    ):
        if size < 2:
            raise ValueError("grid size must be >= 2")
        if max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if start_mode not in START_MODES:
            raise ValueError(f"unknown start mode {start_mode!r}")
        self.size = size
        self.goal = tuple(goal) if goal is not None else (size - 1, size - 1)
        self.start = tuple(start)
        if self.start == self.goal:
            raise ValueError("start cell equals goal cell")
        self.max_steps = max_steps
        self.start_mode = start_mode
        self.shifted_starts = [tuple(c) for c in shifted_starts] if shifted_starts else []
        self.rng = np.random.default_rng(seed)
        self.total_env_steps = 0
        self._cell = self.start
        self._t = 0
        self._done = False

    @property
    def spec(self) -> EnvSpec:
        return EnvSpec(
            name="gridworld",
            obs_dim=2 + self.size * self.size,
            action_kind="discrete",
            action_dim=self.N_ACTIONS,
            max_steps=self.max_steps,
            start_mode=self.start_mode,
        )

    def params(self) -> dict:
        return {
            "size": self.size,
            "goal": list(self.goal),
            "start": list(self.start),
            "max_steps": self.max_steps,
        }

    def encode(self, cell: tuple[int, int]) -> np.ndarray:
        obs = np.zeros(2 + self.size * self.size)
        obs[0] = cell[0] / (self.size - 1)
        obs[1] = cell[1] / (self.size - 1)
        obs[2 + self.cell_index(cell)] = 1.0
        return obs

    def decode(self, obs: np.ndarray) -> tuple[int, int]:
        idx = int(np.argmax(obs[2:]))
        return divmod(idx, self.size)

    def cell_index(self, cell: tuple[int, int]) -> int:
        return cell[0] * self.size + cell[1]

    def cells(self):
        for r in range(self.size):
            for c in range(self.size):
                yield (r, c)

    def transition(self, cell, action):
        """Pure transition function: (next_cell, reward, entered_goal).

        Walls keep the agent in place; the goal cell absorbs with 0 reward.
        """
        if not 0 <= action < self.N_ACTIONS:
            raise ValueError(f"action index {action} out of range")
        if cell == self.goal:
            return cell, 0.0, True
        dr, dc = self.MOVES[action]
        nr, nc = cell[0] + dr, cell[1] + dc
        if not (0 <= nr < self.size and 0 <= nc < self.size):
            nr, nc = cell
        entered = (nr, nc) == self.goal
        return (nr, nc), (1.0 if entered else 0.0), entered

    def reset(self, start_mode: str | None = None) -> np.ndarray:
        mode = start_mode or self.start_mode
        if mode == "fixed":
            self._cell = self.start
        elif mode == "distribution":
            free = [c for c in self.cells() if c != self.goal]
            self._cell = free[self.rng.integers(len(free))]
        elif mode == "shifted":
            if not self.shifted_starts:
                raise ValueError("shifted start mode requires a non-empty start set")
            self._cell = self.shifted_starts[self.rng.integers(len(self.shifted_starts))]
        else:
            raise ValueError(f"unknown start mode {mode!r}")
        self._t = 0
        self._done = False
        return self.encode(self._cell)

    def step(self, action: int) -> StepResult:
        self.total_env_steps += 1
        if self._done:
            return StepResult(self.encode(self._cell), 0.0, True)
        next_cell, reward, entered = self.transition(self._cell, int(action))
        self._cell = next_cell
        self._t += 1
        self._done = entered or self._t >= self.max_steps
        return StepResult(self.encode(self._cell), reward, self._done)


class PointMass:
    """Double integrator with bounded actions; reward peaks at the origin.

    v <- clip(v + 0.4 a, [-1, 1]); p <- clip(p + 0.2 v, [-2, 2]);
    reward exp(-4 |p|^2). Terminates (and absorbs) at the step limit.
    """

    ACCEL = 0.4
    DT = 0.2
    P_MAX = 2.0
    V_MAX = 1.0

    def __init__(
        self,
        dims: int = 1,
        max_steps: int = 40,
        start_pos: float = 1.0,
        start_mode: str = "fixed",
        seed: int = 0,
    ):
        if dims not in (1, 2):
            raise ValueError("dims must be 1 or 2")
        if max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if start_mode not in START_MODES:
            raise ValueError(f"unknown start mode {start_mode!r}")
        self.dims = dims
        self.max_steps = max_steps
        self.start_pos = float(start_pos)
        self.start_mode = start_mode
        self.rng = np.random.default_rng(seed)
        self.total_env_steps = 0
        self._p = np.zeros(dims)
        self._v = np.zeros(dims)
        self._t = 0
        self._done = False

    @property
    def spec(self) -> EnvSpec:
        return EnvSpec(
            name="pointmass",
            obs_dim=2 * self.dims,
            action_kind="continuous",
            action_dim=self.dims,
            max_steps=self.max_steps,
            start_mode=self.start_mode,
        )

    def params(self) -> dict:
        return {
            "dims": self.dims,
            "start_pos": self.start_pos,
            "max_steps": self.max_steps,
        }

    def _obs(self) -> np.ndarray:
        return np.concatenate([self._p, self._v])

    def reset(self, start_mode: str | None = None) -> np.ndarray:
        mode = start_mode or self.start_mode
        if mode == "fixed":
            self._p = np.full(self.dims, self.start_pos)
        elif mode == "distribution":
            self._p = self.start_pos + self.rng.uniform(-0.3, 0.3, size=self.dims)
        elif mode == "shifted":
            self._p = -self.start_pos + self.rng.uniform(-0.3, 0.3, size=self.dims)
        else:
            raise ValueError(f"unknown start mode {mode!r}")
        self._v = np.zeros(self.dims)
        self._t = 0
        self._done = False
        return self._obs()

    def step(self, action) -> StepResult:
        self.total_env_steps += 1
        if self._done:
            return StepResult(self._obs(), 0.0, True)
        a = np.asarray(action, dtype=np.float64).reshape(self.dims)
        if np.any(np.abs(a) > 1.0 + 1e-9):
            raise ValueError(f"action {a} outside [-1, 1]")
        a = np.clip(a, -1.0, 1.0)
        self._v = np.clip(self._v + self.ACCEL * a, -self.V_MAX, self.V_MAX)
        self._p = np.clip(self._p + self.DT * self._v, -self.P_MAX, self.P_MAX)
        reward = float(np.exp(-4.0 * float(self._p @ self._p)))
        self._t += 1
        self._done = self._t >= self.max_steps
        return StepResult(self._obs(), reward, self._done)


def value_iteration(env: GridWorld, gamma: float, tol: float = 1e-10, max_iter: int = 100_000):
    """Optimal Q-table for a GridWorld, iterated until max residual < tol.

    Returns an array of shape (size^2, 4); the goal row stays 0 (absorbing).
    """
    n = env.size * env.size
    q = np.zeros((n, env.N_ACTIONS))
    goal_idx = env.cell_index(env.goal)
    # precompute transitions once
    nxt = np.zeros((n, env.N_ACTIONS), dtype=int)
    rew = np.zeros((n, env.N_ACTIONS))
    for cell in env.cells():
        i = env.cell_index(cell)
        for a in range(env.N_ACTIONS):
            nc, r, _ = env.transition(cell, a)
            nxt[i, a] = env.cell_index(nc)
            rew[i, a] = r
    for _ in range(max_iter):
        v = q.max(axis=1)
        v[goal_idx] = 0.0
        new_q = rew + gamma * v[nxt]
        new_q[goal_idx, :] = 0.0
        residual = np.max(np.abs(new_q - q))
        q = new_q
        if residual < tol:
            return q
    raise RuntimeError(f"value iteration did not converge within {max_iter} sweeps")


class GridworldExpert:
    """Optimal policy over a value-iteration Q-table.

    Actions within `tol` of the row maximum count as optimal; a stochastic
    expert samples uniformly among them, which diversifies demonstration
    trajectories without giving up optimality.
    """

    def __init__(self, env: GridWorld, q_table: np.ndarray, rng=None,
                 stochastic: bool = True, tol: float = 1e-8):
        self.env = env
        self.q_table = q_table
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.stochastic = stochastic
        self.tol = tol

    def __call__(self, obs: np.ndarray) -> int:
        row = self.q_table[self.env.cell_index(self.env.decode(obs))]
        if not self.stochastic:
            return int(np.argmax(row))
        best = np.flatnonzero(row >= row.max() - self.tol)
        return int(best[self.rng.integers(len(best))])


def make_gridworld_expert(env: GridWorld, gamma: float, rng=None, stochastic: bool = True):
    """Solve the grid exactly and wrap the result as a policy.

    Returns (expert, q_table); the optimal return from any cell is the row
    maximum of q_table at that cell.
    """
    q = value_iteration(env, gamma)
    return GridworldExpert(env, q, rng=rng, stochastic=stochastic), q
