"""Solving the grid exactly and rolling expert demonstrations.

Value iteration gives the optimal Q-table; the expert samples uniformly
among optimal actions, so repeated rollouts trace different shortest paths
to the goal while every one of them earns the same optimal return.
"""

import numpy as np

from dsqil.envs import GridWorld, make_gridworld_expert

GAMMA = 0.25

env = GridWorld(size=5, goal=(2, 2), start=(0, 0), max_steps=30, seed=0)
expert, q_table = make_gridworld_expert(env, GAMMA, rng=np.random.default_rng(7))

v = q_table.max(axis=1).reshape(env.size, env.size)
print("optimal state values (goal at (2,2)):")
for r in range(env.size):
    print("  " + "  ".join(f"{v[r, c]:.4f}" for c in range(env.size)))

ARROWS = "^v<>"
greedy = np.argmax(q_table, axis=1).reshape(env.size, env.size)
print("\none greedy action per cell:")
for r in range(env.size):
    row = []
    for c in range(env.size):
        row.append("G" if (r, c) == env.goal else ARROWS[greedy[r, c]])
    print("  " + " ".join(row))

print("\nfive expert rollouts from the fixed start:")
for episode in range(5):
    obs = env.reset()
    cells = [env.decode(obs)]
    ret, discount, done = 0.0, 1.0, False
    while not done:
        result = env.step(expert(obs))
        obs = result.next_obs
        cells.append(env.decode(obs))
        ret += discount * result.env_reward
        discount *= GAMMA
        done = result.done
    path = " -> ".join(f"({r},{c})" for r, c in cells)
    print(f"  rollout {episode}: return {ret:.6f}   {path}")
print(f"\nevery optimal path has return gamma^3 = {GAMMA**3:.6f}")
