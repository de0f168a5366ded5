"""Replay buffers and the on-disk demonstration format.

Two buffer instances drive training: a demonstration buffer that is frozen
after loading and a sample buffer the rollout loop appends to. Datasets are
JSON Lines: one header describing the generating environment, then one
transition per line. Python's float repr round-trips exactly, so a saved
buffer reloads value-identical.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

SOURCES = ("demo", "sample")


class DatasetError(ValueError):
    """Malformed dataset file; the message names the offending record."""


@dataclass
class Transition:
    """One (s, a, s', done) step with its source tag.

    env_reward rides along for bookkeeping and expert training only; the
    imitation losses never read it.
    """

    state: np.ndarray
    action: object  # int for discrete actions, np.ndarray for continuous
    next_state: np.ndarray
    done: bool
    source: str = "sample"
    env_reward: float = 0.0

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source tag {self.source!r}")
        self.state = np.asarray(self.state, dtype=np.float64)
        self.next_state = np.asarray(self.next_state, dtype=np.float64)
        if self.state.shape != self.next_state.shape:
            raise ValueError("state and next_state have different widths")


@dataclass
class TransitionBatch:
    """Column-stacked view of a list of transitions."""

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    env_rewards: np.ndarray


def stack(transitions) -> TransitionBatch:
    if not transitions:
        raise ValueError("cannot stack an empty batch")
    discrete = np.isscalar(transitions[0].action) or np.ndim(transitions[0].action) == 0
    actions = (
        np.array([int(t.action) for t in transitions])
        if discrete
        else np.stack([np.asarray(t.action, dtype=np.float64) for t in transitions])
    )
    return TransitionBatch(
        states=np.stack([t.state for t in transitions]),
        actions=actions,
        next_states=np.stack([t.next_state for t in transitions]),
        dones=np.array([bool(t.done) for t in transitions]),
        env_rewards=np.array([float(t.env_reward) for t in transitions]),
    )


class ReplayBuffer:
    """Bounded FIFO store of transitions; capacity None means unbounded."""

    def __init__(self, capacity: int | None = None, env_meta: dict | None = None):
        if capacity is not None and capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.env_meta = env_meta or {}
        self._items: deque[Transition] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __getitem__(self, i):
        return self._items[i]

    def push(self, transition: Transition) -> None:
        if len(self._items) > 0 and transition.state.shape != self._items[0].state.shape:
            raise ValueError(
                f"transition state width {transition.state.shape} does not match "
                f"buffer contents {self._items[0].state.shape}"
            )
        self._items.append(transition)

    def sample(self, m: int, rng: np.random.Generator) -> list[Transition]:
        """m transitions drawn uniformly with replacement."""
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        if m < 1:
            raise ValueError("minibatch size must be >= 1")
        idx = rng.integers(0, len(self._items), size=m)
        return [self._items[i] for i in idx]

    def sample_batch(self, m: int, rng: np.random.Generator) -> TransitionBatch:
        return stack(self.sample(m, rng))

    def trajectories(self) -> list[list[Transition]]:
        """Split the stored sequence on done flags, in insertion order."""
        out, cur = [], []
        for t in self._items:
            cur.append(t)
            if t.done:
                out.append(cur)
                cur = []
        if cur:
            out.append(cur)
        return out


def _transition_to_record(t: Transition) -> dict:
    action = int(t.action) if np.ndim(t.action) == 0 else np.asarray(t.action).tolist()
    return {
        "state": t.state.tolist(),
        "action": action,
        "next_state": t.next_state.tolist(),
        "done": bool(t.done),
        "source": t.source,
        "env_reward": float(t.env_reward),
    }


def save_dataset(buffer: ReplayBuffer, path) -> None:
    """Write header + one JSON record per transition."""
    with open(path, "w") as f:
        f.write(json.dumps({"type": "header", "env": buffer.env_meta}) + "\n")
        for t in buffer:
            f.write(json.dumps(_transition_to_record(t)) + "\n")


def load_dataset(path, capacity: int | None = None) -> ReplayBuffer:
    """Read a dataset written by save_dataset; value-exact round trip."""
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines:
        raise DatasetError(f"{path}: empty file, missing header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise DatasetError(f"{path}: header line is not valid JSON: {e}") from e
    if header.get("type") != "header" or "env" not in header:
        raise DatasetError(f"{path}: first line is not a dataset header")
    buffer = ReplayBuffer(capacity=capacity, env_meta=header["env"])
    for i, line in enumerate(lines[1:]):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            buffer.push(
                Transition(
                    state=rec["state"],
                    action=rec["action"],
                    next_state=rec["next_state"],
                    done=rec["done"],
                    source=rec["source"],
                    env_reward=rec.get("env_reward", 0.0),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise DatasetError(f"{path}: record {i}: {e}") from e
    return buffer
