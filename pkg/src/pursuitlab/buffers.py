"""Experience storage: fixed-size on-policy rollout buffers and a circular
uniform-sampling replay buffer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Transition:
    """One agent-environment interaction. log_prob and value are only
    meaningful for on-policy learners and default to zero elsewhere."""

    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    done: bool
    truncated: bool
    log_prob: float = 0.0
    value: float = 0.0


class RolloutBuffer:
    """Ordered on-policy storage, drained as a whole by a learner update."""

    def __init__(self, capacity: int = 512):
        self.capacity = int(capacity)
        self._items: list[Transition] = []

    def __len__(self) -> int:
        return len(self._items)

    @property
    def full(self) -> bool:
        return len(self._items) >= self.capacity

    def record(self, t: Transition) -> bool:
        """Append one transition; returns True when the buffer just filled."""
        if self.full:
            raise RuntimeError("record into a full rollout buffer; drain it first")
        self._items.append(t)
        return self.full

    def transitions(self) -> list[Transition]:
        return list(self._items)

    def minibatch_indices(self, minibatch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
        """One epoch of disjoint minibatches: a shuffled partition of all indices."""
        if not self.full:
            raise RuntimeError("minibatches require a full buffer")
        if self.capacity % minibatch_size != 0:
            raise ValueError("capacity must be a multiple of minibatch_size")
        perm = rng.permutation(self.capacity)
        return [perm[i:i + minibatch_size] for i in range(0, self.capacity, minibatch_size)]

    def clear(self) -> None:
        self._items.clear()

    def restore(self, transitions: list[Transition]) -> None:
        if len(transitions) > self.capacity:
            raise ValueError("more transitions than capacity")
        self._items = list(transitions)


class ReplayBuffer:
    """Circular buffer holding the last `capacity` transitions in insertion
    order; sampling is uniform with replacement."""

    def __init__(self, capacity: int = 10_000):
        self.capacity = int(capacity)
        self._items: list[Transition] = []
        self._cursor = 0
        self.inserted = 0

    def __len__(self) -> int:
        return len(self._items)

    def insert(self, t: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(t)
        else:
            self._items[self._cursor] = t
        self._cursor = (self._cursor + 1) % self.capacity
        self.inserted += 1

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if len(self._items) < batch_size:
            raise RuntimeError(
                f"replay holds {len(self._items)} transitions, need {batch_size}")
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]

    def contents_in_order(self) -> list[Transition]:
        """Stored transitions from oldest to newest."""
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._cursor:] + self._items[:self._cursor]

    def storage_order(self) -> list[Transition]:
        """Stored transitions in slot order, for exact state restore."""
        return list(self._items)

    def restore(self, transitions: list[Transition], inserted: int) -> None:
        if len(transitions) > self.capacity:
            raise ValueError("more transitions than capacity")
        if inserted < len(transitions):
            raise ValueError("insert count below stored count")
        self._items = list(transitions)
        self.inserted = int(inserted)
        self._cursor = self.inserted % self.capacity


def pack_transitions(transitions: list[Transition], obs_dim: int) -> dict[str, np.ndarray]:
    """Columnar float64 arrays for a transition list; empty lists allowed."""
    n = len(transitions)
    out = {
        "obs": np.zeros((n, obs_dim)),
        "actions": np.zeros(n),
        "rewards": np.zeros(n),
        "next_obs": np.zeros((n, obs_dim)),
        "done": np.zeros(n),
        "truncated": np.zeros(n),
        "log_prob": np.zeros(n),
        "value": np.zeros(n),
    }
    for i, t in enumerate(transitions):
        out["obs"][i] = t.obs
        out["actions"][i] = float(t.action)
        out["rewards"][i] = t.reward
        out["next_obs"][i] = t.next_obs
        out["done"][i] = float(t.done)
        out["truncated"][i] = float(t.truncated)
        out["log_prob"][i] = t.log_prob
        out["value"][i] = t.value
    return out


def unpack_transitions(cols: dict[str, np.ndarray]) -> list[Transition]:
    n = cols["obs"].shape[0]
    return [
        Transition(
            obs=cols["obs"][i].copy(),
            action=int(cols["actions"][i]),
            reward=float(cols["rewards"][i]),
            next_obs=cols["next_obs"][i].copy(),
            done=bool(cols["done"][i]),
            truncated=bool(cols["truncated"][i]),
            log_prob=float(cols["log_prob"][i]),
            value=float(cols["value"][i]),
        )
        for i in range(n)
    ]
