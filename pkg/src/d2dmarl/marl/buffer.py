from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class BufferNotReady(Exception):
    """Raised when a minibatch is requested from an under-filled buffer."""


@dataclass
class Transition:
    states: np.ndarray  # (N, obs_dim)
    actions: np.ndarray  # (N, K) one-hot
    rewards: np.ndarray  # (N,)
    next_states: np.ndarray  # (N, obs_dim)


@dataclass
class Batch:
    states: np.ndarray  # (B, N, obs_dim)
    actions: np.ndarray  # (B, N, K)
    rewards: np.ndarray  # (B, N)
    next_states: np.ndarray  # (B, N, obs_dim)

    def __len__(self):
        return len(self.rewards)


class ReplayBuffer:
    """FIFO ring of joint transitions with uniform sampling (with replacement).

    Storage grows by doubling up to ``capacity`` so a million-slot buffer does
    not reserve memory it never uses.
    """

    _fields = ("states", "actions", "rewards", "next_states")

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self._store = None
        self._alloc = 0
        self._cursor = 0  # next write position
        self.size = 0

    def __len__(self):
        return self.size

    def _ensure(self, t: Transition):
        if self._store is None:
            self._alloc = min(self.capacity, 1024)
            self._store = {
                f: np.zeros((self._alloc, *np.shape(getattr(t, f)))) for f in self._fields
            }
        elif self.size == self._alloc and self._alloc < self.capacity:
            # only reached before the first wrap, so cursor == size
            new = min(self.capacity, 2 * self._alloc)
            for f in self._fields:
                arr = self._store[f]
                grown = np.zeros((new, *arr.shape[1:]))
                grown[: self._alloc] = arr
                self._store[f] = grown
            self._alloc = new

    def push(self, t: Transition) -> None:
        self._ensure(t)
        for f in self._fields:
            self._store[f][self._cursor] = getattr(t, f)
        self._cursor = (self._cursor + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def can_sample(self, batch_size: int) -> bool:
        return self.size >= batch_size and self.size > 0

    def _order(self) -> np.ndarray:
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.size) + self._cursor) % self.capacity

    def contents(self) -> list:
        """Stored transitions, oldest first."""
        return [self._row(i) for i in self._order()]

    def _row(self, i) -> Transition:
        return Transition(*(self._store[f][i].copy() for f in self._fields))

    def sample_indices(self, batch_size: int, rng) -> np.ndarray:
        """Logical positions (0 = oldest) of a uniform with-replacement draw."""
        if not self.can_sample(batch_size):
            raise BufferNotReady(f"buffer holds {self.size} transitions, need {batch_size}")
        return rng.integers(0, self.size, size=batch_size)

    def sample(self, batch_size: int, rng) -> Batch:
        pos = self._order()[self.sample_indices(batch_size, rng)]
        return Batch(*(self._store[f][pos] for f in self._fields))
