"""Experience storage: on-policy rollouts with GAE, FIFO replay, and
proportional prioritized replay backed by a sum-tree.

New storage kinds register under ``("storage", name)``; an agent only needs
the methods its algorithm family uses (``add``/``compute_gae``/``minibatches``
for on-policy, ``push``/``sample``/``update_priorities`` for replay).
"""
from __future__ import annotations

import numpy as np

from .core import OBS_DTYPE, Transition, register


class StorageError(RuntimeError):
    pass


@register("storage", "rollout", {}, "on-policy rollout buffer with GAE")
class RolloutBuffer:
    def __init__(self, horizon: int, num_envs: int, obs_shape, action_shape=(), action_dtype=np.int64):
        self.horizon = int(horizon)
        self.num_envs = int(num_envs)
        if self.horizon < 1 or self.num_envs < 1:
            raise ValueError("horizon and num_envs must be >= 1")
        T, N = self.horizon, self.num_envs
        self.obs = np.zeros((T, N, *obs_shape), dtype=OBS_DTYPE)
        self.actions = np.zeros((T, N, *action_shape), dtype=action_dtype)
        self.rewards_ext = np.zeros((T, N))
        self.rewards_int = np.zeros((T, N))
        self.terminated = np.zeros((T, N), dtype=bool)
        self.truncated = np.zeros((T, N), dtype=bool)
        self.values = np.zeros((T, N))
        self.log_probs = np.zeros((T, N))
        # V(final_obs) on truncated steps, used in place of the next stored value
        self.bootstrap_values = np.zeros((T, N))
        self.cursor = 0

    @property
    def full(self) -> bool:
        return self.cursor == self.horizon

    def reset(self):
        self.cursor = 0

    def add(self, transition: Transition, value, log_prob, bootstrap_value=0.0):
        if self.cursor >= self.horizon:
            raise StorageError("rollout full; call compute_gae + reset")
        t = self.cursor
        self.obs[t] = transition.obs
        self.actions[t] = transition.action
        self.rewards_ext[t] = transition.reward_ext
        self.rewards_int[t] = transition.reward_int
        self.terminated[t] = transition.terminated
        self.truncated[t] = transition.truncated
        self.values[t] = value
        self.log_probs[t] = log_prob
        self.bootstrap_values[t] = bootstrap_value
        self.cursor += 1

    def get(self, t: int) -> Transition:
        return Transition(
            obs=self.obs[t],
            action=self.actions[t],
            reward_ext=self.rewards_ext[t],
            terminated=self.terminated[t],
            truncated=self.truncated[t],
            next_obs=self.obs[t + 1] if t + 1 < self.cursor else None,
            reward_int=self.rewards_int[t],
        )

    def compute_gae(self, last_values, gamma: float, lam: float):
        """Advantages and returns over the full rollout, shape ``[T, N]``.

        ``rewards_int`` is expected to already carry the intrinsic scale.
        A step that is truncated but not terminated bootstraps from its
        stored ``bootstrap_value`` and stops the advantage recursion there.
        """
        if not (0.0 <= gamma <= 1.0) or not (0.0 <= lam <= 1.0):
            raise ValueError(f"gamma and lam must lie in [0, 1], got {gamma}, {lam}")
        if not self.full:
            raise StorageError(f"compute_gae needs a full rollout ({self.cursor}/{self.horizon})")
        return gae(
            self.rewards_ext + self.rewards_int,
            self.values,
            self.terminated,
            np.asarray(last_values, dtype=np.float64),
            gamma,
            lam,
            truncated=self.truncated,
            bootstrap_values=self.bootstrap_values,
        )

    def minibatches(self, num_minibatches: int, rng: np.random.Generator):
        total = self.horizon * self.num_envs
        if num_minibatches < 1 or total % num_minibatches:
            raise ValueError(f"{total} samples cannot be split into {num_minibatches} equal minibatches")
        perm = rng.permutation(total)
        return np.split(perm, num_minibatches)

    def flat(self, name: str) -> np.ndarray:
        arr = getattr(self, name)
        return arr.reshape(self.horizon * self.num_envs, *arr.shape[2:])


def gae(rewards, values, terminated, last_values, gamma, lam, truncated=None, bootstrap_values=None):
    T = rewards.shape[0]
    adv = np.zeros_like(values, dtype=np.float64)
    next_adv = np.zeros_like(last_values, dtype=np.float64)
    next_value = last_values
    for t in range(T - 1, -1, -1):
        live = 1.0 - terminated[t]
        carry = live
        nv = next_value
        if truncated is not None:
            cut = truncated[t] & ~terminated[t]
            nv = np.where(cut, bootstrap_values[t], next_value)
            carry = live * (1.0 - cut)
        delta = rewards[t] + gamma * nv * live - values[t]
        next_adv = delta + gamma * lam * carry * next_adv
        adv[t] = next_adv
        next_value = values[t]
    return adv, adv + values


def compute_gae(rb: RolloutBuffer, last_values, gamma: float, lam: float):
    return rb.compute_gae(last_values, gamma, lam)


def rollout_minibatches(rb: RolloutBuffer, num_minibatches: int, rng):
    return rb.minibatches(num_minibatches, rng)


# --------------------------------------------------------------------------
# replay


@register("storage", "replay", {}, "uniform FIFO replay; capacity comes from the agent")
class ReplayBuffer:
    def __init__(self, capacity: int, obs_shape, action_shape=(), action_dtype=np.int64):
        self.capacity = int(capacity)
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.obs = np.zeros((self.capacity, *obs_shape), dtype=OBS_DTYPE)
        self.next_obs = np.zeros((self.capacity, *obs_shape), dtype=OBS_DTYPE)
        self.actions = np.zeros((self.capacity, *action_shape), dtype=action_dtype)
        self.rewards_ext = np.zeros(self.capacity)
        self.rewards_int = np.zeros(self.capacity)
        self.terminated = np.zeros(self.capacity, dtype=bool)
        self.truncated = np.zeros(self.capacity, dtype=bool)
        self.size = 0
        self.next_write = 0

    def __len__(self):
        return self.size

    def push(self, transition: Transition) -> int:
        i = self.next_write
        self.obs[i] = transition.obs
        self.next_obs[i] = transition.next_obs
        self.actions[i] = transition.action
        self.rewards_ext[i] = transition.reward_ext
        self.rewards_int[i] = transition.reward_int
        self.terminated[i] = transition.terminated
        self.truncated[i] = transition.truncated
        self.next_write = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return i

    def get(self, i: int) -> Transition:
        return Transition(
            obs=self.obs[i],
            action=self.actions[i],
            reward_ext=self.rewards_ext[i],
            terminated=bool(self.terminated[i]),
            truncated=bool(self.truncated[i]),
            next_obs=self.next_obs[i],
            reward_int=self.rewards_int[i],
        )

    def contents(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        start = self.next_write if self.size == self.capacity else 0
        return [self.get((start + k) % self.capacity) for k in range(self.size)]

    def gather(self, indices) -> dict[str, np.ndarray]:
        return {
            "obs": self.obs[indices],
            "actions": self.actions[indices],
            "rewards": self.rewards_ext[indices] + self.rewards_int[indices],
            "next_obs": self.next_obs[indices],
            "terminated": self.terminated[indices],
        }

    def _check_sample(self, batch_size):
        if self.size == 0:
            raise StorageError("cannot sample from an empty buffer")
        if batch_size > self.size:
            raise StorageError(f"batch_size {batch_size} exceeds buffer size {self.size}")

    def sample(self, batch_size: int, rng: np.random.Generator, beta: float | None = None):
        self._check_sample(batch_size)
        idx = rng.integers(0, self.size, size=batch_size)
        return self.gather(idx), np.ones(batch_size), idx


class SumTree:
    """Binary tree of partial sums; node 1 is the root, leaves start at ``capacity``."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.size_hint = int(capacity)
        cap = 1
        while cap < capacity:
            cap *= 2
        self.capacity = cap
        self.nodes = np.zeros(2 * cap)

    @property
    def total(self) -> float:
        return float(self.nodes[1])

    def leaves(self) -> np.ndarray:
        return self.nodes[self.capacity :]

    def __getitem__(self, i: int) -> float:
        return float(self.nodes[self.capacity + i])

    def update(self, i: int, value: float):
        if not 0 <= i < self.capacity:
            raise IndexError(f"leaf {i} out of range [0, {self.capacity})")
        if value < 0 or not np.isfinite(value):
            raise ValueError(f"priority must be finite and >= 0, got {value}")
        node = self.capacity + int(i)
        self.nodes[node] = value
        node //= 2
        while node >= 1:
            self.nodes[node] = self.nodes[2 * node] + self.nodes[2 * node + 1]
            node //= 2

    def find(self, mass) -> np.ndarray:
        """Leaf index for each prefix-sum value in ``mass`` (vectorized descent)."""
        mass = np.array(mass, dtype=np.float64, ndmin=1)
        node = np.ones(mass.shape, dtype=np.int64)
        while node[0] < self.capacity:
            left = 2 * node
            left_sum = self.nodes[left]
            go_right = mass >= left_sum
            mass = np.where(go_right, mass - left_sum, mass)
            node = np.where(go_right, left + 1, left)
        return node - self.capacity


@register(
    "storage",
    "prioritized",
    {"alpha": 0.6, "beta_start": 0.4, "beta_end": 1.0, "eps": 1e-6},
    "proportional prioritized replay",
)
class PrioritizedReplayBuffer(ReplayBuffer):
    def __init__(self, capacity: int, obs_shape, action_shape=(), action_dtype=np.int64, alpha=0.6, eps=1e-6):
        super().__init__(capacity, obs_shape, action_shape, action_dtype)
        self.alpha = float(alpha)
        self.eps = float(eps)
        self.tree = SumTree(self.capacity)
        self.max_priority = 1.0

    def push(self, transition: Transition) -> int:
        i = super().push(transition)
        self.tree.update(i, self.max_priority**self.alpha)
        return i

    def set_priorities(self, indices, priorities):
        """Set raw priorities ``p`` (stored as ``p**alpha``)."""
        for i, p in zip(np.asarray(indices).ravel(), np.asarray(priorities, dtype=np.float64).ravel()):
            if not 0 <= i < self.size:
                raise IndexError(f"index {i} out of range [0, {self.size})")
            self.tree.update(int(i), float(p) ** self.alpha)
            self.max_priority = max(self.max_priority, float(p))

    def update_priorities(self, indices, td_errors):
        self.set_priorities(indices, np.abs(np.asarray(td_errors, dtype=np.float64)) + self.eps)

    def probabilities(self) -> np.ndarray:
        leaves = self.tree.leaves()[: self.size]
        return leaves / leaves.sum()

    def sample(self, batch_size: int, rng: np.random.Generator, beta: float = 0.4):
        """Stratified proportional sampling with max-normalized IS weights."""
        self._check_sample(batch_size)
        total = self.tree.total
        segment = total / batch_size
        mass = (np.arange(batch_size) + rng.random(batch_size)) * segment
        idx = np.minimum(self.tree.find(mass), self.size - 1)
        leaves = self.tree.leaves()[: self.size]
        probs = leaves[idx] / total
        weights = (self.size * probs) ** (-beta)
        max_weight = (self.size * leaves.min() / total) ** (-beta)
        return self.gather(idx), weights / max_weight, idx


def replay_push(buf: ReplayBuffer, transition: Transition):
    buf.push(transition)


def replay_sample(buf: ReplayBuffer, batch_size: int, rng, beta: float | None = None):
    if beta is None or not isinstance(buf, PrioritizedReplayBuffer):
        return buf.sample(batch_size, rng)
    return buf.sample(batch_size, rng, beta=beta)


def per_update_priorities(buf: PrioritizedReplayBuffer, indices, td_errors):
    buf.update_priorities(indices, td_errors)
