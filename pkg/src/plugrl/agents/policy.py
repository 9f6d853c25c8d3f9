from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..approx import ParamSet, forward
from ..core import Discrete, SpaceSpec, flat_dim, stream
from ..dist import Categorical, DiagGaussian
from ..env import make


@dataclass
class Policy:
    """Observation -> action map: a feed-forward net plus its spaces.

    For discrete actions the net outputs logits; for boxes it outputs the
    Gaussian mean and ``log_std`` holds the state-independent scale.
    """

    params: ParamSet
    obs_space: SpaceSpec
    act_space: SpaceSpec
    log_std: np.ndarray | None = None

    def __post_init__(self):
        if self.params.in_dim != flat_dim(self.obs_space):
            raise ValueError(
                f"policy input dim {self.params.in_dim} does not match observation size {flat_dim(self.obs_space)}"
            )
        if self.params.out_dim != flat_dim(self.act_space):
            raise ValueError(
                f"policy output dim {self.params.out_dim} does not match action size {flat_dim(self.act_space)}"
            )

    def act(self, obs, mode: str = "greedy", rng: np.random.Generator | None = None):
        obs = np.asarray(obs, dtype=np.float32).reshape(len(obs), -1)
        out, _ = forward(self.params, obs)
        if isinstance(self.act_space, Discrete):
            if mode == "greedy":
                return np.argmax(out, axis=1)
            return Categorical(out).sample(rng)
        if mode == "greedy":
            actions = out
        else:
            log_std = self.log_std if self.log_std is not None else np.zeros(out.shape[1])
            actions, _ = DiagGaussian(out, log_std).sample(rng)
        return np.clip(actions, self.act_space.low.ravel(), self.act_space.high.ravel())


def _env_action(space, a):
    if isinstance(space, Discrete):
        return np.int64(a)
    return np.asarray(a, dtype=np.float64).reshape(space.shape)


def evaluate_policy(policy: Policy, env_id: str, episodes: int = 10, mode: str = "greedy", seed: int = 0,
                    env_config: dict | None = None) -> list[float]:
    """Undiscounted return of ``episodes`` episodes, run side by side.

    Episode ``i`` uses an env seeded from ``(seed, i)`` so its outcome does
    not depend on how many episodes are requested.
    """
    if mode not in ("greedy", "stochastic"):
        raise ValueError("mode must be 'greedy' or 'stochastic'")
    envs = [make(env_id, env_config) for _ in range(int(episodes))]
    if envs and (envs[0].observation_space != policy.obs_space or envs[0].action_space != policy.act_space):
        raise ValueError(
            f"policy spaces ({policy.obs_space}, {policy.act_space}) do not match {env_id} "
            f"({envs[0].observation_space}, {envs[0].action_space})"
        )
    rng = stream(seed, "evaluate/actions")
    obs = [env.reset(seed=int(stream(seed, f"evaluate/episode/{i}").integers(2**62)))[0]
           for i, env in enumerate(envs)]
    returns = [0.0] * len(envs)
    active = list(range(len(envs)))
    while active:
        batch = np.stack([obs[i] for i in active])
        actions = policy.act(batch, mode, rng)
        still = []
        for i, a in zip(active, actions):
            o, r, term, trunc, _ = envs[i].step(_env_action(policy.act_space, a))
            returns[i] += r
            obs[i] = o
            if not (term or trunc):
                still.append(i)
        active = still
    return returns


