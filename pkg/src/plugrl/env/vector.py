from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..core import OBS_DTYPE, stream
from .base import Env, EnvError


class VecEnv:
    """Steps N environments in lockstep with same-step autoreset.

    When sub-env ``i`` finishes an episode its slot in the returned
    observations holds the first observation of the next episode, and
    ``infos[i]["final_obs"]`` holds the last observation of the old one.
    """

    def __init__(self, env_fns: Sequence[Callable[[], Env]]):
        if not env_fns:
            raise ValueError("VecEnv needs at least one env")
        self.envs = [fn() for fn in env_fns]
        self.num_envs = len(self.envs)
        self.spec = self.envs[0].spec
        self.observation_space = self.spec.obs_space
        self.action_space = self.spec.act_space

    def reset(self, seed: int | None = None):
        obs = []
        for i, env in enumerate(self.envs):
            sub_seed = None if seed is None else int(stream(seed, f"subenv/{i}").integers(2**62))
            o, _ = env.reset(seed=sub_seed)
            obs.append(o)
        return np.stack(obs).astype(OBS_DTYPE, copy=False), [{} for _ in self.envs]

    def step(self, actions):
        actions = np.asarray(actions)
        if len(actions) != self.num_envs:
            raise EnvError(f"got {len(actions)} actions for {self.num_envs} envs")
        obs, infos = [], []
        rewards = np.zeros(self.num_envs, dtype=np.float64)
        terminated = np.zeros(self.num_envs, dtype=bool)
        truncated = np.zeros(self.num_envs, dtype=bool)
        for i, (env, a) in enumerate(zip(self.envs, actions)):
            o, r, term, trunc, info = env.step(a)
            info = dict(info)
            if term or trunc:
                info["final_obs"] = o
                o, _ = env.reset()
            obs.append(o)
            rewards[i], terminated[i], truncated[i] = r, term, trunc
            infos.append(info)
        return np.stack(obs).astype(OBS_DTYPE, copy=False), rewards, terminated, truncated, infos


def make_vec(env_id: str, num_envs: int, config: dict | None = None) -> VecEnv:
    from .base import make

    return VecEnv([lambda: make(env_id, config) for _ in range(int(num_envs))])
