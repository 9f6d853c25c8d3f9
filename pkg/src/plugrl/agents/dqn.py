"""Deep Q-learning over uniform or prioritized replay."""
from __future__ import annotations

import numpy as np

from ..approx import AdamState, NonFiniteGradientError, adam_step, clip_grad_norm, forward
from ..core import Discrete, Transition, flat_dim, register
from ..env import VecEnv, make
from ..storage import PrioritizedReplayBuffer, ReplayBuffer
from ..xplore import RewardMixer
from .base import BaseAgent, TrainingError
from .losses import LossError, dqn_loss
from .networks import feature_dim, head
from .policy import Policy

_DEFAULTS = dict(
    seed=0,
    num_envs=1,
    lr=1e-3,
    gamma=0.99,
    batch_size=64,
    buffer_size=50_000,
    learning_starts=1_000,
    train_freq=4,
    target_sync=500,
    eps_start=1.0,
    eps_end=0.05,
    eps_fraction=0.1,
    max_grad_norm=10.0,
    encoder="mlp",
    encoder_options=None,
    storage="replay",
    storage_options=None,
    reward="none",
    reward_options=None,
    beta0=0.05,
    kappa=1e-5,
    eval_episodes=10,
)


@register("agent", "dqn", dict(_DEFAULTS), "deep Q-network with a periodically synced target")
class DQN(BaseAgent):
    algo = "dqn"
    storage_kinds = ("replay", "prioritized")

    def __init__(self, seed=0, num_envs=1, lr=1e-3, gamma=0.99, batch_size=64, buffer_size=50_000,
                 learning_starts=1_000, train_freq=4, target_sync=500, eps_start=1.0, eps_end=0.05,
                 eps_fraction=0.1, max_grad_norm=10.0, encoder="mlp", encoder_options=None, storage="replay",
                 storage_options=None, reward="none", reward_options=None, beta0=0.05, kappa=1e-5,
                 eval_episodes=10):
        self.seed = seed
        self.num_envs = num_envs
        self.lr = lr
        self.gamma = gamma
        self.batch_size = batch_size
        self.buffer_size = buffer_size
        self.learning_starts = learning_starts
        self.train_freq = train_freq
        self.target_sync = target_sync
        self.eps_start = eps_start
        self.eps_end = eps_end
        self.eps_fraction = eps_fraction
        self.max_grad_norm = max_grad_norm
        self.encoder = encoder
        self.encoder_options = encoder_options
        self.storage = storage
        self.storage_options = storage_options
        self.reward = reward
        self.reward_options = reward_options
        self.beta0 = beta0
        self.kappa = kappa
        self.eval_episodes = eval_episodes

    def _setup(self, probe):
        if not isinstance(self.act_space_, Discrete):
            raise ValueError(f"DQN needs a Discrete action space, got {self.act_space_}")
        enc_factory, enc_opts = self._resolved("encoder", self.encoder, self.encoder_options)
        rew_factory, rew_opts = self._resolved("reward", self.reward, self.reward_options)
        _, self.storage_opts_ = self._resolved("storage", self.storage, self.storage_options)
        obs_dim = flat_dim(self.obs_space_)
        enc = enc_factory(obs_dim, seed=self.streams_.child_seed("init/encoder"), **enc_opts)
        q_head = head(feature_dim(enc, obs_dim), self.act_space_.n, 1.0, self.streams_.child_seed("init/head"))
        self.q_net_ = enc + q_head
        self.target_net_ = self.q_net_.copy()
        self.opt_ = AdamState.zeros(self.q_net_)
        self.reward_module_ = rew_factory(obs_dim, seed=self.streams_.child_seed("init/reward"), **rew_opts)
        self.mixer_ = RewardMixer(self.beta0, self.kappa)
        self.global_step_ = 0

    def _final_params(self):
        return {"q_net": self.q_net_}

    def policy(self) -> Policy:
        return Policy(self.q_net_, self.obs_space_, self.act_space_)

    def _epsilon(self, total_steps):
        span = max(1.0, self.eps_fraction * total_steps)
        frac = min(1.0, self.global_step_ / span)
        return self.eps_start + frac * (self.eps_end - self.eps_start)

    def _make_buffer(self):
        opts = self.storage_opts_
        capacity = int(self.buffer_size)
        shape = (flat_dim(self.obs_space_),)
        if self.storage == "prioritized":
            return PrioritizedReplayBuffer(capacity, shape, alpha=opts["alpha"], eps=opts["eps"])
        return ReplayBuffer(capacity, shape)

    def _train_loop(self, total_steps):
        N = self.num_envs
        venv = VecEnv([lambda: make(self.env_id_, self.env_config_) for _ in range(N)])
        obs, _ = venv.reset(seed=self.streams_.child_seed("train/env"))
        act_rng = self.streams_("train/actions")
        sample_rng = self.streams_("train/sample")
        buf = self._make_buffer()
        ep_ret = np.zeros(N)
        n_iters = -(-total_steps // N)
        for it in range(n_iters):
            eps = self._epsilon(total_steps)
            q, _ = forward(self.q_net_, obs)
            greedy = np.argmax(q, axis=1)
            explore = act_rng.random(N) < eps
            random_actions = act_rng.integers(0, self.act_space_.n, size=N)
            actions = np.where(explore, random_actions, greedy)
            next_obs, r_ext, term, trunc, infos = venv.step(actions)
            real_next = next_obs.copy()
            for i, info in enumerate(infos):
                if "final_obs" in info:
                    real_next[i] = info["final_obs"]
            r_int = self.reward_module_.compute(real_next)
            r_int = self.mixer_.beta(self.global_step_) * np.asarray(r_int, dtype=np.float64)
            for i in range(N):
                buf.push(Transition(obs[i], actions[i], r_ext[i], term[i], trunc[i], real_next[i], r_int[i]))
            ep_ret += r_ext
            prev_step = self.global_step_
            self.global_step_ += N
            for i in np.flatnonzero(term | trunc):
                self.report_.episodes.append((self.global_step_, float(ep_ret[i])))
                ep_ret[i] = 0.0
            obs = next_obs

            ready = self.global_step_ > self.learning_starts and len(buf) >= self.batch_size
            if ready and it % self.train_freq == 0:
                self._learn(buf, sample_rng, total_steps)
            if self.global_step_ // self.target_sync != prev_step // self.target_sync:
                self.target_net_ = self.q_net_.copy()
            self._maybe_eval()

    def _learn(self, buf, rng, total_steps):
        if isinstance(buf, PrioritizedReplayBuffer):
            o = self.storage_opts_
            frac = min(1.0, self.global_step_ / max(1, total_steps))
            beta = o["beta_start"] + frac * (o["beta_end"] - o["beta_start"])
            batch, weights, idx = buf.sample(self.batch_size, rng, beta=beta)
        else:
            batch, weights, idx = buf.sample(self.batch_size, rng)
        try:
            loss, td, grads = dqn_loss(batch, self.q_net_, self.target_net_, self.gamma, weights)
        except LossError as exc:
            raise TrainingError(f"{exc} at step {self.global_step_}") from exc
        if isinstance(buf, PrioritizedReplayBuffer):
            buf.update_priorities(idx, td)
        rew_loss = self.reward_module_.update(batch["next_obs"])
        grads, norm = clip_grad_norm(grads, self.max_grad_norm)
        try:
            self.q_net_, self.opt_ = adam_step(self.q_net_, grads, self.opt_, lr=self.lr)
        except NonFiniteGradientError as exc:
            raise TrainingError(f"non-finite gradient at step {self.global_step_}") from exc
        self.report_.log_losses({"td_loss": loss, "grad_norm": norm, "intrinsic_loss": rew_loss})
