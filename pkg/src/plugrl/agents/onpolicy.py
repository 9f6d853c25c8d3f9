"""A2C and PPO: rollout collection, GAE, minibatch updates."""
from __future__ import annotations

import numpy as np

from ..approx import AdamState, NonFiniteGradientError, adam_step, clip_grad_norm
from ..core import Transition, flat_dim, register, validate_options
from ..env import VecEnv, make
from ..storage import RolloutBuffer
from ..xplore import RewardMixer, RunningMeanStd
from .base import BaseAgent, TrainingError
from .losses import LossError, a2c_loss, ppo_loss
from .networks import ActorCritic
from .policy import Policy


class OnPolicyAgent(BaseAgent):
    storage_kinds = ("rollout",)

    def _setup(self, probe):
        dist = self._check_spaces(probe)
        enc_factory, enc_opts = self._resolved("encoder", self.encoder, self.encoder_options)
        rew_factory, rew_opts = self._resolved("reward", self.reward, self.reward_options)
        aug_factory, aug_opts = self._resolved("augmentation", self.augmentation, self.augmentation_options)
        dist_opts = validate_options("distribution", dist, dict(self.distribution_options or {}))
        obs_dim = flat_dim(self.obs_space_)
        encoder = enc_factory(obs_dim, seed=self.streams_.child_seed("init/encoder"), **enc_opts)
        self.net_ = ActorCritic(self.obs_space_, self.act_space_, encoder, self.streams_.child_seed("init/heads"),
                                **dist_opts)
        self.params_ = self.net_.params
        self.opt_ = AdamState.zeros(self.params_)
        self.reward_module_ = rew_factory(obs_dim, seed=self.streams_.child_seed("init/reward"), **rew_opts)
        self.mixer_ = RewardMixer(self.beta0, self.kappa)
        self.augment_ = aug_factory(**aug_opts)
        self.obs_layout_ = getattr(probe, "obs_layout", None)
        self.global_step_ = 0

    def _final_params(self):
        return {"encoder": self.params_.encoder, "policy": self.params_.policy, "value": self.params_.value}

    def policy(self) -> Policy:
        log_std = self.params_.log_std if self.params_.log_std.size else None
        return Policy(self.params_.policy_net(), self.obs_space_, self.act_space_, log_std)

    def _env_actions(self, actions):
        if self.net_.discrete:
            return actions
        return np.clip(actions, self.act_space_.low.ravel(), self.act_space_.high.ravel()).reshape(
            len(actions), *self.act_space_.shape
        )

    def _values(self, obs):
        _, values, _ = self.net_.forward(self.params_, obs)
        return values.astype(np.float64)

    def _train_loop(self, total_steps):
        N, T = self.num_envs, self.horizon
        venv = VecEnv([lambda: make(self.env_id_, self.env_config_) for _ in range(N)])
        obs, _ = venv.reset(seed=self.streams_.child_seed("train/env"))
        act_rng = self.streams_("train/actions")
        mb_rng = self.streams_("train/minibatches")
        aug_rng = self.streams_("train/augment")
        if self.net_.discrete:
            rb = RolloutBuffer(T, N, (flat_dim(self.obs_space_),))
        else:
            rb = RolloutBuffer(T, N, (flat_dim(self.obs_space_),), (self.act_space_.size,), np.float32)
        n_iters = -(-total_steps // (N * T))
        ep_ret = np.zeros(N)
        disc_ret = np.zeros(N)
        self.return_rms_ = RunningMeanStd()
        for it in range(n_iters):
            if self.anneal_lr:
                self.lr_now_ = self.lr * (1.0 - it / n_iters)
            else:
                self.lr_now_ = self.lr
            rb.reset()
            for _ in range(T):
                dist_out, values, _ = self.net_.forward(self.params_, obs)
                dist = self.net_.distribution(self.params_, dist_out)
                if self.net_.discrete:
                    actions = dist.sample(act_rng)
                else:
                    actions, _ = dist.sample(act_rng)
                logp, _ = dist.log_prob_entropy(actions)
                next_obs, r_ext, term, trunc, infos = venv.step(self._env_actions(actions))
                real_next = next_obs.copy()
                bootstrap = np.zeros(N)
                for i, info in enumerate(infos):
                    if "final_obs" in info:
                        real_next[i] = info["final_obs"]
                cut = np.flatnonzero(trunc & ~term)
                if cut.size:
                    bootstrap[cut] = self._values(real_next[cut])
                r_int = self.reward_module_.compute(real_next)
                r_int = self.mixer_.beta(self.global_step_) * np.asarray(r_int, dtype=np.float64)
                r_train = r_ext
                if self.normalize_reward:
                    disc_ret = disc_ret * self.gamma + r_ext
                    self.return_rms_.update(disc_ret)
                    disc_ret[term | trunc] = 0.0
                    r_train = r_ext / (self.return_rms_.std + 1e-8)
                rb.add(
                    Transition(obs, actions, r_train, term, trunc, real_next, r_int),
                    values,
                    logp,
                    bootstrap,
                )
                obs = next_obs
                self.global_step_ += N
                ep_ret += r_ext
                for i in np.flatnonzero(term | trunc):
                    self.report_.episodes.append((self.global_step_, float(ep_ret[i])))
                    ep_ret[i] = 0.0
            last_values = self._values(obs)
            advantages, returns = rb.compute_gae(last_values, self.gamma, self.gae_lambda)
            rew_loss = self.reward_module_.update(rb.flat("obs"))
            self._update(rb, advantages.reshape(-1), returns.reshape(-1), mb_rng, aug_rng)
            self.report_.log_losses({"intrinsic_loss": rew_loss})
            self._maybe_eval()

    def _update(self, rb, advantages, returns, mb_rng, aug_rng):
        obs_all = rb.flat("obs")
        actions_all = rb.flat("actions")
        old_logp_all = rb.flat("log_probs")
        for epoch in range(self.n_epochs):
            for mb in rb.minibatches(self.n_minibatches, mb_rng):
                obs = obs_all[mb]
                if self.augmentation != "none":
                    obs = self.augment_.transform(obs, aug_rng, self.obs_layout_)
                adv = advantages[mb]
                if self.normalize_advantage and len(mb) > 1:
                    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
                out, values, logp, ent, caches = self.net_.evaluate_actions(self.params_, obs, actions_all[mb])
                try:
                    loss, stats, g = self._loss(adv, returns[mb], logp, old_logp_all[mb], values, ent)
                except LossError as exc:
                    raise TrainingError(f"{exc} at step {self.global_step_}") from exc
                grads = self.net_.backward(self.params_, caches, actions_all[mb], out, g["log_probs"],
                                           g["entropies"], g["values"])
                grads, norm = clip_grad_norm(grads, self.max_grad_norm)
                try:
                    self.params_, self.opt_ = adam_step(self.params_, grads, self.opt_, lr=self.lr_now_, eps=1e-5)
                except NonFiniteGradientError as exc:
                    raise TrainingError(f"non-finite gradient at step {self.global_step_}") from exc
                stats["grad_norm"] = norm
                self.report_.log_losses(stats)


_COMMON = dict(
    seed=0,
    num_envs=8,
    gamma=0.99,
    gae_lambda=0.95,
    v_coef=0.5,
    ent_coef=0.01,
    max_grad_norm=0.5,
    normalize_advantage=True,
    normalize_reward=True,
    encoder="mlp",
    encoder_options=None,
    distribution="auto",
    distribution_options=None,
    storage="rollout",
    reward="none",
    reward_options=None,
    beta0=0.05,
    kappa=1e-5,
    augmentation="none",
    augmentation_options=None,
    eval_episodes=10,
)


@register("agent", "a2c", {**_COMMON, "horizon": 32, "lr": 7e-4, "anneal_lr": False},
          "advantage actor-critic")
class A2C(OnPolicyAgent):
    algo = "a2c"

    def __init__(self, seed=0, num_envs=8, horizon=32, lr=7e-4, gamma=0.99, gae_lambda=0.95, v_coef=0.5,
                 ent_coef=0.01, max_grad_norm=0.5, normalize_advantage=True, normalize_reward=True, anneal_lr=False, encoder="mlp",
                 encoder_options=None, distribution="auto", distribution_options=None, storage="rollout", reward="none",
                 reward_options=None, beta0=0.05, kappa=1e-5, augmentation="none", augmentation_options=None,
                 eval_episodes=10):
        self.seed = seed
        self.num_envs = num_envs
        self.horizon = horizon
        self.lr = lr
        self.gamma = gamma
        self.gae_lambda = gae_lambda
        self.v_coef = v_coef
        self.ent_coef = ent_coef
        self.max_grad_norm = max_grad_norm
        self.normalize_advantage = normalize_advantage
        self.normalize_reward = normalize_reward
        self.anneal_lr = anneal_lr
        self.encoder = encoder
        self.encoder_options = encoder_options
        self.distribution = distribution
        self.distribution_options = distribution_options
        self.storage = storage
        self.reward = reward
        self.reward_options = reward_options
        self.beta0 = beta0
        self.kappa = kappa
        self.augmentation = augmentation
        self.augmentation_options = augmentation_options
        self.eval_episodes = eval_episodes

    n_epochs = 1
    n_minibatches = 1

    def _loss(self, adv, returns, logp, old_logp, values, ent):
        return a2c_loss(adv, returns, logp, values, ent, self.v_coef, self.ent_coef)


@register(
    "agent",
    "ppo",
    {**_COMMON, "horizon": 128, "lr": 2.5e-4, "anneal_lr": True, "n_epochs": 4, "n_minibatches": 4,
     "clip_eps": 0.2},
    "proximal policy optimization, clipped surrogate",
)
class PPO(OnPolicyAgent):
    algo = "ppo"

    def __init__(self, seed=0, num_envs=8, horizon=128, lr=2.5e-4, gamma=0.99, gae_lambda=0.95, v_coef=0.5,
                 ent_coef=0.01, max_grad_norm=0.5, normalize_advantage=True, normalize_reward=True, anneal_lr=True, n_epochs=4,
                 n_minibatches=4, clip_eps=0.2, encoder="mlp", encoder_options=None, distribution="auto",
                 distribution_options=None, storage="rollout", reward="none", reward_options=None, beta0=0.05, kappa=1e-5,
                 augmentation="none", augmentation_options=None, eval_episodes=10):
        self.seed = seed
        self.num_envs = num_envs
        self.horizon = horizon
        self.lr = lr
        self.gamma = gamma
        self.gae_lambda = gae_lambda
        self.v_coef = v_coef
        self.ent_coef = ent_coef
        self.max_grad_norm = max_grad_norm
        self.normalize_advantage = normalize_advantage
        self.normalize_reward = normalize_reward
        self.anneal_lr = anneal_lr
        self.n_epochs = n_epochs
        self.n_minibatches = n_minibatches
        self.clip_eps = clip_eps
        self.encoder = encoder
        self.encoder_options = encoder_options
        self.distribution = distribution
        self.distribution_options = distribution_options
        self.storage = storage
        self.reward = reward
        self.reward_options = reward_options
        self.beta0 = beta0
        self.kappa = kappa
        self.augmentation = augmentation
        self.augmentation_options = augmentation_options
        self.eval_episodes = eval_episodes

    def _loss(self, adv, returns, logp, old_logp, values, ent):
        return ppo_loss(adv, returns, logp, old_logp, values, ent, self.clip_eps, self.v_coef, self.ent_coef)


__all__ = ["A2C", "PPO", "OnPolicyAgent"]
