from __future__ import annotations

import sys
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ..core import Box, Discrete, Streams, resolve, validate_options
from ..env import make
from .policy import Policy, evaluate_policy


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainReport:
    curve: list[tuple[int, float]] = field(default_factory=list)
    losses: dict[str, list[float]] = field(default_factory=dict)
    wall_clock: float = 0.0
    params: dict = field(default_factory=dict)
    total_steps: int = 0
    episodes: list[tuple[int, float]] = field(default_factory=list)

    def log_losses(self, stats: dict):
        for k, v in stats.items():
            self.losses.setdefault(k, []).append(float(v))


class BaseAgent(BaseEstimator):
    """Estimator-style agent: ``fit`` trains on an env id, ``predict`` acts.

    Subclasses implement ``_setup`` and ``_train_loop``. Primitive choices
    (encoder, storage, reward module, augmentation) are registry names plus
    option dicts, so swapping one never touches agent code.
    """

    algo = ""
    storage_kinds: tuple[str, ...] = ()

    def _resolved(self, kind, name, options):
        opts = validate_options(kind, name, dict(options or {}))
        return resolve(kind, name).factory, opts

    def _check_spaces(self, env):
        act = env.action_space
        dist = getattr(self, "distribution", "auto")
        if dist == "auto":
            dist = "categorical" if isinstance(act, Discrete) else "gaussian"
        resolve("distribution", dist)
        if dist == "categorical" and not isinstance(act, Discrete):
            raise ValueError(f"categorical distribution needs a Discrete action space, got {act}")
        if dist == "gaussian" and not isinstance(act, Box):
            raise ValueError(f"gaussian distribution needs a Box action space, got {act}")
        return dist

    def _check_storage(self):
        resolve("storage", self.storage)
        if self.storage not in self.storage_kinds:
            raise ValueError(
                f"{self.algo} cannot use storage {self.storage!r}; compatible: {', '.join(self.storage_kinds)}"
            )

    def fit(self, env_id: str, total_steps: int, env_config: dict | None = None, eval_every: int = 10_000,
            log=None):
        """Train for ``total_steps`` environment steps (summed over envs)."""
        total_steps = int(total_steps)
        if total_steps < 0:
            raise ValueError("total_steps must be >= 0")
        self._check_storage()
        probe = make(env_id, env_config)
        self.env_id_ = env_id
        self.env_config_ = dict(env_config or {})
        self.obs_space_ = probe.observation_space
        self.act_space_ = probe.action_space
        self.streams_ = Streams(self.seed)
        self.report_ = TrainReport()
        self._log = log
        start = time.perf_counter()
        self._setup(probe)
        self._eval_seed = self.streams_.child_seed("eval")
        self._next_eval = eval_every if eval_every and eval_every > 0 else None
        self._eval_every = eval_every
        if total_steps > 0:
            self._train_loop(total_steps)
            if not self.report_.curve or self.report_.curve[-1][0] != self.global_step_:
                self._record_eval()
        self.report_.total_steps = self.global_step_ if total_steps > 0 else 0
        self.report_.wall_clock = time.perf_counter() - start
        self.report_.params = self._final_params()
        return self

    def _maybe_eval(self):
        if self._next_eval is not None and self.global_step_ >= self._next_eval:
            self._record_eval()
            while self._next_eval <= self.global_step_:
                self._next_eval += self._eval_every

    def _record_eval(self):
        scores = evaluate_policy(self.policy(), self.env_id_, self.eval_episodes, "greedy", self._eval_seed,
                                 self.env_config_)
        mean = float(np.mean(scores))
        self.report_.curve.append((int(self.global_step_), mean))
        if self._log is not None:
            last = {k: v[-1] for k, v in self.report_.losses.items() if v}
            fields = [str(self.global_step_), f"{mean:.3f}"] + [f"{k}={last[k]:.6g}" for k in sorted(last)]
            print("\t".join(fields), file=self._log if self._log is not True else sys.stdout, flush=True)

    def _check_fitted(self):
        if not hasattr(self, "report_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit() first")

    def policy(self) -> Policy:
        raise NotImplementedError

    def predict(self, obs, mode: str = "greedy"):
        self._check_fitted()
        obs = np.asarray(obs, dtype=np.float32)
        single = obs.ndim == len(self.obs_space_.shape)
        batch = obs.reshape(1, -1) if single else obs.reshape(len(obs), -1)
        actions = self.policy().act(batch, mode, self.streams_("predict"))
        return actions[0] if single else actions

    def evaluate(self, episodes: int = 10, mode: str = "greedy", seed: int = 0):
        self._check_fitted()
        return evaluate_policy(self.policy(), self.env_id_, episodes, mode, seed, self.env_config_)
