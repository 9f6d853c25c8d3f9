"""Encoder and head assembly for the built-in agents."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..approx import Orthogonal, ParamSet, backward, forward, init_mlp
from ..core import Box, Discrete, SpaceSpec, flat_dim, register
from ..dist import Categorical, DiagGaussian


@register(
    "encoder",
    "mlp",
    {"hidden": [64, 64], "activation": "tanh"},
    "fully connected encoder; observations are flattened",
)
def mlp_encoder(in_dim: int, seed: int, hidden=(64, 64), activation: str = "tanh") -> ParamSet:
    hidden = [int(h) for h in hidden]
    if not hidden:
        return ParamSet([])
    sizes = [in_dim, *hidden]
    return init_mlp(sizes, [activation] * len(hidden), seed=seed, scheme=Orthogonal(np.sqrt(2.0)))


def encode(encoder: ParamSet, obs):
    if not encoder.layers:
        return np.asarray(obs, dtype=np.float32), None
    return forward(encoder, obs)


def encode_backward(encoder: ParamSet, cache, grad_features):
    if not encoder.layers:
        return encoder, grad_features
    return backward(encoder, cache, grad_features)


def feature_dim(encoder: ParamSet, in_dim: int) -> int:
    return encoder.out_dim if encoder.layers else in_dim


def head(in_dim: int, out_dim: int, gain: float, seed: int) -> ParamSet:
    return init_mlp([in_dim, out_dim], ["identity"], seed=seed, scheme=Orthogonal(gain))


@dataclass
class ActorCriticParams:
    """Shared encoder feeding a policy head and a value head."""

    encoder: ParamSet
    policy: ParamSet
    value: ParamSet
    log_std: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.float32))

    def arrays(self):
        return [*self.encoder.arrays(), *self.policy.arrays(), *self.value.arrays(), self.log_std]

    def with_arrays(self, arrays):
        arrays = list(arrays)
        ne, npi = len(self.encoder.arrays()), len(self.policy.arrays())
        nv = len(self.value.arrays())
        return ActorCriticParams(
            self.encoder.with_arrays(arrays[:ne]),
            self.policy.with_arrays(arrays[ne : ne + npi]),
            self.value.with_arrays(arrays[ne + npi : ne + npi + nv]),
            arrays[-1],
        )

    def copy(self):
        return self.with_arrays(a.copy() for a in self.arrays())

    def policy_net(self) -> ParamSet:
        return self.encoder + self.policy


class ActorCritic:
    """Forward/backward plumbing for encoder + distribution + value head."""

    def __init__(self, obs_space: SpaceSpec, act_space: SpaceSpec, encoder: ParamSet, seed: int,
                 log_std_init: float = 0.0):
        self.obs_space = obs_space
        self.act_space = act_space
        self.obs_dim = flat_dim(obs_space)
        feat = feature_dim(encoder, self.obs_dim)
        if isinstance(act_space, Discrete):
            out, log_std = act_space.n, np.zeros(0, dtype=np.float32)
        elif isinstance(act_space, Box):
            out = act_space.size
            log_std = np.full(out, log_std_init, dtype=np.float32)
        else:
            raise TypeError(f"unsupported action space {act_space!r}")
        self.params = ActorCriticParams(
            encoder,
            head(feat, out, 0.01, seed + 101),
            head(feat, 1, 1.0, seed + 202),
            log_std,
        )

    @property
    def discrete(self) -> bool:
        return isinstance(self.act_space, Discrete)

    def distribution(self, params: ActorCriticParams, dist_out):
        if self.discrete:
            return Categorical(dist_out)
        return DiagGaussian(dist_out, params.log_std)

    def forward(self, params: ActorCriticParams, obs):
        obs = np.asarray(obs, dtype=np.float32).reshape(len(obs), -1)
        feats, c_enc = encode(params.encoder, obs)
        dist_out, c_pi = forward(params.policy, feats)
        values, c_v = forward(params.value, feats)
        return dist_out, values[:, 0], (c_enc, c_pi, c_v)

    def backward(self, params: ActorCriticParams, caches, actions, dist_out, grad_log_probs, grad_entropies,
                 grad_values):
        c_enc, c_pi, c_v = caches
        dist = self.distribution(params, dist_out)
        if self.discrete:
            g_out = dist.backward(actions, grad_log_probs, grad_entropies)
            g_log_std = np.zeros(0, dtype=np.float32)
        else:
            g_out, g_log_std = dist.backward(actions, grad_log_probs, grad_entropies)
        g_pi, g_feat_pi = backward(params.policy, c_pi, g_out)
        g_v, g_feat_v = backward(params.value, c_v, np.asarray(grad_values)[:, None])
        g_enc, _ = encode_backward(params.encoder, c_enc, g_feat_pi + g_feat_v)
        return ActorCriticParams(g_enc, g_pi, g_v, np.asarray(g_log_std, dtype=params.log_std.dtype))

    def evaluate_actions(self, params, obs, actions):
        dist_out, values, caches = self.forward(params, obs)
        logp, ent = self.distribution(params, dist_out).log_prob_entropy(actions)
        return dist_out, values, logp, ent, caches
