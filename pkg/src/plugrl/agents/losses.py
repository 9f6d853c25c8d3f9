"""Loss functions for the built-in agents.

Each returns the scalar loss, a stats dict, and the gradient of the loss
with respect to its differentiable inputs so the caller can chain it into
the distribution and network backward passes.
"""
from __future__ import annotations

import numpy as np

from ..approx import ParamSet, backward, forward


class LossError(FloatingPointError):
    pass


def _check_finite(**terms):
    for name, value in terms.items():
        if not np.all(np.isfinite(value)):
            raise LossError(f"non-finite value in {name}")


def _value_and_entropy(returns, values, entropies, v_coef, ent_coef, n):
    value_loss = float(np.mean((returns - values) ** 2))
    entropy = float(np.mean(entropies))
    grad_values = -2.0 * v_coef * (returns - values) / n
    grad_entropies = np.full(n, -ent_coef / n)
    return value_loss, entropy, grad_values, grad_entropies


def a2c_loss(advantages, returns, log_probs, values, entropies, v_coef=0.5, ent_coef=0.01):
    """loss = -mean(A * logp) + v_coef * mean((R - V)^2) - ent_coef * mean(H)."""
    advantages, returns = np.asarray(advantages, np.float64), np.asarray(returns, np.float64)
    log_probs, values = np.asarray(log_probs, np.float64), np.asarray(values, np.float64)
    entropies = np.asarray(entropies, np.float64)
    _check_finite(advantages=advantages, returns=returns, log_probs=log_probs, values=values, entropies=entropies)
    n = len(advantages)
    policy_loss = float(-np.mean(advantages * log_probs))
    value_loss, entropy, g_v, g_h = _value_and_entropy(returns, values, entropies, v_coef, ent_coef, n)
    loss = policy_loss + v_coef * value_loss - ent_coef * entropy
    _check_finite(loss=loss)
    stats = {"loss": loss, "policy_loss": policy_loss, "value_loss": value_loss, "entropy": entropy}
    grads = {"log_probs": -advantages / n, "values": g_v, "entropies": g_h}
    return loss, stats, grads


def ppo_loss(
    advantages, returns, log_probs, old_log_probs, values, entropies, clip_eps=0.2, v_coef=0.5, ent_coef=0.01
):
    """Clipped-surrogate loss with the same value and entropy terms as A2C."""
    advantages, returns = np.asarray(advantages, np.float64), np.asarray(returns, np.float64)
    log_probs = np.asarray(log_probs, np.float64)
    old_log_probs = np.asarray(old_log_probs, np.float64)
    values, entropies = np.asarray(values, np.float64), np.asarray(entropies, np.float64)
    _check_finite(
        advantages=advantages,
        returns=returns,
        log_probs=log_probs,
        old_log_probs=old_log_probs,
        values=values,
        entropies=entropies,
    )
    n = len(advantages)
    log_ratio = log_probs - old_log_probs
    ratio = np.exp(log_ratio)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantages
    policy_loss = float(-np.mean(np.minimum(unclipped, clipped)))
    # the min picks the clipped branch only where clipping is active, and
    # there the branch is constant in log_probs
    use_unclipped = unclipped <= clipped
    grad_lp = np.where(use_unclipped, -unclipped / n, 0.0)
    value_loss, entropy, g_v, g_h = _value_and_entropy(returns, values, entropies, v_coef, ent_coef, n)
    loss = policy_loss + v_coef * value_loss - ent_coef * entropy
    _check_finite(loss=loss)
    stats = {
        "loss": loss,
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy,
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip_eps)),
        "approx_kl": float(np.mean((ratio - 1.0) - log_ratio)),
    }
    grads = {"log_probs": grad_lp, "values": g_v, "entropies": g_h}
    return loss, stats, grads


def dqn_targets(rewards, next_q_target, terminated, gamma):
    rewards = np.asarray(rewards, np.float64)
    live = 1.0 - np.asarray(terminated, np.float64)
    return rewards + gamma * live * np.asarray(next_q_target, np.float64).max(axis=1)


def dqn_loss_from_values(q_values, actions, targets, weights=None):
    """Weighted squared TD loss given Q(s, .) and targets.

    Returns ``(loss, td_errors, grad_q)``.
    """
    q_values = np.asarray(q_values)
    actions = np.asarray(actions, dtype=np.int64)
    n = len(actions)
    weights = np.ones(n) if weights is None else np.asarray(weights, np.float64)
    q_sa = q_values[np.arange(n), actions].astype(np.float64)
    td = q_sa - targets
    _check_finite(q_values=q_sa, targets=targets, weights=weights)
    loss = float(np.mean(weights * td**2))
    grad_q = np.zeros(q_values.shape, dtype=np.float64)
    grad_q[np.arange(n), actions] = 2.0 * weights * td / n
    return loss, td, grad_q


def dqn_loss(batch, q_net: ParamSet, target_net: ParamSet, gamma: float, weights=None):
    """TD loss for a replay batch.

    ``batch`` needs ``obs``, ``actions``, ``rewards``, ``next_obs`` and
    ``terminated``. Returns ``(loss, td_errors, grads)`` where ``grads`` is
    congruent to ``q_net``.
    """
    next_q, _ = forward(target_net, batch["next_obs"])
    targets = dqn_targets(batch["rewards"], next_q, batch["terminated"], gamma)
    q, cache = forward(q_net, batch["obs"])
    loss, td, grad_q = dqn_loss_from_values(q, batch["actions"], targets, weights)
    grads, _ = backward(q_net, cache, grad_q)
    return loss, td, grads
