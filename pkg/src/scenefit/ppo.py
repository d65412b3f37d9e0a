"""PPO-clip with GAE over a pool of imitation environments.

Collection is lockstep and merged in env-index order so results are
independent of scheduling; updates are single-writer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .neural import Adam, GaussianHead, Mlp


class PpoDivergedError(RuntimeError):
    """NaN in an update; carries loss diagnostics."""

    def __init__(self, stats: dict):
        super().__init__(f"non-finite PPO loss: {stats}")
        self.stats = stats


@dataclass
class PpoConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 5
    minibatch: int = 128
    lr_policy: float = 3e-4
    lr_critic: float = 1e-3
    entropy_coef: float = 0.0
    normalize_advantages: bool = True

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0 or not 0.0 < self.lam <= 1.0:
            raise ValueError("gamma and lambda must lie in (0, 1]")
        if self.clip_eps <= 0.0:
            raise ValueError("clip epsilon must be positive")


class GaussianPolicy:
    """MLP mean with a fixed diagonal std head."""

    def __init__(self, obs_dim: int, act_dim: int, hidden, std, rng,
                 final_scale: float = 0.01):
        self.mlp = Mlp([obs_dim] + list(hidden) + [act_dim], rng, final_scale=final_scale)
        self.head = GaussianHead(np.full(act_dim, float(std)) if np.isscalar(std) else std)

    def act(self, obs, rng):
        mu = self.mlp.infer(obs)
        a = self.head.sample(mu, rng)
        return a, self.head.log_prob(mu, a)

    def mean(self, obs):
        return self.mlp.infer(obs)

    def tensors(self, prefix="policy."):
        return self.mlp.tensors(prefix)

    def load_tensors(self, tensors, prefix="policy."):
        self.mlp.load_tensors(tensors, prefix)


class Critic:
    def __init__(self, obs_dim: int, hidden, rng):
        self.mlp = Mlp([obs_dim] + list(hidden) + [1], rng, final_scale=1.0)

    def value(self, obs) -> np.ndarray:
        return self.mlp.infer(obs)[:, 0]

    def tensors(self, prefix="critic."):
        return self.mlp.tensors(prefix)

    def load_tensors(self, tensors, prefix="critic."):
        self.mlp.load_tensors(tensors, prefix)


@dataclass
class RolloutBuffer:
    """Fixed-length segments from every env, flattened env-major."""

    obs: np.ndarray          # (N, obs_dim)
    actions: np.ndarray      # (N, act_dim)
    log_probs: np.ndarray    # (N,)
    rewards: np.ndarray      # (N,)
    dones: np.ndarray        # (N,) bool
    values: np.ndarray       # (N,)
    next_values: np.ndarray  # (N,) bootstrap, 0 when done
    contacts: np.ndarray     # (N,) int
    ref_index: np.ndarray    # (N,) reference frame per transition
    layout_keys: np.ndarray  # (N,)
    episodes: list = field(default_factory=list)
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    n_envs: int = 1
    steps_per_env: int = 1

    def __len__(self):
        return self.obs.shape[0]


def collect_rollouts(envs, policy: GaussianPolicy, critic: Critic,
                     steps_per_env: int, rng: np.random.Generator) -> RolloutBuffer:
    """Steps every env in lockstep with sampled actions.

    Envs auto-reset on termination; finished-episode summaries are gathered
    in env-index order. Value bootstraps use the post-step observation and
    are zeroed at terminal transitions.
    """
    n = len(envs)
    obs_dim = envs[0].obs.shape[0]
    act_dim = policy.head.dim
    obs = np.empty((n, steps_per_env, obs_dim))
    actions = np.empty((n, steps_per_env, act_dim))
    log_probs = np.empty((n, steps_per_env))
    rewards = np.empty((n, steps_per_env))
    dones = np.zeros((n, steps_per_env), dtype=bool)
    contacts = np.zeros((n, steps_per_env), dtype=int)
    ref_index = np.zeros((n, steps_per_env), dtype=int)
    layout_keys = np.zeros((n, steps_per_env), dtype=int)
    next_obs = np.empty((n, steps_per_env, obs_dim))
    episodes = []

    cur = np.stack([env.obs for env in envs])
    for t in range(steps_per_env):
        acts, logps = policy.act(cur, rng)
        for i, env in enumerate(envs):
            ob, rew, done, info = env.step(acts[i])
            obs[i, t] = cur[i]
            actions[i, t] = acts[i]
            log_probs[i, t] = logps[i]
            rewards[i, t] = rew
            dones[i, t] = done
            contacts[i, t] = info["contact"]
            ref_index[i, t] = info["ref_index"]
            layout_keys[i, t] = info["layout_key"]
            next_obs[i, t] = ob
            if done:
                episodes.append(info["episode"])
            cur[i] = ob

    flat_obs = obs.reshape(n * steps_per_env, obs_dim)
    values = critic.value(flat_obs).reshape(n, steps_per_env)
    next_values = critic.value(next_obs.reshape(n * steps_per_env, obs_dim))
    next_values = next_values.reshape(n, steps_per_env)
    next_values[dones] = 0.0

    return RolloutBuffer(
        obs=flat_obs,
        actions=actions.reshape(n * steps_per_env, act_dim),
        log_probs=log_probs.reshape(-1),
        rewards=rewards.reshape(-1),
        dones=dones.reshape(-1),
        values=values.reshape(-1),
        next_values=next_values.reshape(-1),
        contacts=contacts.reshape(-1),
        ref_index=ref_index.reshape(-1),
        layout_keys=layout_keys.reshape(-1),
        episodes=episodes,
        n_envs=n,
        steps_per_env=steps_per_env,
    )


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float):
    """Exponentially weighted advantages and value targets.

    delta_t = r_t + gamma * V(s_{t+1}) * (1 - done_t) - V(s_t), accumulated
    backward with decay gamma * lam and cut at episode boundaries; returns
    are advantages plus values.
    """
    n, t_len = buffer.n_envs, buffer.steps_per_env
    rew = buffer.rewards.reshape(n, t_len)
    val = buffer.values.reshape(n, t_len)
    nval = buffer.next_values.reshape(n, t_len)
    done = buffer.dones.reshape(n, t_len)
    adv = np.zeros((n, t_len))
    delta = rew + gamma * nval - val
    for i in range(n):
        acc = 0.0
        for t in range(t_len - 1, -1, -1):
            acc = delta[i, t] + (0.0 if done[i, t] else gamma * lam * acc)
            adv[i, t] = acc
    advantages = adv.reshape(-1)
    returns = advantages + buffer.values
    buffer.advantages = advantages
    buffer.returns = returns
    return advantages, returns


def ppo_update(policy: GaussianPolicy, critic: Critic, policy_opt: Adam,
               critic_opt: Adam, buffer: RolloutBuffer, cfg: PpoConfig,
               rng: np.random.Generator) -> dict:
    """Clipped-surrogate policy update and MSE critic regression."""
    if buffer.advantages is None:
        compute_gae(buffer, cfg.gamma, cfg.lam)
    adv = buffer.advantages
    if cfg.normalize_advantages:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    n = len(buffer)
    var = policy.head.std ** 2

    ratios_seen = []
    clipped_seen = []
    ploss_seen = []
    vloss_seen = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = order[start:start + cfg.minibatch]
            ob = buffer.obs[idx]
            act = buffer.actions[idx]
            old_lp = buffer.log_probs[idx]
            a = adv[idx]
            ret = buffer.returns[idx]
            b = len(idx)

            mu = policy.mlp.forward(ob)
            lp = policy.head.log_prob(mu, act)
            ratio = np.exp(lp - old_lp)
            surr1 = ratio * a
            surr2 = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * a
            ploss = -np.minimum(surr1, surr2).mean()
            # gradient flows through surr1 wherever it attains the min
            active = (surr1 <= surr2).astype(float)
            dl_dlp = -(a * ratio * active) / b
            dl_dmu = dl_dlp[:, None] * (act - mu) / var
            policy.mlp.zero_grads()
            policy.mlp.backward(dl_dmu)
            policy_opt.step()

            v = critic.mlp.forward(ob)[:, 0]
            verr = v - ret
            vloss = float(np.mean(verr ** 2))
            critic.mlp.zero_grads()
            critic.mlp.backward((2.0 * verr / b)[:, None])
            critic_opt.step()

            stats_probe = ploss + vloss
            if not np.isfinite(stats_probe):
                raise PpoDivergedError({"policy_loss": float(ploss),
                                        "value_loss": vloss,
                                        "mean_ratio": float(np.mean(ratio))})
            ratios_seen.append(float(np.mean(ratio)))
            clipped_seen.append(float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps)))
            ploss_seen.append(float(ploss))
            vloss_seen.append(vloss)

    return {
        "mean_ratio": float(np.mean(ratios_seen)),
        "clip_fraction": float(np.mean(clipped_seen)),
        "policy_loss": float(np.mean(ploss_seen)),
        "value_loss": float(np.mean(vloss_seen)),
        "entropy": policy.head.entropy(),
    }
