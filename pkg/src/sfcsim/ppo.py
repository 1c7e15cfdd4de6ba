"""Proximal policy optimization with a clipped surrogate objective and GAE.

Defaults mirror the widely used baseline implementation: 2x64 tanh network,
Adam (eps 1e-5), rollouts of 128 steps, 4 epochs x 4 minibatches, clip 0.2,
GAE(lambda=0.95), entropy bonus 0.01, gradient-norm clipping at 0.5.
Training is fully deterministic for a given config and seed.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor
from .policy import PolicyNetwork
from .seeding import derive_seed, entity_rng

logger = logging.getLogger(__name__)


@dataclass
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    learning_rate: float = 2.5e-4
    rollout_length: int = 128
    minibatches: int = 4
    epochs: int = 4
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    total_steps: int = 100_000
    seed: int = 0
    n_envs: int = 8
    hidden: tuple[int, int] = (64, 64)
    # Rewards are multiplied by this inside the learner (GAE/returns only);
    # logged metrics keep raw rewards. Tames the +-400 reward scale.
    reward_scale: float = 1.0
    # Divide learner rewards by a running std of the discounted return, as
    # the usual vec-env normalization wrapper does. Without it the value
    # targets of this environment (hundreds per step) swamp the policy
    # gradient through the shared trunk.
    normalize_rewards: bool = False
    reward_clip: float = 10.0
    # Clip the value prediction's per-update movement by clip_epsilon, as the
    # mirrored framework does; damps value churn that scrambles advantages.
    clip_value: bool = True
    # Standardize observations with running mean/var (the usual vec-env
    # wrapper); essential conditioning for wide all-positive observations.
    normalize_observations: bool = False

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gamma and gae_lambda must be in [0, 1]")
        if self.clip_epsilon <= 0:
            raise ValueError("clip_epsilon must be > 0")


class RunningObsStats:
    """Per-feature running mean/variance (parallel Welford over batches)."""

    def __init__(self, dim: int):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 1e-4

    def update(self, batch: np.ndarray) -> None:
        batch_mean = batch.mean(axis=0)
        batch_var = batch.var(axis=0)
        n = batch.shape[0]
        delta = batch_mean - self.mean
        total = self.count + n
        self.mean += delta * n / total
        m_a = self.var * self.count
        m_b = batch_var * n
        self.var = (m_a + m_b + delta ** 2 * self.count * n / total) / total
        self.count = total

    def normalize(self, batch: np.ndarray) -> np.ndarray:
        return np.clip((batch - self.mean) / np.sqrt(self.var + 1e-8),
                       -10.0, 10.0)


class ReturnNormalizer:
    """Running scale estimate of the discounted return, per the usual
    normalize-reward vec wrapper: rewards are divided by the return std."""

    def __init__(self, n_envs: int, gamma: float, clip: float = 10.0,
                 eps: float = 1e-8):
        self.gamma = gamma
        self.clip = clip
        self.eps = eps
        self.returns = np.zeros(n_envs)
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def _push(self, values: np.ndarray) -> None:
        for x in values:
            self.count += 1
            delta = x - self.mean
            self.mean += delta / self.count
            self.m2 += delta * (x - self.mean)

    def scale(self, rewards: np.ndarray, dones: np.ndarray) -> np.ndarray:
        self.returns = self.returns * self.gamma + rewards
        self._push(self.returns)
        var = self.m2 / self.count if self.count > 1 else 1.0
        scaled = rewards / np.sqrt(var + self.eps)
        self.returns[dones > 0] = 0.0
        return np.clip(scaled, -self.clip, self.clip)


def compute_gae(rewards, values, dones, gamma: float, lam: float,
                bootstrap_value=0.0) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over (T,) or (T, n_envs) arrays.

    delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t
    A_t     = delta_t + gamma * lam * (1 - done_t) * A_{t+1}
    returns = advantages + values
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    squeeze = rewards.ndim == 1
    if squeeze:
        rewards, values, dones = rewards[:, None], values[:, None], dones[:, None]
        bootstrap = np.array([bootstrap_value], dtype=np.float64)
    else:
        bootstrap = np.asarray(bootstrap_value, dtype=np.float64)
    T = rewards.shape[0]
    advantages = np.zeros_like(rewards)
    last = np.zeros(rewards.shape[1])
    next_value = bootstrap
    for t in range(T - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        advantages[t] = last
        next_value = values[t]
    returns = advantages + values
    if squeeze:
        return advantages[:, 0], returns[:, 0]
    return advantages, returns


def ppo_loss(policy: PolicyNetwork, batch: dict, config: PpoConfig
             ) -> tuple[Tensor, dict[str, Tensor], dict[str, float]]:
    """Clipped-surrogate loss on one minibatch.

    ``batch`` holds numpy arrays: obs (B,D), actions (B,4), old_logp (B,),
    advantages (B,), returns (B,). Returns the scalar loss tensor, the
    parameter tensors (for gradient extraction), and diagnostics.
    """
    tensors = policy.build_tensors()
    log_probs, values = policy.forward_t(tensors, batch["obs"])
    actions = batch["actions"]
    new_logp = log_probs[0].take_along_rows(actions[:, 0])
    for i in range(1, len(log_probs)):
        new_logp = new_logp + log_probs[i].take_along_rows(actions[:, i])

    ratio = (new_logp - batch["old_logp"]).exp()
    adv = batch["advantages"]
    eps = config.clip_epsilon
    surrogate = (ratio * adv).minimum(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
    policy_loss = -surrogate.mean()

    if config.clip_value and "old_values" in batch:
        clipped = Tensor(batch["old_values"]) + \
            (values - batch["old_values"]).clamp(-eps, eps)
        err_raw = (values - batch["returns"]).square()
        err_clipped = (clipped - batch["returns"]).square()
        value_loss = err_raw.maximum(err_clipped).mean()
    else:
        value_loss = (values - batch["returns"]).square().mean()

    entropy = None
    for lp in log_probs:
        head_entropy = -(lp.exp() * lp).sum(axis=1)
        entropy = head_entropy if entropy is None else entropy + head_entropy
    entropy_mean = entropy.mean()

    loss = (policy_loss + config.value_coef * value_loss
            - config.entropy_coef * entropy_mean)
    if not np.isfinite(loss.data):
        raise FloatingPointError(
            f"non-finite PPO loss (policy={policy_loss.data}, "
            f"value={value_loss.data}, entropy={entropy_mean.data})")

    clip_fraction = float(np.mean(np.abs(ratio.data - 1.0) > eps))
    approx_kl = float(np.mean(batch["old_logp"] - new_logp.data))
    diagnostics = {
        "loss": float(loss.data),
        "policy_loss": float(policy_loss.data),
        "value_loss": float(value_loss.data),
        "entropy": float(entropy_mean.data),
        "clip_fraction": clip_fraction,
        "kl": approx_kl,
    }
    return loss, tensors, diagnostics


class Adam:
    """Adam with bias correction and global gradient-norm clipping."""

    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-5,
                 max_grad_norm: float | None = 0.5):
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray],
             grads: dict[str, np.ndarray]) -> None:
        if self.max_grad_norm is not None:
            total = np.sqrt(sum(float((g ** 2).sum()) for g in grads.values()))
            if total > self.max_grad_norm:
                scale = self.max_grad_norm / (total + 1e-12)
                grads = {k: g * scale for k, g in grads.items()}
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g ** 2
            m_hat = self.m[k] / bc1
            v_hat = self.v[k] / bc2
            params[k] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class EpisodeStats:
    env_index: int
    global_step: int
    length: int
    total_reward: float
    total_lost: float
    sfc_steps: int


@dataclass
class TrainLog:
    """Metrics accumulated over training."""

    updates: list[dict] = field(default_factory=list)
    episodes: list[EpisodeStats] = field(default_factory=list)
    # Per-env-step series from env 0 (reward curve over training time)
    env0_steps: list[dict] = field(default_factory=list)
    aborted: bool = False


def _obs_vector(obs) -> np.ndarray:
    return obs.vector() if hasattr(obs, "vector") else np.asarray(obs, dtype=np.float64)


def train(env_factory, config: PpoConfig, policy: PolicyNetwork | None = None,
          log_env0: bool = True) -> tuple[PolicyNetwork, TrainLog]:
    """Run PPO on environments produced by ``env_factory(index)``.

    Rollouts interleave ``n_envs`` environments stepped in a fixed order so
    results are seed-deterministic. On non-finite parameters, training stops
    and the last finite parameters are returned with ``log.aborted`` set.
    """
    envs = [env_factory(i) for i in range(config.n_envs)]
    episode_counters = [0] * config.n_envs
    obs = np.stack([
        _obs_vector(env.reset(derive_seed(config.seed, f"env{i}", 0)))
        for i, env in enumerate(envs)
    ])
    if policy is None:
        policy = PolicyNetwork(envs[0].obs_dim, envs[0].head_sizes,
                               hidden=config.hidden, seed=config.seed)
    log = TrainLog()
    if config.total_steps <= 0:
        return policy, log

    action_rng = entity_rng(config.seed, 20)
    perm_rng = entity_rng(config.seed, 21)
    adam = Adam(policy.params, config.learning_rate,
                max_grad_norm=config.max_grad_norm)
    normalizer = (ReturnNormalizer(config.n_envs, config.gamma, config.reward_clip)
                  if config.normalize_rewards else None)
    obs_stats = RunningObsStats(envs[0].obs_dim) if config.normalize_observations \
        else None

    n, T = config.n_envs, config.rollout_length
    obs_dim, n_heads = envs[0].obs_dim, len(envs[0].head_sizes)
    ep_reward = np.zeros(n)
    ep_lost = np.zeros(n)
    ep_sfc = np.zeros(n, dtype=int)
    ep_len = np.zeros(n, dtype=int)

    global_step = 0
    n_updates = max(1, config.total_steps // (n * T))
    for update in range(n_updates):
        buf_obs = np.zeros((T, n, obs_dim))
        buf_actions = np.zeros((T, n, n_heads), dtype=int)
        buf_logp = np.zeros((T, n))
        buf_rewards = np.zeros((T, n))
        buf_values = np.zeros((T, n))
        buf_dones = np.zeros((T, n))

        for t in range(T):
            if obs_stats is not None:
                obs_stats.update(obs)
                obs_in = obs_stats.normalize(obs)
            else:
                obs_in = obs
            components, joint_logp, values = policy.sample(obs_in, action_rng)
            buf_obs[t] = obs_in
            buf_actions[t] = components
            buf_logp[t] = joint_logp
            buf_values[t] = values
            for i, env in enumerate(envs):
                action = env.action_from_components(components[i])
                next_obs, reward, done, info = env.step(action)
                buf_rewards[t, i] = reward * config.reward_scale
                buf_dones[t, i] = float(done)
                ep_reward[i] += reward
                ep_len[i] += 1
                if hasattr(info, "sfc_status"):
                    ep_sfc[i] += info.sfc_status
                    ep_lost[i] += (1 - info.sfc_status) * info.packets
                if log_env0 and i == 0:
                    log.env0_steps.append({
                        "step": global_step + t,
                        "reward": reward,
                        "sfc": getattr(info, "sfc_status", ""),
                        "packets": getattr(info, "packets", ""),
                    })
                if done:
                    log.episodes.append(EpisodeStats(
                        i, global_step + t, int(ep_len[i]), float(ep_reward[i]),
                        float(ep_lost[i]), int(ep_sfc[i])))
                    ep_reward[i] = ep_lost[i] = 0.0
                    ep_sfc[i] = ep_len[i] = 0
                    episode_counters[i] += 1
                    next_obs = env.reset(
                        derive_seed(config.seed, f"env{i}", episode_counters[i]))
                obs[i] = _obs_vector(next_obs)
            if normalizer is not None:
                buf_rewards[t] = normalizer.scale(buf_rewards[t], buf_dones[t])
        global_step += T * n

        _, bootstrap = policy.forward_np(
            obs_stats.normalize(obs) if obs_stats is not None else obs)
        advantages, returns = compute_gae(
            buf_rewards, buf_values, buf_dones, config.gamma,
            config.gae_lambda, bootstrap)

        flat = {
            "obs": buf_obs.reshape(T * n, obs_dim),
            "actions": buf_actions.reshape(T * n, n_heads),
            "old_logp": buf_logp.reshape(T * n),
            "old_values": buf_values.reshape(T * n),
            "advantages": advantages.reshape(T * n),
            "returns": returns.reshape(T * n),
        }
        batch_size = T * n
        mb_size = max(1, batch_size // config.minibatches)
        snapshot = policy.copy_params()
        diag_accum: dict[str, float] = {}
        n_mb = 0
        for _ in range(config.epochs):
            order = perm_rng.permutation(batch_size)
            for start in range(0, batch_size, mb_size):
                idx = order[start:start + mb_size]
                if len(idx) == 0:
                    continue
                adv = flat["advantages"][idx]
                adv = (adv - adv.mean()) / (adv.std() + 1e-8)
                minibatch = {
                    "obs": flat["obs"][idx],
                    "actions": flat["actions"][idx],
                    "old_logp": flat["old_logp"][idx],
                    "old_values": flat["old_values"][idx],
                    "advantages": adv,
                    "returns": flat["returns"][idx],
                }
                loss, tensors, diag = ppo_loss(policy, minibatch, config)
                loss.backward()
                grads = {k: t.grad for k, t in tensors.items() if t.grad is not None}
                adam.step(policy.params, grads)
                for k, v in diag.items():
                    diag_accum[k] = diag_accum.get(k, 0.0) + v
                n_mb += 1
        if not policy.params_finite():
            logger.error("non-finite parameters after update %d; aborting", update)
            policy.set_params(snapshot)
            log.aborted = True
            break
        row = {k: v / n_mb for k, v in diag_accum.items()}
        row["update"] = update
        row["global_step"] = global_step
        log.updates.append(row)
    if obs_stats is not None:
        policy.obs_stats = (obs_stats.mean.copy(), obs_stats.var.copy())
    return policy, log
