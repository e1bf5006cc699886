"""PPO-clip training of the multigrid control policy.

The actor is a dropout-regularized dense net with a tanh output head; the
policy is a diagonal Gaussian around that mean with a fixed (annealed, not
learned) standard deviation.  Updates run every timesteps_per_batch
transitions regardless of episode boundaries; done flags segment the
discounted returns.
"""

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .nets import Adam, DenseNet, build_net

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class PPOConfig:
    episodes: int = 10000
    timesteps_per_batch: int = 16
    gamma: float = 0.98
    actor_lr: float = 1e-5
    critic_lr: float = 0.05
    clip_eps: float = 0.2
    updates_per_batch: int = 4
    action_std: float = 0.15
    action_std_final: float = 0.05
    seed: int = 0
    log_every: int = 1

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.clip_eps <= 0.0:
            raise ValueError("clip_eps must be positive")
        if self.actor_lr <= 0.0 or self.critic_lr <= 0.0:
            raise ValueError("learning rates must be positive")


@dataclass
class Transition:
    state: np.ndarray
    raw_action: np.ndarray
    log_prob: float
    reward: float
    done: bool
    std: float


def build_actor(state_dim, action_dim, rng):
    """Fig-2-style actor: widths 64/128/256/512 with 0.5 dropout after the
    64, 128, and 512 layers, ReLU throughout, tanh output."""
    widths = [state_dim, 64, 128, 256, 512, action_dim]
    activations = ["relu", "relu", "relu", "relu", "tanh"]
    dropouts = [0.5, 0.5, 0.0, 0.5, 0.0]
    return DenseNet(build_net(widths, activations, dropouts, rng),
                    rng_seed=rng.integers(2**31 - 1))


def build_critic(state_dim, rng):
    widths = [state_dim, 32, 32, 1]
    activations = ["relu", "relu", "identity"]
    dropouts = [0.0, 0.0, 0.0]
    return DenseNet(build_net(widths, activations, dropouts, rng),
                    rng_seed=rng.integers(2**31 - 1))


@dataclass
class ActorPolicy:
    net: DenseNet
    log_std: np.ndarray

    @property
    def std(self):
        return np.exp(self.log_std)


def actor_forward(policy, state, mode="eval"):
    """Mean action for a state (or batch).  Train mode draws dropout masks
    and returns the cache needed by backward."""
    mean, cache = policy.net.forward(state, train=(mode == "train"))
    return mean, cache


def gaussian_log_prob(actions, means, std):
    """Diagonal Gaussian log density, summed over action channels."""
    actions = np.asarray(actions, dtype=float)
    means = np.asarray(means, dtype=float)
    std = np.asarray(std, dtype=float)
    z = (actions - means) / std
    per_channel = -0.5 * z * z - np.log(std) - 0.5 * LOG_2PI
    return per_channel.sum(axis=-1)


def sample_action(policy, state, rng, std=None):
    """Draw an exploration action. The log-prob is taken at the raw sample;
    the returned action is clipped to the tanh range."""
    mean, _ = actor_forward(policy, state, mode="eval")
    sigma = policy.std if std is None else np.full(policy.net.output_dim, std)
    raw = mean + sigma * rng.standard_normal(mean.shape)
    log_prob = float(gaussian_log_prob(raw, mean, sigma))
    return np.clip(raw, -1.0, 1.0), log_prob


def discounted_returns(rewards, gamma, dones=None):
    """G_t = r_t + gamma * G_{t+1}, restarting at episode boundaries."""
    rewards = np.asarray(rewards, dtype=float)
    if dones is None:
        dones = np.zeros(len(rewards), dtype=bool)
    out = np.empty_like(rewards)
    acc = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        if dones[i]:
            acc = 0.0
        acc = rewards[i] + gamma * acc
        out[i] = acc
    return out


def ppo_clip_loss(log_probs_new, log_probs_old, advantages, clip_eps):
    """Mean clipped surrogate: -E[min(rho*A, clip(rho)*A)]."""
    ratio = np.exp(np.asarray(log_probs_new) - np.asarray(log_probs_old))
    adv = np.asarray(advantages, dtype=float)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv
    return float(-np.mean(np.minimum(unclipped, clipped)))


def _clip_loss_grad(log_probs_new, log_probs_old, advantages, clip_eps):
    """d(loss)/d(log_probs_new); zero where the clipped branch is active."""
    ratio = np.exp(log_probs_new - log_probs_old)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantages
    active = unclipped <= clipped
    return -(active * advantages * ratio) / len(ratio)


def normalize_advantages(adv, eps=1e-8):
    adv = np.asarray(adv, dtype=float)
    return (adv - adv.mean()) / (adv.std() + eps)


class PPOTrainer:
    """On-policy single-stream PPO over a MultigridEnv."""

    def __init__(self, env, config: PPOConfig):
        self.env = env
        self.config = config
        seeds = np.random.SeedSequence(config.seed).spawn(4)
        init_rng = np.random.default_rng(seeds[0])
        self.policy = ActorPolicy(
            net=build_actor(env.state_size, env.action_size, init_rng),
            log_std=np.full(env.action_size, np.log(config.action_std)),
        )
        self.critic = build_critic(env.state_size, np.random.default_rng(seeds[1]))
        self.action_rng = np.random.default_rng(seeds[2])
        self.policy.net.reseed(np.random.default_rng(seeds[3]).integers(2**31 - 1))
        self.actor_opt = Adam(self.policy.net.parameters(), config.actor_lr)
        self.critic_opt = Adam(self.critic.parameters(), config.critic_lr)
        self.buffer = []
        self.episodes_done = 0
        self.total_steps = 0

    def current_std(self):
        cfg = self.config
        frac = self.episodes_done / max(cfg.episodes - 1, 1)
        frac = min(max(frac, 0.0), 1.0)
        return cfg.action_std + frac * (cfg.action_std_final - cfg.action_std)

    def _update(self):
        cfg = self.config
        batch = self.buffer
        states = np.stack([t.state for t in batch])
        actions = np.stack([t.raw_action for t in batch])
        old_logp = np.array([t.log_prob for t in batch])
        rewards = [t.reward for t in batch]
        dones = [t.done for t in batch]
        stds = np.array([t.std for t in batch])[:, None]

        returns = discounted_returns(rewards, cfg.gamma, dones)
        values, _ = self.critic.forward(states, train=False)
        adv = normalize_advantages(returns - values[:, 0])

        for _ in range(cfg.updates_per_batch):
            means, cache = self.policy.net.forward(states, train=True)
            logp_new = gaussian_log_prob(actions, means, stds)
            dlogp = _clip_loss_grad(logp_new, old_logp, adv, cfg.clip_eps)
            # d logp / d mean = (a - mu) / sigma^2 per channel
            grad_mean = dlogp[:, None] * (actions - means) / (stds * stds)
            grads, _ = self.policy.net.backward(cache, grad_mean)
            flat = []
            for dw, db in grads:
                flat.extend((dw, db))
            self.actor_opt.step(flat)

        for _ in range(cfg.updates_per_batch):
            values, cache = self.critic.forward(states, train=True)
            err = values[:, 0] - returns
            grad_v = (2.0 * err / len(err))[:, None]
            grads, _ = self.critic.backward(cache, grad_v)
            flat = []
            for dw, db in grads:
                flat.extend((dw, db))
            self.critic_opt.step(flat)

        self.buffer = []

    def run_episode(self):
        env = self.env
        cfg = self.config
        std = self.current_std()
        state = env.reset()
        rewards = []
        t0 = time.perf_counter()
        while not env.done:
            action, logp = sample_action(self.policy, state, self.action_rng, std)
            next_state, reward, done = env.step(action)
            self.buffer.append(Transition(state, action, logp, reward, done, std))
            rewards.append(reward)
            self.total_steps += 1
            if len(self.buffer) >= cfg.timesteps_per_batch:
                self._update()
            state = next_state
        self.episodes_done += 1
        return {
            "episode": self.episodes_done,
            "steps": env.steps,
            "mean_reward": float(np.mean(rewards)) if rewards else 0.0,
            "final_residual": float(env.residual),
            "wall_time": time.perf_counter() - t0,
        }

    def train(self, progress=None):
        log = []
        for _ in range(self.config.episodes):
            row = self.run_episode()
            log.append(row)
            if progress is not None and row["episode"] % self.config.log_every == 0:
                progress(row)
        if self.buffer:
            if len(self.buffer) >= 2:
                self._update()
            else:
                self.buffer = []
        return log


def train(env, config: PPOConfig, progress=None):
    """Run the training loop; returns (trainer, per-episode log rows)."""
    env_obj = env() if callable(env) else env
    trainer = PPOTrainer(env_obj, config)
    log = trainer.train(progress=progress)
    return trainer, log


def greedy_policy(policy):
    """Eval-mode deterministic policy: the tanh mean, no exploration."""

    def act(state):
        mean, _ = actor_forward(policy, state, mode="eval")
        return mean

    return act


def write_training_log(rows, path):
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["episode", "steps", "mean_reward", "final_residual", "wall_time"]
        )
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
