"""Comparison allocators: random, tabular Q-learning, DQN, independent AC and a
linear reward-inaction learning automaton (SLA).

Every allocator acts per agent from that agent's own observation row only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .env import OBS_GC, OBS_GD, OBS_IPREV, OBS_SCALARS, D2DEnv, normalize_observations
from .marl.buffer import ReplayBuffer, Transition
from .marl.core import TrainerConfig, MultiAgentTrainer, log_row
from .metrics import MetricsAccumulator
from .neural import AdamState, MLPSpec, adam_step, init_weights, soft_update


@dataclass
class BaselineConfig:
    warmup_slots: int = 2000
    train_slots: int = 10000
    gamma: float = 0.95
    eps_start: float = 1.0
    eps_end: float = 0.05
    ql_alpha: float = 0.1
    ql_bins: int = 4
    dqn_lr: float = 1e-3
    dqn_hidden: tuple = (512, 128)
    dqn_batch_size: int = 64
    dqn_tau: float = 0.01
    buffer_capacity: int = 1_000_000
    sla_step: float = 0.05

    def __post_init__(self):
        self.dqn_hidden = tuple(self.dqn_hidden)
        if not 0.0 < self.sla_step < 1.0:
            raise ValueError("sla_step must lie in (0, 1)")
        if self.ql_bins < 1:
            raise ValueError("ql_bins must be >= 1")

    def epsilon(self, t: int) -> float:
        if self.train_slots <= 1:
            return self.eps_end
        frac = min(max(t / (self.train_slots - 1), 0.0), 1.0)
        return self.eps_start + frac * (self.eps_end - self.eps_start)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dqn_hidden"] = list(self.dqn_hidden)
        return d


# -- shared loops ---------------------------------------------------------------

def run_policy(env: D2DEnv, policy, slots: int, rng, learn: bool = True, log=None,
               phase="eval") -> dict:
    """Drive ``policy`` for ``slots`` slots and return the metrics dict."""
    acc = MetricsAccumulator()
    for _ in range(slots):
        obs = env.observations
        actions = policy.act(obs, rng)
        out = env.step(actions)
        if learn:
            policy.observe(obs, actions, out)
        acc.add(out)
        if log is not None:
            log.append(log_row(env.slot - 1, phase, out))
    return acc.result()


class RandomPolicy:
    def __init__(self, num_agents, num_actions):
        self.num_agents = num_agents
        self.num_actions = num_actions

    def act(self, obs, rng):
        return rng.integers(0, self.num_actions, size=self.num_agents)

    def observe(self, obs, actions, outcome):
        pass


def random_allocator(env: D2DEnv, slots: int, seed: int) -> dict:
    """Uniform RB per agent per slot from the environment's current state."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xBA5E]))
    return run_policy(env, RandomPolicy(env.num_agents, env.num_actions), slots, rng, learn=False)


# -- tabular Q-learning -----------------------------------------------------------

class QTable:
    def __init__(self, num_states: int, num_actions: int):
        self.q = np.zeros((num_states, num_actions))

    def greedy(self, s) -> int:
        return int(np.argmax(self.q[s]))

    def update(self, s, a, r, s_next, alpha, gamma) -> None:
        target = r + gamma * np.max(self.q[s_next])
        self.q[s, a] += alpha * (target - self.q[s, a])


def state_index(obs_norm_row, num_rbs: int, bins: int = 4) -> int:
    """4 uniform bins on [-1, 1] for each scalar feature, times K+1 for k_prev (K = none yet)."""
    scalars = np.asarray(obs_norm_row)[[OBS_GD, OBS_GC, OBS_IPREV]]
    idx = np.clip(np.floor((scalars + 1.0) / 2.0 * bins), 0, bins - 1).astype(int)
    onehot = np.asarray(obs_norm_row)[OBS_SCALARS:]
    k_prev = int(np.argmax(onehot)) if onehot.sum() > 0 else num_rbs
    code = 0
    for b in idx:
        code = code * bins + int(b)
    return code * (num_rbs + 1) + k_prev


def num_states(num_rbs: int, bins: int = 4) -> int:
    return bins ** 3 * (num_rbs + 1)


class QLearningPolicy:
    def __init__(self, env: D2DEnv, cfg: BaselineConfig):
        self.cfg = cfg
        self.config = env.config
        self.K = env.num_actions
        self.tables = [QTable(num_states(self.K, cfg.ql_bins), self.K)
                       for _ in range(env.num_agents)]
        self.epsilon = 0.0

    def _states(self, obs):
        norm = normalize_observations(obs, self.config)
        return [state_index(row, self.K, self.cfg.ql_bins) for row in norm]

    def act(self, obs, rng):
        states = self._states(obs)
        acts = np.empty(len(states), dtype=int)
        for i, (s, tab) in enumerate(zip(states, self.tables)):
            if rng.random() < self.epsilon:
                acts[i] = rng.integers(0, self.K)
            else:
                acts[i] = tab.greedy(s)
        return acts

    def observe(self, obs, actions, outcome):
        s = self._states(obs)
        s2 = self._states(outcome.next_observations)
        for i, tab in enumerate(self.tables):
            tab.update(s[i], actions[i], outcome.rewards[i], s2[i], self.cfg.ql_alpha,
                       self.cfg.gamma)


# -- DQN --------------------------------------------------------------------------

class DQNAgent:
    """Online/target Q networks for one agent, trained on its own slice of the replay."""

    def __init__(self, obs_dim, num_actions, hidden, lr, tau, gamma, seed):
        self.net = init_weights(MLPSpec((obs_dim, *hidden, num_actions)), seed)
        self.target = self.net.copy()
        self.opt = AdamState.for_params(self.net.params, lr)
        self.tau = tau
        self.gamma = gamma

    def q_values(self, obs_norm):
        return self.net(obs_norm)

    def bellman_targets(self, rewards, next_states):
        return rewards + self.gamma * np.max(self.target(next_states), axis=1)

    def loss(self, states, actions, rewards, next_states) -> float:
        q = self.net(states)[np.arange(len(actions)), actions]
        return float(np.mean((q - self.bellman_targets(rewards, next_states)) ** 2))

    def update(self, states, actions, rewards, next_states) -> float:
        y = self.bellman_targets(rewards, next_states)
        q_all, cache = self.net.forward(states)
        rows = np.arange(len(actions))
        err = q_all[rows, actions] - y
        g = np.zeros_like(q_all)
        g[rows, actions] = 2.0 * err / len(err)
        grads, _ = self.net.backward(cache, g)
        adam_step(self.net.params, grads, self.opt)
        soft_update(self.target.params, self.net.params, self.tau)
        return float(np.mean(err ** 2))


class DQNPolicy:
    def __init__(self, env: D2DEnv, cfg: BaselineConfig, seed: int):
        self.cfg = cfg
        self.config = env.config
        self.K = env.num_actions
        seeds = np.random.SeedSequence([int(seed), 0xD09]).spawn(env.num_agents + 1)
        self.agents = [DQNAgent(env.obs_dim, self.K, cfg.dqn_hidden, cfg.dqn_lr, cfg.dqn_tau,
                                cfg.gamma, seeds[i]) for i in range(env.num_agents)]
        self.sample_rng = np.random.default_rng(seeds[-1])
        self.buffer = ReplayBuffer(cfg.buffer_capacity)
        self.epsilon = 0.0
        self.learning = False

    def act(self, obs, rng):
        norm = normalize_observations(obs, self.config)
        acts = np.empty(len(self.agents), dtype=int)
        for i, ag in enumerate(self.agents):
            if rng.random() < self.epsilon:
                acts[i] = rng.integers(0, self.K)
            else:
                acts[i] = int(np.argmax(ag.q_values(norm[i])))
        return acts

    def observe(self, obs, actions, outcome):
        n = len(self.agents)
        one_hot = np.zeros((n, self.K))
        one_hot[np.arange(n), actions] = 1.0
        self.buffer.push(Transition(normalize_observations(obs, self.config), one_hot,
                                    outcome.rewards,
                                    normalize_observations(outcome.next_observations,
                                                           self.config)))
        if not self.learning or not self.buffer.can_sample(self.cfg.dqn_batch_size):
            return
        b = self.buffer.sample(self.cfg.dqn_batch_size, self.sample_rng)
        acts = np.argmax(b.actions, axis=2)
        for i, ag in enumerate(self.agents):
            ag.update(b.states[:, i], acts[:, i], b.rewards[:, i], b.next_states[:, i])


# -- learning automaton -----------------------------------------------------------

@dataclass
class AutomatonState:
    probs: np.ndarray  # (N, K)
    step_size: float
    running_max: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.running_max is None:
            self.running_max = np.zeros(len(self.probs))

    @classmethod
    def uniform(cls, num_agents, num_actions, step_size) -> "AutomatonState":
        return cls(np.full((num_agents, num_actions), 1.0 / num_actions), step_size)


def automaton_update(state: AutomatonState, agent: int, action: int, reward: float) -> float:
    """Linear reward-inaction step for one agent. Returns the normalised reward used."""
    state.running_max[agent] = max(state.running_max[agent], reward)
    top = state.running_max[agent]
    r_hat = max(reward, 0.0) / top if top > 0 else 0.0
    p = state.probs[agent]
    e = np.zeros_like(p)
    e[action] = 1.0
    p += state.step_size * r_hat * (e - p)
    return r_hat


class SLAPolicy:
    """Online learner: keeps adapting during evaluation as well."""

    def __init__(self, env: D2DEnv, cfg: BaselineConfig):
        self.state = AutomatonState.uniform(env.num_agents, env.num_actions, cfg.sla_step)

    def act(self, obs, rng):
        p = self.state.probs
        u = rng.random(len(p))
        cdf = np.cumsum(p, axis=1)
        return np.minimum((cdf < u[:, None]).sum(axis=1), p.shape[1] - 1)

    def observe(self, obs, actions, outcome):
        for i, a in enumerate(actions):
            automaton_update(self.state, i, int(a), float(outcome.rewards[i]))


# -- train entry points -----------------------------------------------------------

def _train_loop(env, policy, cfg: BaselineConfig, rng, eps_attr=True, on_train_start=None):
    log = []
    # warmup is uniform-random allocation; learners may still record it
    policy.epsilon = 1.0 if eps_attr else 0.0
    if cfg.warmup_slots:
        run_policy(env, policy, cfg.warmup_slots, rng, learn=True, log=log, phase="warmup")
    if on_train_start:
        on_train_start()
    for t in range(cfg.train_slots):
        if eps_attr:
            policy.epsilon = cfg.epsilon(t)
        obs = env.observations
        actions = policy.act(obs, rng)
        out = env.step(actions)
        policy.observe(obs, actions, out)
        log.append(log_row(env.slot - 1, "train", out))
    policy.epsilon = 0.0
    return log


def q_learning_agent(env: D2DEnv, cfg: BaselineConfig, seed: int):
    """Independent tabular Q-learning. Returns ``(policy, training_log)``."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x0A1]))
    policy = QLearningPolicy(env, cfg)
    return policy, _train_loop(env, policy, cfg, rng)


def dqn_agent(env: D2DEnv, cfg: BaselineConfig, seed: int):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x0A2]))
    policy = DQNPolicy(env, cfg, seed)

    def start():
        policy.learning = True

    return policy, _train_loop(env, policy, cfg, rng, on_train_start=start)


def sla_agent(env: D2DEnv, cfg: BaselineConfig, seed: int):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x0A3]))
    policy = SLAPolicy(env, cfg)
    cfg_online = BaselineConfig(**{**cfg.to_dict(), "warmup_slots": 0,
                                   "train_slots": cfg.warmup_slots + cfg.train_slots})
    return policy, _train_loop(env, policy, cfg_online, rng, eps_attr=False)


def independent_ac_agent(env: D2DEnv, cfg: TrainerConfig, seed: int):
    """The centralised trainer with each critic restricted to its own (s_i, a_i)."""
    ac_cfg = TrainerConfig(**{**cfg.to_dict(), "mode": "AC"})
    return MultiAgentTrainer(env, ac_cfg, seed).train()


def evaluate_baseline(env: D2DEnv, policy, slots: int, seed: int) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xE7A1]))
    return run_policy(env, policy, slots, rng, learn=isinstance(policy, SLAPolicy))


__all__ = [
    "BaselineConfig", "QTable", "state_index", "num_states", "QLearningPolicy", "DQNAgent",
    "DQNPolicy", "AutomatonState", "automaton_update", "SLAPolicy", "RandomPolicy",
    "random_allocator", "q_learning_agent", "dqn_agent", "sla_agent",
    "independent_ac_agent", "evaluate_baseline", "run_policy",
]
