"""Centralised-critic actor-critic training (MAAC / NAAC / independent AC) and
decentralised execution.

Actors output K logits. During training the environment action is
``argmax(logits / T + Gumbel)`` and the critic sees the stored one-hot; the
actor gradient flows through ``softmax(logits)`` substituted for the agent's
own action. Execution is a plain argmax over logits.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from ..env import D2DEnv, normalize_observations
from ..metrics import MetricsAccumulator
from ..neural import (
    MLP,
    AdamState,
    FusionCritic,
    MLPSpec,
    adam_step,
    as_seed_sequence,
    dumps_mlp,
    init_weights,
    loads_mlp,
    soft_update,
)
from .buffer import Batch, ReplayBuffer, Transition

log = logging.getLogger(__name__)

MODES = ("MAAC", "NAAC", "AC")

TRAIN_LOG_VERSION = 1


class TrainingFault(RuntimeError):
    def __init__(self, message, dump_path=None):
        super().__init__(message if dump_path is None else f"{message} (batch saved to {dump_path})")
        self.dump_path = dump_path


@dataclass
class TrainerConfig:
    mode: str = "MAAC"
    lam: int = 3
    gamma: float = 0.95
    tau: float = 0.01
    batch_size: int = 64
    lr_actor: float = 1e-4
    lr_critic: float = 1e-3
    warmup_slots: int = 2000
    train_slots: int = 10000
    temp_start: float = 1.0
    temp_end: float = 0.1
    buffer_capacity: int = 1_000_000
    actor_hidden: tuple = (512, 128)
    critic_hidden: tuple = (1024, 512, 256)
    logit_l2: float = 1e-3
    fault_dir: str | None = None

    def __post_init__(self):
        self.mode = self.mode.upper()
        self.actor_hidden = tuple(self.actor_hidden)
        self.critic_hidden = tuple(self.critic_hidden)
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.batch_size < 1 or self.warmup_slots < 0 or self.train_slots < 0:
            raise ValueError("batch_size >= 1, warmup_slots >= 0, train_slots >= 0 required")
        if self.temp_start <= 0 or self.temp_end <= 0:
            raise ValueError("temperatures must be positive")

    def check_agents(self, num_agents: int) -> None:
        if self.mode == "NAAC" and not 0 <= self.lam <= num_agents - 1:
            raise ValueError(f"lam must lie in [0, {num_agents - 1}]")

    def neighbor_count(self, num_agents: int) -> int:
        return {"MAAC": num_agents - 1, "NAAC": self.lam, "AC": 0}[self.mode]

    def temperature(self, t: int) -> float:
        """Exploration temperature at post-warmup training step ``t``."""
        if self.train_slots <= 1:
            return self.temp_end
        frac = min(max(t / (self.train_slots - 1), 0.0), 1.0)
        return self.temp_start + frac * (self.temp_end - self.temp_start)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["actor_hidden"] = list(self.actor_hidden)
        d["critic_hidden"] = list(self.critic_hidden)
        return d


def build_neighbor_index(tx_positions: np.ndarray, lam: int) -> list:
    """Self first, then the ``lam`` nearest pairs by transmitter distance (ties -> lower index)."""
    tx = np.asarray(tx_positions, dtype=float)
    n = len(tx)
    if not 0 <= lam <= n - 1:
        raise ValueError(f"lam must lie in [0, {n - 1}]")
    dist = np.linalg.norm(tx[:, None, :] - tx[None, :, :], axis=-1)
    index = []
    for i in range(n):
        others = [j for j in range(n) if j != i]
        others.sort(key=lambda j: (dist[i, j], j))
        index.append([i] + others[:lam])
    return index


def softmax(logits, axis=-1):
    z = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def select_action(actor: MLP, obs, rng=None, temperature: float | None = None):
    """One agent's RB choice. ``temperature=None`` is execution mode (argmax).

    Returns ``(one_hot, logits)``.
    """
    logits = actor(obs)
    k = logits.shape[-1]
    if temperature is None:
        idx = int(np.argmax(logits))
    else:
        idx = int(np.argmax(logits / temperature + rng.gumbel(size=k)))
    one_hot = np.zeros(k)
    one_hot[idx] = 1.0
    return one_hot, logits


@dataclass
class AgentNets:
    actor: MLP
    critic: FusionCritic
    target_actor: MLP
    target_critic: FusionCritic
    actor_opt: AdamState
    critic_opt: AdamState

    @classmethod
    def create(cls, obs_dim, num_actions, group_size, cfg: TrainerConfig, seed) -> "AgentNets":
        s_actor, s_critic = as_seed_sequence(seed).spawn(2)
        actor = init_weights(MLPSpec((obs_dim, *cfg.actor_hidden, num_actions)), s_actor)
        critic = FusionCritic.build(group_size * obs_dim, group_size * num_actions,
                                    cfg.critic_hidden, s_critic)
        return cls(
            actor=actor,
            critic=critic,
            target_actor=actor.copy(),
            target_critic=critic.copy(),
            actor_opt=AdamState.for_params(actor.params, cfg.lr_actor),
            critic_opt=AdamState.for_params(critic.params, cfg.lr_critic),
        )


def _flat(x, idx):
    # (B, N, D) -> (B, len(idx) * D) for the chosen agents, in idx order
    return x[:, idx, :].reshape(len(x), -1)


def _check_finite(name, value, batch: Batch, cfg: TrainerConfig, agent: int):
    if np.all(np.isfinite(value)):
        return
    dump = None
    if cfg.fault_dir:
        os.makedirs(cfg.fault_dir, exist_ok=True)
        dump = os.path.join(cfg.fault_dir, f"fault_agent{agent}_{name}.npz")
        np.savez(dump, states=batch.states, actions=batch.actions,
                 rewards=batch.rewards, next_states=batch.next_states)
    raise TrainingFault(f"non-finite {name} for agent {agent}", dump)


def target_actions(agents, next_states) -> np.ndarray:
    """Relaxed target-policy actions ``softmax(mu'_j(s'_j))`` for every agent, (B, N, K)."""
    return np.stack([softmax(a.target_actor(next_states[:, j, :])) for j, a in enumerate(agents)],
                    axis=1)


def critic_target(i, batch: Batch, agents, cfg: TrainerConfig, neighbors, next_actions=None):
    """y_i = r_i + gamma * Q'_i(s'_nb, mu'(s')_nb) over the minibatch."""
    nb = neighbors[i]
    if next_actions is None:
        next_actions = target_actions(agents, batch.next_states)
    q_next = agents[i].target_critic(_flat(batch.next_states, nb), _flat(next_actions, nb))
    return batch.rewards[:, i] + cfg.gamma * q_next


def critic_update(i, batch: Batch, agents, cfg: TrainerConfig, neighbors, y) -> float:
    """One Adam step on the mean squared Bellman error. Returns the pre-step loss."""
    nb = neighbors[i]
    critic = agents[i].critic
    q, cache = critic.forward(_flat(batch.states, nb), _flat(batch.actions, nb))
    err = q - y
    loss = float(np.mean(err ** 2))
    _check_finite("critic_loss", loss, batch, cfg, i)
    grads, _, _ = critic.backward(cache, 2.0 * err / len(err))
    _check_finite("critic_grad", np.concatenate([g.ravel() for g in grads]), batch, cfg, i)
    adam_step(critic.params, grads, agents[i].critic_opt)
    return loss


def actor_gradient(i, batch: Batch, agents, cfg: TrainerConfig, neighbors):
    """Gradient of ``-mean Q_i`` (+ logit penalty) w.r.t. the actor parameters.

    Returns ``(grads, objective)`` where objective is the mean Q before the step.
    """
    nb = neighbors[i]
    net = agents[i]
    logits, a_cache = net.actor.forward(batch.states[:, i, :])
    probs = softmax(logits)
    acts = batch.actions[:, nb, :].copy()
    acts[:, 0, :] = probs  # own agent sits first in its neighbour list
    q, c_cache = net.critic.forward(_flat(batch.states, nb), acts.reshape(len(acts), -1))
    B, K = logits.shape
    _, _, g_act = net.critic.backward(c_cache, np.full(B, -1.0 / B))
    g_probs = g_act[:, :K]
    g_logits = probs * (g_probs - np.sum(g_probs * probs, axis=1, keepdims=True))
    g_logits += cfg.logit_l2 * 2.0 * logits / (B * K)
    grads, _ = net.actor.backward(a_cache, g_logits)
    return grads, float(np.mean(q))


def actor_update(i, batch: Batch, agents, cfg: TrainerConfig, neighbors) -> float:
    grads, objective = actor_gradient(i, batch, agents, cfg, neighbors)
    _check_finite("actor_grad", np.concatenate([g.ravel() for g in grads]), batch, cfg, i)
    adam_step(agents[i].actor.params, grads, agents[i].actor_opt)
    return objective


LOG_FIELDS_HEAD = ("slot", "phase", "total_reward")
LOG_FIELDS_TAIL = ("critic_loss", "actor_objective", "cue_outage_count", "d2d_outage_count",
                   "sum_d2d_rate")


def log_fields(num_agents: int) -> list:
    return [*LOG_FIELDS_HEAD, *(f"reward_{i}" for i in range(num_agents)), *LOG_FIELDS_TAIL]


def log_row(slot, phase, outcome, loss=float("nan"), objective=float("nan")) -> dict:
    row = {"slot": slot, "phase": phase, "total_reward": float(outcome.rewards.sum())}
    row.update({f"reward_{i}": float(r) for i, r in enumerate(outcome.rewards)})
    row.update(critic_loss=loss, actor_objective=objective,
               cue_outage_count=int(outcome.cue_outages.sum()),
               d2d_outage_count=int(outcome.d2d_outages.sum()),
               sum_d2d_rate=float(outcome.d2d_rates.sum()))
    return row


@dataclass
class TrainResult:
    agents: list
    neighbors: list
    log: list = field(default_factory=list)

    @property
    def actor_weights(self) -> list:
        """Serialised target-actor weights, one blob per agent."""
        return [dumps_mlp(a.target_actor) for a in self.agents]

    def total_rewards(self) -> np.ndarray:
        return np.array([row["total_reward"] for row in self.log])


class MultiAgentTrainer:
    """Owns the agents, the replay buffer and the RNG streams for one training run."""

    def __init__(self, env: D2DEnv, cfg: TrainerConfig, seed: int):
        if env.topology is None:
            raise ValueError("reset the environment before building a trainer")
        n = env.num_agents
        cfg.check_agents(n)
        self.env = env
        self.cfg = cfg
        self.seed = int(seed)
        self.neighbors = build_neighbor_index(env.topology.d2d_tx_positions, cfg.neighbor_count(n))
        group = len(self.neighbors[0])
        init_ss, act_ss, sample_ss = np.random.SeedSequence([self.seed, 0x3AAC]).spawn(3)
        agent_seeds = init_ss.spawn(n)
        self.agents = [AgentNets.create(env.obs_dim, env.num_actions, group, cfg, agent_seeds[i])
                       for i in range(n)]
        expected = group * (env.obs_dim + env.num_actions)
        for a in self.agents:
            assert a.critic.input_width == expected, "critic input width"
        self.act_rng = np.random.default_rng(act_ss)
        self.sample_rng = np.random.default_rng(sample_ss)
        self.buffer = ReplayBuffer(cfg.buffer_capacity)

    def act(self, obs_norm, temperature):
        n, k = self.env.num_agents, self.env.num_actions
        actions = np.empty(n, dtype=int)
        for i, a in enumerate(self.agents):
            one_hot, _ = select_action(a.actor, obs_norm[i], self.act_rng, temperature)
            actions[i] = int(np.argmax(one_hot))
        return actions

    def update(self):
        """One minibatch step for every agent, then soft target updates. Returns mean losses."""
        cfg = self.cfg
        batch = self.buffer.sample(cfg.batch_size, self.sample_rng)
        next_actions = target_actions(self.agents, batch.next_states)
        losses, objectives = [], []
        for i in range(len(self.agents)):
            y = critic_target(i, batch, self.agents, cfg, self.neighbors, next_actions)
            losses.append(critic_update(i, batch, self.agents, cfg, self.neighbors, y))
            objectives.append(actor_update(i, batch, self.agents, cfg, self.neighbors))
        for a in self.agents:
            soft_update(a.target_actor.params, a.actor.params, cfg.tau)
            soft_update(a.target_critic.params, a.critic.params, cfg.tau)
        return float(np.mean(losses)), float(np.mean(objectives))

    def train(self, callback=None) -> TrainResult:
        """Random-allocation warmup, then Algorithm-1 style updates once per slot."""
        env, cfg = self.env, self.cfg
        n, k = env.num_agents, env.num_actions
        result = TrainResult(self.agents, self.neighbors)
        obs = normalize_observations(env.observations, env.config)
        total = cfg.warmup_slots + cfg.train_slots
        for slot in range(total):
            warm = slot < cfg.warmup_slots
            if warm:
                actions = self.act_rng.integers(0, k, size=n)
            else:
                actions = self.act(obs, cfg.temperature(slot - cfg.warmup_slots))
            out = env.step(actions)
            next_obs = normalize_observations(out.next_observations, env.config)
            one_hot = np.zeros((n, k))
            one_hot[np.arange(n), actions] = 1.0
            self.buffer.push(Transition(obs, one_hot, out.rewards, next_obs))
            obs = next_obs
            loss = objective = float("nan")
            if not warm and self.buffer.can_sample(cfg.batch_size):
                loss, objective = self.update()
            row = log_row(slot, "warmup" if warm else "train", out, loss, objective)
            result.log.append(row)
            if callback is not None:
                callback(slot, row)
        return result


def train(env: D2DEnv, cfg: TrainerConfig, seed: int, stream: int = 0) -> TrainResult:
    env.reset(seed, stream)
    return MultiAgentTrainer(env, cfg, seed).train()


def load_actors(weights, expect: MLPSpec | None = None) -> list:
    """Accept MLPs, raw weight blobs or file paths."""
    actors = []
    for w in weights:
        if isinstance(w, MLP):
            actors.append(w)
        elif isinstance(w, (bytes, bytearray)):
            actors.append(loads_mlp(bytes(w), expect))
        else:
            with open(w, "rb") as fh:
                actors.append(loads_mlp(fh.read(), expect))
    return actors


def execute(env: D2DEnv, actor_weights, slots: int) -> dict:
    """Decentralised execution from the environment's current state.

    Agent i sees only its own observation row and its own actor; there is no
    critic, buffer or exchange between agents.
    """
    actors = load_actors(actor_weights)
    if len(actors) != env.num_agents:
        raise ValueError(f"got {len(actors)} actors for {env.num_agents} agents")
    for a in actors:
        if a.spec.n_in != env.obs_dim or a.spec.n_out != env.num_actions:
            raise ValueError(f"actor {a.spec.layer_sizes} does not fit obs_dim={env.obs_dim}, "
                             f"K={env.num_actions}")
    acc = MetricsAccumulator()
    for _ in range(slots):
        obs = normalize_observations(env.observations, env.config)
        actions = np.array([int(np.argmax(actors[i](obs[i]))) for i in range(len(actors))])
        acc.add(env.step(actions))
    return acc.result()


def write_train_log(rows, path, num_agents: int) -> None:
    """Write per-slot training rows (a ``TrainResult`` or a list of dicts) as CSV."""
    rows = rows.log if isinstance(rows, TrainResult) else rows
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=log_fields(num_agents), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) for k, v in row.items()})


def _fmt(v):
    if isinstance(v, float):
        return "" if np.isnan(v) else repr(v)
    return v
