"""N-agent Markov game over RB selection for D2D pairs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import radio
from .radio import CellConfig

# observation row layout: [g_d, g_c, i_prev, one-hot(k_prev) ...]
OBS_GD, OBS_GC, OBS_IPREV = 0, 1, 2
OBS_SCALARS = 3

# affine dB scalings that put typical values in roughly [-1, 1]
_GD_OFFSET_DB, _GC_OFFSET_DB, _I_OFFSET_DB, _SCALE_DB = 40.0, 80.0, 40.0, 40.0


def obs_dim(num_rbs: int) -> int:
    return OBS_SCALARS + num_rbs


@dataclass
class AgentObservation:
    g_d: float
    g_c: float
    i_prev: float
    k_prev: np.ndarray

    @classmethod
    def from_row(cls, row) -> "AgentObservation":
        return cls(float(row[OBS_GD]), float(row[OBS_GC]), float(row[OBS_IPREV]),
                   np.asarray(row[OBS_SCALARS:]).copy())


@dataclass
class StepOutcome:
    rewards: np.ndarray
    next_observations: np.ndarray
    cue_sinrs: np.ndarray
    d2d_sinrs: np.ndarray
    cue_outages: np.ndarray
    d2d_outages: np.ndarray
    cue_rates: np.ndarray
    d2d_rates: np.ndarray
    interference: np.ndarray
    constraint_ok: np.ndarray


def cue_outage_indicator(cue_sinr, threshold_db) -> bool:
    return bool(np.asarray(cue_sinr) < radio.db_to_linear(threshold_db))


def sum_d2d_rate(outcome: StepOutcome) -> float:
    return float(np.sum(np.log2(1.0 + outcome.d2d_sinrs)))


def normalize_observations(obs: np.ndarray, config: CellConfig) -> np.ndarray:
    """Map raw observations to network inputs. Gains and interference go to dB."""
    obs = np.asarray(obs, dtype=float)
    out = obs.copy()
    noise = radio.noise_power_linear(config)
    out[..., OBS_GD] = (10.0 * np.log10(obs[..., OBS_GD]) + _GD_OFFSET_DB) / _SCALE_DB
    out[..., OBS_GC] = (10.0 * np.log10(obs[..., OBS_GC]) + _GC_OFFSET_DB) / _SCALE_DB
    rel = 10.0 * np.log10((obs[..., OBS_IPREV] + noise) / noise)
    out[..., OBS_IPREV] = (rel - _I_OFFSET_DB) / _SCALE_DB
    return out


class D2DEnv:
    """Slot-by-slot D2D underlay environment.

    The topology is fixed for the life of an episode (one ``reset``); fading is
    redrawn every slot from ``(seed, stream, slot)``. ``step`` reads only the
    environment state and the joint action.
    """

    def __init__(self, config: CellConfig):
        self.config = config
        self.seed = None
        self.stream = 0
        self.slot = 0
        self.topology = None
        self.allocation = None
        self._mean = None
        self._channel = None
        self._obs = None

    @property
    def num_agents(self) -> int:
        return self.config.num_d2d

    @property
    def num_actions(self) -> int:
        return self.config.num_rbs

    @property
    def obs_dim(self) -> int:
        return obs_dim(self.config.num_rbs)

    @property
    def channel(self) -> radio.ChannelRealization:
        return self._channel

    @property
    def observations(self) -> np.ndarray:
        return self._obs.copy()

    def reset(self, seed: int, stream: int = 0) -> np.ndarray:
        """Place users, draw the slot-0 channel and return the initial observations.

        ``stream`` selects an independent fading sequence over the same topology
        (used to keep evaluation segments disjoint from training).
        """
        self.seed = int(seed)
        self.stream = int(stream)
        self.slot = 0
        self.topology = radio.place_users(self.config, self.seed)
        self._mean = radio.mean_channel(self.topology, self.config)
        d_bt = np.maximum(np.linalg.norm(self.topology.d2d_tx_positions, axis=1),
                          radio.MIN_LINK_DISTANCE)
        self._g_bt_mean = 10.0 ** (-radio.pathloss_cellular_db(d_bt) / 10.0)
        self._channel = self._draw(0)
        self.allocation = np.zeros(self.num_agents, dtype=int)
        k_prev = np.zeros((self.num_agents, self.num_actions))
        self._obs = self._build_obs(np.zeros(self.num_agents), k_prev)
        return self.observations

    def _draw(self, slot):
        if not self.config.fading:
            return self._mean
        f = radio.fading_factors(self.seed, slot, self.config.num_cues, self.config.num_d2d,
                                 self.stream)
        return radio.apply_fading(self._mean, f)

    def _build_obs(self, i_prev, k_prev):
        ch = self._channel
        # G_c is the BS -> own *transmitter* gain, which no SINR term uses
        return np.column_stack([ch.g_tr, self._bs_to_tx_gain(), i_prev, k_prev])

    def _bs_to_tx_gain(self):
        if not self.config.fading:
            return self._g_bt_mean
        # separate unit-mean draw, seeded like the rest of the slot's channel
        ss = np.random.SeedSequence([self.seed, 0xB5C7, self.stream, self.slot])
        return self._g_bt_mean * np.random.default_rng(ss).standard_exponential(self.num_agents)

    def evaluate(self, joint_action) -> tuple:
        """SINRs, rewards and outage flags for ``joint_action`` on the current channel."""
        cfg = self.config
        a = np.asarray(joint_action)
        if a.shape != (self.num_agents,) or np.any(a < 0) or np.any(a >= self.num_actions):
            raise ValueError(f"joint action must be {self.num_agents} RB indices in [0, {self.num_actions})")
        cue, d2d, interf = radio.all_sinrs(a, self._channel, cfg, self.topology.rb_of_cue)
        thr = cfg.sinr_threshold_linear
        cue_of_rb = self.topology.cue_of_rb
        ok = cue[cue_of_rb[a]] >= thr
        d2d_rates = np.log2(1.0 + d2d)
        rewards = np.where(ok, d2d_rates, cfg.negative_reward)
        return rewards, cue, d2d, interf, ok

    def step(self, joint_action) -> StepOutcome:
        a = np.asarray(joint_action, dtype=int)
        rewards, cue, d2d, interf, ok = self.evaluate(a)
        self.allocation = a.copy()
        self.slot += 1
        self._channel = self._draw(self.slot)
        k_prev = np.zeros((self.num_agents, self.num_actions))
        k_prev[np.arange(self.num_agents), a] = 1.0
        self._obs = self._build_obs(interf, k_prev)
        return StepOutcome(
            rewards=rewards,
            next_observations=self.observations,
            cue_sinrs=cue,
            d2d_sinrs=d2d,
            cue_outages=cue < self.config.sinr_threshold_linear,
            d2d_outages=d2d < self.config.d2d_sinr_threshold_linear,
            cue_rates=np.log2(1.0 + cue),
            d2d_rates=np.log2(1.0 + d2d),
            interference=interf,
            constraint_ok=ok,
        )
