"""Single-cell downlink radio model: placement, pathloss, fading, SINR and rates.

All link math runs in linear watts. dB/dBm only appear at the configuration
boundary (``CellConfig``) and in reporting helpers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

# links shorter than this are clamped before the pathloss formula
MIN_LINK_DISTANCE = 1.0
PLACEMENT_RETRY_CAP = 10_000


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(np.asarray(watts, dtype=float)) + 30.0


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(lin):
    return 10.0 * np.log10(np.asarray(lin, dtype=float))


@dataclass(frozen=True)
class CellConfig:
    """Cell and link-budget parameters. Defaults follow the reference scenario."""

    cell_radius: float = 500.0
    max_d2d_distance: float = 30.0
    num_cues: int = 10
    num_d2d: int = 10
    num_rbs: int = 10
    carrier_freq: float = 2e9
    rb_bandwidth: float = 180e3
    p_bs: float = 46.0
    p_d2d: float = 13.0
    noise_density: float = -174.0
    noise_figure: float = 8.0
    sinr_threshold: float = 0.0
    d2d_sinr_threshold: float = 0.0
    negative_reward: float = -1.0
    fading: bool = True

    def __post_init__(self):
        if self.num_cues < 1 or self.num_d2d < 1 or self.num_rbs < 1:
            raise ValueError("num_cues, num_d2d and num_rbs must all be >= 1")
        if self.num_cues != self.num_rbs:
            raise ValueError("each CUE owns one RB: num_cues must equal num_rbs")
        if not self.cell_radius > self.max_d2d_distance > 0:
            raise ValueError("need cell_radius > max_d2d_distance > 0")
        if self.rb_bandwidth <= 0:
            raise ValueError("rb_bandwidth must be positive")
        if self.negative_reward >= 0:
            raise ValueError("negative_reward must be < 0")

    @property
    def p_bs_watts(self) -> float:
        return float(dbm_to_watts(self.p_bs))

    @property
    def p_d2d_watts(self) -> float:
        return float(dbm_to_watts(self.p_d2d))

    @property
    def sinr_threshold_linear(self) -> float:
        return float(db_to_linear(self.sinr_threshold))

    @property
    def d2d_sinr_threshold_linear(self) -> float:
        return float(db_to_linear(self.d2d_sinr_threshold))

    def replace(self, **changes) -> "CellConfig":
        return CellConfig(**{**asdict(self), **changes})


@dataclass
class CellTopology:
    bs_position: np.ndarray
    cue_positions: np.ndarray  # (M, 2)
    d2d_tx_positions: np.ndarray  # (N, 2)
    d2d_rx_positions: np.ndarray  # (N, 2)
    rb_of_cue: np.ndarray = field(default=None)  # (M,)

    def __post_init__(self):
        if self.rb_of_cue is None:
            self.rb_of_cue = np.arange(len(self.cue_positions))

    @property
    def cue_of_rb(self) -> np.ndarray:
        inv = np.empty_like(self.rb_of_cue)
        inv[self.rb_of_cue] = np.arange(len(self.rb_of_cue))
        return inv

    def pair_distances(self) -> np.ndarray:
        return np.linalg.norm(self.d2d_tx_positions - self.d2d_rx_positions, axis=1)

    def tx_distance_matrix(self) -> np.ndarray:
        diff = self.d2d_tx_positions[:, None, :] - self.d2d_tx_positions[None, :, :]
        return np.linalg.norm(diff, axis=-1)


@dataclass
class ChannelRealization:
    """Linear power gains for one slot.

    ``g_tr_cross[i, n]`` is the gain from D2D transmitter i to D2D receiver n;
    its diagonal is unused. ``g_tc[n, m]`` is D2D transmitter n to CUE m.
    """

    g_bc: np.ndarray
    g_tr: np.ndarray
    g_tc: np.ndarray
    g_br: np.ndarray
    g_tr_cross: np.ndarray
    noise_power: float


def _uniform_in_disk(rng, n, radius):
    r = radius * np.sqrt(rng.random(n))
    theta = 2.0 * np.pi * rng.random(n)
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)


def place_users(config: CellConfig, rng_seed: int) -> CellTopology:
    """Drop CUEs and D2D transmitters uniformly in the cell disk.

    Each D2D receiver is uniform in a disk of radius ``max_d2d_distance``
    around its transmitter; receivers that land outside the cell are redrawn.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(rng_seed), 0x70C0]))
    cues = _uniform_in_disk(rng, config.num_cues, config.cell_radius)
    tx = _uniform_in_disk(rng, config.num_d2d, config.cell_radius)
    rx = np.empty_like(tx)
    for n in range(config.num_d2d):
        for _ in range(PLACEMENT_RETRY_CAP):
            cand = tx[n] + _uniform_in_disk(rng, 1, config.max_d2d_distance)[0]
            if np.hypot(*cand) <= config.cell_radius:
                rx[n] = cand
                break
        else:
            raise RuntimeError(
                f"could not place receiver of pair {n} inside the cell after "
                f"{PLACEMENT_RETRY_CAP} draws"
            )
    return CellTopology(
        bs_position=np.zeros(2),
        cue_positions=cues,
        d2d_tx_positions=tx,
        d2d_rx_positions=rx,
        rb_of_cue=np.arange(config.num_cues),
    )


def pathloss_cellular_db(d):
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    return 128.1 + 37.6 * np.log10(d / 1000.0)


def pathloss_d2d_db(d):
    # exponent 4 with the cellular 1 km intercept
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    return 128.1 + 40.0 * np.log10(d / 1000.0)


def noise_power_linear(config: CellConfig) -> float:
    dbm = config.noise_density + 10.0 * np.log10(config.rb_bandwidth) + config.noise_figure
    return float(dbm_to_watts(dbm))


def _dist(a, b):
    return np.maximum(np.linalg.norm(a - b, axis=-1), MIN_LINK_DISTANCE)


def mean_channel(topology: CellTopology, config: CellConfig) -> ChannelRealization:
    """Pathloss-only gains. BS-originated links use the cellular model, UE-to-UE links the D2D model."""
    bs = topology.bs_position
    cue = topology.cue_positions
    tx = topology.d2d_tx_positions
    rx = topology.d2d_rx_positions
    lin = lambda pl: 10.0 ** (-pl / 10.0)  # noqa: E731
    return ChannelRealization(
        g_bc=lin(pathloss_cellular_db(_dist(cue, bs))),
        g_tr=lin(pathloss_d2d_db(_dist(tx, rx))),
        g_tc=lin(pathloss_d2d_db(_dist(tx[:, None, :], cue[None, :, :]))),
        g_br=lin(pathloss_cellular_db(_dist(rx, bs))),
        g_tr_cross=lin(pathloss_d2d_db(_dist(tx[:, None, :], rx[None, :, :]))),
        noise_power=noise_power_linear(config),
    )


def fading_factors(rng_seed: int, slot: int, num_cues: int, num_d2d: int, stream: int = 0):
    """Unit-mean exponential power factors (Rayleigh envelope) for every link of one slot.

    Draw order is fixed (g_bc, g_tr, g_tc, g_br, g_tr_cross), so each link's
    factor is a pure function of (seed, stream, slot, link index).
    """
    ss = np.random.SeedSequence([int(rng_seed), 0xFAD1, int(stream), int(slot)])
    rng = np.random.default_rng(ss)
    M, N = num_cues, num_d2d
    flat = rng.standard_exponential(M + N + N * M + N + N * N)
    parts = np.split(flat, np.cumsum([M, N, N * M, N]))
    return (
        parts[0],
        parts[1],
        parts[2].reshape(N, M),
        parts[3],
        parts[4].reshape(N, N),
    )


def apply_fading(mean: ChannelRealization, factors) -> ChannelRealization:
    f_bc, f_tr, f_tc, f_br, f_cross = factors
    return ChannelRealization(
        g_bc=mean.g_bc * f_bc,
        g_tr=mean.g_tr * f_tr,
        g_tc=mean.g_tc * f_tc,
        g_br=mean.g_br * f_br,
        g_tr_cross=mean.g_tr_cross * f_cross,
        noise_power=mean.noise_power,
    )


def realize_channel(
    topology: CellTopology, config: CellConfig, rng_seed: int, slot: int, stream: int = 0
) -> ChannelRealization:
    mean = mean_channel(topology, config)
    if not config.fading:
        return mean
    M, N = len(topology.cue_positions), len(topology.d2d_tx_positions)
    return apply_fading(mean, fading_factors(rng_seed, slot, M, N, stream))


def cue_sinr(m, k, alloc, ch: ChannelRealization, config: CellConfig) -> float:
    """SINR at CUE ``m`` served on RB ``k`` given the D2D RB assignment ``alloc``."""
    alloc = np.asarray(alloc)
    sharers = np.flatnonzero(alloc == k)
    interference = config.p_d2d_watts * ch.g_tc[sharers, m].sum()
    return config.p_bs_watts * ch.g_bc[m] / (interference + ch.noise_power)


def d2d_interference(n, k, alloc, ch: ChannelRealization, config: CellConfig) -> float:
    """Interference power (watts, noise excluded) at receiver ``n`` on RB ``k``."""
    alloc = np.asarray(alloc)
    others = np.flatnonzero((alloc == k) & (np.arange(len(alloc)) != n))
    return config.p_bs_watts * ch.g_br[n] + config.p_d2d_watts * ch.g_tr_cross[others, n].sum()


def d2d_sinr(n, k, alloc, ch: ChannelRealization, config: CellConfig) -> float:
    signal = config.p_d2d_watts * ch.g_tr[n]
    return signal / (d2d_interference(n, k, alloc, ch, config) + ch.noise_power)


def link_rate(sinr, bandwidth=None):
    """Shannon rate. Returns bits/s when ``bandwidth`` is given, else bits/s/Hz."""
    sinr = np.asarray(sinr, dtype=float)
    if np.any(sinr < 0):
        raise ValueError("SINR must be non-negative")
    rate = np.log2(1.0 + sinr)
    return rate * bandwidth if bandwidth is not None else rate


def all_sinrs(alloc, ch: ChannelRealization, config: CellConfig, rb_of_cue=None):
    """Vectorised SINRs for every CUE and D2D link under one joint allocation.

    Returns ``(cue_sinrs, d2d_sinrs, d2d_interference)``; the last is the
    noise-free interference power at each D2D receiver on its chosen RB.
    """
    alloc = np.asarray(alloc)
    M = len(ch.g_bc)
    K = config.num_rbs
    if rb_of_cue is None:
        rb_of_cue = np.arange(M)
    pb, pd = config.p_bs_watts, config.p_d2d_watts
    onehot = np.zeros((len(alloc), K))
    onehot[np.arange(len(alloc)), alloc] = 1.0

    # rows: D2D tx n, cols: CUE m; keep only tx on the CUE's RB
    on_cue_rb = onehot[:, rb_of_cue]
    cue_interf = pd * (ch.g_tc * on_cue_rb).sum(axis=0)
    cue = pb * ch.g_bc / (cue_interf + ch.noise_power)

    same = alloc[:, None] == alloc[None, :]
    np.fill_diagonal(same, False)
    co = pd * (ch.g_tr_cross * same).sum(axis=0)
    interf = pb * ch.g_br + co
    d2d = pd * ch.g_tr / (interf + ch.noise_power)
    return cue, d2d, interf
