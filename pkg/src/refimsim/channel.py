"""Per-slot channel gains: path loss, shadowing, wall loss, Jakes fading.

Gains are linear power gains; the per-slot tensor is indexed
(user, bs, subchannel). Noise is linear Watts per (user, subchannel).
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .topology import TIER_FEMTO

SPEED_OF_LIGHT = 299792458.0


@dataclass
class PropagationConfig:
    macro_pathloss_a: float = 16.62   # dB, outdoor model a + b*log10(d[m])
    macro_pathloss_b: float = 37.6
    indoor_pathloss_a: float = 37.0
    indoor_pathloss_b: float = 32.0
    penetration_loss_db: float = 10.0
    shadowing_sigma_db: dict = field(default_factory=lambda: {"macro": 8.0, "pico": 8.0, "femto": 4.0})
    carrier_freq_hz: float = 2e9
    noise_psd_dbm_hz: float = -174.0
    noise_figure_db: float = 9.0
    sinr_gap: float = 1.0             # linear Gamma >= 1
    min_distance_m: float = 1.0
    oscillators: int = 8

    def __post_init__(self):
        if self.macro_pathloss_b <= 0 or self.indoor_pathloss_b <= 0:
            raise ValueError("path loss slope coefficients must be > 0")
        if self.sinr_gap < 1.0:
            raise ValueError("sinr_gap must be >= 1")


def path_loss_db(model, distance_m, config=None):
    """Distance-law loss in dB; model is 'macro' (outdoor) or 'indoor'."""
    cfg = config or PropagationConfig()
    d = np.maximum(np.asarray(distance_m, dtype=float), cfg.min_distance_m)
    if model == "macro":
        return cfg.macro_pathloss_a + cfg.macro_pathloss_b * np.log10(d)
    if model == "indoor":
        return cfg.indoor_pathloss_a + cfg.indoor_pathloss_b * np.log10(d)
    raise ValueError(f"unknown path loss model {model!r}")


def wall_count(bs, user):
    """Wall crossings on a link: 0 inside one home or fully outdoor, else 1."""
    bs_home = bs.home_id if bs.tier == TIER_FEMTO else None
    user_home = user.home_id if user.indoor else None
    if bs_home is None and user_home is None:
        return 0
    if bs_home is not None and bs_home == user_home:
        return 0
    return 1


def path_loss_matrix_db(network, config, positions=None):
    """(K, N) path loss incl. wall penetration at the given user positions."""
    d = network.distances(positions)
    pl = np.empty_like(d)
    for n, bs in enumerate(network.base_stations):
        model = "indoor" if bs.tier == TIER_FEMTO else "macro"
        pl[:, n] = path_loss_db(model, d[:, n], config)
        for u in network.users:
            if wall_count(bs, u):
                pl[u.id, n] += config.penetration_loss_db
    return pl


def sample_shadowing(rng, sigma_db, size=None):
    """Zero-mean Gaussian shadowing in dB, drawn once per (user, BS) link."""
    if np.any(np.asarray(sigma_db) < 0):
        raise ValueError("sigma_db must be >= 0")
    return rng.normal(0.0, 1.0, size=size) * sigma_db


def shadowing_matrix_db(network, config, rng):
    """(K, N) shadowing; sigma depends on the BS tier of the link."""
    sigma = np.array([config.shadowing_sigma_db[b.tier] for b in network.base_stations])
    return sample_shadowing(rng, sigma, size=(network.n_users, network.n_bs))


def noise_power_w(config, subchannel_bw_hz):
    """Thermal noise + noise figure over one subchannel, in Watts."""
    dbm = config.noise_psd_dbm_hz + 10.0 * np.log10(subchannel_bw_hz) + config.noise_figure_db
    return 10.0 ** ((dbm - 30.0) / 10.0)


class FadingState:
    """Jakes sum-of-sinusoids Rayleigh fading, one process per
    (user, bs, subchannel); E[|h|^2] = 1.

    Oscillator arrival angles and phases are randomized per link and
    subchannel, which decorrelates subchannels. Advancing rotates each
    oscillator by its Doppler-dependent step.
    """

    def __init__(self, rng, n_users, n_bs, n_subchannels, speeds_mps, carrier_freq_hz,
                 oscillators=8):
        shape = (n_users, n_bs, n_subchannels, oscillators)
        doppler = 2.0 * np.pi * np.asarray(speeds_mps, dtype=float) * carrier_freq_hz / SPEED_OF_LIGHT
        angles = rng.uniform(0.0, 2.0 * np.pi, size=shape)
        self.omegas = doppler[:, None, None, None] * np.cos(angles)  # rad/s per oscillator
        phases = rng.uniform(0.0, 2.0 * np.pi, size=shape)
        self.osc = np.exp(1j * phases)
        self.scale = 1.0 / np.sqrt(oscillators)
        self._step_dt = None
        self._step = None

    def advance(self, dt_s):
        if dt_s < 0:
            raise ValueError("dt_s must be >= 0")
        if dt_s == 0.0:
            return
        if dt_s != self._step_dt:
            self._step = np.exp(1j * self.omegas * dt_s)
            self._step_dt = dt_s
        self.osc *= self._step

    def coefficients(self):
        """(K, N, S) complex channel coefficients at the current time."""
        return self.osc.sum(axis=-1) * self.scale

    def power_gains(self):
        h = self.coefficients()
        return h.real ** 2 + h.imag ** 2


def advance_fading(state, dt_s):
    """Advance the fading processes by dt_s and return the coefficients."""
    state.advance(dt_s)
    return state.coefficients()


@dataclass
class GainSnapshot:
    """Per-slot linear channel state: gains (K, N, S), noise (K, S)."""
    gains: np.ndarray
    noise_w: np.ndarray
    slot: int

    def __post_init__(self):
        if np.any(self.gains <= 0):
            raise ValueError("all gains must be > 0")
        if np.any(self.noise_w <= 0):
            raise ValueError("all noise powers must be > 0")

    def mean_gains(self):
        return self.gains.mean(axis=2)


def large_scale_linear(pl_db, shadow_db):
    """Linear gain 10^(-(PL+SH)/10) from loss and shadowing in dB."""
    return 10.0 ** (-(np.asarray(pl_db) + np.asarray(shadow_db)) / 10.0)


def snapshot(network, config, fading, shadow_db, slot, positions=None, pl_db=None):
    """Assemble the slot's GainSnapshot; pure given the fading state.

    pl_db short-circuits the path loss recomputation when positions are
    static; callers advancing mobility pass fresh positions instead.
    """
    if pl_db is None:
        pl_db = path_loss_matrix_db(network, config, positions)
    ls = large_scale_linear(pl_db, shadow_db)
    gains = ls[:, :, None] * fading.power_gains()
    bw_sub = network.bandwidth_hz / network.subchannel_count
    noise = np.full((network.n_users, network.subchannel_count),
                    noise_power_w(config, bw_sub))
    return GainSnapshot(gains=gains, noise_w=noise, slot=slot)


def dump_snapshot_csv(snap, path):
    """Debug dump: one row per (user, bs, subchannel) gain."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["user", "bs", "subchannel", "gain"])
        K, N, S = snap.gains.shape
        for k in range(K):
            for n in range(N):
                for s in range(S):
                    w.writerow([k, n, s, repr(float(snap.gains[k, n, s]))])
