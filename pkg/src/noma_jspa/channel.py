"""Channel generation: user drop, COST-231 Hata path loss, Rayleigh fading."""

from __future__ import annotations

import numpy as np

from .model import ChannelRealization, SystemConfig


def cost231_hata_pathloss_db(
    distance_m: np.ndarray,
    carrier_freq_hz: float,
    bs_height_m: float = 30.0,
    ms_height_m: float = 1.5,
    city_correction_db: float = 0.0,
) -> np.ndarray:
    """Urban COST-231 Hata path loss in dB.

    Medium-city mobile antenna correction; the caller must keep distances
    above the model's small-distance validity floor.
    """
    f_mhz = carrier_freq_hz / 1e6
    d_km = np.asarray(distance_m, dtype=float) / 1000.0
    a_hm = (1.1 * np.log10(f_mhz) - 0.7) * ms_height_m - (
        1.56 * np.log10(f_mhz) - 0.8
    )
    return (
        46.3
        + 33.9 * np.log10(f_mhz)
        - 13.82 * np.log10(bs_height_m)
        - a_hm
        + (44.9 - 6.55 * np.log10(bs_height_m)) * np.log10(d_km)
        + city_correction_db
    )


def generate_channel(
    config: SystemConfig,
    rng: np.random.Generator,
    num_subchannels: int | None = None,
) -> ChannelRealization:
    """Draw one slot's channel realization.

    Users are dropped uniformly in a square cell centered on the base
    station; each (sub-channel, user) link gets an independent unit-mean
    exponential fading block divided by the distance path loss. Per-link
    noise is the thermal PSD over one sub-channel's bandwidth.
    """
    k = config.num_subchannels if num_subchannels is None else num_subchannels
    m = config.num_users
    half = config.cell_side_m / 2.0
    xy = rng.uniform(-half, half, size=(m, 2))
    dist = np.maximum(np.hypot(xy[:, 0], xy[:, 1]), config.min_distance_m)
    pl_db = cost231_hata_pathloss_db(
        dist,
        config.carrier_freq_hz,
        config.bs_height_m,
        config.ms_height_m,
        config.city_correction_db,
    )
    pl_linear = 10.0 ** (pl_db / 10.0)
    fading = rng.exponential(1.0, size=(k, m))
    gain_sq = fading / pl_linear[None, :]
    noise_w = config.noise_psd_watts() * config.bandwidth_hz / k
    noise = np.full((k, m), noise_w)
    if config.user_noise_scale is not None:
        noise = noise * np.asarray(config.user_noise_scale, dtype=float)[None, :]
    return ChannelRealization(gain_sq, noise, dist)
