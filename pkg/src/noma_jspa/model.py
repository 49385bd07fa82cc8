"""Domain types and SIC rate computations for the downlink NOMA system.

Conventions used throughout the package:

* ``gain_sq[k][j]`` is the squared channel magnitude of user ``j`` on
  sub-channel ``k`` (path loss folded in, dimensionless).
* ``noise[k][j]`` is the per-link noise power in watts.
* The *normalized gain* ``gain_sq / noise`` orders SIC decoding: users are
  decoded in decreasing normalized gain, so a user is interfered only by the
  users ahead of it in that order (their signals cannot be cancelled).
* Rates are in bps/Hz relative to one sub-channel's bandwidth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

UTILITY_REL_TOL = 1e-9
POWER_BUDGET_REL_TOL = 1e-9


class ModelError(ValueError):
    """Raised when an operation is called outside its domain."""


@dataclass(frozen=True)
class SystemConfig:
    """Scenario parameters: topology, quotas, radio constants, algorithm knobs."""

    num_users: int = 20
    num_subchannels: int = 10
    df: int = 3                       # max users sharing one sub-channel
    dv: int = 5                       # max sub-channels per user
    total_power_watts: float = 39.810717055349734   # 46 dBm
    bandwidth_hz: float = 4.5e6
    noise_psd_dbm_hz: float = -174.0
    carrier_freq_hz: float = 2.0e9
    cell_side_m: float = 350.0
    weight_scale: float = 1.0         # scale factor of proportional-fair weights
    avg_window_slots: int = 30
    matching_phase_power_rule: str = "equal_slot_share"
    rng_seed: int = 0
    # knobs
    eps_swap: float = 1e-9            # strict-preference margin in swap approval
    jain_paper_denominator: bool = False
    bs_height_m: float = 30.0
    ms_height_m: float = 1.5
    city_correction_db: float = 0.0
    min_distance_m: float = 10.0
    user_noise_scale: Optional[tuple[float, ...]] = None

    def __post_init__(self) -> None:
        if self.num_users < 1 or self.num_subchannels < 1:
            raise ModelError("need at least one user and one sub-channel")
        if not (1 <= self.df <= self.num_users):
            raise ModelError(f"df must be in [1, num_users], got {self.df}")
        if not (1 <= self.dv <= self.num_subchannels):
            raise ModelError(f"dv must be in [1, num_subchannels], got {self.dv}")
        if self.total_power_watts <= 0 or self.bandwidth_hz <= 0:
            raise ModelError("total power and bandwidth must be positive")
        if self.weight_scale <= 0:
            raise ModelError("weight_scale must be positive")
        if self.avg_window_slots < 1:
            raise ModelError("avg_window_slots must be >= 1")
        if self.matching_phase_power_rule != "equal_slot_share":
            raise ModelError(
                f"unknown matching_phase_power_rule {self.matching_phase_power_rule!r}"
            )
        if self.user_noise_scale is not None and len(self.user_noise_scale) != self.num_users:
            raise ModelError("user_noise_scale must have one entry per user")

    def phase_power(self) -> float:
        """Per-pair transmit power used while the matching is being searched.

        Every matched pair gets an equal slice of the budget assuming all
        K*df slots could be filled, so any feasible matching stays within
        the total-power constraint during the matching phase.
        """
        return self.total_power_watts / (self.num_subchannels * self.df)

    def noise_psd_watts(self) -> float:
        return 10.0 ** ((self.noise_psd_dbm_hz - 30.0) / 10.0)

    def subchannel_noise_watts(self) -> float:
        """Thermal noise over one sub-channel: PSD times bandwidth/K."""
        return self.noise_psd_watts() * self.bandwidth_hz / self.num_subchannels

    def replace(self, **kwargs) -> "SystemConfig":
        from dataclasses import replace as _replace

        return _replace(self, **kwargs)


@dataclass(frozen=True)
class ChannelRealization:
    """One slot's channel state: squared gains, per-link noise, user distances."""

    gain_sq: np.ndarray        # (K, M) power gains, >= 0
    noise: np.ndarray          # (K, M) noise powers in W, > 0
    user_distance_m: np.ndarray  # (M,)

    def __post_init__(self) -> None:
        g = np.asarray(self.gain_sq, dtype=float)
        n = np.asarray(self.noise, dtype=float)
        d = np.asarray(self.user_distance_m, dtype=float)
        if g.ndim != 2 or n.shape != g.shape:
            raise ModelError("gain_sq and noise must be matching K x M matrices")
        if d.shape != (g.shape[1],):
            raise ModelError("user_distance_m must have one entry per user")
        if np.any(g < 0):
            raise ModelError("gain_sq entries must be non-negative")
        if np.any(n <= 0):
            raise ModelError("noise entries must be positive")
        if not np.all(np.isfinite(g / n)):
            raise ModelError("normalized gains must be finite")
        object.__setattr__(self, "gain_sq", g)
        object.__setattr__(self, "noise", n)
        object.__setattr__(self, "user_distance_m", d)

    @property
    def num_subchannels(self) -> int:
        return self.gain_sq.shape[0]

    @property
    def num_users(self) -> int:
        return self.gain_sq.shape[1]

    def normalized_gain(self) -> np.ndarray:
        return self.gain_sq / self.noise


@dataclass(frozen=True)
class UserWeights:
    """Positive per-user priority weights in the scheduling objective."""

    w: np.ndarray

    def __post_init__(self) -> None:
        w = np.asarray(self.w, dtype=float)
        if w.ndim != 1 or np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ModelError("weights must be a vector of positive finite reals")
        object.__setattr__(self, "w", w)

    @classmethod
    def unit(cls, num_users: int) -> "UserWeights":
        return cls(np.ones(num_users))


@dataclass(frozen=True)
class Matching:
    """Many-to-many user/sub-channel assignment with mutual-consistency checks.

    Both directions of the bipartite assignment are stored; the quota caps
    df/dv travel with the matching so swap enumeration is self-contained.
    """

    user_to_subs: tuple[frozenset[int], ...]
    sub_to_users: tuple[frozenset[int], ...]
    df: int
    dv: int

    def __post_init__(self) -> None:
        for j, subs in enumerate(self.user_to_subs):
            for k in subs:
                if not (0 <= k < len(self.sub_to_users)) or j not in self.sub_to_users[k]:
                    raise ModelError(f"inconsistent matching at user {j}, sub-channel {k}")
        for k, users in enumerate(self.sub_to_users):
            for j in users:
                if not (0 <= j < len(self.user_to_subs)) or k not in self.user_to_subs[j]:
                    raise ModelError(f"inconsistent matching at sub-channel {k}, user {j}")

    @classmethod
    def from_pairs(
        cls, num_users: int, num_subchannels: int, pairs: Iterable[tuple[int, int]],
        df: int, dv: int,
    ) -> "Matching":
        """Build a matching from (sub-channel, user) pairs."""
        u2s: list[set[int]] = [set() for _ in range(num_users)]
        s2u: list[set[int]] = [set() for _ in range(num_subchannels)]
        for k, j in pairs:
            u2s[j].add(k)
            s2u[k].add(j)
        return cls(
            tuple(frozenset(s) for s in u2s),
            tuple(frozenset(s) for s in s2u),
            df,
            dv,
        )

    @classmethod
    def empty(cls, num_users: int, num_subchannels: int, df: int, dv: int) -> "Matching":
        return cls.from_pairs(num_users, num_subchannels, (), df, dv)

    @property
    def num_users(self) -> int:
        return len(self.user_to_subs)

    @property
    def num_subchannels(self) -> int:
        return len(self.sub_to_users)

    @property
    def num_pairs(self) -> int:
        return sum(len(s) for s in self.user_to_subs)

    def pairs(self) -> list[tuple[int, int]]:
        return [(k, j) for k, users in enumerate(self.sub_to_users) for j in sorted(users)]

    def assignment_matrix(self) -> np.ndarray:
        b = np.zeros((self.num_subchannels, self.num_users), dtype=bool)
        for k, users in enumerate(self.sub_to_users):
            for j in users:
                b[k, j] = True
        return b

    def quotas_ok(self) -> bool:
        return all(len(s) <= self.df for s in self.sub_to_users) and all(
            len(s) <= self.dv for s in self.user_to_subs
        )


@dataclass(frozen=True)
class PowerAllocation:
    """Per-pair transmit powers in watts, subject to the total budget."""

    p: np.ndarray  # (K, M), >= 0

    def __post_init__(self) -> None:
        p = np.asarray(self.p, dtype=float)
        if p.ndim != 2:
            raise ModelError("power allocation must be a K x M matrix")
        if np.any(p < 0):
            raise ModelError("powers must be non-negative")
        object.__setattr__(self, "p", p)

    def total(self) -> float:
        return float(self.p.sum())

    @classmethod
    def zeros(cls, num_subchannels: int, num_users: int) -> "PowerAllocation":
        return cls(np.zeros((num_subchannels, num_users)))


def random_saturated_matching(config: SystemConfig, rng: np.random.Generator) -> Matching:
    """Random feasible matching grown until no user and sub-channel both have room.

    Pairs are inserted in a random order until saturation, so quota caps bind
    wherever possible (at df = dv = 1 and M = K this yields a random perfect
    matching).
    """
    m, k = config.num_users, config.num_subchannels
    candidates = [(kk, jj) for kk in range(k) for jj in range(m)]
    order = rng.permutation(len(candidates))
    u_left = [config.dv] * m
    s_left = [config.df] * k
    pairs = []
    for idx in order:
        kk, jj = candidates[idx]
        if u_left[jj] > 0 and s_left[kk] > 0:
            pairs.append((kk, jj))
            u_left[jj] -= 1
            s_left[kk] -= 1
    return Matching.from_pairs(m, k, pairs, config.df, config.dv)


# --- SIC-ordered rate computations -----------------------------------------


def decoding_order(
    ch: ChannelRealization, k: int, users: Iterable[int]
) -> list[int]:
    """Users of sub-channel ``k`` sorted by decreasing normalized gain.

    The first user is decoded last and sees no co-channel interference; ties
    are broken by ascending user index so the order is always strict.
    """
    users = list(users)
    if not users:
        raise ModelError("empty coalition")
    ncg = ch.gain_sq[k] / ch.noise[k]
    return sorted(users, key=lambda j: (-ncg[j], j))


def _members_from_power(power: PowerAllocation, k: int, extra: int) -> list[int]:
    members = set(np.nonzero(power.p[k] > 0)[0].tolist())
    members.add(extra)
    return sorted(members)


def user_interference(
    ch: ChannelRealization,
    power: PowerAllocation,
    k: int,
    j: int,
    members: Optional[Iterable[int]] = None,
) -> float:
    """Co-channel interference at user ``j`` on sub-channel ``k`` in watts.

    Only users ahead of ``j`` in the decoding order contribute; their signals
    cannot be cancelled at ``j``'s receiver. When ``members`` is omitted the
    coalition is taken from the power support (plus ``j`` itself).
    """
    if members is None:
        members = _members_from_power(power, k, j)
    else:
        members = list(members)
        if j not in members:
            raise ModelError(f"user {j} not on sub-channel {k}")
    order = decoding_order(ch, k, members)
    pos = order.index(j)
    g_j = ch.gain_sq[k, j]
    return float(sum(power.p[k, i] for i in order[:pos]) * g_j)


def user_rate(
    ch: ChannelRealization,
    power: PowerAllocation,
    k: int,
    j: int,
    members: Optional[Iterable[int]] = None,
) -> float:
    """Achievable rate of user ``j`` on sub-channel ``k`` in bps/Hz."""
    interference = user_interference(ch, power, k, j, members)
    snr = power.p[k, j] * ch.gain_sq[k, j] / (ch.noise[k, j] + interference)
    return math.log2(1.0 + snr)


def subchannel_rate(
    ch: ChannelRealization,
    power: PowerAllocation,
    weights: UserWeights,
    k: int,
    members: Optional[Iterable[int]] = None,
) -> float:
    """Weighted sum of user rates on sub-channel ``k`` (0 when unused)."""
    if members is None:
        members = np.nonzero(power.p[k] > 0)[0].tolist()
    members = sorted(members)
    if not members:
        return 0.0
    return float(
        sum(weights.w[j] * user_rate(ch, power, k, j, members) for j in members)
    )


def total_utility(
    ch: ChannelRealization,
    matching: Matching,
    power: PowerAllocation,
    weights: UserWeights,
) -> float:
    """System utility: weighted sum rate over all sub-channels."""
    support = power.p > 0
    b = matching.assignment_matrix()
    if np.any(support & ~b):
        raise ModelError("power allocated outside the matching support")
    return float(
        sum(
            subchannel_rate(ch, power, weights, k, sorted(matching.sub_to_users[k]))
            for k in range(matching.num_subchannels)
            if matching.sub_to_users[k]
        )
    )


@dataclass(frozen=True)
class Allocation:
    """A matching plus powers, with cached per-pair rates and total utility."""

    matching: Matching
    power: PowerAllocation
    rates: np.ndarray
    total_utility: float

    @classmethod
    def build(
        cls,
        ch: ChannelRealization,
        matching: Matching,
        power: PowerAllocation,
        weights: UserWeights,
    ) -> "Allocation":
        support = power.p > 0
        b = matching.assignment_matrix()
        if np.any(support & ~b):
            raise ModelError("power allocated outside the matching support")
        rates = np.zeros_like(power.p)
        util = 0.0
        for k in range(matching.num_subchannels):
            members = sorted(matching.sub_to_users[k])
            if not members:
                continue
            for j in members:
                r = user_rate(ch, power, k, j, members)
                rates[k, j] = r
                util += weights.w[j] * r
        return cls(matching, power, rates, float(util))

    def per_user_rates(self) -> np.ndarray:
        """Unweighted per-user rate in bps/Hz, summed over the user's sub-channels."""
        return self.rates.sum(axis=0)


@dataclass(frozen=True)
class Violation:
    """One violated constraint of the feasibility system."""

    code: str          # one of "6b", "6c", "6d", "6e", "6f"
    detail: str
    index: Optional[int] = None


def validate(
    config: SystemConfig, matching: Matching, power: PowerAllocation
) -> list[Violation]:
    """Check quota, support, budget and sign constraints; empty list means ok."""
    violations: list[Violation] = []
    for k, users in enumerate(matching.sub_to_users):
        if len(users) > config.df:
            violations.append(
                Violation("6b", f"sub-channel {k} serves {len(users)} > df users", k)
            )
    for j, subs in enumerate(matching.user_to_subs):
        if len(subs) > config.dv:
            violations.append(
                Violation("6c", f"user {j} occupies {len(subs)} > dv sub-channels", j)
            )
    b = matching.assignment_matrix()
    bad = np.argwhere((power.p > 0) & ~b)
    for k, j in bad:
        violations.append(
            Violation("6d", f"power on unmatched pair (sub-channel {k}, user {j})")
        )
    total = power.total()
    if total > config.total_power_watts * (1.0 + POWER_BUDGET_REL_TOL):
        violations.append(
            Violation("6e", f"total power {total:.6g} W exceeds budget")
        )
    if np.any(power.p < 0):
        violations.append(Violation("6f", "negative transmit power"))
    return violations
