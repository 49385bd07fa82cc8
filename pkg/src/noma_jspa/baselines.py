"""Comparison schemes and the exhaustive small-instance oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterator, Optional

import numpy as np

from .model import (
    Allocation,
    ChannelRealization,
    Matching,
    ModelError,
    PowerAllocation,
    SystemConfig,
    UserWeights,
    random_saturated_matching,
)
from .powergp import build_gp, equal_power, solve_gp

ORACLE_MATCHING_CAP = 1_000_000


@dataclass(frozen=True)
class FtpcConfig:
    """Fractional transmit power control knob: 0 = equal split, 1 = full inversion."""

    alpha: float = 0.4

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ModelError("alpha must lie in [0, 1]")


def ra_noma(
    ch: ChannelRealization, config: SystemConfig, rng: np.random.Generator
) -> Allocation:
    """Random feasible assignment with the budget spread equally over pairs."""
    matching = random_saturated_matching(config, rng)
    power = equal_power(matching, config.total_power_watts)
    return Allocation.build(ch, matching, power, UserWeights.unit(config.num_users))


def ug_ftpc(
    ch: ChannelRealization, config: SystemConfig, ftpc: FtpcConfig
) -> Allocation:
    """User grouping plus fractional transmit power control.

    Users are split by mean normalized gain into dv contiguous groups; a
    sub-channel serves at most one member per group (its best one with quota
    left, strongest groups first, up to df users). Each sub-channel spends an
    equal share of the budget, split within the channel in proportion to
    normalized gain to the power ``-alpha`` so weaker users get more.
    """
    m, k_total = config.num_users, config.num_subchannels
    ncg = ch.gain_sq / ch.noise
    by_quality = sorted(range(m), key=lambda j: (-float(ncg[:, j].mean()), j))
    groups = np.array_split(np.array(by_quality), config.dv)
    quota = [config.dv] * m
    powers = np.zeros((k_total, m))
    pairs: list[tuple[int, int]] = []
    per_channel_budget = config.total_power_watts / k_total
    for k in range(k_total):
        candidates: list[int] = []
        for group in groups:
            eligible = [int(j) for j in group if quota[int(j)] > 0]
            if eligible:
                candidates.append(max(eligible, key=lambda j: (ncg[k, j], -j)))
        candidates.sort(key=lambda j: (-ncg[k, j], j))
        chosen = candidates[: config.df]
        if not chosen:
            continue
        shares = np.array([float(ncg[k, j]) ** -ftpc.alpha for j in chosen])
        shares /= shares.sum()
        for j, share in zip(chosen, shares):
            quota[j] -= 1
            pairs.append((k, j))
            powers[k, j] = per_channel_budget * share
    matching = Matching.from_pairs(m, k_total, pairs, config.df, config.dv)
    return Allocation.build(
        ch, matching, PowerAllocation(powers), UserWeights.unit(m)
    )


def ofdma_baseline(
    ch25: ChannelRealization,
    config: SystemConfig,
    weights: Optional[UserWeights] = None,
) -> Allocation:
    """Exclusive-assignment OMA reference with equal per-channel power.

    Sub-channels are visited in descending best-gain order and each picks the
    user with the largest weighted single-user rate among those with quota
    left; ties go to the least-loaded, then lowest-index user.
    """
    k_total, m = ch25.num_subchannels, ch25.num_users
    if weights is None:
        weights = UserWeights.unit(m)
    ncg = ch25.gain_sq / ch25.noise
    per_channel_power = config.total_power_watts / k_total
    order = sorted(range(k_total), key=lambda k: (-float(ncg[k].max()), k))
    quota = [config.dv] * m
    load = [0] * m
    powers = np.zeros((k_total, m))
    pairs: list[tuple[int, int]] = []
    for k in order:
        marginal = weights.w * np.log2(1.0 + per_channel_power * ncg[k])
        best = None
        for j in range(m):
            if quota[j] <= 0:
                continue
            key = (-float(marginal[j]), load[j], j)
            if best is None or key < best[0]:
                best = (key, j)
        if best is None:
            continue
        j = best[1]
        quota[j] -= 1
        load[j] += 1
        pairs.append((k, j))
        powers[k, j] = per_channel_power
    matching = Matching.from_pairs(m, k_total, pairs, 1, config.dv)
    return Allocation.build(ch25, matching, PowerAllocation(powers), weights)


def prop2_relaxed_optimum(ch: ChannelRealization, config: SystemConfig) -> Allocation:
    """Closed-form optimum of the relaxed problem with per-channel budgets.

    Dropping the per-user quota and splitting the budget equally across
    sub-channels, the best assignment gives each sub-channel exclusively to
    its highest normalized-gain user. Assumes equal user weights.
    """
    k_total, m = ch.num_subchannels, ch.num_users
    ncg = ch.gain_sq / ch.noise
    per_channel_power = config.total_power_watts / k_total
    powers = np.zeros((k_total, m))
    pairs = []
    for k in range(k_total):
        j = int(np.lexsort((np.arange(m), -ncg[k]))[0])
        pairs.append((k, j))
        powers[k, j] = per_channel_power
    matching = Matching.from_pairs(m, k_total, pairs, 1, k_total)
    return Allocation.build(
        ch, matching, PowerAllocation(powers), UserWeights.unit(m)
    )


def _feasible_matchings(config: SystemConfig) -> Iterator[list[tuple[int, ...]]]:
    """All per-channel user subsets satisfying both quota caps, in lex order."""
    m, k_total = config.num_users, config.num_subchannels
    subsets: list[tuple[int, ...]] = [()]
    for size in range(1, config.df + 1):
        subsets.extend(combinations(range(m), size))
    quota = [config.dv] * m
    choice: list[tuple[int, ...]] = [()] * k_total

    def rec(k: int) -> Iterator[list[tuple[int, ...]]]:
        if k == k_total:
            yield list(choice)
            return
        for sub in subsets:
            if all(quota[j] > 0 for j in sub):
                for j in sub:
                    quota[j] -= 1
                choice[k] = sub
                yield from rec(k + 1)
                for j in sub:
                    quota[j] += 1

    yield from rec(0)


def count_feasible_matchings(config: SystemConfig, cap: int = ORACLE_MATCHING_CAP) -> int:
    count = 0
    for _ in _feasible_matchings(config):
        count += 1
        if count > cap:
            raise ModelError("oracle scale exceeded")
    return count


def _grid_best_powers(
    ch: ChannelRealization,
    pairs: list[tuple[int, int]],
    total_power: float,
    steps: int,
    weights: UserWeights,
) -> tuple[float, np.ndarray]:
    """Exhaustive utility search over a simplex grid of per-pair powers."""
    gain = ch.gain_sq
    noise = ch.noise
    ncg = gain / noise
    w = weights.w
    by_channel: dict[int, list[int]] = {}
    for k, j in pairs:
        by_channel.setdefault(k, []).append(j)
    orders = {
        k: sorted(users, key=lambda j: (-ncg[k, j], j))
        for k, users in by_channel.items()
    }
    unit = total_power / steps
    best_util = -1.0
    best_units: Optional[tuple[int, ...]] = None
    n = len(pairs)

    def utility(units: list[int]) -> float:
        p = {pair: units[idx] * unit for idx, pair in enumerate(pairs)}
        total = 0.0
        for k, order in orders.items():
            ahead = 0.0
            for j in order:
                pj = p[(k, j)]
                g = gain[k, j]
                total += w[j] * math.log2(1.0 + pj * g / (noise[k, j] + ahead * g))
                ahead += pj
        return total

    units = [0] * n

    def rec(idx: int, left: int) -> None:
        nonlocal best_util, best_units
        if idx == n - 1:
            units[idx] = left
            u = utility(units)
            if u > best_util:
                best_util = u
                best_units = tuple(units)
            units[idx] = 0
            return
        for take in range(left + 1):
            units[idx] = take
            rec(idx + 1, left - take)
        units[idx] = 0

    if n == 0:
        return 0.0, np.zeros((ch.num_subchannels, ch.num_users))
    rec(0, steps)
    powers = np.zeros((ch.num_subchannels, ch.num_users))
    for idx, (k, j) in enumerate(pairs):
        powers[k, j] = best_units[idx] * unit
    return best_util, powers


def brute_force_joint(
    ch: ChannelRealization,
    config: SystemConfig,
    power_grid_steps: int = 0,
    weights: Optional[UserWeights] = None,
) -> Allocation:
    """Exhaustive oracle: best allocation over every feasible matching.

    With ``power_grid_steps == 0`` powers come from the convex solver; a
    positive value searches an exhaustive per-pair power grid instead. Only
    intended for desk-scale instances (the matching count is capped).
    """
    if weights is None:
        weights = UserWeights.unit(config.num_users)
    count_feasible_matchings(config)
    best: Optional[Allocation] = None
    for choice in _feasible_matchings(config):
        pairs = [(k, j) for k, sub in enumerate(choice) for j in sub]
        matching = Matching.from_pairs(
            config.num_users, config.num_subchannels, pairs, config.df, config.dv
        )
        if power_grid_steps > 0:
            util, powers = _grid_best_powers(
                ch, pairs, config.total_power_watts, power_grid_steps, weights
            )
            candidate = Allocation.build(
                ch, matching, PowerAllocation(powers), weights
            )
        else:
            instance = build_gp(ch, matching, weights, config.total_power_watts)
            solution = solve_gp(instance)
            candidate = Allocation.build(ch, matching, solution.powers, weights)
        if best is None or candidate.total_utility > best.total_utility:
            best = candidate
    assert best is not None
    return best
