"""Power allocation for a fixed matching via a convex rate-space program.

With SIC decoding, a sub-channel's achievable rate region only depends on the
users' noise-to-gain floors sorted along the decoding order. Writing the
per-user rates as variables, total transmit power becomes a sum of
exponentials of rate suffix-sums, so maximizing the weighted sum rate under
the power budget is convex and is solved here with a log-barrier Newton
method. Powers are recovered by walking the boundary of the rate region.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    Allocation,
    ChannelRealization,
    Matching,
    ModelError,
    PowerAllocation,
    UserWeights,
)

LN2 = math.log(2.0)
_FLOOR_TIE_BUMP = 1e-12
_NEG_POWER_TOL = 1e-9


@dataclass(frozen=True)
class GpInstance:
    """Per-sub-channel decoding orders and noise floors plus the budget.

    ``orders[c]`` lists the users of the c-th occupied sub-channel by
    decreasing normalized gain; ``floors[c]`` the matching strictly
    increasing noise/gain values in watts.
    """

    orders: tuple[tuple[int, ...], ...]
    floors: tuple[tuple[float, ...], ...]
    sub_ids: tuple[int, ...]
    weights: np.ndarray
    budget: float
    num_subchannels: int
    num_users: int

    @property
    def num_vars(self) -> int:
        return sum(len(o) for o in self.orders)


@dataclass(frozen=True)
class GpSolution:
    rates: np.ndarray          # (K, M) bps/Hz
    powers: PowerAllocation
    objective: float
    kkt_residual: float


def build_gp(
    ch: ChannelRealization,
    matching: Matching,
    weights: UserWeights,
    total_power: float,
) -> GpInstance:
    """Sort every occupied sub-channel by decoding order and take noise floors.

    Ties in normalized gain are resolved by user index and the later floor is
    bumped by a relative epsilon so the floors are strictly increasing.
    """
    orders: list[tuple[int, ...]] = []
    floors: list[tuple[float, ...]] = []
    sub_ids: list[int] = []
    ncg = ch.gain_sq / ch.noise
    for k in range(matching.num_subchannels):
        users = matching.sub_to_users[k]
        if not users:
            continue
        order = sorted(users, key=lambda j: (-ncg[k, j], j))
        m_vals: list[float] = []
        for j in order:
            if ch.gain_sq[k, j] <= 0.0:
                raise ModelError(
                    f"non-transmittable link: zero gain on matched pair ({k}, {j})"
                )
            m = float(ch.noise[k, j] / ch.gain_sq[k, j])
            if m_vals and m <= m_vals[-1]:
                m = m_vals[-1] * (1.0 + _FLOOR_TIE_BUMP)
            m_vals.append(m)
        orders.append(tuple(order))
        floors.append(tuple(m_vals))
        sub_ids.append(k)
    return GpInstance(
        tuple(orders),
        tuple(floors),
        tuple(sub_ids),
        np.asarray(weights.w, dtype=float),
        float(total_power),
        matching.num_subchannels,
        matching.num_users,
    )


def _power_terms(instance: GpInstance) -> tuple[list[np.ndarray], float]:
    """Floor-difference coefficients per channel and the constraint bound."""
    coeffs = []
    bound = instance.budget
    for floors in instance.floors:
        m = np.asarray(floors)
        c = np.empty_like(m)
        c[0] = m[0]
        c[1:] = m[1:] - m[:-1]
        coeffs.append(c)
        bound += float(m[-1])
    return coeffs, bound


def transformed_power(instance: GpInstance, rates: np.ndarray) -> float:
    """Left side of the power budget in rate space.

    The total transmit power plus the per-channel last floors equals a sum of
    floor differences times exponentials of rate suffix-sums; feasible rate
    vectors keep it at or below ``budget + sum of last floors``.
    """
    coeffs, _ = _power_terms(instance)
    total = 0.0
    for c, order in enumerate(instance.orders):
        k = instance.sub_ids[c]
        r = np.array([rates[k, j] for j in order])
        suffix = np.cumsum(r[::-1])[::-1]
        total += float(coeffs[c] @ np.exp(LN2 * suffix))
    return total


def _channel_profile(a: list[float], c: list[float], lam: float) -> list[float]:
    """Maximize sum(a_i*ln(y_i) - lam*c_i*y_i) over y_1 >= ... >= y_J >= 1.

    Pool-adjacent-violators on the separable concave terms: each block takes
    its pooled maximizer max(1, sum(a)/(lam*sum(c))) and blocks merge while
    the profile would increase along the chain.
    """
    blocks: list[tuple[float, float, float, int]] = []  # (sum_a, sum_c, y, count)
    for ai, ci in zip(a, c):
        sa, sc, cnt = ai, ci, 1
        y = max(1.0, sa / (lam * sc)) if sa > 0.0 else 1.0
        while blocks and y > blocks[-1][2]:
            pa, pc, _, pn = blocks.pop()
            sa += pa
            sc += pc
            cnt += pn
            y = max(1.0, sa / (lam * sc)) if sa > 0.0 else 1.0
        blocks.append((sa, sc, y, cnt))
    profile: list[float] = []
    for _, _, y, cnt in blocks:
        profile.extend([y] * cnt)
    return profile


def solve_gp(instance: GpInstance, max_bisect: int = 300) -> GpSolution:
    """Maximize the weighted sum rate subject to the transmit-power budget.

    For a fixed power price the problem separates per sub-channel into an
    isotonic concave maximization solved exactly in closed form; the price is
    then bisected until the budget is active. Positive weights make the
    budget bind at the optimum.
    """
    sizes = [len(o) for o in instance.orders]
    n = sum(sizes)
    rates_full = np.zeros((instance.num_subchannels, instance.num_users))
    if n == 0:
        return GpSolution(rates_full, PowerAllocation(np.zeros_like(rates_full)), 0.0, 0.0)

    coeffs, bound = _power_terms(instance)
    chan_a: list[list[float]] = []
    chan_c: list[list[float]] = []
    for c, order in enumerate(instance.orders):
        w = [float(instance.weights[j]) for j in order]
        a = [w[0] / LN2] + [(w[i] - w[i - 1]) / LN2 for i in range(1, len(w))]
        chan_a.append(a)
        chan_c.append([float(x) for x in coeffs[c]])

    def profiles_at(lam: float) -> tuple[list[list[float]], float]:
        ys = []
        used = 0.0
        for a, c in zip(chan_a, chan_c):
            y = _channel_profile(a, c, lam)
            ys.append(y)
            used += sum(ci * yi for ci, yi in zip(c, y))
        return ys, used

    # Bracket the price: small lam overshoots the budget, large undershoots.
    lam_hi = 1.0
    for _ in range(400):
        _, used = profiles_at(lam_hi)
        if used <= bound:
            break
        lam_hi *= 4.0
    else:
        raise ModelError("power solver failed to bracket the budget price")
    lam_lo = lam_hi
    for _ in range(400):
        lam_lo /= 4.0
        _, used = profiles_at(lam_lo)
        if used > bound:
            break
    else:
        # Even a vanishing price stays within budget (cannot happen with
        # positive weights, kept as a safe fallback).
        lam_lo = lam_hi

    for _ in range(max_bisect):
        if (lam_hi - lam_lo) <= 1e-15 * lam_hi:
            break
        lam_mid = 0.5 * (lam_lo + lam_hi)
        if lam_mid <= lam_lo or lam_mid >= lam_hi:
            break
        _, used = profiles_at(lam_mid)
        if used > bound:
            lam_lo = lam_mid
        else:
            lam_hi = lam_mid

    lam = lam_hi                      # feasible side of the bracket
    ys, used = profiles_at(lam)

    objective = 0.0
    stationarity = 0.0
    for c, order in enumerate(instance.orders):
        k = instance.sub_ids[c]
        y = ys[c]
        prefix = 0.0
        for pos, j in enumerate(order):
            nxt = y[pos + 1] if pos + 1 < len(y) else 1.0
            rate = max(0.0, (math.log(y[pos]) - math.log(nxt)) / LN2)
            rates_full[k, j] = rate
            objective += float(instance.weights[j]) * rate
            prefix += chan_c[c][pos] * y[pos]
            w_j = float(instance.weights[j])
            grad_j = lam * LN2 * prefix
            if rate > 0.0:
                stationarity = max(stationarity, abs(w_j - grad_j) / w_j)
            else:
                stationarity = max(stationarity, max(0.0, w_j - grad_j) / w_j)

    power = recover_powers(instance, rates_full)
    # Weak-duality suboptimality from the remaining budget slack, relative to
    # the objective scale.
    gap = lam * max(0.0, bound - used) / max(objective, 1.0)
    kkt = max(stationarity, gap)
    return GpSolution(rates_full, power, objective, kkt)


def recover_powers(instance: GpInstance, rates: np.ndarray) -> PowerAllocation:
    """Invert rate vectors into transmit powers on the rate-region boundary.

    Walking the decoding order, each user's power is what lifts its SINR to
    the requested rate given the interference already committed ahead of it.
    """
    rates = np.asarray(rates, dtype=float)
    if np.any(rates < 0) or not np.all(np.isfinite(rates)):
        raise ModelError("infeasible rate vector: rates must be finite and >= 0")
    powers = np.zeros((instance.num_subchannels, instance.num_users))
    for c, order in enumerate(instance.orders):
        k = instance.sub_ids[c]
        floors = instance.floors[c]
        cumulative = 0.0
        for pos, j in enumerate(order):
            growth = math.expm1(LN2 * rates[k, j])
            p = growth * (floors[pos] + cumulative)
            if p < -_NEG_POWER_TOL:
                raise ModelError("infeasible rate vector: negative power")
            p = max(p, 0.0)
            powers[k, j] = p
            cumulative += p
    return PowerAllocation(powers)


def equal_power(matching: Matching, total_power: float) -> PowerAllocation:
    """Spread the whole budget equally over all matched pairs."""
    powers = np.zeros((matching.num_subchannels, matching.num_users))
    pairs = matching.pairs()
    if pairs:
        share = total_power / len(pairs)
        for k, j in pairs:
            powers[k, j] = share
    return PowerAllocation(powers)


def gp_allocation(
    ch: ChannelRealization,
    matching: Matching,
    weights: UserWeights,
    total_power: float,
) -> Allocation:
    """Convenience wrapper: build, solve, and package the optimized allocation."""
    instance = build_gp(ch, matching, weights, total_power)
    solution = solve_gp(instance)
    return Allocation.build(ch, matching, solution.powers, weights)
