"""User/sub-channel matching algorithms.

Two searches over the matching space, both evaluating utilities under the
flat matching-phase power rule:

* a deterministic first-improvement swap search that terminates in a
  two-sided exchange stable matching, and
* a fixed-temperature annealing search that executes random swaps with a
  sigmoid acceptance probability and keeps the best matching seen.

The engine keeps each sub-channel's occupants as a list ordered by the
decoding order, so one utility evaluation is a single short pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import log2
from typing import Optional

import numpy as np

from .model import (
    ChannelRealization,
    Matching,
    SystemConfig,
    UserWeights,
    random_saturated_matching,
)
from .swaps import VACANT, SwapProposal

_MAX_ROUNDS = 100_000


@dataclass(frozen=True)
class Usma1Report:
    final_matching: Matching
    swap_count: int
    utility_trace: list[float]      # system utility after each executed swap
    rounds: int
    initial_utility: float


@dataclass(frozen=True)
class Usma2Config:
    ell_max: int = 20_000
    temperature: float = 0.5

    def __post_init__(self) -> None:
        if self.ell_max < 0:
            raise ValueError("ell_max must be non-negative")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


@dataclass(frozen=True)
class Usma2Report:
    best_matching: Matching
    best_utility: float
    accepted_swaps: int
    iterations: int


class _UniformStream:
    """Block-buffered uniforms; integer draws derive from the same stream."""

    def __init__(self, rng: np.random.Generator, block: int = 4096) -> None:
        self._rng = rng
        self._block = block
        self._buf: list[float] = []
        self._pos = 0

    def uniform(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self._rng.random(self._block).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def below(self, n: int) -> int:
        return int(self.uniform() * n)


class _MatchingState:
    """Mutable matching with per-sub-channel decoding-ordered occupant lists."""

    def __init__(
        self,
        ch: ChannelRealization,
        weights: UserWeights,
        phase_power: float,
        matching: Matching,
    ) -> None:
        self.gain = ch.gain_sq.tolist()
        self.ncg = (ch.gain_sq / ch.noise).tolist()
        self.noise = ch.noise.tolist()
        self.w = [float(x) for x in weights.w]
        self.power = float(phase_power)
        self.df = matching.df
        self.dv = matching.dv
        self.num_users = matching.num_users
        self.num_subchannels = matching.num_subchannels
        self.user_subs = [set(s) for s in matching.user_to_subs]
        self.occupants = [
            sorted(users, key=lambda u, k=k: (-self.ncg[k][u], u))
            for k, users in enumerate(matching.sub_to_users)
        ]
        self.values = [self._value(k, occ) for k, occ in enumerate(self.occupants)]

    # -- evaluation helpers ------------------------------------------------

    def _value(self, k: int, ordered: list[int]) -> float:
        p = self.power
        gain_k = self.gain[k]
        noise_k = self.noise[k]
        w = self.w
        total = 0.0
        for t, u in enumerate(ordered):
            g = gain_k[u]
            total += w[u] * log2(1.0 + p * g / (noise_k[u] + p * t * g))
        return total

    def _value_and_rate(self, k: int, ordered: list[int], target: int) -> tuple[float, float]:
        p = self.power
        gain_k = self.gain[k]
        noise_k = self.noise[k]
        w = self.w
        total = 0.0
        rate_t = 0.0
        for t, u in enumerate(ordered):
            g = gain_k[u]
            r = log2(1.0 + p * g / (noise_k[u] + p * t * g))
            total += w[u] * r
            if u == target:
                rate_t = r
        return total, rate_t

    def user_rate(self, k: int, u: int) -> float:
        t = self.occupants[k].index(u)
        g = self.gain[k][u]
        p = self.power
        return log2(1.0 + p * g / (self.noise[k][u] + p * t * g))

    def _with_exchange(
        self, k: int, remove: Optional[int], add: Optional[int]
    ) -> list[int]:
        ordered = self.occupants[k].copy()
        if remove is not None:
            ordered.remove(remove)
        if add is not None:
            ncg_k = self.ncg[k]
            key = (-ncg_k[add], add)
            pos = 0
            for pos, u in enumerate(ordered):
                if key < (-ncg_k[u], u):
                    break
            else:
                pos = len(ordered)
            ordered.insert(pos, add)
        return ordered

    def delta_total(self, proposal: SwapProposal) -> float:
        """System-utility change of the exchange (only two channels move)."""
        i, j, p, q = proposal.user_i, proposal.user_j, proposal.sub_p, proposal.sub_q
        partner = None if proposal.is_vacant else j
        after_p = self._value(p, self._with_exchange(p, i, partner))
        after_q = self._value(q, self._with_exchange(q, partner, i))
        return after_p + after_q - self.values[p] - self.values[q]

    def approves(self, proposal: SwapProposal, eps: float) -> bool:
        """Four-player approval under the phase power (swap-blocking test)."""
        i, j, p, q = proposal.user_i, proposal.user_j, proposal.sub_p, proposal.sub_q
        partner = None if proposal.is_vacant else j
        r_p_i = self.user_rate(p, i)
        after_p, r_p_j = self._value_and_rate(p, self._with_exchange(p, i, partner),
                                              -1 if partner is None else partner)
        after_q, r_q_i = self._value_and_rate(q, self._with_exchange(q, partner, i), i)
        d_sub_p = after_p - self.values[p]
        d_sub_q = after_q - self.values[q]
        if d_sub_p < -eps or d_sub_q < -eps:
            return False
        d_total = d_sub_p + d_sub_q
        if d_total <= eps:
            return False
        d_user_i = r_q_i - r_p_i
        if d_user_i < -eps:
            return False
        if partner is None:
            d_user_j = 0.0
        else:
            d_user_j = r_p_j - self.user_rate(q, j)
            if d_user_j < -eps:
                return False
        return max(d_user_i, d_user_j, d_sub_p, d_sub_q) > eps

    # -- mutation ------------------------------------------------------------

    def execute(self, proposal: SwapProposal) -> None:
        i, j, p, q = proposal.user_i, proposal.user_j, proposal.sub_p, proposal.sub_q
        partner = None if proposal.is_vacant else j
        new_p = self._with_exchange(p, i, partner)
        new_q = self._with_exchange(q, partner, i)
        self.occupants[p] = new_p
        self.occupants[q] = new_q
        self.values[p] = self._value(p, new_p)
        self.values[q] = self._value(q, new_q)
        self.user_subs[i].discard(p)
        self.user_subs[i].add(q)
        if partner is not None:
            self.user_subs[j].discard(q)
            self.user_subs[j].add(p)

    @property
    def utility(self) -> float:
        return sum(self.values)

    def snapshot(self) -> Matching:
        return Matching(
            tuple(frozenset(s) for s in self.user_subs),
            tuple(frozenset(s) for s in self.occupants),
            self.df,
            self.dv,
        )


def usma1_initialize(
    ch: ChannelRealization, config: SystemConfig, weights: UserWeights
) -> Matching:
    """Priority greedy start: heavier users pick their best free sub-channels.

    Users are processed by descending weight (index breaks ties); each takes
    up to dv not-yet-full sub-channels ordered by its own single-user rate.
    """
    m, k = config.num_users, config.num_subchannels
    ncg = (ch.gain_sq / ch.noise).tolist()
    order = sorted(range(m), key=lambda j: (-float(weights.w[j]), j))
    s_left = [config.df] * k
    pairs: list[tuple[int, int]] = []
    for j in order:
        free = [kk for kk in range(k) if s_left[kk] > 0]
        if not free:
            break
        free.sort(key=lambda kk: (-ncg[kk][j], kk))
        for kk in free[: config.dv]:
            pairs.append((kk, j))
            s_left[kk] -= 1
    return Matching.from_pairs(m, k, pairs, config.df, config.dv)


def _signature(proposal: SwapProposal) -> tuple[int, int, int, int]:
    i, j, p, q = proposal.user_i, proposal.user_j, proposal.sub_p, proposal.sub_q
    if proposal.is_vacant or i < j:
        return (i, p, j, q)
    return (j, q, i, p)


def _first_approved(
    state: _MatchingState,
    pivot: int,
    executed: set[tuple[int, int, int, int]],
    eps: float,
) -> Optional[SwapProposal]:
    """First approved proposal involving ``pivot``, in deterministic scan order.

    Partners are scanned by ascending index, then the pivot's own sub-channel,
    then the partner's; vacant moves come after all two-user exchanges.
    """
    subs_pivot = sorted(state.user_subs[pivot])
    if not subs_pivot:
        return None
    for i in range(state.num_users):
        if i == pivot or not state.user_subs[i]:
            continue
        subs_i = state.user_subs[i]
        for q in subs_pivot:
            if q in subs_i:
                continue
            for p in sorted(subs_i):
                if p in state.user_subs[pivot]:
                    continue
                proposal = SwapProposal(i, pivot, p, q)
                if _signature(proposal) in executed:
                    continue
                if state.approves(proposal, eps):
                    return proposal
    for p in subs_pivot:
        for q in range(state.num_subchannels):
            if q in state.user_subs[pivot] or len(state.occupants[q]) >= state.df:
                continue
            proposal = SwapProposal(pivot, VACANT, p, q)
            if _signature(proposal) in executed:
                continue
            if state.approves(proposal, eps):
                return proposal
    return None


def usma1_run(
    ch: ChannelRealization,
    config: SystemConfig,
    weights: UserWeights,
    start: Optional[Matching] = None,
) -> Usma1Report:
    """First-improvement swap search until no approved swap remains.

    Each round scans users in ascending index and keeps executing the first
    approved proposal for the current user (skipping exchanges already
    executed this round); a round without executions certifies stability.
    """
    matching = usma1_initialize(ch, config, weights) if start is None else start
    state = _MatchingState(ch, weights, config.phase_power(), matching)
    eps = config.eps_swap
    initial_utility = state.utility
    trace: list[float] = []
    rounds = 0
    while True:
        rounds += 1
        if rounds > _MAX_ROUNDS:
            raise RuntimeError("swap search failed to terminate")
        executed: set[tuple[int, int, int, int]] = set()
        executions = 0
        for pivot in range(state.num_users):
            while True:
                proposal = _first_approved(state, pivot, executed, eps)
                if proposal is None:
                    break
                state.execute(proposal)
                executed.add(_signature(proposal))
                executions += 1
                trace.append(state.utility)
        if executions == 0:
            break
    return Usma1Report(state.snapshot(), len(trace), trace, rounds, initial_utility)


def annealing_probability(u_new: float, u_old: float, temperature: float) -> float:
    """Sigmoid acceptance probability of a candidate utility change."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    x = -temperature * (u_new - u_old)
    if x > 700.0:
        return 0.0
    if x < -700.0:
        return 1.0
    return 1.0 / (1.0 + math.exp(x))


def _sample_proposal(
    state: _MatchingState,
    pair_list: list[tuple[int, int]],
    stream: _UniformStream,
) -> Optional[SwapProposal]:
    """Uniform draw over all structurally valid proposals at the current state.

    Rejection sampling over two equal-measure supersets: unordered pairs of
    matched pairs (two-user exchanges) and matched-pair/other-channel combos
    (vacant moves). Falls back to full enumeration when rejections pile up.
    """
    n = len(pair_list)
    num_subs = state.num_subchannels
    n_two = n * (n - 1) // 2
    n_vac = n * (num_subs - 1)
    total = n_two + n_vac
    if total <= 0:
        return None
    df = state.df
    user_subs = state.user_subs
    occupants = state.occupants
    for _ in range(200):
        r = stream.below(total)
        if r < n_two:
            a = stream.below(n)
            b = stream.below(n - 1)
            if b >= a:
                b += 1
            p, i = pair_list[a]
            q, j = pair_list[b]
            if i == j or p == q:
                continue
            if p in user_subs[j] or q in user_subs[i]:
                continue
            return SwapProposal(i, j, p, q)
        a = stream.below(n)
        p, i = pair_list[a]
        q = stream.below(num_subs - 1)
        if q >= p:
            q += 1
        if q in user_subs[i] or len(occupants[q]) >= df:
            continue
        return SwapProposal(i, VACANT, p, q)
    # Dense quotas can make valid draws rare; enumerate instead.
    from .swaps import enumerate_swaps

    proposals = enumerate_swaps(state.snapshot())
    if not proposals:
        return None
    return proposals[stream.below(len(proposals))]


def usma2_run(
    ch: ChannelRealization,
    config: SystemConfig,
    weights: UserWeights,
    usma2cfg: Usma2Config,
    rng: np.random.Generator,
) -> Usma2Report:
    """Annealing search from a random saturated matching.

    Every iteration draws a uniformly random valid proposal, executes it with
    the sigmoid probability of its utility change, and records the best
    matching among all evaluated candidates.
    """
    matching = random_saturated_matching(config, rng)
    state = _MatchingState(ch, weights, config.phase_power(), matching)
    temperature = usma2cfg.temperature
    stream = _UniformStream(rng)
    pair_list = [(k, j) for k in range(state.num_subchannels)
                 for j in state.occupants[k]]
    pair_pos = {pair: idx for idx, pair in enumerate(pair_list)}
    current = state.utility
    best_matching = state.snapshot()
    best_utility = current
    accepted = 0
    iterations = 0
    for _ in range(usma2cfg.ell_max):
        proposal = _sample_proposal(state, pair_list, stream)
        if proposal is None:
            break
        iterations += 1
        delta = state.delta_total(proposal)
        candidate = current + delta
        improves_best = candidate > best_utility
        x = -temperature * delta
        if x > 700.0:
            accept = False
        elif x < -700.0:
            accept = True
        else:
            accept = stream.uniform() < 1.0 / (1.0 + math.exp(x))
        if accept or improves_best:
            state.execute(proposal)
            if candidate > best_utility:
                best_matching = state.snapshot()
                best_utility = state.utility
            if accept:
                accepted += 1
                current = state.utility
                i, j, p, q = (
                    proposal.user_i,
                    proposal.user_j,
                    proposal.sub_p,
                    proposal.sub_q,
                )
                idx = pair_pos.pop((p, i))
                pair_list[idx] = (q, i)
                pair_pos[(q, i)] = idx
                if not proposal.is_vacant:
                    idx = pair_pos.pop((q, j))
                    pair_list[idx] = (p, j)
                    pair_pos[(p, j)] = idx
            else:
                # Snapshot-only visit: undo the exchange.
                state.execute(_reverse(proposal))
    return Usma2Report(best_matching, best_utility, accepted, iterations)


def _reverse(proposal: SwapProposal) -> SwapProposal:
    if proposal.is_vacant:
        return SwapProposal(proposal.user_i, VACANT, proposal.sub_q, proposal.sub_p)
    return SwapProposal(proposal.user_i, proposal.user_j,
                        proposal.sub_q, proposal.sub_p)
