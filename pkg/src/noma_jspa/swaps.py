"""Swap construction, approval, and exchange-stability certification.

A swap exchanges the sub-channel assignments of two users (or moves one user
into spare capacity, the "vacant" variant). A swap is approved when none of
the four involved players (two users, two sub-channels) loses utility and the
pair of sub-channels gains strictly, which makes every executed swap strictly
increase the system utility.

All evaluation here happens under the flat matching-phase power rule: every
matched pair transmits ``SystemConfig.phase_power()`` watts.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import log2
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import ChannelRealization, Matching, ModelError, UserWeights

VACANT = -1


@dataclass(frozen=True)
class SwapProposal:
    """Exchange of sub-channel ``sub_p`` (held by ``user_i``) with ``sub_q``.

    ``user_j == VACANT`` denotes the one-sided variant: ``user_i`` leaves
    ``sub_p`` for free capacity on ``sub_q``.
    """

    user_i: int
    user_j: int
    sub_p: int
    sub_q: int

    @property
    def is_vacant(self) -> bool:
        return self.user_j == VACANT


@dataclass(frozen=True)
class SwapVerdict:
    approved: bool
    delta_by_player: dict[str, float]
    delta_total: float


def _check_structure(proposal: SwapProposal, matching: Matching) -> None:
    i, j, p, q = proposal.user_i, proposal.user_j, proposal.sub_p, proposal.sub_q
    if not (0 <= i < matching.num_users):
        raise ModelError("invalid swap: bad user index")
    if not (0 <= p < matching.num_subchannels and 0 <= q < matching.num_subchannels):
        raise ModelError("invalid swap: bad sub-channel index")
    if p not in matching.user_to_subs[i]:
        raise ModelError("invalid swap: user_i does not hold sub_p")
    if q in matching.user_to_subs[i]:
        raise ModelError("invalid swap: user_i already holds sub_q")
    if proposal.is_vacant:
        if len(matching.sub_to_users[q]) >= matching.df:
            raise ModelError("invalid swap: sub_q has no spare capacity")
        return
    if not (0 <= j < matching.num_users) or j == i:
        raise ModelError("invalid swap: bad partner index")
    if q not in matching.user_to_subs[j]:
        raise ModelError("invalid swap: user_j does not hold sub_q")
    if p in matching.user_to_subs[j]:
        raise ModelError("invalid swap: user_j already holds sub_p")


def apply_swap(matching: Matching, proposal: SwapProposal) -> Matching:
    """Return the matching after the exchange; all other pairs unchanged."""
    _check_structure(proposal, matching)
    i, j, p, q = proposal.user_i, proposal.user_j, proposal.sub_p, proposal.sub_q
    u2s = [set(s) for s in matching.user_to_subs]
    s2u = [set(s) for s in matching.sub_to_users]
    u2s[i].remove(p)
    s2u[p].remove(i)
    u2s[i].add(q)
    s2u[q].add(i)
    if not proposal.is_vacant:
        u2s[j].remove(q)
        s2u[q].remove(j)
        u2s[j].add(p)
        s2u[p].add(j)
    return Matching(
        tuple(frozenset(s) for s in u2s),
        tuple(frozenset(s) for s in s2u),
        matching.df,
        matching.dv,
    )


class PhaseRateTable:
    """Fast per-sub-channel rate evaluation under the flat phase power.

    Works on plain Python lists; with equal powers the interference a user
    sees is just (decoding position) * phase_power * own gain, so one channel
    evaluation is a short loop over at most df users.
    """

    def __init__(
        self, ch: ChannelRealization, weights: UserWeights, phase_power: float
    ) -> None:
        self.gain = ch.gain_sq.tolist()
        self.ncg = (ch.gain_sq / ch.noise).tolist()
        self.noise = ch.noise.tolist()
        self.w = [float(x) for x in weights.w]
        self.power = float(phase_power)
        self.num_subchannels = ch.num_subchannels
        self.num_users = ch.num_users

    def order(self, k: int, users: Iterable[int]) -> list[int]:
        ncg_k = self.ncg[k]
        return sorted(users, key=lambda u: (-ncg_k[u], u))

    def channel_value(
        self, k: int, users: Iterable[int], want: Sequence[int] = ()
    ) -> tuple[float, dict[int, float]]:
        """Weighted rate of sub-channel ``k`` hosting ``users``.

        Also returns the unweighted rates of the users listed in ``want``.
        """
        p = self.power
        gain_k = self.gain[k]
        noise_k = self.noise[k]
        w = self.w
        total = 0.0
        got: dict[int, float] = {}
        for t, u in enumerate(self.order(k, users)):
            g = gain_k[u]
            r = log2(1.0 + p * g / (noise_k[u] + p * t * g))
            total += w[u] * r
            if u in want:
                got[u] = r
        return total, got

    def solo_tail_rate(self, k: int, u: int, coalition_size: int) -> float:
        """Rate of ``u`` sitting at the last decoding position of ``k``."""
        g = self.gain[k][u]
        p = self.power
        return log2(1.0 + p * g / (self.noise[k][u] + p * (coalition_size - 1) * g))

    def evaluate(
        self,
        user_to_subs: Sequence[frozenset[int] | set[int]],
        sub_to_users: Sequence[frozenset[int] | set[int]],
        proposal: SwapProposal,
        eps: float,
    ) -> SwapVerdict:
        """Verdict for a structurally valid proposal."""
        i, j, p, q = proposal.user_i, proposal.user_j, proposal.sub_p, proposal.sub_q
        s_p = sub_to_users[p]
        s_q = sub_to_users[q]
        before_p, rates_p = self.channel_value(p, s_p, want=(i,))
        before_q, rates_q = self.channel_value(q, s_q, want=(j,))
        if proposal.is_vacant:
            after_p_set = [u for u in s_p if u != i]
            after_q_set = list(s_q) + [i]
        else:
            after_p_set = [u for u in s_p if u != i] + [j]
            after_q_set = [u for u in s_q if u != j] + [i]
        after_p, rates_p2 = self.channel_value(p, after_p_set, want=(j,))
        after_q, rates_q2 = self.channel_value(q, after_q_set, want=(i,))
        d_user_i = rates_q2[i] - rates_p[i]
        d_user_j = 0.0 if proposal.is_vacant else rates_p2[j] - rates_q[j]
        d_sub_p = after_p - before_p
        d_sub_q = after_q - before_q
        deltas = {
            "user_i": d_user_i,
            "user_j": d_user_j,
            "sub_p": d_sub_p,
            "sub_q": d_sub_q,
        }
        d_total = d_sub_p + d_sub_q
        approved = (
            all(d >= -eps for d in deltas.values())
            and any(d > eps for d in deltas.values())
            and d_total > eps
        )
        return SwapVerdict(approved, deltas, d_total)


def evaluate_swap(
    ch: ChannelRealization,
    matching: Matching,
    weights: UserWeights,
    phase_power: float,
    proposal: SwapProposal,
    eps: float = 1e-9,
) -> SwapVerdict:
    """Per-player utility deltas and the approval verdict for one proposal.

    Users compare their own rate on the sub-channel they give up against the
    one they receive; sub-channels compare their weighted sum rate. The swap
    is approved when no player loses more than ``eps``, some player gains
    more than ``eps``, and the two sub-channels jointly gain more than
    ``eps`` (so every executed swap raises the system utility).
    """
    _check_structure(proposal, matching)
    table = PhaseRateTable(ch, weights, phase_power)
    return table.evaluate(matching.user_to_subs, matching.sub_to_users, proposal, eps)


def corollary1_fast_approve(
    ch: ChannelRealization,
    matching: Matching,
    weights: UserWeights,
    phase_power: float,
    proposal: SwapProposal,
    eps: float = 1e-9,
) -> bool:
    """Cheap approval test for swaps between the weakest users of two channels.

    When both movers sit at the last decoding position of their sub-channels
    before and after the exchange, no other user's rate changes, so approval
    reduces to four single-rate evaluations. A ``True`` here implies
    ``evaluate_swap`` approves as well.
    """
    if proposal.is_vacant:
        return False
    _check_structure(proposal, matching)
    table = PhaseRateTable(ch, weights, phase_power)
    i, j, p, q = proposal.user_i, proposal.user_j, proposal.sub_p, proposal.sub_q
    s_p = sorted(matching.sub_to_users[p])
    s_q = sorted(matching.sub_to_users[q])
    s_p_after = [u for u in s_p if u != i] + [j]
    s_q_after = [u for u in s_q if u != j] + [i]
    if table.order(p, s_p)[-1] != i or table.order(q, s_q)[-1] != j:
        return False
    if table.order(p, s_p_after)[-1] != j or table.order(q, s_q_after)[-1] != i:
        return False
    r_p_i = table.solo_tail_rate(p, i, len(s_p))
    r_q_j = table.solo_tail_rate(q, j, len(s_q))
    r_p_j = table.solo_tail_rate(p, j, len(s_p))
    r_q_i = table.solo_tail_rate(q, i, len(s_q))
    d_user_i = r_q_i - r_p_i
    d_user_j = r_p_j - r_q_j
    if d_user_i < -eps or d_user_j < -eps or max(d_user_i, d_user_j) <= eps:
        return False
    w = table.w
    d_sub_p = w[j] * r_p_j - w[i] * r_p_i
    d_sub_q = w[i] * r_q_i - w[j] * r_q_j
    return d_sub_p >= -eps and d_sub_q >= -eps and d_sub_p + d_sub_q > eps


def enumerate_swaps(matching: Matching) -> list[SwapProposal]:
    """All structurally valid proposals in ascending (i, j, p, q) order.

    Two-user exchanges come first (each unordered pair listed once with
    ``user_i < user_j``), then vacant moves ordered by (user, source,
    target).
    """
    proposals: list[SwapProposal] = []
    m = matching.num_users
    for i in range(m):
        subs_i = matching.user_to_subs[i]
        if not subs_i:
            continue
        for j in range(i + 1, m):
            subs_j = matching.user_to_subs[j]
            if not subs_j:
                continue
            for p in sorted(subs_i):
                if p in subs_j:
                    continue
                for q in sorted(subs_j):
                    if q in subs_i:
                        continue
                    proposals.append(SwapProposal(i, j, p, q))
    spare = [
        k
        for k in range(matching.num_subchannels)
        if len(matching.sub_to_users[k]) < matching.df
    ]
    for i in range(m):
        subs_i = matching.user_to_subs[i]
        for p in sorted(subs_i):
            for q in spare:
                if q not in subs_i:
                    proposals.append(SwapProposal(i, VACANT, p, q))
    return proposals


def is_two_sided_exchange_stable(
    ch: ChannelRealization,
    matching: Matching,
    weights: UserWeights,
    phase_power: float,
    eps: float = 1e-9,
) -> tuple[bool, Optional[SwapProposal]]:
    """Exhaustive stability certificate.

    Returns ``(True, None)`` when no structurally valid proposal is approved,
    else ``(False, witness)`` with the first approved proposal.
    """
    table = PhaseRateTable(ch, weights, phase_power)
    for proposal in enumerate_swaps(matching):
        verdict = table.evaluate(
            matching.user_to_subs, matching.sub_to_users, proposal, eps
        )
        if verdict.approved:
            return False, proposal
    return True, None
