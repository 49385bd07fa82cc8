import math

import numpy as np
import pytest

from noma_jspa import (
    ChannelRealization,
    Matching,
    ModelError,
    SystemConfig,
    UserWeights,
    VACANT,
    SwapProposal,
    apply_swap,
    corollary1_fast_approve,
    enumerate_swaps,
    evaluate_swap,
    generate_channel,
    is_two_sided_exchange_stable,
    random_saturated_matching,
)


def make_channel(gain_sq, noise=None):
    gain_sq = np.asarray(gain_sq, dtype=float)
    if noise is None:
        noise = np.ones_like(gain_sq)
    return ChannelRealization(gain_sq, np.asarray(noise, dtype=float),
                              np.full(gain_sq.shape[1], 50.0))


def crossed_2x2():
    """Each user is better on the other's channel; swap improves all four players."""
    ch = make_channel([[1.0, 4.0], [4.0, 1.0]])
    cfg = SystemConfig(num_users=2, num_subchannels=2, df=1, dv=1,
                       total_power_watts=4.0, rng_seed=0)
    matching = Matching.from_pairs(2, 2, [(0, 0), (1, 1)], 1, 1)
    return ch, cfg, matching, SwapProposal(0, 1, 0, 1)


class TestApplySwap:
    def test_full_exchange(self):
        _, _, matching, proposal = crossed_2x2()
        swapped = apply_swap(matching, proposal)
        assert swapped.user_to_subs == (frozenset({1}), frozenset({0}))

    def test_involution(self):
        _, _, matching, proposal = crossed_2x2()
        swapped = apply_swap(matching, proposal)
        back = apply_swap(swapped, SwapProposal(0, 1, 1, 0))
        assert back == matching

    def test_vacant_move(self):
        matching = Matching.from_pairs(1, 2, [(0, 0)], 1, 1)
        moved = apply_swap(matching, SwapProposal(0, VACANT, 0, 1))
        assert moved.user_to_subs == (frozenset({1}),)

    def test_locality(self):
        matching = Matching.from_pairs(4, 4, [(0, 0), (1, 1), (2, 2), (3, 3)], 1, 1)
        swapped = apply_swap(matching, SwapProposal(0, 1, 0, 1))
        assert swapped.user_to_subs[2] == matching.user_to_subs[2]
        assert swapped.user_to_subs[3] == matching.user_to_subs[3]
        assert swapped.sub_to_users[2] == matching.sub_to_users[2]

    def test_invalid_swap_rejected(self):
        matching = Matching.from_pairs(2, 2, [(0, 0), (0, 1)], 1, 1)
        with pytest.raises(ModelError, match="invalid swap"):
            apply_swap(matching, SwapProposal(0, 1, 1, 0))

    def test_vacant_quota_overflow_rejected(self):
        matching = Matching.from_pairs(2, 2, [(0, 0), (1, 1)], 1, 2)
        with pytest.raises(ModelError, match="spare capacity"):
            apply_swap(matching, SwapProposal(0, VACANT, 0, 1))


class TestEvaluateSwap:
    def test_symmetric_instance_not_approved(self):
        ch = make_channel([[2.0, 2.0], [2.0, 2.0]])
        matching = Matching.from_pairs(2, 2, [(0, 0), (1, 1)], 1, 1)
        verdict = evaluate_swap(ch, matching, UserWeights.unit(2), 1.0,
                                SwapProposal(0, 1, 0, 1))
        assert not verdict.approved
        assert all(abs(d) < 1e-12 for d in verdict.delta_by_player.values())

    def test_crossed_instance_approved_with_exact_deltas(self):
        ch, cfg, matching, proposal = crossed_2x2()
        verdict = evaluate_swap(ch, matching, UserWeights.unit(2),
                                cfg.phase_power(), proposal)
        assert verdict.approved
        # phase power 2 W: every delta is log2(1+8) - log2(1+2) = log2(3)
        expected = math.log2(3.0)
        for delta in verdict.delta_by_player.values():
            assert delta == pytest.approx(expected, rel=1e-12)
        assert verdict.delta_total == pytest.approx(2.0 * expected, rel=1e-12)

    def test_swap_hurting_source_channel_not_approved(self):
        # user 0 leaves a channel where it was strong; channel 0 objects
        ch = make_channel([[4.0, 2.0], [5.0, 1.0]])
        matching = Matching.from_pairs(2, 2, [(0, 0), (1, 1)], 1, 1)
        verdict = evaluate_swap(ch, matching, UserWeights.unit(2), 1.0,
                                SwapProposal(0, 1, 0, 1))
        assert verdict.delta_by_player["user_i"] > 0
        assert verdict.delta_by_player["user_j"] > 0
        assert verdict.delta_by_player["sub_p"] < 0
        assert not verdict.approved

    def test_vacant_source_channel_can_veto(self):
        # moving the only user off a channel always hurts that channel
        ch = make_channel([[1.0], [5.0]])
        matching = Matching.from_pairs(1, 2, [(0, 0)], 1, 1)
        verdict = evaluate_swap(ch, matching, UserWeights.unit(1), 1.0,
                                SwapProposal(0, VACANT, 0, 1))
        assert verdict.delta_by_player["user_j"] == 0.0
        assert verdict.delta_by_player["sub_p"] < 0
        assert not verdict.approved

    def test_vacant_move_approved_when_departure_decongests(self):
        # low-weight strong interferer leaves; the heavy victim's rate jumps
        ch = make_channel([[50.0, 40.0], [100.0, 0.1]])
        weights = UserWeights(np.array([0.1, 5.0]))
        matching = Matching.from_pairs(2, 2, [(0, 0), (0, 1)], 2, 1)
        verdict = evaluate_swap(ch, matching, weights, 1.0,
                                SwapProposal(0, VACANT, 0, 1))
        assert verdict.delta_by_player["user_j"] == 0.0
        assert verdict.delta_by_player["user_i"] > 0
        assert verdict.delta_by_player["sub_p"] > 0
        assert verdict.delta_by_player["sub_q"] > 0
        assert verdict.approved

    def test_approved_implies_total_utility_gain(self):
        rng = np.random.default_rng(17)
        checked = 0
        for seed in range(40):
            cfg = SystemConfig(num_users=6, num_subchannels=4, df=2, dv=2, rng_seed=0)
            r = np.random.default_rng(seed)
            ch = generate_channel(cfg, r)
            matching = random_saturated_matching(cfg, r)
            weights = UserWeights(rng.uniform(0.5, 2.0, 6))
            for proposal in enumerate_swaps(matching):
                verdict = evaluate_swap(ch, matching, weights, cfg.phase_power(),
                                        proposal, eps=cfg.eps_swap)
                if verdict.approved:
                    checked += 1
                    assert verdict.delta_total > cfg.eps_swap
        assert checked > 0


class TestCorollaryFastApprove:
    def make_tail_swap(self):
        # channels p, q each host one strong user plus one weak user; the weak
        # users prefer each other's channel and stay weakest after the swap
        gain = np.array([
            # users:  0(strong p) 1(weak p) 2(strong q) 3(weak q)
            [100.0, 1.0, 0.1, 2.5],     # channel p = 0
            [0.1, 3.0, 100.0, 2.0],     # channel q = 1
        ])
        ch = make_channel(gain)
        cfg = SystemConfig(num_users=4, num_subchannels=2, df=2, dv=1,
                           total_power_watts=4.0, rng_seed=0)
        matching = Matching.from_pairs(4, 2, [(0, 0), (0, 1), (1, 2), (1, 3)], 2, 1)
        return ch, cfg, matching, SwapProposal(1, 3, 0, 1)

    def test_constructed_case_true_and_sound(self):
        ch, cfg, matching, proposal = self.make_tail_swap()
        weights = UserWeights.unit(4)
        assert corollary1_fast_approve(ch, matching, weights, cfg.phase_power(), proposal)
        verdict = evaluate_swap(ch, matching, weights, cfg.phase_power(), proposal)
        assert verdict.approved

    def test_strongest_user_disqualifies(self):
        ch, cfg, matching, _ = self.make_tail_swap()
        proposal = SwapProposal(0, 3, 0, 1)   # user 0 is the strongest on p
        assert not corollary1_fast_approve(
            ch, matching, UserWeights.unit(4), cfg.phase_power(), proposal
        )

    def test_zero_user_deltas_disqualify(self):
        gain = np.array([
            [100.0, 1.0, 0.1, 1.0],
            [0.1, 1.0, 100.0, 1.0],
        ])
        ch = make_channel(gain)
        cfg = SystemConfig(num_users=4, num_subchannels=2, df=2, dv=1,
                           total_power_watts=4.0, rng_seed=0)
        matching = Matching.from_pairs(4, 2, [(0, 0), (0, 1), (1, 2), (1, 3)], 2, 1)
        proposal = SwapProposal(1, 3, 0, 1)
        assert not corollary1_fast_approve(
            ch, matching, UserWeights.unit(4), cfg.phase_power(), proposal
        )

    def test_soundness_on_random_proposals(self):
        hits = 0
        for seed in range(300):
            r = np.random.default_rng(seed)
            cfg = SystemConfig(num_users=6, num_subchannels=3, df=2, dv=2, rng_seed=0)
            ch = generate_channel(cfg, r)
            matching = random_saturated_matching(cfg, r)
            if seed % 2:
                weights = UserWeights(r.uniform(0.5, 2.0, 6))
            else:
                weights = UserWeights.unit(6)
            for proposal in enumerate_swaps(matching):
                if proposal.is_vacant:
                    continue
                if corollary1_fast_approve(ch, matching, weights,
                                           cfg.phase_power(), proposal,
                                           eps=cfg.eps_swap):
                    hits += 1
                    verdict = evaluate_swap(ch, matching, weights,
                                            cfg.phase_power(), proposal,
                                            eps=cfg.eps_swap)
                    assert verdict.approved
        assert hits > 0


class TestEnumerateSwaps:
    def test_two_by_two_fully_matched_single_swap(self):
        matching = Matching.from_pairs(2, 2, [(0, 0), (1, 1)], 1, 1)
        proposals = enumerate_swaps(matching)
        assert len(proposals) == 1         # bound: 0.5*2*1*1*(2-1) = 1
        assert proposals[0] == SwapProposal(0, 1, 0, 1)

    def test_single_user_only_vacant_moves(self):
        matching = Matching.from_pairs(1, 3, [(0, 0)], 1, 1)
        proposals = enumerate_swaps(matching)
        assert proposals and all(p.is_vacant for p in proposals)

    def test_fully_matched_count_within_bound(self):
        # biregular construction: user j holds channels (j*dv + t) mod K
        m, k, df, dv = 4, 4, 2, 2
        pairs = [((j * dv + t) % k, j) for j in range(m) for t in range(dv)]
        matching = Matching.from_pairs(m, k, pairs, df, dv)
        assert matching.num_pairs == m * dv == k * df
        count = len(enumerate_swaps(matching))
        assert count <= 0.5 * m * df * dv * (k - dv)

    def test_deterministic_order(self):
        matching = Matching.from_pairs(3, 3, [(0, 0), (1, 1), (2, 2)], 1, 1)
        a = enumerate_swaps(matching)
        b = enumerate_swaps(matching)
        assert a == b
        keys = [(p.user_i, p.user_j, p.sub_p, p.sub_q) for p in a if not p.is_vacant]
        assert keys == sorted(keys)


class TestStabilityCertificate:
    def test_empty_matching_with_zero_gains_stable(self):
        ch = ChannelRealization(np.zeros((2, 2)), np.ones((2, 2)), np.full(2, 50.0))
        matching = Matching.empty(2, 2, 1, 1)
        stable, witness = is_two_sided_exchange_stable(ch, matching,
                                                       UserWeights.unit(2), 1.0)
        assert stable and witness is None

    def test_planted_swap_found_as_witness(self):
        ch, cfg, matching, proposal = crossed_2x2()
        stable, witness = is_two_sided_exchange_stable(
            ch, matching, UserWeights.unit(2), cfg.phase_power()
        )
        assert not stable
        assert witness == proposal

    def test_usma1_output_certified_stable(self):
        from noma_jspa import usma1_run

        for seed in range(15):
            r = np.random.default_rng(seed)
            cfg = SystemConfig(num_users=6, num_subchannels=4, df=2, dv=2, rng_seed=0)
            ch = generate_channel(cfg, r)
            weights = UserWeights(r.uniform(0.5, 2.0, 6))
            start = random_saturated_matching(cfg, r)
            report = usma1_run(ch, cfg, weights, start=start)
            stable, witness = is_two_sided_exchange_stable(
                ch, report.final_matching, weights, cfg.phase_power(),
                eps=cfg.eps_swap,
            )
            assert stable, witness
