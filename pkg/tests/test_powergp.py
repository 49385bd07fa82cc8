import math

import numpy as np
import pytest

from noma_jspa import (
    Allocation,
    ChannelRealization,
    Matching,
    ModelError,
    PowerAllocation,
    SystemConfig,
    UserWeights,
    build_gp,
    equal_power,
    generate_channel,
    random_saturated_matching,
    recover_powers,
    solve_gp,
    total_utility,
)
from noma_jspa.powergp import LN2, transformed_power


def make_channel(gain_sq, noise=None):
    gain_sq = np.asarray(gain_sq, dtype=float)
    if noise is None:
        noise = np.ones_like(gain_sq)
    return ChannelRealization(gain_sq, np.asarray(noise, dtype=float),
                              np.full(gain_sq.shape[1], 50.0))


def two_user_grid_oracle(m_strong, m_weak, w_strong, w_weak, budget, steps=2000):
    """Exhaustive 2-D grid search over (p_strong, p_weak) for one sub-channel."""
    p = np.linspace(0.0, budget, steps + 1)
    p_s, p_w = np.meshgrid(p, p, indexing="ij")
    feasible = p_s + p_w <= budget + 1e-12
    rate_s = np.log2(1.0 + p_s / m_strong)
    rate_w = np.log2(1.0 + p_w / (m_weak + p_s))
    value = w_strong * rate_s + w_weak * rate_w
    value[~feasible] = -np.inf
    return float(value.max())


class TestBuildGp:
    def test_single_user_floor(self):
        ch = make_channel([[2.0]])
        matching = Matching.from_pairs(1, 1, [(0, 0)], 1, 1)
        inst = build_gp(ch, matching, UserWeights.unit(1), 10.0)
        assert inst.floors == ((0.5,),)

    def test_two_user_order_and_floors(self):
        ch = make_channel([[4.0, 1.0]])
        matching = Matching.from_pairs(2, 1, [(0, 0), (0, 1)], 2, 1)
        inst = build_gp(ch, matching, UserWeights.unit(2), 10.0)
        assert inst.orders == ((0, 1),)
        assert inst.floors[0][0] == pytest.approx(0.25)
        assert inst.floors[0][1] == pytest.approx(1.0)
        assert inst.floors[0][0] < inst.floors[0][1]

    def test_empty_subchannel_excluded(self):
        ch = make_channel([[1.0, 1.0], [1.0, 1.0]])
        matching = Matching.from_pairs(2, 2, [(0, 0)], 1, 1)
        inst = build_gp(ch, matching, UserWeights.unit(2), 10.0)
        assert inst.sub_ids == (0,)

    def test_zero_gain_rejected(self):
        ch = make_channel([[0.0]])
        matching = Matching.from_pairs(1, 1, [(0, 0)], 1, 1)
        with pytest.raises(ModelError, match="non-transmittable"):
            build_gp(ch, matching, UserWeights.unit(1), 10.0)

    def test_tie_perturbation_keeps_floors_increasing(self):
        ch = make_channel([[2.0, 2.0, 2.0]])
        matching = Matching.from_pairs(3, 1, [(0, 0), (0, 1), (0, 2)], 3, 1)
        inst = build_gp(ch, matching, UserWeights.unit(3), 10.0)
        floors = inst.floors[0]
        assert floors[0] < floors[1] < floors[2]


class TestSolveGp:
    def test_single_user_gets_full_budget(self):
        ch = make_channel([[2.0]])
        matching = Matching.from_pairs(1, 1, [(0, 0)], 1, 1)
        inst = build_gp(ch, matching, UserWeights.unit(1), 8.0)
        sol = solve_gp(inst)
        assert sol.powers.p[0, 0] == pytest.approx(8.0, rel=1e-9)
        assert sol.rates[0, 0] == pytest.approx(math.log2(1.0 + 8.0 / 0.5), rel=1e-9)
        assert sol.kkt_residual <= 1e-6

    def test_symmetric_channels_split_evenly(self):
        ch = make_channel([[2.0, 0.0], [0.0, 2.0]])
        matching = Matching.from_pairs(2, 2, [(0, 0), (1, 1)], 1, 1)
        inst = build_gp(ch, matching, UserWeights.unit(2), 10.0)
        sol = solve_gp(inst)
        assert sol.powers.p[0, 0] == pytest.approx(5.0, rel=1e-9)
        assert sol.powers.p[1, 1] == pytest.approx(5.0, rel=1e-9)

    def test_weighted_two_user_channel_matches_grid_oracle(self):
        m_strong, m_weak = 0.2, 1.1
        budget = 6.0
        ch = make_channel([[1.0 / m_strong, 1.0 / m_weak]])
        matching = Matching.from_pairs(2, 1, [(0, 0), (0, 1)], 2, 1)
        weights = UserWeights(np.array([1.0, 2.0]))
        sol = solve_gp(build_gp(ch, matching, weights, budget))
        oracle = two_user_grid_oracle(m_strong, m_weak, 1.0, 2.0, budget)
        assert sol.objective >= oracle - 1e-3 * abs(oracle)
        assert abs(sol.objective - oracle) <= 1e-3 * abs(oracle)

    def test_empty_instance(self):
        ch = make_channel([[1.0]])
        matching = Matching.empty(1, 1, 1, 1)
        sol = solve_gp(build_gp(ch, matching, UserWeights.unit(1), 5.0))
        assert sol.objective == 0.0
        assert sol.powers.total() == 0.0

    def test_budget_saturation(self):
        rng = np.random.default_rng(8)
        for seed in range(20):
            r = np.random.default_rng(seed)
            cfg = SystemConfig(num_users=6, num_subchannels=3, df=2, dv=2, rng_seed=0)
            ch = generate_channel(cfg, r)
            matching = random_saturated_matching(cfg, r)
            weights = UserWeights(rng.uniform(0.5, 2.0, 6))
            sol = solve_gp(build_gp(ch, matching, weights, cfg.total_power_watts))
            assert sol.powers.total() == pytest.approx(
                cfg.total_power_watts, rel=1e-6
            )
            assert sol.kkt_residual <= 1e-6

    def test_beats_equal_power(self):
        for seed in range(20):
            r = np.random.default_rng(seed)
            cfg = SystemConfig(num_users=6, num_subchannels=3, df=2, dv=2, rng_seed=0)
            ch = generate_channel(cfg, r)
            matching = random_saturated_matching(cfg, r)
            weights = UserWeights(r.uniform(0.5, 2.0, 6))
            sol = solve_gp(build_gp(ch, matching, weights, cfg.total_power_watts))
            baseline = total_utility(
                ch, matching, equal_power(matching, cfg.total_power_watts), weights
            )
            assert sol.objective >= baseline - 1e-9

    def test_transformed_constraint_satisfied(self):
        r = np.random.default_rng(15)
        cfg = SystemConfig(num_users=5, num_subchannels=3, df=2, dv=2, rng_seed=0)
        ch = generate_channel(cfg, r)
        matching = random_saturated_matching(cfg, r)
        inst = build_gp(ch, matching, UserWeights.unit(5), cfg.total_power_watts)
        sol = solve_gp(inst)
        bound = inst.budget + sum(f[-1] for f in inst.floors)
        assert transformed_power(inst, sol.rates) <= bound * (1.0 + 1e-8)

    def test_constraint_midpoint_convexity(self):
        r = np.random.default_rng(21)
        cfg = SystemConfig(num_users=5, num_subchannels=3, df=2, dv=2, rng_seed=0)
        ch = generate_channel(cfg, r)
        matching = random_saturated_matching(cfg, r)
        inst = build_gp(ch, matching, UserWeights.unit(5), cfg.total_power_watts)
        shape = (cfg.num_subchannels, cfg.num_users)
        mask = matching.assignment_matrix()
        for _ in range(30):
            r1 = np.where(mask, r.uniform(0.0, 5.0, shape), 0.0)
            r2 = np.where(mask, r.uniform(0.0, 5.0, shape), 0.0)
            mid = 0.5 * (r1 + r2)
            lhs = transformed_power(inst, mid)
            rhs = 0.5 * (transformed_power(inst, r1) + transformed_power(inst, r2))
            assert lhs <= rhs * (1.0 + 1e-12)


class TestRecoverPowers:
    def test_zero_rates_zero_powers(self):
        ch = make_channel([[1.0, 2.0]])
        matching = Matching.from_pairs(2, 1, [(0, 0), (0, 1)], 2, 1)
        inst = build_gp(ch, matching, UserWeights.unit(2), 4.0)
        power = recover_powers(inst, np.zeros((1, 2)))
        assert power.total() == 0.0

    def test_single_user_inversion(self):
        ch = make_channel([[2.0]])
        matching = Matching.from_pairs(1, 1, [(0, 0)], 1, 1)
        inst = build_gp(ch, matching, UserWeights.unit(1), 4.0)
        rates = np.array([[math.log2(1.0 + 4.0 / 0.5)]])
        power = recover_powers(inst, rates)
        assert power.p[0, 0] == pytest.approx(4.0, rel=1e-12)

    def test_round_trip_rates_to_powers_to_rates(self):
        for seed in range(20):
            r = np.random.default_rng(seed)
            cfg = SystemConfig(num_users=6, num_subchannels=3, df=2, dv=2, rng_seed=0)
            ch = generate_channel(cfg, r)
            matching = random_saturated_matching(cfg, r)
            weights = UserWeights(r.uniform(0.5, 2.0, 6))
            sol = solve_gp(build_gp(ch, matching, weights, cfg.total_power_watts))
            alloc = Allocation.build(ch, matching, sol.powers, weights)
            np.testing.assert_allclose(alloc.rates, sol.rates, rtol=1e-6, atol=1e-12)

    def test_power_round_trip_from_arbitrary_powers(self):
        # powers -> per-user rates -> recovered powers reproduce channel totals
        for seed in range(20):
            r = np.random.default_rng(100 + seed)
            cfg = SystemConfig(num_users=5, num_subchannels=3, df=2, dv=2, rng_seed=0)
            ch = generate_channel(cfg, r)
            matching = random_saturated_matching(cfg, r)
            power = PowerAllocation(
                matching.assignment_matrix() * r.uniform(0.05, 2.0, (3, 5))
            )
            alloc = Allocation.build(ch, matching, power, UserWeights.unit(5))
            inst = build_gp(ch, matching, UserWeights.unit(5), cfg.total_power_watts)
            recovered = recover_powers(inst, alloc.rates)
            for k in range(3):
                np.testing.assert_allclose(
                    recovered.p[k].sum(), power.p[k].sum(), rtol=1e-9, atol=1e-15
                )

    def test_negative_rates_rejected(self):
        ch = make_channel([[1.0]])
        matching = Matching.from_pairs(1, 1, [(0, 0)], 1, 1)
        inst = build_gp(ch, matching, UserWeights.unit(1), 4.0)
        with pytest.raises(ModelError, match="infeasible rate"):
            recover_powers(inst, np.array([[-0.5]]))


class TestEqualPower:
    def test_four_pairs(self):
        matching = Matching.from_pairs(4, 2, [(0, 0), (0, 1), (1, 2), (1, 3)], 2, 1)
        power = equal_power(matching, 8.0)
        assert np.all(power.p[power.p > 0] == 2.0)
        assert power.total() == pytest.approx(8.0)

    def test_empty_matching(self):
        matching = Matching.empty(2, 2, 1, 1)
        assert equal_power(matching, 8.0).total() == 0.0

    def test_single_pair_gets_everything(self):
        matching = Matching.from_pairs(1, 1, [(0, 0)], 1, 1)
        assert equal_power(matching, 8.0).p[0, 0] == 8.0
