"""Downlink NOMA resource allocation: swap matching, convex power allocation,
baselines, and a Monte-Carlo evaluation harness."""

from .baselines import (
    FtpcConfig,
    brute_force_joint,
    ofdma_baseline,
    prop2_relaxed_optimum,
    ra_noma,
    ug_ftpc,
)
from .campaign import (
    CampaignResult,
    MetricsRow,
    ScenarioSpec,
    Sweep,
    jain_index,
    run_campaign,
    scheduled_user_count,
)
from .channel import cost231_hata_pathloss_db, generate_channel
from .configio import ConfigError, load_scenario
from .jspa import JspaConfig, JspaReport, jspa_run, run_slots, update_weights
from .model import (
    Allocation,
    ChannelRealization,
    Matching,
    ModelError,
    PowerAllocation,
    SystemConfig,
    UserWeights,
    Violation,
    decoding_order,
    random_saturated_matching,
    subchannel_rate,
    total_utility,
    user_interference,
    user_rate,
    validate,
)
from .powergp import (
    GpInstance,
    GpSolution,
    build_gp,
    equal_power,
    gp_allocation,
    recover_powers,
    solve_gp,
)
from .swaps import (
    VACANT,
    SwapProposal,
    SwapVerdict,
    apply_swap,
    corollary1_fast_approve,
    enumerate_swaps,
    evaluate_swap,
    is_two_sided_exchange_stable,
)
from .usma import (
    Usma1Report,
    Usma2Config,
    Usma2Report,
    annealing_probability,
    usma1_initialize,
    usma1_run,
    usma2_run,
)

__all__ = [name for name in dir() if not name.startswith("_")]
