"""Joint loop: alternate sub-channel matching with convex power allocation.

Each outer iteration re-solves the matching under the flat phase power, then
optimizes powers for the resulting matching. A candidate is adopted only if
it improves the utility of the incumbent allocation, so the recorded utility
trace never decreases; a non-improving iteration means the loop has
converged. Proportional-fair weights are refreshed between slots from each
user's windowed average rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import (
    Allocation,
    ChannelRealization,
    Matching,
    ModelError,
    SystemConfig,
    UserWeights,
    random_saturated_matching,
    validate,
)
from .powergp import build_gp, equal_power, solve_gp
from .usma import Usma2Config, usma1_initialize, usma1_run, usma2_run

RATE_FLOOR = 1e-6  # bps/Hz; keeps weights finite for never-served users


@dataclass(frozen=True)
class JspaConfig:
    variant: str = "jspa1"                 # "jspa1" or "jspa2"
    max_outer_iters: int = 50
    convergence_tol: float = 1e-4          # relative utility change
    usma2: Usma2Config = field(default_factory=Usma2Config)

    def __post_init__(self) -> None:
        if self.variant not in ("jspa1", "jspa2"):
            raise ModelError(f"unknown JSPA variant {self.variant!r}")
        if self.max_outer_iters < 1:
            raise ModelError("max_outer_iters must be >= 1")
        if self.convergence_tol <= 0:
            raise ModelError("convergence_tol must be positive")


@dataclass(frozen=True)
class JspaReport:
    allocation: Allocation
    outer_iters: int
    utility_trace: list[float]   # incumbent utility: start, then one entry per iteration
    converged: bool
    total_swaps: int


def update_weights(avg_rates: np.ndarray, scale: float) -> UserWeights:
    """Proportional-fair weights: inversely proportional to average rates."""
    if scale <= 0:
        raise ModelError("weight scale must be positive")
    rates = np.asarray(avg_rates, dtype=float)
    return UserWeights(scale / np.maximum(rates, RATE_FLOOR))


def _optimize_powers(
    ch: ChannelRealization,
    config: SystemConfig,
    matching: Matching,
    weights: UserWeights,
) -> Allocation:
    instance = build_gp(ch, matching, weights, config.total_power_watts)
    solution = solve_gp(instance)
    return Allocation.build(ch, matching, solution.powers, weights)


def jspa_run(
    ch: ChannelRealization,
    config: SystemConfig,
    weights: UserWeights,
    jspa_cfg: JspaConfig,
    rng: Optional[np.random.Generator] = None,
) -> JspaReport:
    """Run the alternating matching / power-allocation loop for one slot."""
    if jspa_cfg.variant == "jspa2" and rng is None:
        raise ModelError("jspa2 needs a random generator")
    if jspa_cfg.variant == "jspa1":
        matching = usma1_initialize(ch, config, weights)
    else:
        matching = random_saturated_matching(config, rng)
    incumbent = Allocation.build(
        ch, matching, equal_power(matching, config.total_power_watts), weights
    )
    trace = [incumbent.total_utility]
    converged = False
    total_swaps = 0
    outer = 0
    for outer in range(1, jspa_cfg.max_outer_iters + 1):
        if jspa_cfg.variant == "jspa1":
            report = usma1_run(ch, config, weights, start=incumbent.matching)
            total_swaps += report.swap_count
            matching = report.final_matching
        else:
            report2 = usma2_run(ch, config, weights, jspa_cfg.usma2, rng)
            matching = report2.best_matching
        candidate = _optimize_powers(ch, config, matching, weights)
        violations = validate(config, candidate.matching, candidate.power)
        if violations:
            raise ModelError(f"infeasible iterate: {violations[0].detail}")
        previous = incumbent.total_utility
        if candidate.total_utility > previous:
            incumbent = candidate
            trace.append(candidate.total_utility)
            rel = (candidate.total_utility - previous) / max(abs(previous), 1e-300)
            if rel < jspa_cfg.convergence_tol:
                converged = True
                break
        else:
            # No progress from a fresh matching + power solve: converged.
            trace.append(previous)
            converged = True
            break
    return JspaReport(incumbent, outer, trace, converged, total_swaps)


def run_slots(
    ch_sequence: Sequence[ChannelRealization],
    config: SystemConfig,
    jspa_cfg: JspaConfig,
    rng: Optional[np.random.Generator] = None,
) -> tuple[list[JspaReport], np.ndarray]:
    """Run consecutive slots, refreshing proportional-fair weights in between.

    Returns the per-slot reports and the final windowed average rates.
    """
    if not ch_sequence:
        raise ModelError("need at least one slot")
    history: list[np.ndarray] = []
    avg_rates = np.ones(config.num_users)
    reports: list[JspaReport] = []
    for ch in ch_sequence:
        weights = update_weights(avg_rates, config.weight_scale)
        report = jspa_run(ch, config, weights, jspa_cfg, rng)
        reports.append(report)
        history.append(report.allocation.per_user_rates())
        window = history[-config.avg_window_slots:]
        avg_rates = np.mean(window, axis=0)
    return reports, avg_rates
