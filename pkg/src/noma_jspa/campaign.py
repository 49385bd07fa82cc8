"""Monte-Carlo campaign runner, metrics, and machine-readable output."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .baselines import (
    FtpcConfig,
    brute_force_joint,
    ofdma_baseline,
    prop2_relaxed_optimum,
    ra_noma,
    ug_ftpc,
)
from .channel import generate_channel
from .jspa import JspaConfig, jspa_run, update_weights
from .model import Allocation, ModelError, SystemConfig, UserWeights
from .usma import Usma2Config

SCHEMES = ("jspa1", "jspa2", "ra_noma", "ug_ftpc", "ofdma", "prop2", "brute_force")
SWEEP_VARIABLES = ("M", "d_f", "d_v")
CSV_HEADER = (
    "scheme,sweep_var,sweep_value,trials,spectral_eff_mean,spectral_eff_std,"
    "sched_users_mean,jain_mean,outer_iters_mean,swap_count_mean"
)


@dataclass(frozen=True)
class Sweep:
    variable: str
    values: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.variable not in SWEEP_VARIABLES:
            raise ModelError(f"unknown sweep variable {self.variable!r}")
        if not self.values:
            raise ModelError("sweep needs at least one value")


@dataclass(frozen=True)
class ScenarioSpec:
    system: SystemConfig = field(default_factory=SystemConfig)
    scheme: str = "jspa1"
    num_trials: int = 1
    num_slots: int = 30
    sweep: Optional[Sweep] = None
    jspa: JspaConfig = field(default_factory=JspaConfig)
    ftpc: FtpcConfig = field(default_factory=FtpcConfig)
    ofdma_subchannels: int = 25

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ModelError(f"unknown scheme {self.scheme!r}")
        if self.num_trials < 1 or self.num_slots < 1:
            raise ModelError("num_trials and num_slots must be >= 1")
        if self.sweep is not None:
            for value in self.sweep.values:
                apply_sweep(self.system, self.sweep.variable, value)


@dataclass(frozen=True)
class MetricsRow:
    scheme: str
    sweep_var: str
    sweep_value: int
    trials: int
    spectral_eff_mean: float
    spectral_eff_std: float
    sched_users_mean: float
    jain_mean: float
    outer_iters_mean: float
    swap_count_mean: float


@dataclass(frozen=True)
class TrialStats:
    """Raw per-trial aggregates, kept for statistical post-processing."""

    spectral_eff: float          # mean over slots of sum-rate / K, bps/Hz
    sched_users: float
    jain: float
    outer_iters: float
    swap_count: float
    slot_spectral_eff: tuple[float, ...]


@dataclass(frozen=True)
class CampaignResult:
    rows: list[MetricsRow]
    trial_stats: dict[int, list[TrialStats]]
    failures: int
    attempted: int


def jain_index(avg_rates: np.ndarray, denominator_size: Optional[int] = None) -> float:
    """Fairness index in (0, 1]: 1 when all users average the same rate."""
    rates = np.asarray(avg_rates, dtype=float)
    total = float(rates.sum())
    if total <= 0.0:
        raise ModelError("no throughput: all average rates are zero")
    n = len(rates) if denominator_size is None else denominator_size
    return total**2 / (n * float((rates**2).sum()))


def scheduled_user_count(
    allocation: Allocation, total_power: Optional[float] = None
) -> int:
    """Users holding at least one matched sub-channel with non-trivial power."""
    budget = allocation.power.total() if total_power is None else total_power
    eps = 1e-9 * budget
    served = 0
    for j, subs in enumerate(allocation.matching.user_to_subs):
        if any(allocation.power.p[k, j] > eps for k in subs):
            served += 1
    return served


def apply_sweep(config: SystemConfig, variable: str, value: int) -> SystemConfig:
    if variable == "M":
        return config.replace(num_users=value)
    if variable == "d_f":
        return config.replace(df=value)
    if variable == "d_v":
        return config.replace(dv=value)
    raise ModelError(f"unknown sweep variable {variable!r}")


def _trial_rng(base_seed: int, sweep_value: int, trial: int) -> np.random.Generator:
    seq = np.random.SeedSequence((base_seed & 0xFFFFFFFFFFFFFFFF, sweep_value, trial))
    return np.random.default_rng(seq)


def run_trial(spec: ScenarioSpec, sweep_value: int, trial: int, base_seed: int) -> TrialStats:
    """One seeded trial: num_slots slots of the configured scheme."""
    variable = spec.sweep.variable if spec.sweep else "M"
    config = apply_sweep(spec.system, variable, sweep_value) if spec.sweep else spec.system
    rng = _trial_rng(base_seed, sweep_value, trial)
    m = config.num_users
    jspa_cfg = replace(spec.jspa, variant=spec.scheme) if spec.scheme in ("jspa1", "jspa2") else None

    history: list[np.ndarray] = []
    avg_rates = np.ones(m)
    slot_se: list[float] = []
    sched: list[int] = []
    outer: list[float] = []
    swaps: list[float] = []
    for _ in range(spec.num_slots):
        weights = update_weights(avg_rates, config.weight_scale)
        if spec.scheme in ("jspa1", "jspa2"):
            ch = generate_channel(config, rng)
            report = jspa_run(ch, config, weights, jspa_cfg, rng)
            allocation = report.allocation
            outer.append(report.outer_iters)
            swaps.append(report.total_swaps)
            k_used = config.num_subchannels
        elif spec.scheme == "ra_noma":
            ch = generate_channel(config, rng)
            allocation = ra_noma(ch, config, rng)
            k_used = config.num_subchannels
        elif spec.scheme == "ug_ftpc":
            ch = generate_channel(config, rng)
            allocation = ug_ftpc(ch, config, spec.ftpc)
            k_used = config.num_subchannels
        elif spec.scheme == "ofdma":
            k_used = spec.ofdma_subchannels
            ch = generate_channel(config, rng, num_subchannels=k_used)
            ofdma_config = config.replace(num_subchannels=k_used, df=1)
            allocation = ofdma_baseline(ch, ofdma_config, weights)
        elif spec.scheme == "prop2":
            ch = generate_channel(config, rng)
            allocation = prop2_relaxed_optimum(ch, config)
            k_used = config.num_subchannels
        elif spec.scheme == "brute_force":
            ch = generate_channel(config, rng)
            allocation = brute_force_joint(ch, config, weights=weights)
            k_used = config.num_subchannels
        else:  # pragma: no cover - guarded by ScenarioSpec
            raise ModelError(f"unknown scheme {spec.scheme!r}")
        raw_sum_rate = float(allocation.rates.sum())
        slot_se.append(raw_sum_rate / k_used)
        sched.append(scheduled_user_count(allocation, config.total_power_watts))
        per_user = allocation.per_user_rates()
        history.append(per_user)
        window = history[-config.avg_window_slots:]
        avg_rates = np.mean(window, axis=0)

    trial_avg_rates = np.mean(history, axis=0)
    denom = config.num_subchannels if config.jain_paper_denominator else None
    jain = jain_index(trial_avg_rates, denom)
    return TrialStats(
        spectral_eff=float(np.mean(slot_se)),
        sched_users=float(np.mean(sched)),
        jain=jain,
        outer_iters=float(np.mean(outer)) if outer else 0.0,
        swap_count=float(np.mean(swaps)) if swaps else 0.0,
        slot_spectral_eff=tuple(slot_se),
    )


def _run_task(args: tuple) -> tuple[int, int, Optional[TrialStats], Optional[str]]:
    spec, sweep_value, trial, base_seed = args
    try:
        return sweep_value, trial, run_trial(spec, sweep_value, trial, base_seed), None
    except Exception as exc:  # noqa: BLE001 - campaign keeps going on trial failures
        return sweep_value, trial, None, f"{type(exc).__name__}: {exc}"


def run_campaign(
    spec: ScenarioSpec,
    base_seed: Optional[int] = None,
    parallel: int = 1,
    log: Optional[Callable[[str], None]] = None,
) -> CampaignResult:
    """Run every (sweep value, trial) cell and aggregate the metrics.

    Per-trial seeds derive from (base seed, sweep value, trial), so results
    do not depend on execution order or worker count. Failed trials are
    logged and skipped; the failure count is reported.
    """
    if base_seed is None:
        base_seed = spec.system.rng_seed
    if spec.sweep is not None:
        sweep_var = spec.sweep.variable
        values = list(spec.sweep.values)
    else:
        sweep_var = "none"
        values = [0]
    tasks = [
        (spec, value, trial, base_seed)
        for value in values
        for trial in range(spec.num_trials)
    ]
    results: list[tuple[int, int, Optional[TrialStats], Optional[str]]] = []
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(task) for task in tasks]
    results.sort(key=lambda item: (item[0], item[1]))

    stats_by_value: dict[int, list[TrialStats]] = {v: [] for v in values}
    failures = 0
    for value, trial, stats, error in results:
        if stats is None:
            failures += 1
            if log is not None:
                log(f"trial {trial} at {sweep_var}={value} failed: {error}")
            continue
        stats_by_value[value].append(stats)

    rows: list[MetricsRow] = []
    for value in values:
        stats = stats_by_value[value]
        if not stats:
            continue
        se = np.array([s.spectral_eff for s in stats])
        rows.append(
            MetricsRow(
                scheme=spec.scheme,
                sweep_var=sweep_var,
                sweep_value=value,
                trials=len(stats),
                spectral_eff_mean=float(se.mean()),
                spectral_eff_std=float(se.std(ddof=1)) if len(se) > 1 else 0.0,
                sched_users_mean=float(np.mean([s.sched_users for s in stats])),
                jain_mean=float(np.mean([s.jain for s in stats])),
                outer_iters_mean=float(np.mean([s.outer_iters for s in stats])),
                swap_count_mean=float(np.mean([s.swap_count for s in stats])),
            )
        )
    return CampaignResult(rows, stats_by_value, failures, len(tasks))


def rows_to_csv(rows: list[MetricsRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER.split(","))
    for row in rows:
        writer.writerow(
            [
                row.scheme,
                row.sweep_var,
                row.sweep_value,
                row.trials,
                repr(row.spectral_eff_mean),
                repr(row.spectral_eff_std),
                repr(row.sched_users_mean),
                repr(row.jain_mean),
                repr(row.outer_iters_mean),
                repr(row.swap_count_mean),
            ]
        )
    return buffer.getvalue()


def rows_to_json(rows: list[MetricsRow]) -> str:
    header = CSV_HEADER.split(",")
    payload = [
        {
            key: getattr(row, key)
            for key in header
        }
        for row in rows
    ]
    return json.dumps(payload, indent=2)
