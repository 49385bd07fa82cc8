"""Command-line interface: campaigns, the tiny-instance oracle, stability checks."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from .baselines import brute_force_joint
from .campaign import (
    SCHEMES,
    ScenarioSpec,
    Sweep,
    rows_to_csv,
    rows_to_json,
    run_campaign,
)
from .channel import generate_channel
from .configio import ConfigError, load_scenario
from .model import Matching, ModelError, UserWeights
from .swaps import is_two_sided_exchange_stable

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _parse_sweep(text: str) -> Sweep:
    if "=" not in text:
        raise ConfigError("sweep must look like VAR=v1,v2,...")
    variable, _, values = text.partition("=")
    try:
        parsed = tuple(int(v) for v in values.split(",") if v != "")
    except ValueError as exc:
        raise ConfigError(f"bad sweep values: {exc}") from exc
    if not parsed:
        raise ConfigError("sweep needs at least one value")
    try:
        return Sweep(variable.strip(), parsed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _write_output(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")


def _load_spec(args: argparse.Namespace) -> ScenarioSpec:
    spec = load_scenario(args.config)
    if getattr(args, "scheme", None):
        try:
            spec = replace(spec, scheme=args.scheme)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if getattr(args, "sweep", None):
        spec = replace(spec, sweep=_parse_sweep(args.sweep))
    return spec


def _cmd_run(args: argparse.Namespace) -> int:
    spec = _load_spec(args)
    result = run_campaign(
        spec,
        base_seed=args.seed,
        parallel=args.parallel,
        log=lambda msg: print(f"warning: {msg}", file=sys.stderr),
    )
    if result.failures:
        print(
            f"warning: {result.failures}/{result.attempted} trials failed",
            file=sys.stderr,
        )
    if result.failures >= result.attempted:
        print("error: every trial failed", file=sys.stderr)
        return EXIT_RUNTIME
    text = rows_to_csv(result.rows) if args.format == "csv" else rows_to_json(result.rows)
    _write_output(text, args.out)
    return EXIT_OK


def _cmd_oracle(args: argparse.Namespace) -> int:
    spec = _load_spec(args)
    config = spec.system
    seed = args.seed if args.seed is not None else config.rng_seed
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0, 0)))
    ch = generate_channel(config, rng)
    try:
        allocation = brute_force_joint(ch, config, power_grid_steps=args.grid_steps)
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    payload = {
        "utility": allocation.total_utility,
        "user_to_subs": [sorted(s) for s in allocation.matching.user_to_subs],
        "powers_watts": allocation.power.p.tolist(),
        "rates_bps_hz": allocation.rates.tolist(),
    }
    _write_output(json.dumps(payload, indent=2), args.out)
    return EXIT_OK


def _cmd_stability_check(args: argparse.Namespace) -> int:
    spec = _load_spec(args)
    config = spec.system
    try:
        saved = json.loads(Path(args.matching).read_text())
        user_to_subs = saved["user_to_subs"]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise ConfigError(f"cannot read matching file: {exc}") from exc
    try:
        matching = Matching.from_pairs(
            config.num_users,
            config.num_subchannels,
            [(k, j) for j, subs in enumerate(user_to_subs) for k in subs],
            config.df,
            config.dv,
        )
    except (ModelError, IndexError, TypeError) as exc:
        raise ConfigError(f"bad matching: {exc}") from exc
    seed = args.seed if args.seed is not None else config.rng_seed
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0, 0)))
    ch = generate_channel(config, rng)
    stable, witness = is_two_sided_exchange_stable(
        ch,
        matching,
        UserWeights.unit(config.num_users),
        config.phase_power(),
        eps=config.eps_swap,
    )
    payload = {
        "stable": stable,
        "witness": None
        if witness is None
        else {
            "user_i": witness.user_i,
            "user_j": witness.user_j,
            "sub_p": witness.sub_p,
            "sub_q": witness.sub_q,
        },
    }
    _write_output(json.dumps(payload, indent=2), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noma-jspa",
        description="Downlink NOMA sub-channel assignment and power allocation simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="scenario YAML file")
        p.add_argument("--seed", type=int, default=None, help="campaign base seed")
        p.add_argument("--out", default=None, help="output file (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--parallel", type=int, default=1, help="worker processes")
        p.add_argument("--scheme", choices=SCHEMES, default=None)
        p.add_argument("--sweep", default=None, help="e.g. M=10,20,30")

    p_run = sub.add_parser("run", help="run a Monte-Carlo campaign")
    common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_oracle = sub.add_parser("oracle", help="brute-force one tiny instance")
    common(p_oracle)
    p_oracle.add_argument(
        "--grid-steps",
        type=int,
        default=0,
        help="power grid steps per pair (0 = convex solver)",
    )
    p_oracle.set_defaults(func=_cmd_oracle)

    p_stab = sub.add_parser("stability-check", help="certify a saved matching")
    common(p_stab)
    p_stab.add_argument("matching", help="JSON file with a 'user_to_subs' list")
    p_stab.set_defaults(func=_cmd_stability_check)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModelError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
