"""Command-line entry points: serve, replay, power, trial, metrics, scenario."""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from dataclasses import asdict

from .errors import ArmTwinError
from .kinematics import load_builtin_chain, load_chain_file
from .perception_types import PerceptionConfig
from .scenarios import SCENARIOS, probe_configs_for, run_scenario
from .session import HOME_CONFIGS, Session, replay
from .study import (
    export_metrics,
    finalize_trial,
    forced_miss_for,
    generate_trial,
    required_sample_size,
    trial_slices,
    TrialSpec,
)
from .world import load_world_file


def _load_chain_for(world, chain_path: str | None):
    if chain_path:
        return load_chain_file(chain_path)
    return load_builtin_chain(world.chain_name)


def cmd_serve(args) -> int:
    from .server import TwinServer

    world = load_world_file(args.world)
    chain = _load_chain_for(world, args.chain)
    spec = None
    forced = frozenset()
    if args.trial_object:
        spec = TrialSpec(1, args.world, args.trial_object, "screen", args.seed)
        forced = forced_miss_for(spec)
    cfg = PerceptionConfig(seed=args.seed, forced_miss=forced)
    session = Session(world, chain, cfg, session_seed=args.seed)
    server = TwinServer(
        session, args.log, host=args.host, ws_port=args.port, tcp_port=args.port + 1
    )

    async def main() -> None:
        await server.start()
        print(f"ws://{args.host}:{server.ws_port}  tcp {args.host}:{server.tcp_port}")
        print(f"log: {args.log}")
        try:
            await asyncio.Event().wait()
        except asyncio.CancelledError:
            pass
        finally:
            await server.stop()

    try:
        asyncio.run(main())
    except KeyboardInterrupt:
        pass
    return 0


def cmd_replay(args) -> int:
    world = load_world_file(args.world)
    with open(args.log, encoding="utf-8") as fh:
        log_text = fh.read()
    report = replay(log_text, world)
    print(f"recorded digest: {report.recorded_digest}")
    print(f"computed digest: {report.computed_digest}")
    if report.matches:
        print("replay ok")
        return 0
    print("replay MISMATCH")
    return 2


def cmd_power(args) -> int:
    n = required_sample_size(args.alpha, args.power, args.d)
    print(n)
    return 0


def cmd_trial(args) -> int:
    world = load_world_file(args.world)
    chain = _load_chain_for(world, args.chain)
    home = HOME_CONFIGS.get(chain.name, (0.0,) * chain.n_joints)
    targets = [(0.42, 0.0, 0.5), (0.42, -0.25, 0.45), (0.35, 0.25, 0.45)]
    probes = probe_configs_for(chain, targets, args.seed, home)
    spec = generate_trial(
        world, args.index, args.seed, probes,
        world_name=args.world, chain=chain,
    )
    print(json.dumps(asdict(spec), indent=2))
    return 0


def cmd_metrics(args) -> int:
    world = load_world_file(args.world)
    with open(args.log, encoding="utf-8") as fh:
        report = replay(fh.read(), world)
    session = report.session
    records = []
    for slice_ in trial_slices(session.applied):
        marker = slice_[0][1].payload
        spec = TrialSpec(
            trial_index=marker.trial_index,
            world_name=args.world,
            forced_miss_object=marker.forced_miss_object or "",
            interface_label=marker.interface_label or "screen",
            seed=session.session_seed,
        )
        records.append(
            finalize_trial(slice_, spec, world, participant=args.participant)
        )
    sys.stdout.write(export_metrics(records))
    return 0


def cmd_scenario(args) -> int:
    outcome = run_scenario(args.name, args.seed, log_path=args.log)
    print(f"outcome: {outcome.result.outcome}")
    print(f"correction_method: {outcome.record.correction_method}")
    print(f"log: {outcome.log_path}")
    expected = {
        "undetected_obstacle_uncorrected": ("collision", "none"),
        "undetected_obstacle_object_adder": ("success", "manual_add"),
        "undetected_obstacle_camera_mover": ("success", "camera_move"),
    }[args.name]
    actual = (outcome.result.outcome, outcome.record.correction_method)
    if actual == expected:
        return 0
    print(f"expected {expected}, got {actual}", file=sys.stderr)
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="armtwin",
        description="Digital-twin tabletop arm with operator-corrected perception",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the live operator service")
    p.add_argument("--world", required=True)
    p.add_argument("--chain", default=None, help="chain file (default: world's built-in)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--port", type=int, default=8765, help="WebSocket port; TCP is port+1")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--log", required=True)
    p.add_argument("--trial-object", default=None,
                   help="inject a forced miss of this object on the main camera")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("replay", help="replay a command log and verify digests")
    p.add_argument("--log", required=True)
    p.add_argument("--world", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("power", help="a-priori sample size for a paired design")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--power", type=float, required=True)
    p.add_argument("--d", type=float, required=True)
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("trial", help="generate a failure-injected trial spec")
    p.add_argument("--world", required=True)
    p.add_argument("--chain", default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--index", type=int, required=True)
    p.set_defaults(func=cmd_trial)

    p = sub.add_parser("metrics", help="per-trial metrics CSV from a command log")
    p.add_argument("--log", required=True)
    p.add_argument("--world", required=True)
    p.add_argument("--participant", default="p00")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("scenario", help="run a golden scenario end to end")
    p.add_argument("--name", required=True, choices=sorted(SCENARIOS))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--log", default=None)
    p.set_defaults(func=cmd_scenario)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ArmTwinError as exc:
        print(f"error [{exc.code()}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
