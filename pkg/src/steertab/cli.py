"""Command-line entry points: ``steertab datagen|train|bench|serve``.

The library is importable on its own; these subcommands wrap the same
public functions for batch use.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import List, Optional, Sequence, Tuple

log = logging.getLogger("steertab")

DEFAULT_SCENARIO_MIX: Tuple[Tuple[str, int], ...] = (
    ("single_target", 400),
    ("single_target_pick", 100),
    ("obstacle", 150),
)


def _parse_scenarios(items: Sequence[str]) -> List[Tuple[str, int]]:
    out = []
    for item in items:
        name, _, count = item.partition(":")
        out.append((name, int(count) if count else 100))
    return out


def cmd_datagen(args: argparse.Namespace) -> int:
    from . import datagen

    scenarios = (_parse_scenarios(args.scenario) if args.scenario
                 else list(DEFAULT_SCENARIO_MIX))
    recipe = datagen.RecipeConfig(enable_probability=args.enable_probability)
    trajectories = datagen.collect_trajectories(scenarios, base_seed=args.seed)
    samples = datagen.build_dataset(trajectories, recipe, seed=args.seed)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    with open(args.out, "w") as f:
        f.write(datagen.samples_to_jsonl(samples))
    if args.stats:
        with open(args.stats, "w") as f:
            f.write(datagen.stats_csv(samples))
    hist = datagen.mode_histogram(samples)
    log.info("wrote %d samples to %s (modes: %s)", len(samples), args.out,
             json.dumps(hist, sort_keys=True))
    print(f"{len(samples)} samples -> {args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    from . import datagen, flow

    scenarios = (_parse_scenarios(args.scenario) if args.scenario
                 else list(DEFAULT_SCENARIO_MIX))
    recipe = datagen.RecipeConfig()
    trajectories = datagen.collect_trajectories(scenarios, base_seed=args.seed)
    samples = datagen.build_dataset(trajectories, recipe, seed=args.seed)
    conds, chunks = datagen.flow_training_set(samples)
    config = flow.TrainConfig(steps=args.steps, learning_rate=args.lr,
                              batch_size=args.batch_size, seed=args.seed)
    model, curve = flow.train((conds, chunks), config)
    flow.save_model(model, args.out)
    if args.loss_curve:
        flow.export_loss_curve(curve, args.loss_curve)
    print(f"trained on {len(chunks)} chunks, final loss {curve[-1]:.6f} -> {args.out}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    from . import bench, flow, runtime

    policy = runtime.Policy(flow.load_model(args.model))
    shifts = args.shift or list(bench.SHIFTS)
    modalities = args.modality or ["none", "point"]
    suites = []
    for shift in shifts:
        for modality in modalities:
            if modality == "trace" and shift != "obstacle":
                continue
            suites.append(bench.SuiteConfig(
                shift=shift, modality=modality,
                episodes=args.episodes, base_seed=args.seed))
    config = runtime.RuntimeConfig(chunk_stride=args.chunk_stride)
    report = bench.run_report(policy, suites, parallelism=args.parallelism,
                              config=config)
    written = bench.emit_report(report, args.out)
    if args.recovery:
        rows = bench.failure_recovery(report, policy, config=config)
        path = os.path.join(args.out, "recovery.csv")
        with open(path, "w") as f:
            f.write("cell,rerun,recovered,grounding_failures,grounding_recovered\n")
            for r in rows:
                f.write(f"{r.cell},{r.rerun},{r.recovered},"
                        f"{r.grounding_failures},{r.grounding_recovered}\n")
        written.append(path)
    print("\n".join(written))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from . import flow, gateway, runtime

    policy = runtime.Policy(flow.load_model(args.model))
    config = gateway.GatewayConfig(capacity=args.capacity, fast_hz=args.fast_hz)
    app = gateway.create_app(policy, config)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steertab",
        description="Steerable tabletop manipulation: data, training, "
                    "evaluation, and a live guidance gateway.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="generate annotated training samples")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.add_argument("--stats", help="optional stats CSV path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--enable-probability", type=float, default=0.5)
    p.add_argument("--scenario", action="append", metavar="NAME[:EPISODES]",
                   help="repeatable; default mix covers pick/place/obstacle")
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("train", help="train the flow-matching action head")
    p.add_argument("--out", required=True, help="model weights output path")
    p.add_argument("--loss-curve", help="optional loss-curve CSV path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=4000)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--scenario", action="append", metavar="NAME[:EPISODES]")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench", help="run the shift/guidance evaluation grid")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shift", action="append", help="repeatable; default all")
    p.add_argument("--modality", action="append",
                   help="repeatable; default none+point")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument("--chunk-stride", type=int, default=None,
                   help="replan after this many executed actions "
                        "(default: full chunk)")
    p.add_argument("--recovery", action="store_true",
                   help="also re-run failures with an oracle point prior")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve", help="serve live episodes over HTTP/WebSocket")
    p.add_argument("--model", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8321)
    p.add_argument("--capacity", type=int, default=16)
    p.add_argument("--fast-hz", type=float, default=10.0)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
