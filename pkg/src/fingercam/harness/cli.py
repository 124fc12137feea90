"""Command-line entry point.

Subcommands: collect, train, eval, replay, report, grid. Exit codes:
0 success, 2 configuration error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _load_exp(args):
    from .config import ExperimentConfig, _coerce

    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = _coerce(value.strip())
    if args.config:
        return ExperimentConfig.from_file(args.config, **overrides)
    return ExperimentConfig.from_dict(overrides)


def cmd_collect(args) -> int:
    from .pipeline import collect_demos

    exp = _load_exp(args)
    paths = collect_demos(exp)
    print(f"collected {len(paths)} demos under {paths[0].parent}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .pipeline import collect_demos, train_policy

    exp = _load_exp(args)
    demo_dir = Path(exp.out_dir) / "demos"
    if demo_dir.exists():
        paths = sorted(p for p in demo_dir.iterdir() if p.is_dir() and p.name.startswith("ep_"))
    else:
        paths = collect_demos(exp)
    ckpt = train_policy(exp, paths)
    print(f"checkpoint written to {ckpt}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evalrun import reports_to_table, run_eval

    exp = _load_exp(args)
    ckpt = args.checkpoint or str(Path(exp.out_dir) / "policy.ckpt")
    report = run_eval(ckpt, exp, label=args.label)
    out = Path(exp.out_dir) / "eval_report.json"
    report.save(out)
    print(reports_to_table([report]))
    print(f"report saved to {out}")
    return EXIT_OK


def cmd_replay(args) -> int:
    from .. import recorder
    from ..simworld import check_success, create_task, step

    store = recorder.load_store(args.store)
    meta = store.meta
    world = create_task(meta["task"], meta["scenario"], meta["seed"])
    commands = store.streams["commands"].frames
    renders = []
    for i, action in enumerate(commands):
        _, sensors = step(world, action, render=args.render)
        if args.render:
            renders.append(sensors.third_image)
    recorded_q = store.streams["joints"].frames
    resim_ok = True
    if recorded_q.shape[0] > 1:
        # joints stream holds the pre-step state; verify against re-simulation
        world2 = create_task(meta["task"], meta["scenario"], meta["seed"])
        qs = [world2.q.copy()]
        for action in commands[:-1]:
            step(world2, action, render=False)
            qs.append(world2.q.copy())
        resim_ok = bool(np.array_equal(np.asarray(qs), recorded_q))
    print(f"replayed {len(commands)} commands; success={check_success(world)}; trajectory_match={resim_ok}")
    if args.render and args.out:
        np.save(args.out, np.stack(renders))
        print(f"re-rendered third view saved to {args.out}")
    return EXIT_OK if resim_ok else EXIT_RUNTIME


def cmd_report(args) -> int:
    from .evalrun import EvalReport, reports_to_csv, reports_to_table

    reports = [EvalReport.load(p) for p in args.reports]
    print(reports_to_table(reports))
    if args.csv:
        reports_to_csv(reports, args.csv)
        print(f"csv written to {args.csv}")
    return EXIT_OK


def cmd_grid(args) -> int:
    from .evalrun import EvalReport
    from .grid import run_ablation_grid

    exp = _load_exp(args)
    results = run_ablation_grid(exp)
    failed = {k: v for k, v in results.items() if not isinstance(v, EvalReport)}
    for label, rep in results.items():
        if isinstance(rep, EvalReport):
            print(f"{label}: average {100 * rep.average_success_rate:.1f}%")
        else:
            print(f"{label}: {rep}")
    print(f"artifacts under {exp.out_dir}")
    return EXIT_RUNTIME if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fingercam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config file (key = value format)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")

    p = sub.add_parser("collect", help="record scripted-expert demonstrations")
    common(p)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train", help="train a policy on collected demos")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint over seeded rollouts")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--label", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("replay", help="re-simulate a recorded episode store")
    p.add_argument("store")
    p.add_argument("--render", action="store_true")
    p.add_argument("--out", help="save re-rendered third-view frames (.npy)")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("report", help="merge evaluation reports into one table")
    p.add_argument("reports", nargs="+")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("grid", help="run the baseline/ablation grid")
    common(p)
    p.set_defaults(func=cmd_grid)
    return parser


def main(argv=None) -> int:
    from .config import ConfigError

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # runtime failure class
        logging.getLogger(__name__).exception("command failed")
        print(f"runtime failure: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
