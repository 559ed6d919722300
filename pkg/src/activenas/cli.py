"""Command-line surface: grid inspection, runs, comparison, reports.

Exit codes: 0 success, 1 usage error, 2 data or config validation error,
3 training divergence.  ACTIVENAS_OUT sets the default output root for
`run` when --out is not given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .data import load_csv, load_idx, make_pool, synth_blobs
from .errors import ConfigError, DataError, TrainingDivergedError
from .loop import RunConfig, run_active, save_run
from .report import edges_text, grid_svg, load_curves, report, summarize
from .space import (
    ArchPoint,
    BlockSpec,
    SearchGrid,
    capacity_report,
    verify_reachability,
)
from .train import TrainConfig

OUT_ENV = "ACTIVENAS_OUT"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="activenas",
        description="incremental architecture search under an active labeling budget",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("space", help="inspect the architecture grid")
    p.add_argument("--blocks", type=int, default=12, help="max blocks per stack")
    p.add_argument("--stacks", type=int, default=5, help="max number of stacks")
    p.add_argument("--beta", type=int, default=2)
    p.add_argument("--alpha", type=int, default=2)
    p.add_argument("--width", type=int, default=64, help="stack-1 width")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--input-dim", type=int, default=3072)
    p.add_argument("--out", type=Path, help="write edges.txt and grid.svg here")
    p.set_defaults(func=_cmd_space)

    p = sub.add_parser("run", help="execute one active run from a JSON config")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", type=Path, help="output directory for run artifacts")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("compare", help="AUC table for finished runs at one budget")
    p.add_argument("--runs", type=Path, nargs="+", required=True)
    p.add_argument("--budget", type=float, required=True)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("report", help="render curves and summary for finished runs")
    p.add_argument("--runs", type=Path, nargs="+", required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_report)
    return parser


def _cmd_space(args) -> int:
    block = BlockSpec(beta=args.beta, alpha=args.alpha, base_width=args.width)
    grid = SearchGrid(block, args.blocks, args.stacks)
    print(f"{'i':>3} {'j':>3} {'depth':>6} {'params':>12} {'units':>8} "
          f"{'lbar':>8} {'capacity':>14}")
    for node in grid.points():
        cap = capacity_report(grid, node, (args.input_dim,), args.classes)
        print(
            f"{node.i:>3} {node.j:>3} {cap.depth_layers:>6} {cap.params_w:>12} "
            f"{cap.units_u:>8} {cap.lbar:>8.3f} {cap.score:>14.4g}"
        )
    ok, unreachable = verify_reachability(grid)
    if ok:
        print(f"reachability: all {args.blocks * args.stacks} nodes reachable from (1,1)")
    else:
        print(f"reachability: UNREACHABLE nodes {sorted(unreachable)}")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "edges.txt").write_text(edges_text(grid))
        (args.out / "grid.svg").write_text(grid_svg(grid))
        print(f"wrote {args.out / 'edges.txt'} and {args.out / 'grid.svg'}")
    return 0


def _train_cfg_from(raw: dict) -> TrainConfig:
    raw = dict(raw)
    if "lr_decay_epochs" in raw:
        raw["lr_decay_epochs"] = tuple(raw["lr_decay_epochs"])
    try:
        return TrainConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad train_cfg: {exc}") from exc


def _run_cfg_from(raw: dict) -> RunConfig:
    raw = dict(raw)
    if "train_cfg" in raw:
        raw["train_cfg"] = _train_cfg_from(raw["train_cfg"])
    if raw.get("candidate_train_cfg") is not None:
        raw["candidate_train_cfg"] = _train_cfg_from(raw["candidate_train_cfg"])
    if "batch_schedule" in raw:
        raw["batch_schedule"] = tuple(tuple(entry) for entry in raw["batch_schedule"])
    try:
        return RunConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"bad run config: {exc}") from exc


def _dataset_from(raw: dict):
    kind = raw.get("kind")
    if kind == "blobs":
        return synth_blobs(
            n_classes=raw.get("n_classes", 4),
            dim=raw.get("dim", 8),
            n_per_class=raw.get("n_per_class", 500),
            spread=raw.get("spread", 1.0),
            seed=raw.get("seed", 0),
        )
    if kind == "csv":
        return load_csv(raw["path"])
    if kind == "idx":
        return load_idx(raw["images"], raw["labels"])
    raise ConfigError(f"unknown dataset kind {kind!r} (blobs, csv, idx)")


def _cmd_run(args) -> int:
    with open(args.config) as fh:
        raw = json.load(fh)
    if "run" not in raw or "dataset" not in raw:
        raise ConfigError("config needs 'dataset' and 'run' sections")
    cfg = _run_cfg_from(raw["run"])
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)

    block_raw = {"beta": 2, "alpha": 2, "base_width": 16, **raw.get("block", {})}
    block = BlockSpec(**block_raw)
    space_raw = {"n_blocks": 3, "n_stacks": 3, **raw.get("space", {})}
    grid = SearchGrid(block, **space_raw)
    dropout = raw.get("dropout_rate", 0.1)

    dataset = _dataset_from(raw["dataset"])
    pool, oracle, test = make_pool(
        dataset, cfg.seed, raw.get("test_fraction", 0.25)
    )

    if "a0" in raw:
        a0 = ArchPoint(*raw["a0"])
    elif cfg.arch_mode == "fixed":
        a0 = grid.largest
    else:
        a0 = ArchPoint(1, 1)

    if args.out is not None:
        out_dir = args.out
    else:
        root = Path(os.environ.get(OUT_ENV, "runs"))
        name = raw.get("name", dataset.name)
        mode = "" if cfg.arch_mode == "search" else f"-{cfg.arch_mode}"
        out_dir = root / f"{name}-{cfg.strategy}{mode}-s{cfg.seed}"

    checkpoints = out_dir / "checkpoints" if raw.get("save_checkpoints") else None
    records, model = run_active(
        pool, oracle, test, a0, grid, cfg,
        dropout_rate=dropout, checkpoint_dir=checkpoints,
    )
    for r in records:
        print(
            f"round {r.round:>3}  labels {r.labels_used:>6}  "
            f"arch ({r.arch.i},{r.arch.j}) depth {r.depth:>3}  "
            f"test_error {r.test_error:.4f}  [{r.wall_time_s:.1f}s]"
        )
    info = {
        "config": raw,
        "seed": cfg.seed,
        "strategy": cfg.strategy,
        "arch_mode": cfg.arch_mode,
    }
    save_run(records, out_dir, info, final_model=model)
    print(f"wrote {out_dir}")
    return 0


def _print_table(rows: list[dict]):
    if not rows:
        return
    cols = list(rows[0].keys())
    rendered = [
        {
            c: (f"{v:.6f}" if isinstance(v, float) else str(v))
            for c, v in row.items()
        }
        for row in rows
    ]
    widths = {c: max(len(c), *(len(r[c]) for r in rendered)) for c in cols}
    print("  ".join(c.ljust(widths[c]) for c in cols))
    for r in rendered:
        print("  ".join(r[c].ljust(widths[c]) for c in cols))


def _cmd_compare(args) -> int:
    curves = load_curves(args.runs)
    for curve in sorted(curves, key=lambda c: c.name):
        from .curves import auc

        print(
            f"{curve.name}: strategy={curve.strategy or '?'} "
            f"arch_mode={curve.arch_mode or '?'} "
            f"auc@{args.budget:g}={auc(curve, args.budget):.4f}"
        )
    print()
    _print_table(summarize(curves, args.budget))
    return 0


def _cmd_report(args) -> int:
    rows = report(args.runs, args.out)
    _print_table(rows)
    print(f"wrote {args.out}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, DataError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
