"""
Command-line Interface

    python -m lib run --config presets/toy.json
    python -m lib prune --config presets/toy.json --target-rate 0.3
    python -m lib membank build --run runs/toy --k 5
    python -m lib finetune --run runs/toy --kd-weight 1.0 --epochs 5
    python -m lib evaluate --run runs/toy
    python -m lib landscape cn --run runs/toy
    python -m lib landscape grid --run runs/toy --resolution 10
    python -m lib landscape correlate --run runs/toy --samples 8 --trials 3
    python -m lib report runs/a runs/b --out reports/
    python -m lib sweep --config presets/toy.json --rates 0.3,0.5 --seeds 3
    python -m lib serve --port 8000

Library errors exit with status 1 and a one-line message followed by the
error's details mapping; invalid configs exit with status 2.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from pydantic import ValidationError

from lib.errors import PhaseFailedError, PruningError
from lib.harness.config import apply_overrides, get_settings, load_config
from lib.utils.logging import setup_logging

logger = logging.getLogger(__name__)


def _rates(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Invalid rate list: {text}")


def _print(data: Any) -> None:
    print(json.dumps(data, indent=2, default=str))


def _config_and_dir(args: argparse.Namespace, overrides: Dict[str, Any]):
    """Config from --config or the run directory's config.json, with overrides."""
    from lib.harness.pipeline import load_run_config

    if getattr(args, "config", None):
        config = load_config(args.config)
    elif getattr(args, "run", None):
        config = load_run_config(args.run)
    else:
        raise PruningError("Either --config or --run is required")
    overrides = {key: value for key, value in overrides.items() if value is not None}
    if overrides:
        config = apply_overrides(config, overrides)
    return config, getattr(args, "run", None), bool(overrides)


def _pipeline(args: argparse.Namespace, overrides: Optional[Dict[str, Any]] = None):
    from lib.harness.pipeline import Pipeline

    config, run_dir, changed = _config_and_dir(args, overrides or {})
    return Pipeline(config, run_dir, allow_changes=changed or getattr(args, "allow_changes", False))


def _run_phase(args: argparse.Namespace, phase: str, overrides: Optional[Dict[str, Any]] = None):
    pipeline = _pipeline(args, overrides)
    manifest = pipeline.run(until=phase, phases=[phase] if args.force else None)
    _print({"run_dir": str(pipeline.run_dir), "phases": {k: v.status for k, v in manifest.phases.items()}})
    return pipeline


# Commands


def cmd_run(args: argparse.Namespace) -> int:
    pipeline = _pipeline(args)
    manifest = pipeline.run()
    _print({"run_dir": str(pipeline.run_dir), "manifest": manifest.to_dict()})
    return 0


def cmd_pretrain(args: argparse.Namespace) -> int:
    _run_phase(args, "pretrain")
    return 0


def cmd_prune(args: argparse.Namespace) -> int:
    _run_phase(args, "search", {"search.target_rate": args.target_rate})
    return 0


def cmd_membank(args: argparse.Namespace) -> int:
    _run_phase(args, "membank", {"membank.k": args.k, "membank.teachers": args.teachers})
    return 0


def cmd_finetune(args: argparse.Namespace) -> int:
    overrides = {"finetune.kd_weight": args.kd_weight, "finetune.epochs": args.epochs}
    if args.epochs is not None:
        # milestones past the new epoch count would fail validation
        config, _, _ = _config_and_dir(args, {})
        overrides["finetune.milestones"] = [m for m in config.finetune.milestones if m < args.epochs]
    _run_phase(args, "finetune", overrides)
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    from lib.harness.pipeline import load_evaluation

    pipeline = _run_phase(args, "evaluate")
    evaluation = load_evaluation(pipeline.run_dir)
    if evaluation is not None:
        _print(evaluation.to_dict())
    return 0


def _landscape_target(args: argparse.Namespace):
    from lib.netcore.checkpoint import load_network

    pipeline = _pipeline(args)
    checkpoint = Path(args.checkpoint) if args.checkpoint else pipeline.path("finetuned")
    out = Path(args.out) if args.out else pipeline.path("landscape")
    return pipeline, load_network(checkpoint, pipeline.device), out


def cmd_landscape_cn(args: argparse.Namespace) -> int:
    from lib.landscape.traverse import traverse_cn

    pipeline, network, out = _landscape_target(args)
    cfg = pipeline.config.landscape
    _, val = pipeline.splits
    batches = list(val.batches(pipeline.config.search.batch_size, device=pipeline.device))[: cfg.batches]
    report = traverse_cn(
        network,
        batches,
        args.scale if args.scale is not None else cfg.traversal_scale,
        args.points or cfg.points,
        cfg.symmetric,
        args.directional or cfg.directional,
        cfg.tol,
        cfg.max_iter,
        seed=pipeline.config.seed,
    )
    report.to_csv(out / "cn.csv")
    _print(report.summary())
    return 0


def cmd_landscape_grid(args: argparse.Namespace) -> int:
    from lib.landscape.grid import network_grid, plot_grid

    pipeline, network, out = _landscape_target(args)
    cfg = pipeline.config.landscape
    _, val = pipeline.splits
    batches = list(val.batches(pipeline.config.search.batch_size, device=pipeline.device))[: cfg.batches]
    grid = network_grid(
        network,
        batches,
        args.extent if args.extent is not None else cfg.grid_extent,
        args.resolution if args.resolution is not None else cfg.grid_resolution,
        seed=pipeline.config.seed,
    )
    grid.to_csv(out / "grid.csv")
    if not args.no_plot:
        plot_grid(grid, out / "grid.png")
    _print({"center_loss": grid.center, "shape": list(grid.values.shape), "out": str(out)})
    return 0


def cmd_landscape_correlate(args: argparse.Namespace) -> int:
    from lib.landscape.correlation import correlation_study
    from lib.netcore.checkpoint import load_network

    pipeline = _pipeline(args)
    cfg = pipeline.config.landscape
    checkpoint = Path(args.checkpoint) if args.checkpoint else pipeline.path("pretrained")
    out = Path(args.out) if args.out else pipeline.path("landscape")
    _, val = pipeline.splits
    study = correlation_study(
        load_network(checkpoint, pipeline.device),
        pipeline.train,
        val,
        pipeline.test,
        samples=args.samples or cfg.samples,
        trials=args.trials or cfg.trials,
        target_rate=pipeline.config.search.target_rate,
        finetune_epochs=cfg.finetune_epochs,
        traversal_scale=cfg.traversal_scale,
        points=cfg.points,
        cn_batches=cfg.batches,
        seed=pipeline.config.seed,
        device=pipeline.device,
    )
    study.to_csv(out / "correlation.csv")
    _print(study.summary())
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    from lib.harness.report import report

    result = report(args.runs, args.out, plots=not args.no_plot)
    _print({"table": str(result.table_path), "rows": result.records(), "plots": [str(p) for p in result.plots]})
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    from lib.harness.sweep import run_sweep

    result = run_sweep(load_config(args.config), args.rates, args.seeds, args.out)
    _print({"summary": str(result.summary_path), "rows": result.summary.to_dict(orient="records")})
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("api.main:app", host=args.host, port=args.port, reload=False)
    return 0


# Parser


def _add_phase_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--force", action="store_true", help="Recompute the phase even if complete")
    parser.add_argument(
        "--allow-changes",
        action="store_true",
        help="Resume a run directory created with a different config",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="python -m lib",
        description="Ensemble-knowledge-guided filter pruning",
    )
    parser.add_argument("--log-level", default=None, help="Override EKG_LOG_LEVEL")
    parser.add_argument("--log-json", action="store_true", help="Emit JSON log lines")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="Run or resume the full pipeline")
    p.add_argument("--config", required=True, help="Run config JSON file")
    p.add_argument("--run", help="Run directory (default: EKG_RUN_DIR or run_root/name)")
    p.add_argument("--allow-changes", action="store_true", help="Accept a changed config on resume")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("pretrain", help="Train or load the unpruned network")
    p.add_argument("--config", required=True, help="Run config JSON file")
    p.add_argument("--run", help="Run directory")
    _add_phase_flags(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("prune", help="Warm up and search a pruned sub-network")
    p.add_argument("--config", help="Run config JSON file")
    p.add_argument("--run", help="Run directory")
    p.add_argument("--target-rate", type=float, default=None, help="FLOPs reduction target")
    _add_phase_flags(p)
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("membank", help="Memory bank commands")
    bank_sub = p.add_subparsers(dest="action", required=True)
    b = bank_sub.add_parser("build", help="Select teachers and store their outputs")
    b.add_argument("--run", required=True, help="Run directory")
    b.add_argument("--k", type=int, default=None, help="Number of teachers")
    b.add_argument("--teachers", choices=["none", "single", "ensemble"], default=None)
    _add_phase_flags(b)
    b.set_defaults(func=cmd_membank)

    p = sub.add_parser("finetune", help="Fine-tune the pruned network")
    p.add_argument("--run", required=True, help="Run directory")
    p.add_argument("--kd-weight", type=float, default=None, help="Distillation weight")
    p.add_argument("--epochs", type=int, default=None, help="Fine-tuning epochs")
    _add_phase_flags(p)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("evaluate", help="Test accuracy and reductions")
    p.add_argument("--run", required=True, help="Run directory")
    _add_phase_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("landscape", help="Loss-landscape analysis")
    land_sub = p.add_subparsers(dest="action", required=True)
    for name, func in (
        ("cn", cmd_landscape_cn),
        ("grid", cmd_landscape_grid),
        ("correlate", cmd_landscape_correlate),
    ):
        lp = land_sub.add_parser(name)
        source = lp.add_mutually_exclusive_group(required=True)
        source.add_argument("--config", help="Run config JSON file (data source)")
        source.add_argument("--run", help="Run directory (data source)")
        lp.add_argument("--checkpoint", help="Network checkpoint directory")
        lp.add_argument("--out", help="Output directory (default: run_dir/landscape)")
        lp.set_defaults(func=func)
        if name == "cn":
            lp.add_argument("--scale", type=float, default=None, help="Traversal scale")
            lp.add_argument("--points", type=int, default=None, help="Traversal points")
            lp.add_argument("--directional", action="store_true", help="Record directional curvature")
        elif name == "grid":
            lp.add_argument("--resolution", type=int, default=None, help="Cells per side of center")
            lp.add_argument("--extent", type=float, default=None, help="Grid half-width")
            lp.add_argument("--no-plot", action="store_true", help="Skip the heat map")
        else:
            lp.add_argument("--samples", type=int, default=None, help="Random sub-networks")
            lp.add_argument("--trials", type=int, default=None, help="Draws per sub-network")

    p = sub.add_parser("report", help="Tables and plots for finished runs")
    p.add_argument("runs", nargs="*", help="Run directories")
    p.add_argument("--out", default="reports", help="Output directory")
    p.add_argument("--no-plot", action="store_true", help="Only write the table")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("sweep", help="Pipeline per target rate and seed")
    p.add_argument("--config", required=True, help="Run config JSON file")
    p.add_argument("--rates", type=_rates, required=True, help="Comma-separated target rates")
    p.add_argument("--seeds", type=int, default=3, help="Seeds per rate")
    p.add_argument("--out", default=None, help="Sweep directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("serve", help="Start the HTTP API")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = get_settings()
    setup_logging(args.log_level or settings.log_level, args.log_json or settings.log_json)
    if not hasattr(args, "force"):
        args.force = False

    try:
        return args.func(args)
    except PhaseFailedError as e:
        cause = e.cause
        details = {**e.details, **getattr(cause, "details", {})}
        print(f"error: {e.message} {json.dumps(details, default=str)}", file=sys.stderr)
        return 1
    except PruningError as e:
        print(f"error: {e.message} {json.dumps(e.details, default=str)}", file=sys.stderr)
        return 1
    except ValidationError as e:
        print(f"error: invalid config ({e.error_count()} errors): {e.errors()[0]['msg']}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
