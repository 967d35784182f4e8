import argparse
import json
import logging

from priormix.core.config import settings
from priormix.schemas.experiment_schemas import HYPERPARAMETER_PRESETS, MODEL_PRESETS, SweepConfig
from priormix.services.sweep_service import sweep_service
from priormix.utils.config_utils import load_document

logger = logging.getLogger(__name__)


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = load_document(
        args.config_path,
        SweepConfig,
        base_seed=args.seed,
        output_dir=args.output_dir,
        trials=args.trials,
        svg=True if args.svg else None,
        allow_offgrid=True if args.allow_offgrid else None,
    )
    args.resolved_output_dir = cfg.output_dir

    result = sweep_service.run_sweep(cfg, jobs=args.jobs or settings.JOBS)
    print(result.aggregate().to_string(index=False))
    return 0


def cmd_presets(args: argparse.Namespace) -> int:
    print(json.dumps({"grids": {name: list(grid) for name, grid in HYPERPARAMETER_PRESETS.items()},
                      "models": MODEL_PRESETS}, indent=2))
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("sweep", help="run a dataset x theta x noise x method grid")
    parser.add_argument("config_path", help="sweep config JSON")
    parser.add_argument("--jobs", type=int, help="parallel cells (default PRIORMIX_JOBS)")
    parser.add_argument("--trials", type=int)
    parser.add_argument("--seed", type=int, help="overrides base_seed")
    parser.add_argument("--output-dir")
    parser.add_argument("--svg", action="store_true", help="also write sweep.svg")
    parser.add_argument("--allow-offgrid", action="store_true")
    parser.set_defaults(handler=cmd_sweep)

    presets = subparsers.add_parser("presets", help="print hyperparameter grids and model presets")
    presets.set_defaults(handler=cmd_presets)
