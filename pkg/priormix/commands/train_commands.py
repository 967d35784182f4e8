import argparse
import json
import logging

from priormix.schemas.experiment_schemas import ExperimentConfig
from priormix.services.experiment_service import experiment_service
from priormix.utils.config_utils import load_document

logger = logging.getLogger(__name__)


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_document(
        args.config_path,
        ExperimentConfig,
        base_seed=args.seed,
        output_dir=args.output_dir,
        trials=args.trials,
        noise_rate=args.noise_rate,
        allow_offgrid=True if args.allow_offgrid else None,
        method={"epochs": args.epochs},
    )
    args.resolved_output_dir = cfg.output_dir

    summary = experiment_service.run_experiment(cfg)
    print(json.dumps({
        "output_dir": cfg.output_dir,
        "mean_final_error": summary["mean_final_error"],
        "trials": len(summary["trials"]),
    }))
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("train", help="train one configured method")
    parser.add_argument("config_path", help="experiment config JSON")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--trials", type=int)
    parser.add_argument("--noise-rate", type=float)
    parser.add_argument("--seed", type=int, help="overrides base_seed")
    parser.add_argument("--output-dir")
    parser.add_argument("--allow-offgrid", action="store_true")
    parser.set_defaults(handler=cmd_train)
