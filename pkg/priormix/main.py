from pathlib import Path
from typing import List, Optional
import argparse
import json
import logging
import sys

from pydantic import ValidationError

from priormix import __version__
from priormix.commands import sweep_commands, theta_commands, train_commands
from priormix.core.config import settings
from priormix.core.errors import PriormixError
from priormix.core.logging_config import setup_logging

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.PROJECT_NAME,
        description="Train multi-class classifiers from unlabeled bags with known class priors.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="overrides PRIORMIX_LOG_LEVEL")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Register sub-commands
    theta_commands.register(subparsers)
    train_commands.register(subparsers)
    sweep_commands.register(subparsers)
    return parser


def _error_document(exc: BaseException) -> dict:
    if isinstance(exc, PriormixError):
        return exc.to_dict()
    if isinstance(exc, (ValidationError, ValueError)):
        return {"error": type(exc).__name__, "message": str(exc), "exit_code": 2}
    return {"error": type(exc).__name__, "message": str(exc), "exit_code": 3}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level or settings.LOG_LEVEL)

    try:
        return args.handler(args)
    except (PriormixError, ValidationError, ValueError, OSError) as e:
        document = _error_document(e)
        logger.error(f"{args.command} failed: {document['message']}", exc_info=True)
        print(json.dumps(document))
        output_dir = getattr(args, "resolved_output_dir", None)
        if output_dir:
            try:
                path = Path(output_dir)
                path.mkdir(parents=True, exist_ok=True)
                (path / "error.json").write_text(json.dumps(document, indent=2))
            except OSError:
                logger.warning(f"Could not write error.json to {output_dir}")
        return document["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
