from typing import Any, Dict
import logging

from priormix.core.errors import PriormixError
from priormix.schemas.experiment_schemas import DatasetSpec, MethodSpec, ThetaSpec
from priormix.schemas.run_schemas import SweepRow
from priormix.services.experiment_service import experiment_service

logger = logging.getLogger(__name__)

__all__ = ["run_sweep_cell"]


def run_sweep_cell(cell: Dict[str, Any]) -> Dict[str, Any]:
    """Train one (dataset, theta setting, noise rate, method, trial) cell.

    Takes and returns plain dicts so it can be shipped to worker processes.
    Failures are recorded on the row instead of propagating.
    """
    dataset = DatasetSpec.model_validate(cell["dataset"])
    theta = ThetaSpec.model_validate(cell["theta"])
    method = MethodSpec.model_validate(cell["method"])
    row = {
        "dataset": dataset.name,
        "theta_setting": theta.label(),
        "method": method.label(),
        "trial": cell["trial"],
        "noise_rate": cell["noise_rate"],
    }
    try:
        outcome = experiment_service.run_trial(
            dataset, theta, method, cell["seed"], cell["noise_rate"],
            cell.get("test_priors"), cell.get("test_priors_path"))
    except (PriormixError, ValueError, ArithmeticError) as e:
        logger.error(
            "Sweep cell failed",
            extra={"error": str(e), **row},
            exc_info=True
        )
        return SweepRow(**row, status="failed", error=f"{type(e).__name__}: {e}").model_dump()

    run = outcome.run
    return SweepRow(
        **row,
        err_pct=100.0 * run.final_error,
        drop_pct=100.0 * run.error_drop,
        stopped_epoch=run.stopped_epoch,
    ).model_dump()
