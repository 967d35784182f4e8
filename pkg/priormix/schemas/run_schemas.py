from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple
import json
import math

import pandas as pd
from pydantic import BaseModel, Field, model_validator

from priormix.learning.objectives import Objective


# --- Training ---


class TrainConfig(BaseModel):
    objective: Objective = Objective.U_PRR
    epochs: int = Field(500, ge=1)
    batches_per_epoch: int = Field(100, ge=1)
    learning_rate: float = Field(1e-3, gt=0)
    optimizer: Literal["adam", "sgd"] = "adam"
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = Field(1e-8, gt=0)
    weight_decay: float = Field(0.0, ge=0)
    # u-prr
    alpha: float = Field(0.5, ge=0, le=1)
    s_ga: float = Field(1.0, gt=0)
    # u-flood
    flood_b: float = Field(0.0, ge=0)
    seed: int = 0
    log_every: int = Field(50, ge=1)


class EpochRecord(BaseModel):
    epoch: int
    objective_value: float
    train_ru: float
    test_error: float


RUN_CSV_COLUMNS = ["epoch", "objective_value", "train_ru", "test_error"]


class RunRecord(BaseModel):
    objective: Objective
    epochs: List[EpochRecord] = []
    initial_test_error: float
    final_error: float
    error_drop: float = Field(ge=0)
    stopped_epoch: Optional[int] = None
    stop_train_ru: Optional[float] = None
    first_negative_epoch: Optional[int] = None

    @model_validator(mode="after")
    def check_error_drop(self):
        # an early-stopped run selects its endpoint, so it reports no drop
        if self.stopped_epoch is not None:
            if self.error_drop != 0.0:
                raise ValueError(f"early-stopped run reports error_drop {self.error_drop}")
        elif self.epochs:
            errors = self.test_errors()
            expected = errors[-1] - min(errors)
            if not math.isclose(self.error_drop, expected, abs_tol=1e-12):
                raise ValueError(
                    f"error_drop {self.error_drop} != final - min = {expected}")
        return self

    def test_errors(self) -> List[float]:
        return [e.test_error for e in self.epochs]

    def train_risks(self) -> List[float]:
        return [e.train_ru for e in self.epochs]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([e.model_dump() for e in self.epochs], columns=RUN_CSV_COLUMNS)

    def summary(self, config_echo: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        payload = self.model_dump(mode="json", exclude={"epochs"})
        payload["epochs_run"] = len(self.epochs)
        if config_echo is not None:
            payload["config"] = config_echo
        return payload

    def write(self, output_dir: Path, config_echo: Optional[Dict[str, Any]] = None,
              stem: str = "run") -> Dict[str, Path]:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        csv_path = output_dir / f"{stem}.csv"
        json_path = output_dir / f"{stem}_summary.json"
        self.to_frame().to_csv(csv_path, index=False)
        with open(json_path, "w") as f:
            json.dump(self.summary(config_echo), f, indent=2, sort_keys=True)
        return {"csv": csv_path, "summary": json_path}


# --- Sweeps ---


SWEEP_CSV_COLUMNS = ["dataset", "theta_setting", "method", "trial", "err_pct", "drop_pct",
                     "noise_rate", "status"]


class SweepRow(BaseModel):
    dataset: str
    theta_setting: str
    method: str
    trial: int
    err_pct: Optional[float] = Field(None, ge=0, le=100)
    drop_pct: Optional[float] = Field(None, ge=0, le=100)
    noise_rate: float = 0.0
    status: Literal["ok", "failed"] = "ok"
    stopped_epoch: Optional[int] = None
    error: Optional[str] = None


class SweepResult(BaseModel):
    rows: List[SweepRow] = []

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.model_dump() for r in self.rows],
                            columns=SWEEP_CSV_COLUMNS + ["stopped_epoch", "error"])

    def aggregate(self) -> pd.DataFrame:
        """Mean and standard deviation over trials of every successful cell group.

        std is only reported for groups with at least two trials.
        """
        frame = self.to_frame()
        frame = frame[frame["status"] == "ok"]
        keys = ["dataset", "theta_setting", "noise_rate", "method"]
        grouped = frame.groupby(keys, sort=False)
        table = grouped.agg(
            trials=("trial", "count"),
            mean=("err_pct", "mean"),
            std=("err_pct", "std"),
            drop_mean=("drop_pct", "mean"),
            drop_std=("drop_pct", "std"),
        ).reset_index()
        return table

    def write(self, output_dir: Path, stem: str = "sweep") -> Dict[str, Path]:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        cells_path = output_dir / f"{stem}.csv"
        aggregate_path = output_dir / f"{stem}_aggregate.csv"
        self.to_frame()[SWEEP_CSV_COLUMNS].to_csv(cells_path, index=False)
        self.aggregate().to_csv(aggregate_path, index=False)
        return {"cells": cells_path, "aggregate": aggregate_path}
