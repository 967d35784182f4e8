from pathlib import Path
from typing import Dict, List, Literal, Optional
import math

from pydantic import BaseModel, Field, field_validator, model_validator

from priormix.core.config import settings
from priormix.learning.model import DEFAULT_HIDDEN_WIDTH
from priormix.learning.objectives import Objective
from priormix.schemas.run_schemas import TrainConfig

# --- Hyperparameter grids ---

LEARNING_RATE_GRID = (5e-5, 1e-4, 2e-4, 5e-4, 1e-3)
BATCHES_PER_EPOCH_GRID = (500, 200, 100, 50, 20, 10)
ALPHA_GRID = (0.1, 0.3, 0.5, 0.7, 0.9)
S_GA_GRID = (0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0)
FLOOD_B_GRID = (0.0, 0.05, 0.1)
DEPTH_GRID = (3, 5)

HYPERPARAMETER_PRESETS: Dict[str, tuple] = {
    "learning_rate": LEARNING_RATE_GRID,
    "batches_per_epoch": BATCHES_PER_EPOCH_GRID,
    "alpha": ALPHA_GRID,
    "s_ga": S_GA_GRID,
    "flood_b": FLOOD_B_GRID,
}

MODEL_PRESETS: Dict[str, Dict[str, int]] = {
    "depth-3": {"depth": 3, "hidden_width": DEFAULT_HIDDEN_WIDTH},
    "depth-5": {"depth": 5, "hidden_width": DEFAULT_HIDDEN_WIDTH},
}


def _on_grid(value: float, grid: tuple) -> bool:
    return any(math.isclose(value, g, rel_tol=1e-9, abs_tol=1e-12) for g in grid)


def _existing_path(value: Optional[str]) -> Optional[str]:
    """Accept paths relative to the working directory or to PRIORMIX_DATA_DIR."""
    if value is None or Path(value).exists():
        return value
    under_data_dir = Path(settings.DATA_DIR) / value
    if under_data_dir.exists():
        return str(under_data_dir)
    raise ValueError(f"file not found: {value}")


class DatasetSpec(BaseModel):
    name: str = "dataset"
    format: Literal["csv", "idx", "gaussian"] = "gaussian"
    # csv
    train_path: Optional[str] = None
    test_path: Optional[str] = None
    # idx
    train_images: Optional[str] = None
    train_labels: Optional[str] = None
    test_images: Optional[str] = None
    test_labels: Optional[str] = None
    # gaussian
    n_train: int = Field(200, ge=1)
    n_test: int = Field(200, ge=1)
    n_classes: int = Field(4, ge=2)
    dim: int = Field(2, ge=1)
    separation: float = Field(3.0, gt=0)
    seed: int = 0

    @field_validator("train_path", "test_path", "train_images", "train_labels",
                     "test_images", "test_labels")
    @classmethod
    def check_exists(cls, value: Optional[str]) -> Optional[str]:
        return _existing_path(value)

    @model_validator(mode="after")
    def check_paths(self):
        required = {
            "csv": ["train_path", "test_path"],
            "idx": ["train_images", "train_labels", "test_images", "test_labels"],
            "gaussian": [],
        }[self.format]
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.format} dataset needs {', '.join(missing)}")
        return self


class ThetaSpec(BaseModel):
    name: Optional[str] = None
    kind: Literal["symmetric", "diag", "nonsquare", "file"]
    a: Optional[float] = None
    b: Optional[float] = None
    seed: int = 0
    path: Optional[str] = None

    @field_validator("path")
    @classmethod
    def check_exists(cls, value: Optional[str]) -> Optional[str]:
        return _existing_path(value)

    @model_validator(mode="after")
    def check_kind(self):
        if self.kind == "symmetric" and (self.a is None or self.b is None):
            raise ValueError("symmetric class priors need a and b")
        if self.kind == "file" and self.path is None:
            raise ValueError("file class priors need a path")
        return self

    def label(self) -> str:
        if self.name:
            return self.name
        if self.kind == "symmetric":
            return f"symmetric(a={self.a:g},b={self.b:g})"
        if self.kind == "file":
            return Path(self.path).stem
        return self.kind


class MethodSpec(BaseModel):
    name: Optional[str] = None
    objective: Objective
    learning_rate: float = Field(1e-3, gt=0)
    batches_per_epoch: int = Field(100, ge=1)
    epochs: int = Field(500, ge=1)
    weight_decay: float = Field(0.0, ge=0)
    optimizer: Literal["adam", "sgd"] = "adam"
    alpha: float = Field(0.5, ge=0, le=1)
    s_ga: float = Field(1.0, gt=0)
    flood_b: float = Field(0.0, ge=0)
    depth: int = Field(3, ge=2)
    hidden_width: int = Field(DEFAULT_HIDDEN_WIDTH, ge=1)
    # Named architecture, e.g. "depth-5"; explicit depth / hidden_width win
    model: Optional[str] = None

    @model_validator(mode="before")
    @classmethod
    def apply_model_preset(cls, data):
        if isinstance(data, dict) and data.get("model") is not None:
            preset = MODEL_PRESETS.get(data["model"])
            if preset is None:
                raise ValueError(f"unknown model preset {data['model']!r}, expected one of {sorted(MODEL_PRESETS)}")
            data = {**preset, **data}
        return data

    def label(self) -> str:
        return self.name or self.objective.value

    def grid_violations(self) -> List[str]:
        names = ["learning_rate", "batches_per_epoch"]
        if self.objective is Objective.U_PRR:
            names += ["alpha", "s_ga"]
        if self.objective is Objective.U_FLOOD:
            names.append("flood_b")
        checks = [(name, getattr(self, name), HYPERPARAMETER_PRESETS[name]) for name in names]
        checks.append(("depth", self.depth, DEPTH_GRID))
        return [f"{self.label()}.{name}={value} not in {list(grid)}"
                for name, value, grid in checks if not _on_grid(value, grid)]

    def train_config(self, seed: int, log_every: int = 50) -> TrainConfig:
        return TrainConfig(
            objective=self.objective,
            epochs=self.epochs,
            batches_per_epoch=self.batches_per_epoch,
            learning_rate=self.learning_rate,
            optimizer=self.optimizer,
            weight_decay=self.weight_decay,
            alpha=self.alpha,
            s_ga=self.s_ga,
            flood_b=self.flood_b,
            seed=seed,
            log_every=log_every,
        )


class _ExperimentBase(BaseModel):
    test_priors: Optional[List[float]] = None
    test_priors_path: Optional[str] = None
    base_seed: int = 0
    output_dir: str = Field(default_factory=lambda: str(Path(settings.OUTPUT_DIR) / "experiment"))
    allow_offgrid: bool = False

    @field_validator("test_priors_path")
    @classmethod
    def check_exists(cls, value: Optional[str]) -> Optional[str]:
        return _existing_path(value)

    def _check_grids(self, methods: List[MethodSpec]):
        if self.allow_offgrid:
            return
        violations = [v for method in methods for v in method.grid_violations()]
        if violations:
            raise ValueError(
                "off-grid hyperparameters (set allow_offgrid to accept): " + "; ".join(violations))


class ExperimentConfig(_ExperimentBase):
    dataset: DatasetSpec
    theta: ThetaSpec
    method: MethodSpec
    noise_rate: float = Field(0.0, ge=0, lt=1)
    trials: int = Field(1, ge=1)

    @model_validator(mode="after")
    def check_grid(self):
        self._check_grids([self.method])
        return self


class SweepConfig(_ExperimentBase):
    datasets: List[DatasetSpec] = Field(min_length=1)
    theta_settings: List[ThetaSpec] = Field(min_length=1)
    methods: List[MethodSpec] = Field(min_length=1)
    noise_rates: List[float] = [0.0]
    trials: int = Field(5, ge=1)
    output_dir: str = Field(default_factory=lambda: str(Path(settings.OUTPUT_DIR) / "sweep"))
    svg: bool = False

    @field_validator("noise_rates")
    @classmethod
    def check_noise_rates(cls, values: List[float]) -> List[float]:
        if not values or any(not 0.0 <= v < 1.0 for v in values):
            raise ValueError(f"noise rates must lie in [0, 1), got {values}")
        return values

    @model_validator(mode="after")
    def check_sweep(self):
        self._check_grids(self.methods)
        for what, labels in (
            ("dataset", [d.name for d in self.datasets]),
            ("theta setting", [t.label() for t in self.theta_settings]),
            ("method", [m.label() for m in self.methods]),
        ):
            if len(set(labels)) != len(labels):
                raise ValueError(f"duplicate {what} names: {labels}")
        return self
